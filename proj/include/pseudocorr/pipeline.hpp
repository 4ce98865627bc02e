#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pseudocorr/adapter.hpp"
#include "pseudocorr/chaining.hpp"
#include "pseudocorr/evaluation.hpp"
#include "pseudocorr/filtering.hpp"
#include "pseudocorr/sphere.hpp"
#include "pseudocorr/synthetic.hpp"

namespace pseudocorr {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Callers write results into
/// slot i, so the merged output does not depend on scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// Sphere points of grid cells of one image.
using SphereLookup = std::function<std::vector<SpherePoint>(const std::string& image_id, std::span<const GridPoint>)>;

Filtered apply_sphere_reject(const MatchSet& matches, const SphereLookup& sphere, double theta_th);

struct LabelConfig {
  bool chaining = false;
  int chain_length = kDefaultChainLength;
  int count = 150;  // pairs or chains per category
  CycleFilter filter = CycleFilter::none();
  bool sphere_reject = false;
  double theta_th = kDefaultThetaTh;
  bool target_mask = true;
  std::uint64_t seed = 0;

  /// Provenance line recorded in pseudo-label files.
  std::string describe() const;
};

struct LabelSet {
  std::vector<MatchSet> sets;  // ordered by pair/chain index, then k
  std::vector<std::string> chain_specs;  // one per set: the chain (or pair) it came from
  FilterReport cycle_report;
  FilterReport sphere_report;
  std::size_t truncated_chains = 0;
  std::string provenance;

  std::size_t match_count() const;
};

LabelSet generate_labels(const std::vector<ImageRecord>& records, const ImageStore& store, const LabelConfig& config,
                         const SphereLookup* sphere, int threads = 1);

/// Feature maps used for prediction, keyed by image id.
using FeatureLookup = std::function<const FeatureMap&(const std::string& image_id)>;

/// Window soft-argmax prediction for every ground-truth source keypoint, in target pixels.
std::vector<std::vector<PixelPoint>> predict(const std::vector<EvalPair>& pairs, const FeatureLookup& features,
                                             const SoftArgmaxParams& params, int threads = 1);

/// Refined maps of the given images.
std::map<std::string, FeatureMap> refine_all(const Adapter<float>& adapter, const ImageStore& store,
                                             const std::vector<std::string>& image_ids, int threads = 1);

/// Training pairs for every non-empty label set.
std::vector<TrainPair<float>> make_train_pairs(const LabelSet& labels, const ImageStore& store);
std::vector<TrainPair<float>> make_train_pairs(const std::vector<MatchSet>& sets, const ImageStore& store);

/// One configuration of the ablation matrix.
struct AblationRow {
  std::string name;
  bool pseudo = false;
  bool cyc_cons = false;
  bool relaxed = false;
  bool chaining = false;
  bool sphere = false;
};

std::vector<AblationRow> ablation_rows();

struct AblationConfig {
  SynthConfig synth;
  TrainConfig train;
  AdapterShape shape;
  LabelConfig labels;       // count, chain length, r_max, theta_th and mask flag; stage flags come from the row
  double r_max = kDefaultRMax;
  SoftArgmaxParams eval;
  double alpha = 0.1;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  int threads = 1;
};

struct AblationResult {
  std::string row;
  std::uint64_t seed = 0;
  double pck_per_img = 0.0;
  double pck_per_kpt = 0.0;
  std::optional<double> label_precision;
  double label_recall = 0.0;
  std::size_t label_count = 0;
};

/// Runs every row on every seed; `on_result` (optional) sees results as they finish.
std::vector<AblationResult> run_ablation(const AblationConfig& config,
                                         const std::function<void(const AblationResult&)>& on_result = {});

/// Zero-shot PCK of raw features on held-out pairs, binned by azimuth difference.
std::vector<BinnedPck> viewpoint_analysis(const SynthDataset& dataset, const SoftArgmaxParams& params, double alpha,
                                          PckMode mode, int threads = 1);

}  // namespace pseudocorr
