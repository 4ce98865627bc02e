#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pseudocorr/dataset.hpp"
#include "pseudocorr/evaluation.hpp"
#include "pseudocorr/sphere.hpp"

namespace pseudocorr {

struct SynthConfig {
  int categories = 6;
  int instances = 24;       // per category, including the held-out ones
  int test_instances = 6;   // per category, last in order
  int parts = 8;
  double symmetric_fraction = 0.75;  // fraction of parts living in left/right pairs
  double confusion = 0.92;           // 1: symmetric parts identical up to noise
  double side_scale = 1.0;
  double side_noise_scale = 0.2;  // instance noise multiplier inside the side channel block
  bool mirrored_view = false;  // right partner's view code is the left one's mirror image; else shared
  double view_noise_slope = 0.65;
  double instance_noise = 0.25;
  double cell_noise = 0.08;
  double offset_scale = 0.2;  // per-cell position code inside a part
  int channels = 32;
  int grid = 20;
  double object_radius = 0.4;  // fraction of the grid
  double pair_y_min = 0.72;   // |y| range of symmetric part points; separation is acos(1 - 2y^2)
  double pair_y_max = 0.8;
  double part_radius = 2.3;    // cells; each visible part covers a disc of this radius
  double unmatchable_part_prob = 0.1;
  double visibility_margin = 0.6;  // a part is visible while part . view > -margin
  double elevation_min_deg = 10.0;
  double elevation_max_deg = 30.0;
  double sphere_noise = 0.03;  // radians, on the per-cell sphere points
  double patch_size = 16.0;
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& config);

struct SynthPart {
  SpherePoint point;
  int side = 0;   // -1 left, +1 right, 0 unpaired
  int pair = -1;  // symmetric pair index, -1 when unpaired
};

struct SynthCategory {
  std::string name;
  std::vector<SynthPart> parts;
  int symmetric_pairs = 0;
};

struct SynthScene {
  ImageRecord record;
  FeatureMap features;
  Mask mask;
  int category = 0;
  bool test = false;
  double elevation_deg = 0.0;
  std::vector<int> part_of_cell;       // -1 for background; nearer parts occlude farther ones
  std::vector<bool> part_present;      // drawn per instance
  std::vector<bool> part_front_facing;  // sign of part point . view direction
  std::vector<GridPoint> part_anchor;  // rounded projected centre of every part; offsets are relative to it
  std::vector<std::optional<GridPoint>> part_center;  // the anchor, when it lies on a visible part cell
  FeatureMap sphere;                   // 3 channels: per-cell sphere point (oracle mode)
  SpherePoint pose;                    // viewing direction on the sphere
};

/// Generated benchmark plus its ground-truth correspondence oracle.
class SynthDataset : public CorrespondenceOracle {
 public:
  SynthConfig config;
  std::vector<SynthCategory> categories;
  std::vector<SynthScene> scenes;

  const SynthScene& scene(const std::string& image_id) const;
  std::vector<ImageRecord> records(bool include_train = true, bool include_test = true) const;
  ImageStore store() const;

  std::optional<GridPoint> map(const std::string& src_image, const std::string& tgt_image,
                               const GridPoint& p) const override;
  std::vector<GridPoint> matchable_points(const std::string& src_image, const std::string& tgt_image) const override;

  /// All ordered pairs of held-out instances within each category with their shared keypoints.
  std::vector<EvalPair> eval_pairs(bool test_split = true) const;
  std::vector<SpherePoint> cell_sphere_points(const std::string& image_id, std::span<const GridPoint> points) const;

  void build_index();

 private:
  std::map<std::string, std::size_t> index_;
};

SynthDataset generate(const SynthConfig& config);

struct SymmetricPairRow {
  std::string category;
  int pair = 0;
  double separation_rad = 0.0;  // geodesic between the left and right part points
  double margin = 0.0;          // 1 - cos between the noiseless left/right features
};

struct PlantReport {
  std::vector<SymmetricPairRow> symmetric_pairs;
  double visibility_rate = 0.0;           // measured front-facing fraction over instances x parts
  double expected_visibility_rate = 0.0;  // closed form in azimuth, quadrature over elevation
  double presence_rate = 0.0;
  double min_separation_rad = 0.0;
};

PlantReport plant_report(const SynthDataset& dataset);

/// Zero-noise margin 1 - cos(left, right) for a symmetric pair at confusion c and side scale kappa,
/// given the squared norm of the shared component.
double symmetric_margin(double shared_norm_sq, double confusion, double side_scale);

}  // namespace pseudocorr
