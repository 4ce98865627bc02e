#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pseudocorr/adapter.hpp"
#include "pseudocorr/dataset.hpp"
#include "pseudocorr/evaluation.hpp"
#include "pseudocorr/pipeline.hpp"
#include "pseudocorr/sphere.hpp"
#include "pseudocorr/synthetic.hpp"

namespace pseudocorr {

inline constexpr const char* kVersion = "0.3.0";

/// Malformed file. Binary formats carry the byte offset, text formats the 1-based line.
class FormatError : public ValidationError {
 public:
  FormatError(const std::string& source, const std::string& what, std::optional<std::uint64_t> offset,
              std::optional<std::size_t> line);
  const std::string& source() const { return source_; }
  std::optional<std::uint64_t> offset() const { return offset_; }
  std::optional<std::size_t> line() const { return line_; }

 private:
  std::string source_;
  std::optional<std::uint64_t> offset_;
  std::optional<std::size_t> line_;
};

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, creating parent directories.
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s, const std::string& what);
std::int64_t parse_int(std::string_view s, const std::string& what);

// Feature grids: "CCF1", u32 version, height, width, channels, then f32 row-major, channel-innermost.
inline constexpr std::uint32_t kFeatureVersion = 1;
std::string encode_features(const FeatureMap& map);
FeatureMap decode_features(std::string_view bytes, const std::string& source = "<memory>");
void write_features(const std::filesystem::path& path, const FeatureMap& map);
FeatureMap read_features(const std::filesystem::path& path);

// Masks: "CCM1", u32 version, height, width, then ceil(h*w/8) bytes, cell i at bit i % 8 of byte i / 8.
inline constexpr std::uint32_t kMaskVersion = 1;
std::string encode_mask(const Mask& mask);
Mask decode_mask(std::string_view bytes, const std::string& source = "<memory>");
void write_mask(const std::filesystem::path& path, const Mask& mask);
Mask read_mask(const std::filesystem::path& path);

/// Records with paths relative to `base_dir` (the manifest's directory).
struct Manifest {
  std::vector<ImageRecord> records;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& relative) const;
  const ImageRecord& find(const std::string& image_id) const;
};

std::string encode_manifest(const std::vector<ImageRecord>& records);
std::vector<ImageRecord> decode_manifest(std::string_view text, const std::string& source = "<memory>");
void write_manifest(const std::filesystem::path& path, const std::vector<ImageRecord>& records);
/// With `check_files`, every referenced feature and mask file must exist.
Manifest read_manifest(const std::filesystem::path& path, bool check_files = true);
ImageStore load_store(const Manifest& manifest);

/// One image pair of a pseudo-label file with the grid bounds its coordinates live in.
struct PseudoLabelBlock {
  MatchSet set;
  int src_height = 0, src_width = 0, tgt_height = 0, tgt_width = 0;
  std::string chain;  // images the labels were composed through, '>'-separated

  friend bool operator==(const PseudoLabelBlock&, const PseudoLabelBlock&) = default;
};

struct PseudoLabelFile {
  std::string provenance;
  std::vector<PseudoLabelBlock> blocks;

  std::size_t match_count() const;
  friend bool operator==(const PseudoLabelFile&, const PseudoLabelFile&) = default;
};

PseudoLabelFile to_label_file(const LabelSet& labels, const ImageStore& store);
std::vector<MatchSet> match_sets(const PseudoLabelFile& file);
std::string encode_labels(const PseudoLabelFile& file);
PseudoLabelFile decode_labels(std::string_view text, const std::string& source = "<memory>");
void write_labels(const std::filesystem::path& path, const PseudoLabelFile& file);
PseudoLabelFile read_labels(const std::filesystem::path& path);

// Adapter checkpoints: "CCK1".
inline constexpr std::uint32_t kCheckpointVersion = 1;
struct Checkpoint {
  AdapterShape shape;
  std::int64_t step = 0;
  std::uint64_t config_hash = 0;
  std::vector<float> params;
  std::optional<AdamWState<float>> optimizer;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source = "<memory>");
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Sphere mappers: "CCS1".
inline constexpr std::uint32_t kMapperVersion = 1;
struct MapperFile {
  SphereMapper<float> mapper;
  int channel_offset = 0;  // first feature channel fed to the mapper
};
std::string encode_mapper(const MapperFile& file);
MapperFile decode_mapper(std::string_view bytes, const std::string& source = "<memory>");
void write_mapper(const std::filesystem::path& path, const MapperFile& file);
MapperFile read_mapper(const std::filesystem::path& path);

/// Named pixel keypoint of one image.
struct Keypoint {
  std::string name;
  PixelPoint point;
  friend bool operator==(const Keypoint& a, const Keypoint& b) {
    return a.name == b.name && a.point.x == b.point.x && a.point.y == b.point.y;
  }
};
std::string encode_keypoints(const std::vector<Keypoint>& kps);
std::vector<Keypoint> decode_keypoints(std::string_view text, const std::string& source = "<memory>");
void write_keypoints(const std::filesystem::path& path, const std::vector<Keypoint>& kps);
std::vector<Keypoint> read_keypoints(const std::filesystem::path& path);

/// Ordered (source, target) image pairs for evaluation.
using ImagePairs = std::vector<std::pair<std::string, std::string>>;
std::string encode_pairs(const ImagePairs& pairs);
ImagePairs decode_pairs(std::string_view text, const std::string& source = "<memory>");

/// Evaluation pairs from keypoint files: keypoints shared by name, in source order.
/// Without explicit pairs, all ordered same-category pairs in manifest order.
std::vector<EvalPair> build_eval_pairs(const Manifest& manifest, const std::optional<ImagePairs>& pairs);

/// Predicted target keypoints, one block per evaluation pair.
struct PredictionBlock {
  std::string src_image, tgt_image;
  std::vector<PixelPoint> points;
};
std::string encode_predictions(const std::vector<PredictionBlock>& blocks);
std::vector<PredictionBlock> decode_predictions(std::string_view text, const std::string& source = "<memory>");
/// Aligns predictions with the evaluation pairs; every pair needs exactly one block.
std::vector<std::vector<PixelPoint>> align_predictions(const std::vector<PredictionBlock>& blocks,
                                                       const std::vector<EvalPair>& pairs);

/// Writes features, masks, keypoints and sphere grids plus train.tsv, test.tsv and test_pairs.txt.
void write_synthetic(const SynthDataset& dataset, const std::filesystem::path& dir);

// Results.
std::string ablation_csv(const std::vector<AblationResult>& results);
std::string ablation_summary_csv(const std::vector<AblationResult>& results);
std::string pck_json(const PckResult& result);
std::string binned_csv(const std::vector<BinnedPck>& bins, double alpha, PckMode mode);
std::string binned_jsonl(const std::vector<BinnedPck>& bins, double alpha, PckMode mode);

struct Provenance {
  std::string command;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string config_text;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};
std::string provenance_json(const Provenance& p);

/// Machine-readable error record printed to stderr by the CLI.
std::string error_json(const std::string& command, const std::string& kind, const std::string& message,
                       int exit_code);

}  // namespace pseudocorr
