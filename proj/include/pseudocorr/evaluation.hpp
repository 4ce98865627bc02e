#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pseudocorr/dataset.hpp"
#include "pseudocorr/matching.hpp"

namespace pseudocorr {

/// Image-pixel coordinate (x right, y down).
struct PixelPoint {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

/// Patch (row, col) to the pixel centre of that patch, and back.
PixelPoint grid_to_pixel(const GridPoint& p, double patch_size);
GridPoint pixel_to_grid(const PixelPoint& p, double patch_size);

struct KeypointPair {
  PixelPoint src;
  PixelPoint tgt;
};

struct EvalPair {
  ImageRecord src_record;
  ImageRecord tgt_record;
  std::vector<KeypointPair> gt;
  std::string category;
};

enum class PckMode { kPerKeypoint, kPerImage };
std::string to_string(PckMode mode);
PckMode parse_pck_mode(const std::string& s);

struct PckResult {
  double alpha = 0.0;
  PckMode mode = PckMode::kPerKeypoint;
  double value = 0.0;  // overall, in [0, 100]
  std::size_t correct = 0;
  std::size_t keypoints = 0;
  std::size_t pairs = 0;            // pairs with at least one keypoint
  std::vector<double> pair_rates;   // per input pair, percent; NaN for pairs without keypoints
  std::map<std::string, double> per_category;
  double macro_avg = 0.0;  // mean of per_category values
  double micro_avg = 0.0;  // pooled over all pairs regardless of category (= value)
};

/// Radius alpha * max(bbox.w, bbox.h) of the target object; distance <= radius is correct.
/// Pairs without keypoints are skipped by the per-image average.
PckResult pck(const std::vector<std::vector<PixelPoint>>& predictions, const std::vector<EvalPair>& pairs, double alpha,
              PckMode mode);

/// Closed/open azimuth-difference interval in degrees.
struct ViewBin {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_closed = true;
  bool hi_closed = false;
  std::string label() const;
  bool contains(double delta_deg) const;
};

/// [0,45), (0,90), (45,135), (90,180), (135,225). Overlapping pairs count in every containing bin.
std::vector<ViewBin> table_view_bins();

struct BinnedPck {
  ViewBin bin;
  std::optional<PckResult> result;  // empty when no pair falls in the bin
};

std::vector<BinnedPck> viewpoint_binned_pck(const std::vector<std::vector<PixelPoint>>& predictions,
                                            const std::vector<EvalPair>& pairs, double alpha, PckMode mode,
                                            const std::vector<ViewBin>& bins);

/// Ground-truth correspondence source for pseudo-label accounting.
class CorrespondenceOracle {
 public:
  virtual ~CorrespondenceOracle() = default;
  /// Target location of `p`, or nullopt when the point has no counterpart.
  virtual std::optional<GridPoint> map(const std::string& src_image, const std::string& tgt_image,
                                       const GridPoint& p) const = 0;
  /// Source points that have a counterpart in the target image.
  virtual std::vector<GridPoint> matchable_points(const std::string& src_image, const std::string& tgt_image) const = 0;
};

struct LabelQuality {
  std::optional<double> precision;  // null when nothing was emitted
  double recall = 0.0;
  std::size_t emitted = 0;
  std::size_t correct = 0;
  std::size_t matchable = 0;
  std::size_t recalled = 0;

  LabelQuality& operator+=(const LabelQuality& other);
  void finalize();
};

/// A match is correct iff the oracle maps its source point to within `tol` patches of its target.
LabelQuality label_quality(const std::vector<MatchSet>& pseudo, const CorrespondenceOracle& oracle, double tol = 0.0);

}  // namespace pseudocorr
