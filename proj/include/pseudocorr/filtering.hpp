#pragma once

#include <limits>
#include <map>
#include <string>

#include "pseudocorr/matching.hpp"

namespace pseudocorr {

/// Bookkeeping for one filtering pass.
struct FilterReport {
  std::size_t input_count = 0;
  std::size_t kept_count = 0;
  std::size_t rejected_count = 0;
  std::map<std::string, std::size_t> rejection_reasons;

  void keep() {
    ++input_count;
    ++kept_count;
  }
  void reject(const std::string& reason) {
    ++input_count;
    ++rejected_count;
    ++rejection_reasons[reason];
  }
  FilterReport& operator+=(const FilterReport& other);
};

namespace reason {
inline constexpr const char* kForwardMismatch = "forward_mismatch";
inline constexpr const char* kBackwardMismatch = "backward_mismatch";
inline constexpr const char* kOutsideRadius = "outside_radius";
inline constexpr const char* kSphereAngle = "sphere_angle";
}  // namespace reason

struct Filtered {
  MatchSet matches;
  FilterReport report;
};

/// Exact cyclic consistency: forward and backward nearest neighbours must both
/// land on the recorded endpoints. Back-matching is restricted to `src_mask`.
Filtered cyclic_filter(const MatchSet& matches, const FeatureMap& src, const FeatureMap& tgt, const Mask* src_mask,
                       const Mask* tgt_mask);

/// Keeps a match iff its back-match lies strictly within `r_max` patches of the source point.
Filtered relaxed_cyclic_filter(const MatchSet& matches, const FeatureMap& src, const FeatureMap& tgt,
                               const Mask* src_mask, const Mask* tgt_mask, double r_max);

inline constexpr double kDefaultRMax = 1.5;
inline constexpr double kUnboundedRadius = std::numeric_limits<double>::infinity();

/// Per-hop filter choice used by chaining and the pair pipeline.
struct CycleFilter {
  enum class Mode { kNone, kExact, kRelaxed };
  Mode mode = Mode::kRelaxed;
  double r_max = kDefaultRMax;

  static CycleFilter none() { return {Mode::kNone, kUnboundedRadius}; }
  static CycleFilter exact() { return {Mode::kExact, 0.0}; }
  static CycleFilter relaxed(double r) { return {Mode::kRelaxed, r}; }

  Filtered apply(const MatchSet& matches, const FeatureMap& src, const FeatureMap& tgt, const Mask* src_mask,
                 const Mask* tgt_mask) const;
  std::string describe() const;
};

}  // namespace pseudocorr
