#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pseudocorr/dataset.hpp"
#include "pseudocorr/filtering.hpp"
#include "pseudocorr/matching.hpp"

namespace pseudocorr {

/// Ordered K-tuple of same-category images with small consecutive viewpoint gaps.
struct Chain {
  std::vector<std::string> images;
  std::string category;

  friend bool operator==(const Chain&, const Chain&) = default;
};

inline constexpr int kDefaultChainLength = 4;
inline constexpr double kMaxHopDeg = 90.0;

/// Circular distance between two azimuths in degrees, in [0, 180].
double d_circ(double a_deg, double b_deg);

/// Hop rule shared by the sampler and the independent checker: different azimuth
/// bins and circular gap below 90 degrees.
bool valid_hop(const ImageRecord& a, const ImageRecord& b);

/// Samples up to `count` chains per category by seeded random walks over
/// azimuth-adjacent records. Walks never revisit an image and never step straight
/// back into the bin they just left.
std::vector<Chain> sample_chains(const std::vector<ImageRecord>& records, int K, int count, std::uint64_t rng_seed);

/// Post-hoc invariant check. Returns an empty string when valid, otherwise the reason.
std::string check_chain(const Chain& chain, const std::vector<ImageRecord>& records);

/// Uniform same-category pairs without any viewpoint constraint, sampled without
/// replacement, `count` per category.
std::vector<std::pair<std::string, std::string>> sample_naive_pairs(const std::vector<ImageRecord>& records, int count,
                                                                    std::uint64_t rng_seed,
                                                                    bool include_reverse = false);

struct Propagation {
  /// Composed sets (I_1 -> I_k) for k = 2..K; shorter when a hop empties out.
  std::vector<MatchSet> composed;
  std::vector<FilterReport> hop_reports;
  bool truncated = false;
};

/// Propagates every masked point of the first image along the chain, filtering
/// each hop. Points that fail any hop are dropped from all later sets.
Propagation propagate(const Chain& chain, const ImageStore& store, const CycleFilter& hop_filter);

}  // namespace pseudocorr
