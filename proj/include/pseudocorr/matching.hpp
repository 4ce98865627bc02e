#pragma once

#include <string>
#include <vector>

#include "pseudocorr/tensor.hpp"

namespace pseudocorr {

struct Match {
  GridPoint src;
  GridPoint tgt;
  double score = 0.0;

  friend bool operator==(const Match&, const Match&) = default;
};

/// Correspondences for one ordered image pair.
struct MatchSet {
  std::string src_image;
  std::string tgt_image;
  std::vector<Match> matches;

  std::size_t size() const { return matches.size(); }
  bool empty() const { return matches.empty(); }
  friend bool operator==(const MatchSet&, const MatchSet&) = default;
};

/// Nearest-neighbour search against one target map. Caches target norms so a
/// batch of queries costs one pass over the target per query.
template <typename T>
class NearestNeighbor {
 public:
  NearestNeighbor(const BasicFeatureMap<T>& tgt, const Mask* tgt_mask = nullptr);

  /// Best target cell for a query vector. Ties go to the first cell in row-major order.
  Match best(const GridPoint& src_point, std::span<const T> query) const;

  const BasicFeatureMap<T>& target() const { return tgt_; }

 private:
  const BasicFeatureMap<T>& tgt_;
  const Mask* mask_;
  std::vector<T> norms_;
  std::vector<int> candidates_;
};

template <typename T>
Match nn_match(const GridPoint& p, const BasicFeatureMap<T>& src, const BasicFeatureMap<T>& tgt,
               const Mask* tgt_mask = nullptr);

template <typename T>
MatchSet nn_match_all(std::span<const GridPoint> points, const BasicFeatureMap<T>& src,
                      const BasicFeatureMap<T>& tgt, const Mask* tgt_mask = nullptr);

/// Result of a windowed soft-argmax over a similarity field.
template <typename T>
struct SoftArgmaxWindow {
  GridPoint location;          // weighted mean coordinate
  int peak = 0;                // hard argmax cell index
  int row0 = 0, row1 = 0;      // inclusive window bounds after clipping
  int col0 = 0, col1 = 0;
  std::vector<T> weights;      // softmax weights, row-major over the window
};

/// Soft-argmax of a precomputed similarity field (row-major, height x width).
template <typename T>
SoftArgmaxWindow<T> soft_argmax_window(std::span<const T> sims, int height, int width, int window, T temperature);

template <typename T>
GridPoint window_soft_argmax(const GridPoint& query, const BasicFeatureMap<T>& src, const BasicFeatureMap<T>& tgt,
                             int window, T temperature);

struct SoftArgmaxParams {
  int window = 5;
  double temperature = 0.01;
};

}  // namespace pseudocorr
