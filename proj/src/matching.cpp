#include "pseudocorr/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pseudocorr {

template <typename T>
NearestNeighbor<T>::NearestNeighbor(const BasicFeatureMap<T>& tgt, const Mask* tgt_mask)
    : tgt_(tgt), mask_(tgt_mask), norms_(cell_norms(tgt)) {
  if (mask_) {
    if (!mask_->matches(tgt)) throw ValidationError("target mask dimensions differ from target map");
    for (int i = 0; i < tgt.cells(); ++i) {
      if (mask_->bits()[i]) candidates_.push_back(i);
    }
    if (candidates_.empty()) throw ValidationError("no candidate targets");
  } else {
    candidates_.resize(tgt.cells());
    for (int i = 0; i < tgt.cells(); ++i) candidates_[i] = i;
  }
}

template <typename T>
Match NearestNeighbor<T>::best(const GridPoint& src_point, std::span<const T> query) const {
  if (query.size() != static_cast<std::size_t>(tgt_.channels())) throw ValidationError("nn_match: channel mismatch");
  const T nq = norm(query);
  int best_cell = candidates_.front();
  T best_sim = -std::numeric_limits<T>::infinity();
  for (int i : candidates_) {
    // Same expression as cosine_sim, so scores agree bit-for-bit with it.
    const T nt = norms_[i];
    const T s = (nq == T{0} || nt == T{0}) ? T{0} : dot(query, tgt_.cell(i)) / (nq * nt);
    if (s > best_sim) {
      best_sim = s;
      best_cell = i;
    }
  }
  const int w = tgt_.width();
  return Match{src_point, {static_cast<double>(best_cell / w), static_cast<double>(best_cell % w)},
               static_cast<double>(best_sim)};
}

template <typename T>
Match nn_match(const GridPoint& p, const BasicFeatureMap<T>& src, const BasicFeatureMap<T>& tgt, const Mask* tgt_mask) {
  if (src.channels() != tgt.channels()) throw ValidationError("nn_match: channel mismatch");
  NearestNeighbor<T> nn(tgt, tgt_mask);
  return nn.best(p, src.cell(cell_index(p, src)));
}

template <typename T>
MatchSet nn_match_all(std::span<const GridPoint> points, const BasicFeatureMap<T>& src, const BasicFeatureMap<T>& tgt,
                      const Mask* tgt_mask) {
  if (src.channels() != tgt.channels()) throw ValidationError("nn_match: channel mismatch");
  MatchSet out{src.image_id(), tgt.image_id(), {}};
  if (points.empty()) return out;
  NearestNeighbor<T> nn(tgt, tgt_mask);
  out.matches.reserve(points.size());
  for (const auto& p : points) out.matches.push_back(nn.best(p, src.cell(cell_index(p, src))));
  return out;
}

template <typename T>
SoftArgmaxWindow<T> soft_argmax_window(std::span<const T> sims, int height, int width, int window, T temperature) {
  if (window <= 0 || window % 2 == 0) throw ValidationError("window must be a positive odd integer");
  if (window > std::min(height, width)) throw ValidationError("window exceeds grid size");
  if (!(temperature > T{0})) throw ValidationError("temperature must be positive");
  if (sims.size() != static_cast<std::size_t>(height) * width) throw ValidationError("similarity field size mismatch");

  SoftArgmaxWindow<T> out;
  out.peak = static_cast<int>(std::max_element(sims.begin(), sims.end()) - sims.begin());
  const int pr = out.peak / width;
  const int pc = out.peak % width;
  const int half = window / 2;
  out.row0 = std::max(0, pr - half);
  out.row1 = std::min(height - 1, pr + half);
  out.col0 = std::max(0, pc - half);
  out.col1 = std::min(width - 1, pc + half);

  const T peak_sim = sims[out.peak];
  T total = 0;
  out.weights.reserve(static_cast<std::size_t>(out.row1 - out.row0 + 1) * (out.col1 - out.col0 + 1));
  for (int r = out.row0; r <= out.row1; ++r) {
    for (int c = out.col0; c <= out.col1; ++c) {
      const T w = std::exp((sims[r * width + c] - peak_sim) / temperature);
      out.weights.push_back(w);
      total += w;
    }
  }
  T mr = 0, mc = 0;
  std::size_t k = 0;
  for (int r = out.row0; r <= out.row1; ++r) {
    for (int c = out.col0; c <= out.col1; ++c) {
      out.weights[k] /= total;
      mr += out.weights[k] * r;
      mc += out.weights[k] * c;
      ++k;
    }
  }
  out.location = {static_cast<double>(mr), static_cast<double>(mc)};
  return out;
}

template <typename T>
GridPoint window_soft_argmax(const GridPoint& query, const BasicFeatureMap<T>& src, const BasicFeatureMap<T>& tgt,
                             int window, T temperature) {
  const auto sims = sim_map(query, src, tgt);
  return soft_argmax_window<T>(sims, tgt.height(), tgt.width(), window, temperature).location;
}

template class NearestNeighbor<float>;
template class NearestNeighbor<double>;
template Match nn_match<float>(const GridPoint&, const FeatureMap&, const FeatureMap&, const Mask*);
template Match nn_match<double>(const GridPoint&, const FeatureMapD&, const FeatureMapD&, const Mask*);
template MatchSet nn_match_all<float>(std::span<const GridPoint>, const FeatureMap&, const FeatureMap&, const Mask*);
template MatchSet nn_match_all<double>(std::span<const GridPoint>, const FeatureMapD&, const FeatureMapD&,
                                       const Mask*);
template SoftArgmaxWindow<float> soft_argmax_window<float>(std::span<const float>, int, int, int, float);
template SoftArgmaxWindow<double> soft_argmax_window<double>(std::span<const double>, int, int, int, double);
template GridPoint window_soft_argmax<float>(const GridPoint&, const FeatureMap&, const FeatureMap&, int, float);
template GridPoint window_soft_argmax<double>(const GridPoint&, const FeatureMapD&, const FeatureMapD&, int, double);

}  // namespace pseudocorr
