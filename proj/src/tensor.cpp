#include "pseudocorr/tensor.hpp"

#include <algorithm>

namespace pseudocorr {

Mask::Mask(int height, int width, bool fill) : height_(height), width_(width) {
  if (height <= 0 || width <= 0) throw ValidationError("mask dimensions must be positive");
  bits_.assign(static_cast<std::size_t>(height) * width, fill ? 1 : 0);
}

Mask::Mask(int height, int width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
  if (height <= 0 || width <= 0) throw ValidationError("mask dimensions must be positive");
  if (bits_.size() != static_cast<std::size_t>(height) * width) {
    throw ValidationError("mask bit count does not match height*width");
  }
  for (auto& b : bits_) b = b ? 1 : 0;
}

bool Mask::test(const GridPoint& p) const {
  const int r = static_cast<int>(std::lround(p.row));
  const int c = static_cast<int>(std::lround(p.col));
  if (r < 0 || r >= height_ || c < 0 || c >= width_) return false;
  return test(r, c);
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

// Four independent accumulators, combined in a fixed order. Every similarity in
// the library goes through this kernel, so results are reproducible bit-for-bit.
template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  const std::size_t n = a.size();
  T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

template <typename T>
T norm(std::span<const T> a) {
  return std::sqrt(dot(a, a));
}

template <typename T>
T cosine_sim(std::span<const T> a, std::span<const T> b, SimilarityDiagnostics* diag) {
  if (a.size() != b.size()) throw ValidationError("cosine_sim: vector lengths differ");
  const T na = norm(a);
  const T nb = norm(b);
  if (na == T{0} || nb == T{0}) {
    if (diag) diag->zero_norm_pairs.fetch_add(1, std::memory_order_relaxed);
    return T{0};
  }
  return dot(a, b) / (na * nb);
}

template <typename T>
std::vector<T> cell_norms(const BasicFeatureMap<T>& fmap) {
  std::vector<T> out(static_cast<std::size_t>(fmap.cells()));
  for (int i = 0; i < fmap.cells(); ++i) out[i] = norm(fmap.cell(i));
  return out;
}

template <typename T>
std::vector<T> sim_map(const GridPoint& query, const BasicFeatureMap<T>& src, const BasicFeatureMap<T>& tgt,
                       SimilarityDiagnostics* diag) {
  if (src.channels() != tgt.channels()) throw ValidationError("sim_map: channel mismatch");
  const auto q = src.cell(cell_index(query, src));
  std::vector<T> out(static_cast<std::size_t>(tgt.cells()));
  for (int i = 0; i < tgt.cells(); ++i) out[i] = cosine_sim(q, tgt.cell(i), diag);
  return out;
}

std::vector<GridPoint> masked_points(const Mask& mask) {
  std::vector<GridPoint> out;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (mask.test(r, c)) out.push_back({static_cast<double>(r), static_cast<double>(c)});
    }
  }
  return out;
}

#define PSEUDOCORR_INSTANTIATE(T)                                                                     \
  template T dot<T>(std::span<const T>, std::span<const T>);                                          \
  template T norm<T>(std::span<const T>);                                                             \
  template T cosine_sim<T>(std::span<const T>, std::span<const T>, SimilarityDiagnostics*);           \
  template std::vector<T> cell_norms<T>(const BasicFeatureMap<T>&);                                   \
  template std::vector<T> sim_map<T>(const GridPoint&, const BasicFeatureMap<T>&, const BasicFeatureMap<T>&, \
                                     SimilarityDiagnostics*);

PSEUDOCORR_INSTANTIATE(float)
PSEUDOCORR_INSTANTIATE(double)

#undef PSEUDOCORR_INSTANTIATE

}  // namespace pseudocorr
