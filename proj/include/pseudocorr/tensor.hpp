#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pseudocorr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid input or configuration; the CLI maps this to exit status 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Location on a feature grid in patch units. Rows grow downward.
struct GridPoint {
  double row = 0.0;
  double col = 0.0;

  friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

inline double distance(const GridPoint& a, const GridPoint& b) {
  return std::hypot(a.row - b.row, a.col - b.col);
}

/// Dense height x width grid of feature vectors, channel-innermost.
template <typename T>
class BasicFeatureMap {
 public:
  using value_type = T;

  BasicFeatureMap() = default;
  BasicFeatureMap(int height, int width, int channels, std::string image_id = {})
      : height_(height), width_(width), channels_(channels), image_id_(std::move(image_id)) {
    if (height <= 0 || width <= 0 || channels <= 0) {
      throw ValidationError("feature map dimensions must be positive");
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, T{0});
  }
  BasicFeatureMap(int height, int width, int channels, std::vector<T> data, std::string image_id = {})
      : height_(height), width_(width), channels_(channels), image_id_(std::move(image_id)),
        data_(std::move(data)) {
    if (height <= 0 || width <= 0 || channels <= 0) {
      throw ValidationError("feature map dimensions must be positive");
    }
    if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
      throw ValidationError("feature map data length does not match height*width*channels");
    }
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  int cells() const { return height_ * width_; }
  const std::string& image_id() const { return image_id_; }
  void set_image_id(std::string id) { image_id_ = std::move(id); }

  bool contains(int row, int col) const { return row >= 0 && row < height_ && col >= 0 && col < width_; }

  std::span<const T> at(int row, int col) const {
    return {data_.data() + offset(row, col), static_cast<std::size_t>(channels_)};
  }
  std::span<T> at(int row, int col) { return {data_.data() + offset(row, col), static_cast<std::size_t>(channels_)}; }
  std::span<const T> cell(int index) const {
    return {data_.data() + static_cast<std::size_t>(index) * channels_, static_cast<std::size_t>(channels_)};
  }
  std::span<T> cell(int index) {
    return {data_.data() + static_cast<std::size_t>(index) * channels_, static_cast<std::size_t>(channels_)};
  }

  const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename U>
  BasicFeatureMap<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicFeatureMap<U>(height_, width_, channels_, std::move(out), image_id_);
  }

  /// Copy of channels [first, first + count).
  BasicFeatureMap slice_channels(int first, int count) const;

 private:
  std::size_t offset(int row, int col) const {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::string image_id_;
  std::vector<T> data_;
};

using FeatureMap = BasicFeatureMap<float>;
using FeatureMapD = BasicFeatureMap<double>;

template <typename T>
BasicFeatureMap<T> BasicFeatureMap<T>::slice_channels(int first, int count) const {
  if (first < 0 || count <= 0 || first + count > channels_) {
    throw ValidationError("channel slice out of range");
  }
  BasicFeatureMap out(height_, width_, count, image_id_);
  for (int i = 0; i < cells(); ++i) {
    auto src = cell(i);
    auto dst = out.cell(i);
    for (int c = 0; c < count; ++c) dst[c] = src[first + c];
  }
  return out;
}

/// Object mask on the feature grid.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, bool fill = false);
  Mask(int height, int width, std::vector<std::uint8_t> bits);

  int height() const { return height_; }
  int width() const { return width_; }
  bool test(int row, int col) const { return bits_[static_cast<std::size_t>(row) * width_ + col] != 0; }
  bool test(const GridPoint& p) const;
  void set(int row, int col, bool value = true) { bits_[static_cast<std::size_t>(row) * width_ + col] = value ? 1 : 0; }
  std::size_t count() const;
  bool any() const { return count() > 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  template <typename T>
  bool matches(const BasicFeatureMap<T>& fmap) const {
    return fmap.height() == height_ && fmap.width() == width_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Counts degenerate similarity evaluations. Shared across workers.
struct SimilarityDiagnostics {
  std::atomic<std::uint64_t> zero_norm_pairs{0};
};

template <typename T>
T dot(std::span<const T> a, std::span<const T> b);

template <typename T>
T norm(std::span<const T> a);

/// Cosine similarity. Zero-norm inputs yield 0 and bump the diagnostic counter.
template <typename T>
T cosine_sim(std::span<const T> a, std::span<const T> b, SimilarityDiagnostics* diag = nullptr);

/// Similarity of the source vector at `query` against every target cell.
template <typename T>
std::vector<T> sim_map(const GridPoint& query, const BasicFeatureMap<T>& src, const BasicFeatureMap<T>& tgt,
                       SimilarityDiagnostics* diag = nullptr);

/// Per-cell L2 norms, row-major.
template <typename T>
std::vector<T> cell_norms(const BasicFeatureMap<T>& fmap);

/// Set-bit locations in row-major order.
std::vector<GridPoint> masked_points(const Mask& mask);

/// Integral grid cell of an in-grid point; throws when non-integral or outside.
template <typename T>
int cell_index(const GridPoint& p, const BasicFeatureMap<T>& fmap) {
  const double r = std::round(p.row);
  const double c = std::round(p.col);
  if (r != p.row || c != p.col) throw ValidationError("query point is not integral");
  if (!fmap.contains(static_cast<int>(r), static_cast<int>(c))) throw ValidationError("query point outside grid");
  return static_cast<int>(r) * fmap.width() + static_cast<int>(c);
}

}  // namespace pseudocorr
