#pragma once

#include <array>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pseudocorr/dataset.hpp"
#include "pseudocorr/filtering.hpp"

namespace pseudocorr {

/// Unit vector on S^2.
struct SpherePoint {
  double x = 0, y = 0, z = 1;

  static SpherePoint from_angles(double theta, double phi);
  /// Normalizes (x, y, z); throws on a zero vector.
  static SpherePoint normalized(double x, double y, double z);

  double theta() const;  // polar angle in [0, pi]
  double phi() const;    // azimuth in (-pi, pi]; 0 at the poles
  double dot(const SpherePoint& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const;

  friend bool operator==(const SpherePoint&, const SpherePoint&) = default;
};

/// psi = R * (0, 0, 1)^T. Throws ValidationError unless R is a proper rotation (tol 1e-6).
SpherePoint rotation_to_sphere(const Mat3& R);

/// Arc length between unit vectors.
double geodesic(const SpherePoint& a, const SpherePoint& b);

/// Normalized (optionally weighted) arithmetic mean. Throws on a vanishing mean.
SpherePoint mean_on_sphere(std::span<const SpherePoint> points, std::span<const double> weights = {});

inline constexpr double kDefaultThetaTh = 0.15 * std::numbers::pi;

/// Keeps a match iff the geodesic angle between its two sphere points is at most theta_th.
Filtered sphere_reject(const MatchSet& matches, std::span<const SpherePoint> src_sphere,
                       std::span<const SpherePoint> tgt_sphere, double theta_th = kDefaultThetaTh);

/// Quantizes the azimuth of a pose point to the centre of its bin (SPair-style labels).
SpherePoint quantize_azimuth(const SpherePoint& p, double bin_deg);

/// Squared residuals between pose dot products and mapped-mean dot products,
/// summed over pairs. Optionally returns dL/dmu for both sides of every pair.
double sphere_pair_loss(std::span<const std::pair<SpherePoint, SpherePoint>> mapped_means,
                        std::span<const std::pair<SpherePoint, SpherePoint>> pose_points,
                        std::vector<std::array<double, 6>>* grad = nullptr);

/// MLP from feature vectors to S^2: tanh hidden layers, linear 3-vector, unit normalization.
template <typename T>
class SphereMapper {
 public:
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

  SphereMapper() = default;
  /// layer_sizes = {input, hidden..., 3}
  SphereMapper(std::vector<int> layer_sizes, std::uint64_t seed);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  std::size_t parameter_count() const { return params_.size(); }
  std::vector<T>& parameters() { return params_; }
  const std::vector<T>& parameters() const { return params_; }

  /// Unit-norm outputs, one column per input column.
  Matrix forward(const Matrix& inputs) const;

  /// Forward pass that keeps activations, then accumulates into `grad` the
  /// parameter gradient for an upstream gradient on the normalized outputs.
  struct Tape {
    std::vector<Matrix> activations;  // input, hidden..., raw output
    Matrix unit;
  };
  Matrix forward(const Matrix& inputs, Tape& tape) const;
  void backward(const Tape& tape, const Matrix& grad_unit, std::span<T> grad) const;

  template <typename U>
  SphereMapper<U> cast() const;

 private:
  template <typename U>
  friend class SphereMapper;

  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + static_cast<std::size_t>(sizes_[layer + 1]) * sizes_[layer];
  }
  void build_offsets();

  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<T> params_;
};

template <typename T>
template <typename U>
SphereMapper<U> SphereMapper<T>::cast() const {
  SphereMapper<U> out;
  out.sizes_ = sizes_;
  out.offsets_ = offsets_;
  out.params_.assign(params_.begin(), params_.end());
  return out;
}

std::vector<SpherePoint> map_to_sphere(const SphereMapper<float>& mapper, std::span<const std::vector<float>> features);

/// Per-image supervision for the S^2 loss: patch features (columns) and the pose point.
template <typename T>
struct SphereImage {
  typename SphereMapper<T>::Matrix features;
  std::vector<T> weights;  // optional, one per column
  SpherePoint pose;
};

struct SphereLossOptions {
  double pose_bin_deg = 0.0;  // > 0 quantizes pose azimuths before the dot product
};

/// Mapper-level S^2 loss over image pairs, with the analytic parameter gradient.
template <typename T>
T sphere_loss(const SphereMapper<T>& mapper, std::span<const SphereImage<T>> images,
              std::span<const std::pair<int, int>> pairs, std::vector<T>* grad = nullptr,
              const SphereLossOptions& options = {});

struct SphereTrainConfig {
  int steps = 300;
  int pairs_per_step = 8;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  SphereLossOptions loss;
};

struct SphereTrainLog {
  std::vector<double> losses;
};

/// Trains on random same-category pairs drawn from `category_of`.
SphereTrainLog train_sphere_mapper(SphereMapper<float>& mapper, std::span<const SphereImage<float>> images,
                                   std::span<const int> category_of, const SphereTrainConfig& config);

}  // namespace pseudocorr
