#include "pseudocorr/sphere.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "pseudocorr/optim.hpp"

namespace pseudocorr {

SpherePoint SpherePoint::from_angles(double theta, double phi) {
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

SpherePoint SpherePoint::normalized(double x, double y, double z) {
  const double n = std::sqrt(x * x + y * y + z * z);
  if (!(n > 0)) throw ValidationError("cannot normalize a zero vector onto the sphere");
  return {x / n, y / n, z / n};
}

double SpherePoint::theta() const { return std::acos(std::clamp(z, -1.0, 1.0)); }

double SpherePoint::phi() const {
  if (x == 0.0 && y == 0.0) return 0.0;
  return std::atan2(y, x);
}

double SpherePoint::norm() const { return std::sqrt(x * x + y * y + z * z); }

SpherePoint rotation_to_sphere(const Mat3& R) {
  if (!is_rotation(R)) throw ValidationError("rotation_to_sphere: matrix is not a proper rotation");
  SpherePoint p{R[2], R[5], R[8]};
  // Snap exact poles so phi follows the pole convention.
  if (std::abs(std::abs(p.z) - 1.0) < 1e-15) {
    p = {0.0, 0.0, p.z > 0 ? 1.0 : -1.0};
  }
  return p;
}

// atan2(|a x b|, a.b)
double geodesic(const SpherePoint& a, const SpherePoint& b) {
  const double cx = a.y * b.z - a.z * b.y;
  const double cy = a.z * b.x - a.x * b.z;
  const double cz = a.x * b.y - a.y * b.x;
  return std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), a.dot(b));
}

SpherePoint mean_on_sphere(std::span<const SpherePoint> points, std::span<const double> weights) {
  if (points.empty()) throw ValidationError("mean_on_sphere: empty point list");
  if (!weights.empty() && weights.size() != points.size()) throw ValidationError("mean_on_sphere: weight count");
  double x = 0, y = 0, z = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    x += w * points[i].x;
    y += w * points[i].y;
    z += w * points[i].z;
  }
  const double n = std::sqrt(x * x + y * y + z * z);
  if (!(n > 1e-12)) throw Error("degenerate mean");
  return {x / n, y / n, z / n};
}

Filtered sphere_reject(const MatchSet& matches, std::span<const SpherePoint> src_sphere,
                       std::span<const SpherePoint> tgt_sphere, double theta_th) {
  if (src_sphere.size() != matches.size() || tgt_sphere.size() != matches.size()) {
    throw ValidationError("sphere_reject: sphere lists not aligned with matches");
  }
  Filtered out{{matches.src_image, matches.tgt_image, {}}, {}};
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (geodesic(src_sphere[i], tgt_sphere[i]) <= theta_th) {
      out.matches.matches.push_back(matches.matches[i]);
      out.report.keep();
    } else {
      out.report.reject(reason::kSphereAngle);
    }
  }
  return out;
}

SpherePoint quantize_azimuth(const SpherePoint& p, double bin_deg) {
  const double deg = normalize_azimuth(p.phi() * 180.0 / std::numbers::pi);
  const double centre = (std::floor(deg / bin_deg) + 0.5) * bin_deg;
  return SpherePoint::from_angles(p.theta(), centre * std::numbers::pi / 180.0);
}

double sphere_pair_loss(std::span<const std::pair<SpherePoint, SpherePoint>> mapped_means,
                        std::span<const std::pair<SpherePoint, SpherePoint>> pose_points,
                        std::vector<std::array<double, 6>>* grad) {
  if (mapped_means.size() != pose_points.size()) throw ValidationError("sphere_loss: batch size mismatch");
  double loss = 0;
  if (grad) grad->assign(mapped_means.size(), {});
  for (std::size_t i = 0; i < mapped_means.size(); ++i) {
    const auto& [a, b] = mapped_means[i];
    const double r = pose_points[i].first.dot(pose_points[i].second) - a.dot(b);
    loss += r * r;
    if (grad) {
      (*grad)[i] = {-2 * r * b.x, -2 * r * b.y, -2 * r * b.z, -2 * r * a.x, -2 * r * a.y, -2 * r * a.z};
    }
  }
  return loss;
}

// ---- SphereMapper ----

template <typename T>
SphereMapper<T>::SphereMapper(std::vector<int> layer_sizes, std::uint64_t seed) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2 || sizes_.back() != 3) throw ValidationError("sphere mapper must end in a 3-vector");
  for (int s : sizes_) {
    if (s <= 0) throw ValidationError("sphere mapper layer sizes must be positive");
  }
  build_offsets();
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const double limit = std::sqrt(6.0 / (sizes_[l] + sizes_[l + 1]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    const std::size_t n = static_cast<std::size_t>(sizes_[l + 1]) * sizes_[l];
    for (std::size_t i = 0; i < n; ++i) params_[weight_offset(l) + i] = static_cast<T>(dist(rng));
  }
}

template <typename T>
void SphereMapper<T>::build_offsets() {
  offsets_.clear();
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(total);
    total += static_cast<std::size_t>(sizes_[l + 1]) * sizes_[l] + sizes_[l + 1];
  }
  params_.assign(total, T{0});
}

template <typename T>
typename SphereMapper<T>::Matrix SphereMapper<T>::forward(const Matrix& inputs) const {
  Tape tape;
  return forward(inputs, tape);
}

template <typename T>
typename SphereMapper<T>::Matrix SphereMapper<T>::forward(const Matrix& inputs, Tape& tape) const {
  if (inputs.rows() != sizes_.front()) throw ValidationError("sphere mapper: input dimension mismatch");
  tape.activations.clear();
  tape.activations.push_back(inputs);
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::Map<const Matrix> W(params_.data() + weight_offset(l), sizes_[l + 1], sizes_[l]);
    Eigen::Map<const Vector> b(params_.data() + bias_offset(l), sizes_[l + 1]);
    Matrix z = W * tape.activations.back();
    z.colwise() += b;
    if (l + 1 < layers) z = z.array().tanh().matrix();
    tape.activations.push_back(std::move(z));
  }
  const Matrix& raw = tape.activations.back();
  tape.unit = raw;
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    const T n = raw.col(c).norm();
    if (n > T{0}) tape.unit.col(c) /= n;
  }
  return tape.unit;
}

template <typename T>
void SphereMapper<T>::backward(const Tape& tape, const Matrix& grad_unit, std::span<T> grad) const {
  if (grad.size() != params_.size()) throw ValidationError("sphere mapper: gradient buffer size");
  const std::size_t layers = sizes_.size() - 1;
  const Matrix& raw = tape.activations.back();
  Matrix delta(raw.rows(), raw.cols());
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    const T n = raw.col(c).norm();
    if (n == T{0}) {
      delta.col(c).setZero();
      continue;
    }
    const auto u = tape.unit.col(c);
    delta.col(c) = (grad_unit.col(c) - u * u.dot(grad_unit.col(c))) / n;
  }
  for (std::size_t l = layers; l-- > 0;) {
    const Matrix& input = tape.activations[l];
    Eigen::Map<Matrix> dW(grad.data() + weight_offset(l), sizes_[l + 1], sizes_[l]);
    Eigen::Map<Vector> db(grad.data() + bias_offset(l), sizes_[l + 1]);
    dW.noalias() += delta * input.transpose();
    db += delta.rowwise().sum();
    if (l == 0) break;
    Eigen::Map<const Matrix> W(params_.data() + weight_offset(l), sizes_[l + 1], sizes_[l]);
    Matrix up = W.transpose() * delta;
    // input is tanh output of the previous layer
    delta = (up.array() * (T{1} - input.array().square())).matrix();
  }
}

template class SphereMapper<float>;
template class SphereMapper<double>;

std::vector<SpherePoint> map_to_sphere(const SphereMapper<float>& mapper, std::span<const std::vector<float>> features) {
  std::vector<SpherePoint> out;
  if (features.empty()) return out;
  SphereMapper<float>::Matrix x(mapper.input_dim(), static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != static_cast<std::size_t>(mapper.input_dim())) {
      throw ValidationError("map_to_sphere: feature dimension mismatch");
    }
    for (int c = 0; c < mapper.input_dim(); ++c) x(c, static_cast<Eigen::Index>(i)) = features[i][c];
  }
  const auto u = mapper.forward(x);
  out.reserve(features.size());
  for (Eigen::Index i = 0; i < u.cols(); ++i) {
    out.push_back(SpherePoint::normalized(u(0, i), u(1, i), u(2, i)));
  }
  return out;
}

template <typename T>
T sphere_loss(const SphereMapper<T>& mapper, std::span<const SphereImage<T>> images,
              std::span<const std::pair<int, int>> pairs, std::vector<T>* grad, const SphereLossOptions& options) {
  using Matrix = typename SphereMapper<T>::Matrix;
  using Vec3 = Eigen::Matrix<T, 3, 1>;
  if (grad) grad->assign(mapper.parameter_count(), T{0});
  if (pairs.empty()) return T{0};

  struct Cache {
    typename SphereMapper<T>::Tape tape;
    Vec3 mean = Vec3::Zero();  // unnormalized weighted mean
    Vec3 mu = Vec3::Zero();
    T mean_norm = 0;
    T weight_total = 0;
    Vec3 grad_mu = Vec3::Zero();
  };
  std::map<int, Cache> cache;
  for (const auto& [a, b] : pairs) {
    for (int idx : {a, b}) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= images.size()) throw ValidationError("sphere_loss: bad index");
      if (cache.count(idx)) continue;
      const auto& img = images[idx];
      if (img.features.cols() == 0) throw ValidationError("sphere_loss: image without patches");
      Cache c;
      const Matrix u = mapper.forward(img.features, c.tape);
      for (Eigen::Index k = 0; k < u.cols(); ++k) {
        const T w = img.weights.empty() ? T{1} : img.weights[k];
        c.mean += w * u.col(k);
        c.weight_total += w;
      }
      c.mean /= c.weight_total;
      c.mean_norm = c.mean.norm();
      if (!(c.mean_norm > T{0})) throw Error("degenerate mean");
      c.mu = c.mean / c.mean_norm;
      cache.emplace(idx, std::move(c));
    }
  }

  T loss = 0;
  for (const auto& [a, b] : pairs) {
    SpherePoint pa = images[a].pose, pb = images[b].pose;
    if (options.pose_bin_deg > 0) {
      pa = quantize_azimuth(pa, options.pose_bin_deg);
      pb = quantize_azimuth(pb, options.pose_bin_deg);
    }
    auto& ca = cache.at(a);
    auto& cb = cache.at(b);
    const T r = static_cast<T>(pa.dot(pb)) - ca.mu.dot(cb.mu);
    loss += r * r;
    ca.grad_mu += T{-2} * r * cb.mu;
    cb.grad_mu += T{-2} * r * ca.mu;
  }
  if (!grad) return loss;

  for (auto& [idx, c] : cache) {
    const auto& img = images[idx];
    const Vec3 grad_mean = (c.grad_mu - c.mu * c.mu.dot(c.grad_mu)) / c.mean_norm;
    Matrix grad_unit(3, img.features.cols());
    for (Eigen::Index k = 0; k < grad_unit.cols(); ++k) {
      const T w = img.weights.empty() ? T{1} : img.weights[k];
      grad_unit.col(k) = grad_mean * (w / c.weight_total);
    }
    mapper.backward(c.tape, grad_unit, *grad);
  }
  return loss;
}

template float sphere_loss<float>(const SphereMapper<float>&, std::span<const SphereImage<float>>,
                                  std::span<const std::pair<int, int>>, std::vector<float>*, const SphereLossOptions&);
template double sphere_loss<double>(const SphereMapper<double>&, std::span<const SphereImage<double>>,
                                    std::span<const std::pair<int, int>>, std::vector<double>*,
                                    const SphereLossOptions&);

SphereTrainLog train_sphere_mapper(SphereMapper<float>& mapper, std::span<const SphereImage<float>> images,
                                   std::span<const int> category_of, const SphereTrainConfig& config) {
  if (images.size() != category_of.size()) throw ValidationError("train_sphere_mapper: category list size");
  std::map<int, std::vector<int>> groups;
  for (std::size_t i = 0; i < images.size(); ++i) groups[category_of[i]].push_back(static_cast<int>(i));
  std::vector<const std::vector<int>*> usable;
  for (const auto& [cat, members] : groups) {
    if (members.size() >= 2) usable.push_back(&members);
  }
  if (usable.empty()) throw ValidationError("train_sphere_mapper: need a category with at least two images");

  SphereTrainLog log;
  std::mt19937_64 rng(config.seed);
  AdamWState<float> state;
  AdamWConfig adam;
  adam.weight_decay = config.weight_decay;
  std::vector<float> grad;
  std::vector<std::pair<int, int>> batch;
  for (int step = 0; step < config.steps; ++step) {
    batch.clear();
    for (int k = 0; k < config.pairs_per_step; ++k) {
      const auto& members = *usable[std::uniform_int_distribution<std::size_t>(0, usable.size() - 1)(rng)];
      const std::size_t i = std::uniform_int_distribution<std::size_t>(0, members.size() - 1)(rng);
      std::size_t j = std::uniform_int_distribution<std::size_t>(0, members.size() - 2)(rng);
      if (j >= i) ++j;
      batch.emplace_back(members[i], members[j]);
    }
    const float loss = sphere_loss<float>(mapper, images, batch, &grad, config.loss);
    log.losses.push_back(loss / static_cast<float>(batch.size()));
    for (auto& g : grad) g /= static_cast<float>(batch.size());
    adamw_step<float>(mapper.parameters(), grad, state, config.lr, adam);
  }
  return log;
}

}  // namespace pseudocorr
