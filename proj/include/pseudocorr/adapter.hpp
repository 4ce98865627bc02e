#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pseudocorr/matching.hpp"
#include "pseudocorr/optim.hpp"
#include "pseudocorr/tensor.hpp"

namespace pseudocorr {

struct AdapterShape {
  int in_channels = 32;
  int hidden = 32;
  int blocks = 4;
  int out_channels = 32;  // 0: no output projection

  int output_channels() const { return out_channels > 0 ? out_channels : in_channels; }
  std::size_t parameter_count() const;
  friend bool operator==(const AdapterShape&, const AdapterShape&) = default;

  /// Four bottleneck blocks over 1536 channels, about 5M parameters.
  static AdapterShape full_scale_preset();
};

inline constexpr std::size_t kDeskParameterBudget = 200'000;

/// Bottleneck residual blocks applied independently to every feature vector:
///   x <- x + W_up * gelu(W_down * x + b_down) + b_up
/// followed by an optional linear projection to a reduced channel count.
template <typename T>
class Adapter {
 public:
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

  Adapter() = default;
  /// Down-projections random, up-projections zero (the adapter starts as the identity).
  Adapter(const AdapterShape& shape, std::uint64_t seed);
  Adapter(const AdapterShape& shape, std::vector<T> params);

  const AdapterShape& shape() const { return shape_; }
  std::vector<T>& parameters() { return params_; }
  const std::vector<T>& parameters() const { return params_; }

  struct Tape {
    std::vector<Matrix> block_inputs;  // input to each block, then the block-stack output
    std::vector<Matrix> pre_act;       // W_down x + b_down per block
  };

  /// Columns are feature vectors.
  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, Tape& tape) const;
  /// Accumulates the parameter gradient for upstream gradient `grad_out` into `grad`.
  void backward(const Tape& tape, const Matrix& grad_out, std::span<T> grad) const;

  BasicFeatureMap<T> forward(const BasicFeatureMap<T>& fmap) const;

  template <typename U>
  Adapter<U> cast() const {
    return Adapter<U>(shape_, std::vector<U>(params_.begin(), params_.end()));
  }

 private:
  struct Offsets {
    std::size_t w_down, b_down, w_up, b_up;
  };
  Offsets block_offsets(int block) const;
  std::size_t projection_offset() const;

  AdapterShape shape_;
  std::vector<T> params_;
};

template <typename T>
using FeatureRows = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;  // one vector per column

/// Symmetric InfoNCE over the n x n cosine-similarity matrix scaled by 1/temperature.
/// Returns 0 for n == 1. Gradients (same shape as inputs) are written when non-null.
template <typename T>
T sparse_contrastive_loss(const FeatureRows<T>& src, const FeatureRows<T>& tgt, T temperature,
                          FeatureRows<T>* grad_src = nullptr, FeatureRows<T>* grad_tgt = nullptr);

/// Dense localization loss for one pair: sum over matches of || p_hat - (p_t + eps) ||,
/// p_hat the window soft-argmax of the source vector against the full target map.
template <typename T>
struct DenseLossResult {
  T loss = 0;
  FeatureRows<T> grad_src;                  // per match, gradient wrt the refined source vector
  std::vector<int> tgt_cells;               // target cells receiving gradient
  FeatureRows<T> grad_tgt;                  // one column per entry of tgt_cells
};

template <typename T>
DenseLossResult<T> dense_loss(const FeatureRows<T>& src_vectors, const BasicFeatureMap<T>& tgt_refined,
                              std::span<const GridPoint> tgt_points, std::span<const GridPoint> noise, int window,
                              T temperature, bool with_grad = true);

struct TrainConfig {
  std::int64_t steps = 2000;
  double peak_lr = 5e-3;
  double weight_decay = 1e-3;
  double warmup_frac = 0.3;
  double lambda_sparse = 1.0;
  double lambda_dense = 1.0;
  double sparse_temperature = 0.1;
  int window = 5;
  double softargmax_temperature = 0.01;
  double noise_sigma = 0.5;
  int max_matches = 50;
  int pairs_per_step = 2;  // gradients of several pairs are averaged in draw order
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& config);

/// One training example: an image pair and its pseudo-labels.
template <typename T>
struct TrainPair {
  const BasicFeatureMap<T>* src = nullptr;
  const BasicFeatureMap<T>* tgt = nullptr;
  std::vector<Match> matches;
  std::string id;
};

struct StepRecord {
  std::int64_t step = 0;
  double lr = 0;
  double loss_sparse = 0;
  double loss_dense = 0;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::int64_t step, std::string batch_id)
      : Error(what), step_(step), batch_id_(std::move(batch_id)) {}
  std::int64_t step() const { return step_; }
  const std::string& batch_id() const { return batch_id_; }

 private:
  std::int64_t step_;
  std::string batch_id_;
};

/// Full loss and gradient of one step's batch; exposed for gradient checks.
template <typename T>
struct BatchLoss {
  T sparse = 0;
  T dense = 0;
  T total = 0;
  std::vector<T> grad;
};

template <typename T>
struct TrainBatch {
  const TrainPair<T>* pair = nullptr;
  std::vector<std::size_t> match_indices;  // <= max_matches
  std::vector<GridPoint> noise;            // one per sampled match
};

template <typename T>
BatchLoss<T> batch_loss(const Adapter<T>& adapter, const TrainBatch<T>& batch, const TrainConfig& config,
                        bool with_grad = true);

/// Deterministic trainer: the batch of step t depends only on (seed, t), so a
/// run resumed from a snapshot follows the uninterrupted trajectory exactly.
template <typename T>
class Trainer {
 public:
  Trainer(Adapter<T> adapter, TrainConfig config, std::span<const TrainPair<T>> data);

  /// The pairs of step `step`, in accumulation order.
  std::vector<TrainBatch<T>> make_batches(std::int64_t step) const;
  StepRecord step();
  /// Runs until `config.steps`; `on_step` may be empty.
  void run(const std::function<void(const StepRecord&)>& on_step = {});

  std::int64_t current_step() const { return step_; }
  const Adapter<T>& adapter() const { return adapter_; }
  const AdamWState<T>& optimizer() const { return optimizer_; }
  const TrainConfig& config() const { return config_; }
  void restore(std::vector<T> params, AdamWState<T> optimizer, std::int64_t step);

 private:
  Adapter<T> adapter_;
  TrainConfig config_;
  std::span<const TrainPair<T>> data_;
  AdamWState<T> optimizer_;
  std::int64_t step_ = 0;
};

}  // namespace pseudocorr
