#include "pseudocorr/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <spdlog/spdlog.h>

namespace pseudocorr {

namespace {

template <typename T>
T gelu(T z) {
  return T{0.5} * z * (T{1} + std::erf(z / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_grad(T z) {
  const T cdf = T{0.5} * (T{1} + std::erf(z / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T{-0.5} * z * z) / std::sqrt(T{2} * std::numbers::pi_v<T>);
  return cdf + z * pdf;
}

std::uint64_t step_seed(std::uint64_t seed, std::int64_t step) {
  // splitmix64 finalizer over (seed, step)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(step) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::size_t AdapterShape::parameter_count() const {
  const std::size_t c = static_cast<std::size_t>(in_channels);
  const std::size_t h = static_cast<std::size_t>(hidden);
  std::size_t n = static_cast<std::size_t>(blocks) * (2 * c * h + h + c);
  if (out_channels > 0) n += static_cast<std::size_t>(out_channels) * c;
  return n;
}

AdapterShape AdapterShape::full_scale_preset() { return AdapterShape{1536, 400, 4, 0}; }

template <typename T>
Adapter<T>::Adapter(const AdapterShape& shape, std::uint64_t seed) : shape_(shape) {
  if (shape.in_channels <= 0 || shape.hidden <= 0 || shape.blocks < 0 || shape.out_channels < 0) {
    throw ValidationError("invalid adapter shape");
  }
  params_.assign(shape.parameter_count(), T{0});
  std::mt19937_64 rng(seed);
  const int c = shape.in_channels;
  const int h = shape.hidden;
  std::uniform_real_distribution<double> down(-std::sqrt(6.0 / (c + h)), std::sqrt(6.0 / (c + h)));
  for (int b = 0; b < shape.blocks; ++b) {
    const auto off = block_offsets(b);
    for (std::size_t i = 0; i < static_cast<std::size_t>(h) * c; ++i) params_[off.w_down + i] = static_cast<T>(down(rng));
  }
  if (shape.out_channels > 0) {
    const std::size_t p = projection_offset();
    if (shape.out_channels == c) {
      for (int i = 0; i < c; ++i) params_[p + static_cast<std::size_t>(i) * c + i] = T{1};  // column-major identity
    } else {
      std::normal_distribution<double> proj(0.0, 1.0 / std::sqrt(static_cast<double>(c)));
      for (std::size_t i = 0; i < static_cast<std::size_t>(shape.out_channels) * c; ++i) {
        params_[p + i] = static_cast<T>(proj(rng));
      }
    }
  }
}

template <typename T>
Adapter<T>::Adapter(const AdapterShape& shape, std::vector<T> params) : shape_(shape), params_(std::move(params)) {
  if (params_.size() != shape.parameter_count()) throw ValidationError("adapter parameter count mismatch");
}

template <typename T>
typename Adapter<T>::Offsets Adapter<T>::block_offsets(int block) const {
  const std::size_t c = static_cast<std::size_t>(shape_.in_channels);
  const std::size_t h = static_cast<std::size_t>(shape_.hidden);
  const std::size_t base = static_cast<std::size_t>(block) * (2 * c * h + h + c);
  return {base, base + h * c, base + h * c + h, base + 2 * h * c + h};
}

template <typename T>
std::size_t Adapter<T>::projection_offset() const {
  const std::size_t c = static_cast<std::size_t>(shape_.in_channels);
  const std::size_t h = static_cast<std::size_t>(shape_.hidden);
  return static_cast<std::size_t>(shape_.blocks) * (2 * c * h + h + c);
}

template <typename T>
typename Adapter<T>::Matrix Adapter<T>::forward(const Matrix& x) const {
  Tape tape;
  return forward(x, tape);
}

template <typename T>
typename Adapter<T>::Matrix Adapter<T>::forward(const Matrix& x, Tape& tape) const {
  if (x.rows() != shape_.in_channels) throw ValidationError("adapter: channel mismatch");
  const int c = shape_.in_channels;
  const int h = shape_.hidden;
  tape.block_inputs.assign(1, x);
  tape.pre_act.clear();
  for (int b = 0; b < shape_.blocks; ++b) {
    const auto off = block_offsets(b);
    Eigen::Map<const Matrix> w_down(params_.data() + off.w_down, h, c);
    Eigen::Map<const Vector> b_down(params_.data() + off.b_down, h);
    Eigen::Map<const Matrix> w_up(params_.data() + off.w_up, c, h);
    Eigen::Map<const Vector> b_up(params_.data() + off.b_up, c);
    const Matrix& in = tape.block_inputs.back();
    Matrix z = w_down * in;
    z.colwise() += b_down;
    const Matrix a = z.unaryExpr([](T v) { return gelu(v); });
    Matrix out = in + w_up * a;
    out.colwise() += b_up;
    tape.pre_act.push_back(std::move(z));
    tape.block_inputs.push_back(std::move(out));
  }
  if (shape_.out_channels > 0) {
    Eigen::Map<const Matrix> proj(params_.data() + projection_offset(), shape_.out_channels, c);
    return proj * tape.block_inputs.back();
  }
  return tape.block_inputs.back();
}

template <typename T>
void Adapter<T>::backward(const Tape& tape, const Matrix& grad_out, std::span<T> grad) const {
  if (grad.size() != params_.size()) throw ValidationError("adapter: gradient buffer size");
  const int c = shape_.in_channels;
  const int h = shape_.hidden;
  Matrix g;
  if (shape_.out_channels > 0) {
    Eigen::Map<const Matrix> proj(params_.data() + projection_offset(), shape_.out_channels, c);
    Eigen::Map<Matrix> d_proj(grad.data() + projection_offset(), shape_.out_channels, c);
    d_proj.noalias() += grad_out * tape.block_inputs.back().transpose();
    g = proj.transpose() * grad_out;
  } else {
    g = grad_out;
  }
  for (int b = shape_.blocks - 1; b >= 0; --b) {
    const auto off = block_offsets(b);
    Eigen::Map<const Matrix> w_down(params_.data() + off.w_down, h, c);
    Eigen::Map<const Matrix> w_up(params_.data() + off.w_up, c, h);
    Eigen::Map<Matrix> dw_down(grad.data() + off.w_down, h, c);
    Eigen::Map<Vector> db_down(grad.data() + off.b_down, h);
    Eigen::Map<Matrix> dw_up(grad.data() + off.w_up, c, h);
    Eigen::Map<Vector> db_up(grad.data() + off.b_up, c);
    const Matrix& z = tape.pre_act[b];
    const Matrix a = z.unaryExpr([](T v) { return gelu(v); });
    dw_up.noalias() += g * a.transpose();
    db_up += g.rowwise().sum();
    const Matrix dz = ((w_up.transpose() * g).array() * z.unaryExpr([](T v) { return gelu_grad(v); }).array()).matrix();
    dw_down.noalias() += dz * tape.block_inputs[b].transpose();
    db_down += dz.rowwise().sum();
    g += w_down.transpose() * dz;
  }
}

template <typename T>
BasicFeatureMap<T> Adapter<T>::forward(const BasicFeatureMap<T>& fmap) const {
  if (fmap.channels() != shape_.in_channels) throw ValidationError("adapter: channel mismatch");
  Eigen::Map<const Matrix> x(fmap.data().data(), fmap.channels(), fmap.cells());
  const Matrix y = forward(Matrix(x));
  std::vector<T> data(y.data(), y.data() + y.size());
  return BasicFeatureMap<T>(fmap.height(), fmap.width(), static_cast<int>(y.rows()), std::move(data), fmap.image_id());
}

template class Adapter<float>;
template class Adapter<double>;

// ---- losses ----

template <typename T>
T sparse_contrastive_loss(const FeatureRows<T>& src, const FeatureRows<T>& tgt, T temperature, FeatureRows<T>* grad_src,
                          FeatureRows<T>* grad_tgt) {
  using Matrix = FeatureRows<T>;
  const Eigen::Index n = src.cols();
  if (n == 0) throw ValidationError("sparse_contrastive_loss: empty batch");
  if (tgt.cols() != n || tgt.rows() != src.rows()) throw ValidationError("sparse_contrastive_loss: shape mismatch");
  if (!(temperature > T{0})) throw ValidationError("sparse_contrastive_loss: temperature must be positive");
  if (grad_src) grad_src->setZero(src.rows(), n);
  if (grad_tgt) grad_tgt->setZero(tgt.rows(), n);
  if (n == 1) {
    spdlog::debug("sparse_contrastive_loss: single match, loss 0 by convention");
    return T{0};
  }
  const Eigen::Matrix<T, 1, Eigen::Dynamic> src_norm = src.colwise().norm();
  const Eigen::Matrix<T, 1, Eigen::Dynamic> tgt_norm = tgt.colwise().norm();
  if ((src_norm.array() == T{0}).any() || (tgt_norm.array() == T{0}).any()) {
    throw ValidationError("sparse_contrastive_loss: zero vector");
  }
  const Matrix s_hat = src.array().rowwise() / src_norm.array();
  const Matrix t_hat = tgt.array().rowwise() / tgt_norm.array();
  const Matrix logits = (s_hat.transpose() * t_hat) / temperature;  // n x n

  // Row-wise (source -> target) and column-wise (target -> source) softmax.
  Matrix p_row(n, n), p_col(n, n);
  T loss = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const T m = logits.row(i).maxCoeff();
    const auto e = (logits.row(i).array() - m).exp();
    const T z = e.sum();
    p_row.row(i) = e / z;
    loss += -(logits(i, i) - m - std::log(z));
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const T m = logits.col(j).maxCoeff();
    const auto e = (logits.col(j).array() - m).exp();
    const T z = e.sum();
    p_col.col(j) = e / z;
    loss += -(logits(j, j) - m - std::log(z));
  }
  loss /= T{2} * static_cast<T>(n);
  if (!grad_src && !grad_tgt) return loss;

  Matrix g = (p_row + p_col) / (T{2} * static_cast<T>(n));
  g.diagonal().array() -= T{1} / static_cast<T>(n);
  g /= temperature;  // dL/d(s_hat_i . t_hat_j)
  if (grad_src) {
    const Matrix d_hat = t_hat * g.transpose();  // column i: sum_j g_ij t_hat_j
    for (Eigen::Index i = 0; i < n; ++i) {
      grad_src->col(i) = (d_hat.col(i) - s_hat.col(i) * s_hat.col(i).dot(d_hat.col(i))) / src_norm(i);
    }
  }
  if (grad_tgt) {
    const Matrix d_hat = s_hat * g;  // column j: sum_i g_ij s_hat_i
    for (Eigen::Index j = 0; j < n; ++j) {
      grad_tgt->col(j) = (d_hat.col(j) - t_hat.col(j) * t_hat.col(j).dot(d_hat.col(j))) / tgt_norm(j);
    }
  }
  return loss;
}

template <typename T>
DenseLossResult<T> dense_loss(const FeatureRows<T>& src_vectors, const BasicFeatureMap<T>& tgt_refined,
                              std::span<const GridPoint> tgt_points, std::span<const GridPoint> noise, int window,
                              T temperature, bool with_grad) {
  const Eigen::Index n = src_vectors.cols();
  if (static_cast<std::size_t>(n) != tgt_points.size()) throw ValidationError("dense_loss: point count mismatch");
  if (!noise.empty() && noise.size() != tgt_points.size()) throw ValidationError("dense_loss: noise count mismatch");
  if (src_vectors.rows() != tgt_refined.channels()) throw ValidationError("dense_loss: channel mismatch");
  const int cells = tgt_refined.cells();
  const int width = tgt_refined.width();
  const int channels = tgt_refined.channels();

  DenseLossResult<T> out;
  if (with_grad) out.grad_src.setZero(channels, n);
  const std::vector<T> tgt_norms = cell_norms(tgt_refined);
  std::vector<int> column_of(static_cast<std::size_t>(cells), -1);
  std::vector<Eigen::Matrix<T, Eigen::Dynamic, 1>> tgt_grads;

  std::vector<T> sims(static_cast<std::size_t>(cells));
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::span<const T> q(src_vectors.col(i).data(), static_cast<std::size_t>(channels));
    const T nq = norm(q);
    for (int c = 0; c < cells; ++c) {
      const T nt = tgt_norms[c];
      sims[c] = (nq == T{0} || nt == T{0}) ? T{0} : dot(q, tgt_refined.cell(c)) / (nq * nt);
    }
    const auto sa = soft_argmax_window<T>(sims, tgt_refined.height(), width, window, temperature);
    const GridPoint eps = noise.empty() ? GridPoint{} : noise[i];
    const T dr = static_cast<T>(sa.location.row) - static_cast<T>(tgt_points[i].row + eps.row);
    const T dc = static_cast<T>(sa.location.col) - static_cast<T>(tgt_points[i].col + eps.col);
    const T dist = std::sqrt(dr * dr + dc * dc);
    out.loss += dist;
    if (!with_grad || dist == T{0} || nq == T{0}) continue;

    const T ur = dr / dist;
    const T uc = dc / dist;
    const T pr = static_cast<T>(sa.location.row);
    const T pc = static_cast<T>(sa.location.col);
    std::size_t k = 0;
    for (int r = sa.row0; r <= sa.row1; ++r) {
      for (int c = sa.col0; c <= sa.col1; ++c, ++k) {
        const int cell = r * width + c;
        const T nt = tgt_norms[cell];
        if (nt == T{0}) continue;
        // d p_hat / d sim_k = w_k (x_k - p_hat) / temperature
        const T g = sa.weights[k] * ((static_cast<T>(r) - pr) * ur + (static_cast<T>(c) - pc) * uc) / temperature;
        if (g == T{0}) continue;
        const T s = sims[cell];
        const auto t = tgt_refined.cell(cell);
        if (column_of[cell] < 0) {
          column_of[cell] = static_cast<int>(tgt_grads.size());
          tgt_grads.emplace_back(Eigen::Matrix<T, Eigen::Dynamic, 1>::Zero(channels));
          out.tgt_cells.push_back(cell);
        }
        auto& gt = tgt_grads[column_of[cell]];
        for (int ch = 0; ch < channels; ++ch) {
          const T q_hat = q[ch] / nq;
          const T t_hat = t[ch] / nt;
          out.grad_src(ch, i) += g * (t_hat - s * q_hat) / nq;
          gt(ch) += g * (q_hat - s * t_hat) / nt;
        }
      }
    }
  }
  if (with_grad) {
    out.grad_tgt.resize(channels, static_cast<Eigen::Index>(tgt_grads.size()));
    for (std::size_t j = 0; j < tgt_grads.size(); ++j) out.grad_tgt.col(static_cast<Eigen::Index>(j)) = tgt_grads[j];
  }
  return out;
}

template float sparse_contrastive_loss<float>(const FeatureRows<float>&, const FeatureRows<float>&, float,
                                              FeatureRows<float>*, FeatureRows<float>*);
template double sparse_contrastive_loss<double>(const FeatureRows<double>&, const FeatureRows<double>&, double,
                                                FeatureRows<double>*, FeatureRows<double>*);
template DenseLossResult<float> dense_loss<float>(const FeatureRows<float>&, const FeatureMap&,
                                                  std::span<const GridPoint>, std::span<const GridPoint>, int, float,
                                                  bool);
template DenseLossResult<double> dense_loss<double>(const FeatureRows<double>&, const FeatureMapD&,
                                                    std::span<const GridPoint>, std::span<const GridPoint>, int,
                                                    double, bool);

// ---- training ----

void validate(const TrainConfig& c) {
  if (c.steps < 0) throw ValidationError("train.steps must be non-negative");
  if (!(c.peak_lr >= 0)) throw ValidationError("train.lr must be non-negative");
  if (!(c.weight_decay >= 0)) throw ValidationError("train.weight_decay must be non-negative");
  if (!(c.warmup_frac >= 0 && c.warmup_frac <= 1)) throw ValidationError("train.warmup_frac must be in [0, 1]");
  if (!(c.sparse_temperature > 0)) throw ValidationError("train.sparse_temperature must be positive");
  if (!(c.softargmax_temperature > 0)) throw ValidationError("match.temperature must be positive");
  if (c.window <= 0 || c.window % 2 == 0) throw ValidationError("match.window must be a positive odd integer");
  if (!(c.noise_sigma >= 0)) throw ValidationError("train.noise_sigma must be non-negative");
  if (c.max_matches <= 0) throw ValidationError("train.max_matches must be positive");
  if (c.pairs_per_step <= 0) throw ValidationError("train.pairs_per_step must be positive");
}

template <typename T>
BatchLoss<T> batch_loss(const Adapter<T>& adapter, const TrainBatch<T>& batch, const TrainConfig& config,
                        bool with_grad) {
  using Matrix = typename Adapter<T>::Matrix;
  const TrainPair<T>& pair = *batch.pair;
  const auto& src = *pair.src;
  const auto& tgt = *pair.tgt;
  const Eigen::Index n = static_cast<Eigen::Index>(batch.match_indices.size());
  if (n == 0) throw ValidationError("batch_loss: empty batch");

  Matrix src_raw(src.channels(), n);
  std::vector<GridPoint> tgt_points;
  std::vector<int> tgt_point_cells;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Match& m = pair.matches[batch.match_indices[i]];
    const auto v = src.cell(cell_index(m.src, src));
    for (int c = 0; c < src.channels(); ++c) src_raw(c, i) = v[c];
    tgt_points.push_back(m.tgt);
    tgt_point_cells.push_back(cell_index(m.tgt, tgt));
  }
  typename Adapter<T>::Tape src_tape;
  const Matrix src_ref = adapter.forward(src_raw, src_tape);
  const BasicFeatureMap<T> tgt_ref = adapter.forward(tgt);

  Matrix tgt_at(tgt_ref.channels(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto v = tgt_ref.cell(tgt_point_cells[i]);
    for (int c = 0; c < tgt_ref.channels(); ++c) tgt_at(c, i) = v[c];
  }

  BatchLoss<T> out;
  Matrix g_sparse_src, g_sparse_tgt;
  out.sparse = sparse_contrastive_loss<T>(src_ref, tgt_at, static_cast<T>(config.sparse_temperature),
                                          with_grad ? &g_sparse_src : nullptr, with_grad ? &g_sparse_tgt : nullptr);
  const auto dense = dense_loss<T>(src_ref, tgt_ref, tgt_points, batch.noise, config.window,
                                   static_cast<T>(config.softargmax_temperature), with_grad);
  out.dense = dense.loss;
  const T ls = static_cast<T>(config.lambda_sparse);
  const T ld = static_cast<T>(config.lambda_dense);
  out.total = ls * out.sparse + ld * out.dense;
  if (!with_grad) return out;

  out.grad.assign(adapter.parameters().size(), T{0});
  const Matrix g_src = ls * g_sparse_src + ld * dense.grad_src;
  adapter.backward(src_tape, g_src, out.grad);

  // Gather every target cell that receives gradient, in first-seen order.
  std::vector<int> cells;
  std::vector<int> column_of(static_cast<std::size_t>(tgt.cells()), -1);
  auto column = [&](int cell) {
    if (column_of[cell] < 0) {
      column_of[cell] = static_cast<int>(cells.size());
      cells.push_back(cell);
    }
    return column_of[cell];
  };
  for (int cell : tgt_point_cells) column(cell);
  for (int cell : dense.tgt_cells) column(cell);
  Matrix g_tgt = Matrix::Zero(tgt_ref.channels(), static_cast<Eigen::Index>(cells.size()));
  for (Eigen::Index i = 0; i < n; ++i) g_tgt.col(column_of[tgt_point_cells[i]]) += ls * g_sparse_tgt.col(i);
  for (std::size_t j = 0; j < dense.tgt_cells.size(); ++j) {
    g_tgt.col(column_of[dense.tgt_cells[j]]) += ld * dense.grad_tgt.col(static_cast<Eigen::Index>(j));
  }
  Matrix tgt_raw(tgt.channels(), static_cast<Eigen::Index>(cells.size()));
  for (std::size_t j = 0; j < cells.size(); ++j) {
    const auto v = tgt.cell(cells[j]);
    for (int c = 0; c < tgt.channels(); ++c) tgt_raw(c, static_cast<Eigen::Index>(j)) = v[c];
  }
  typename Adapter<T>::Tape tgt_tape;
  adapter.forward(tgt_raw, tgt_tape);
  adapter.backward(tgt_tape, g_tgt, out.grad);
  return out;
}

template BatchLoss<float> batch_loss<float>(const Adapter<float>&, const TrainBatch<float>&, const TrainConfig&, bool);
template BatchLoss<double> batch_loss<double>(const Adapter<double>&, const TrainBatch<double>&, const TrainConfig&,
                                              bool);

template <typename T>
Trainer<T>::Trainer(Adapter<T> adapter, TrainConfig config, std::span<const TrainPair<T>> data)
    : adapter_(std::move(adapter)), config_(config), data_(data) {
  validate(config_);
  if (data_.empty()) throw ValidationError("training dataset is empty");
  for (const auto& p : data_) {
    if (p.matches.empty()) throw ValidationError("training pair without matches: " + p.id);
    if (p.src->channels() != adapter_.shape().in_channels || p.tgt->channels() != adapter_.shape().in_channels) {
      throw ValidationError("training pair channel count differs from adapter input: " + p.id);
    }
  }
  optimizer_.reset(adapter_.parameters().size());
}

template <typename T>
std::vector<TrainBatch<T>> Trainer<T>::make_batches(std::int64_t step) const {
  std::mt19937_64 rng(step_seed(config_.seed, step));
  std::vector<TrainBatch<T>> out;
  for (int k = 0; k < config_.pairs_per_step; ++k) {
    TrainBatch<T> batch;
    batch.pair = &data_[std::uniform_int_distribution<std::size_t>(0, data_.size() - 1)(rng)];
    const std::size_t total = batch.pair->matches.size();
    const std::size_t take = std::min(total, static_cast<std::size_t>(config_.max_matches));
    std::vector<std::size_t> idx(total);
    for (std::size_t i = 0; i < total; ++i) idx[i] = i;
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(idx[i], idx[std::uniform_int_distribution<std::size_t>(i, total - 1)(rng)]);
    }
    batch.match_indices.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    batch.noise.resize(take);
    if (config_.noise_sigma > 0) {
      std::normal_distribution<double> noise(0.0, config_.noise_sigma);
      for (auto& e : batch.noise) {
        e.row = noise(rng);
        e.col = noise(rng);
      }
    }
    out.push_back(std::move(batch));
  }
  return out;
}

template <typename T>
StepRecord Trainer<T>::step() {
  const auto batches = make_batches(step_);
  const double lr = lr_schedule(step_, std::max<std::int64_t>(config_.steps, step_ + 1), config_.peak_lr,
                                config_.warmup_frac);
  std::vector<T> grad(adapter_.parameters().size(), T{0});
  double sparse = 0, dense = 0;
  const T scale = T{1} / static_cast<T>(batches.size());
  for (const auto& batch : batches) {
    const BatchLoss<T> loss = batch_loss(adapter_, batch, config_, true);
    if (!std::isfinite(static_cast<double>(loss.total))) {
      throw TrainingError("non-finite loss", step_, batch.pair->id);
    }
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += scale * loss.grad[i];
    sparse += static_cast<double>(loss.sparse);
    dense += static_cast<double>(loss.dense);
  }
  AdamWConfig adam;
  adam.weight_decay = config_.weight_decay;
  adamw_step<T>(adapter_.parameters(), grad, optimizer_, lr, adam);
  const double n = static_cast<double>(batches.size());
  StepRecord rec{step_, lr, sparse / n, dense / n};
  ++step_;
  return rec;
}

template <typename T>
void Trainer<T>::run(const std::function<void(const StepRecord&)>& on_step) {
  while (step_ < config_.steps) {
    const StepRecord rec = step();
    if (on_step) on_step(rec);
  }
}

template <typename T>
void Trainer<T>::restore(std::vector<T> params, AdamWState<T> optimizer, std::int64_t step) {
  if (params.size() != adapter_.parameters().size()) throw ValidationError("restore: parameter count mismatch");
  adapter_.parameters() = std::move(params);
  optimizer_ = std::move(optimizer);
  step_ = step;
}

template class Trainer<float>;
template class Trainer<double>;

}  // namespace pseudocorr
