#pragma once

// Small neural-network engine: named parameter tensors, dense layers, the
// burst-shared per-coefficient MLP, MSE loss, SGD with momentum, finite
// difference gradient checks and the binary checkpoint format.
//
// Activations are row-major batches: one sample (or one coefficient
// position) per row.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bdeblur/core.hpp"
#include "bdeblur/simd.hpp"

namespace bdeblur {

struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> values;

  size_t size() const { return values.size(); }
  size_t dim(size_t i) const { return shape.at(i); }
  double* data() { return values.data(); }
  const double* data() const { return values.data(); }
  bool operator==(const Tensor&) const = default;
};

/// Ordered name -> tensor map. References returned by add()/get() stay valid
/// for the lifetime of the container.
class ModelParams {
 public:
  Tensor& add(const std::string& name, std::vector<size_t> shape);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  size_t count() const { return entries_.size(); }
  size_t total_size() const;
  const std::string& name(size_t i) const { return entries_[i].first; }
  Tensor& tensor(size_t i) { return entries_[i].second; }
  const Tensor& tensor(size_t i) const { return entries_[i].second; }

  /// Same names and shapes, all values zero.
  ModelParams zeros_like() const;
  void set_zero();
  bool same_layout(const ModelParams& other) const;
  bool all_finite() const;
  double squared_norm() const;

  /// Flattened copy of every value, in entry order, and its inverse.
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);

  bool operator==(const ModelParams& other) const { return entries_ == other.entries_; }

 private:
  std::deque<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, size_t> index_;
};

// Initializers ----------------------------------------------------------------

/// Uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)).
void init_xavier(Tensor& w, std::mt19937_64& rng);
/// Square matrix: identity plus N(0, noise_std^2) entries.
void init_identity(Tensor& w, double noise_std, std::mt19937_64& rng);
void fill(Tensor& t, double value);

// Dense layers ------------------------------------------------------------------

/// y = x W^T + b for a batch of rows. x: B x in, W: out x in, b: out, y: B x out.
void dense_forward(simd::ConstMat x, const Tensor& w, const Tensor& b, simd::Mat y);

/// Accumulates grad_w and grad_b; overwrites grad_x when it is non-null.
void dense_backward(simd::ConstMat x, const Tensor& w, simd::ConstMat grad_y, Tensor& grad_w,
                    Tensor& grad_b, const simd::Mat* grad_x);

// Single-vector convenience forms.
std::vector<double> dense_forward(std::span<const double> x, const Tensor& w, const Tensor& b);
struct DenseGrads {
  std::vector<double> x;
  Tensor w;
  Tensor b;
};
DenseGrads dense_backward(std::span<const double> x, const Tensor& w, std::span<const double> grad_y);

void relu_inplace(std::span<double> v);
/// grad[i] = 0 where pre[i] <= 0.
void relu_backward_inplace(std::span<const double> pre, std::span<double> grad);

// Burst MLP -----------------------------------------------------------------------
//
// Two dense layers N -> N -> N with a ReLU between, applied independently to
// every row of an M x N matrix (row m = one coefficient position across the N
// frames of a burst). Parameters are "<prefix>.w1", ".b1", ".w2", ".b2".
//
// The activation is max(z, floor); floor = 0 is the plain ReLU. A negative
// floor is a ReLU translated by a constant, which lets an identity-initialized
// MLP pass signed inputs above `floor` unchanged without large biases.

struct BurstMlpCache {
  size_t positions = 0;
  size_t burst = 0;
  double floor = 0.0;
  std::vector<double> input;   // M x N
  std::vector<double> pre;     // M x N, first-layer pre-activation
  std::vector<double> hidden;  // M x N, after ReLU
};

void add_burst_mlp(ModelParams& params, const std::string& prefix, size_t burst);

/// Identity init: w1 = I + N(0, noise_std^2), w2 = I, zero biases.
void init_burst_mlp_identity(ModelParams& params, const std::string& prefix, double noise_std,
                             std::mt19937_64& rng);

std::vector<double> burst_mlp_forward(const ModelParams& params, const std::string& prefix,
                                      std::span<const double> x, size_t positions,
                                      BurstMlpCache* cache = nullptr, double floor = 0.0);

/// Returns the gradient with respect to the input; accumulates parameter grads.
std::vector<double> burst_mlp_backward(const ModelParams& params, const std::string& prefix,
                                       const BurstMlpCache& cache, std::span<const double> grad_out,
                                       ModelParams& grads);

// Loss ---------------------------------------------------------------------------

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean squared error and its gradient 2 (pred - target) / n.
LossAndGrad mse_loss(std::span<const double> pred, std::span<const double> target);
LossAndGrad mse_loss(const Plane& pred, const Plane& target);

// Optimizer -----------------------------------------------------------------------

struct SgdConfig {
  double base_lr = 2.0;
  double momentum = 0.9;
  double decay = 0.8;
  int64_t decay_every = 5000;
  double max_grad_norm = 1e4;
};

/// base_lr * decay^floor(step / decay_every)
double lr_schedule(int64_t step, const SgdConfig& cfg = {});

enum class StepOutcome { applied, skipped_exploding };

class SgdMomentum {
 public:
  SgdMomentum(const SgdConfig& cfg, const ModelParams& params);

  /// v <- beta v + g;  p <- p - lr(step) v;  step += 1.
  /// Throws NumericFailure (and changes nothing) if a gradient is not finite;
  /// skips the batch if the global gradient norm exceeds max_grad_norm.
  StepOutcome step(ModelParams& params, const ModelParams& grads);

  int64_t steps() const { return step_; }
  double current_lr() const { return lr_schedule(step_, cfg_); }
  const ModelParams& velocity() const { return velocity_; }
  const SgdConfig& config() const { return cfg_; }

 private:
  SgdConfig cfg_;
  ModelParams velocity_;
  int64_t step_ = 0;
};

// Gradient checking ---------------------------------------------------------------

/// Relative error used throughout: |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Central differences of `f` at `x` compared with `analytic` on the given
/// coordinates (all when `coords` is empty). Returns the max relative error.
double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> x, std::span<const double> analytic, double eps = 1e-6,
                  std::span<const size_t> coords = {});

// Checkpoints ---------------------------------------------------------------------
//
// "BDNET1", u32 tensor count, then per tensor: u16 name length, name bytes,
// u8 rank, u32 dims[rank], f64 values. All little-endian.

void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace bdeblur
