#include "bdeblur/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace bdeblur {

// ModelParams -------------------------------------------------------------------

Tensor& ModelParams::add(const std::string& name, std::vector<size_t> shape) {
  if (name.empty()) throw InvalidArgument("ModelParams::add: empty name");
  if (index_.count(name)) throw InvalidArgument("ModelParams::add: duplicate tensor " + name);
  size_t n = 1;
  for (size_t d : shape) n *= d;
  index_[name] = entries_.size();
  entries_.push_back({name, Tensor{std::move(shape), std::vector<double>(n, 0.0)}});
  return entries_.back().second;
}

Tensor& ModelParams::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("ModelParams: no tensor named " + name);
  return entries_[it->second].second;
}

const Tensor& ModelParams::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("ModelParams: no tensor named " + name);
  return entries_[it->second].second;
}

size_t ModelParams::total_size() const {
  size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out;
  for (const auto& [name, t] : entries_) out.add(name, t.shape);
  return out;
}

void ModelParams::set_zero() {
  for (auto& [name, t] : entries_) std::fill(t.values.begin(), t.values.end(), 0.0);
}

bool ModelParams::same_layout(const ModelParams& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].first != other.entries_[i].first ||
        entries_[i].second.shape != other.entries_[i].second.shape)
      return false;
  return true;
}

bool ModelParams::all_finite() const {
  for (const auto& [name, t] : entries_)
    for (double v : t.values)
      if (!std::isfinite(v)) return false;
  return true;
}

double ModelParams::squared_norm() const {
  double acc = 0.0;
  for (const auto& [name, t] : entries_) acc += simd::dot(t.data(), t.data(), t.size());
  return acc;
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_size());
  for (const auto& [name, t] : entries_) flat.insert(flat.end(), t.values.begin(), t.values.end());
  return flat;
}

void ModelParams::unflatten(std::span<const double> flat) {
  if (flat.size() != total_size()) throw InvalidArgument("ModelParams::unflatten: size mismatch");
  size_t off = 0;
  for (auto& [name, t] : entries_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), t.size(), t.values.begin());
    off += t.size();
  }
}

// Initializers --------------------------------------------------------------------

void init_xavier(Tensor& w, std::mt19937_64& rng) {
  if (w.shape.size() != 2) throw InvalidArgument("init_xavier: expected a matrix");
  const double a = std::sqrt(6.0 / static_cast<double>(w.shape[0] + w.shape[1]));
  std::uniform_real_distribution<double> dist(-a, a);
  for (auto& v : w.values) v = dist(rng);
}

void init_identity(Tensor& w, double noise_std, std::mt19937_64& rng) {
  if (w.shape.size() != 2 || w.shape[0] != w.shape[1])
    throw InvalidArgument("init_identity: expected a square matrix");
  const size_t n = w.shape[0];
  std::normal_distribution<double> dist(0.0, 1.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j)
      w.values[i * n + j] = (i == j ? 1.0 : 0.0) + (noise_std > 0.0 ? noise_std * dist(rng) : 0.0);
}

void fill(Tensor& t, double value) { std::fill(t.values.begin(), t.values.end(), value); }

// Dense ------------------------------------------------------------------------------

namespace {

void check_dense(size_t in, size_t out, const Tensor& w, const Tensor& b) {
  if (w.shape.size() != 2 || w.shape[0] != out || w.shape[1] != in || b.size() != out)
    throw InvalidArgument("dense: shape mismatch");
}

void transpose(const double* src, size_t rows, size_t cols, size_t src_stride, double* dst) {
  constexpr size_t kBlock = 32;
  for (size_t r0 = 0; r0 < rows; r0 += kBlock)
    for (size_t c0 = 0; c0 < cols; c0 += kBlock) {
      const size_t r1 = std::min(rows, r0 + kBlock), c1 = std::min(cols, c0 + kBlock);
      for (size_t r = r0; r < r1; ++r)
        for (size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * src_stride + c];
    }
}

}  // namespace

void dense_forward(simd::ConstMat x, const Tensor& w, const Tensor& b, simd::Mat y) {
  const size_t out = y.cols, in = x.cols;
  check_dense(in, out, w, b);
  if (x.rows != y.rows) throw InvalidArgument("dense_forward: batch mismatch");
  thread_local std::vector<double> wt;
  wt.resize(in * out);
  transpose(w.data(), out, in, in, wt.data());
  for (size_t r = 0; r < y.rows; ++r) std::copy_n(b.data(), out, y.row(r));
  simd::gemm_acc(x, {wt.data(), in, out, out}, y);
}

void dense_backward(simd::ConstMat x, const Tensor& w, simd::ConstMat grad_y, Tensor& grad_w,
                    Tensor& grad_b, const simd::Mat* grad_x) {
  const size_t out = grad_y.cols, in = x.cols, batch = x.rows;
  check_dense(in, out, w, grad_b);
  if (grad_w.shape != w.shape) throw InvalidArgument("dense_backward: grad shape mismatch");
  if (grad_y.rows != batch) throw InvalidArgument("dense_backward: batch mismatch");

  for (size_t r = 0; r < batch; ++r) simd::axpy(1.0, grad_y.row(r), grad_b.data(), out);

  thread_local std::vector<double> gyt;
  gyt.resize(out * batch);
  transpose(grad_y.data, batch, out, grad_y.stride, gyt.data());
  simd::gemm_acc({gyt.data(), out, batch, batch}, x, {grad_w.data(), out, in, in});

  if (grad_x) {
    if (grad_x->rows != batch || grad_x->cols != in)
      throw InvalidArgument("dense_backward: grad_x shape mismatch");
    for (size_t r = 0; r < batch; ++r) std::fill_n(grad_x->row(r), in, 0.0);
    simd::gemm_acc(grad_y, {w.data(), out, in, in}, *grad_x);
  }
}

std::vector<double> dense_forward(std::span<const double> x, const Tensor& w, const Tensor& b) {
  if (w.shape.size() != 2) throw InvalidArgument("dense: shape mismatch");
  std::vector<double> y(w.shape[0]);
  dense_forward({x.data(), 1, x.size(), x.size()}, w, b, {y.data(), 1, y.size(), y.size()});
  return y;
}

DenseGrads dense_backward(std::span<const double> x, const Tensor& w,
                          std::span<const double> grad_y) {
  if (w.shape.size() != 2) throw InvalidArgument("dense: shape mismatch");
  DenseGrads g{std::vector<double>(x.size()), Tensor{w.shape, std::vector<double>(w.size())},
               Tensor{{w.shape[0]}, std::vector<double>(w.shape[0])}};
  simd::Mat gx{g.x.data(), 1, x.size(), x.size()};
  dense_backward({x.data(), 1, x.size(), x.size()}, w, {grad_y.data(), 1, grad_y.size(), grad_y.size()},
                 g.w, g.b, &gx);
  return g;
}

void relu_inplace(std::span<double> v) {
  for (auto& x : v) x = x > 0.0 ? x : 0.0;
}

void relu_backward_inplace(std::span<const double> pre, std::span<double> grad) {
  for (size_t i = 0; i < grad.size(); ++i)
    if (!(pre[i] > 0.0)) grad[i] = 0.0;
}

// Burst MLP ----------------------------------------------------------------------------

void add_burst_mlp(ModelParams& params, const std::string& prefix, size_t burst) {
  params.add(prefix + ".w1", {burst, burst});
  params.add(prefix + ".b1", {burst});
  params.add(prefix + ".w2", {burst, burst});
  params.add(prefix + ".b2", {burst});
}

void init_burst_mlp_identity(ModelParams& params, const std::string& prefix, double noise_std,
                             std::mt19937_64& rng) {
  init_identity(params.get(prefix + ".w1"), noise_std, rng);
  init_identity(params.get(prefix + ".w2"), 0.0, rng);
  fill(params.get(prefix + ".b1"), 0.0);
  fill(params.get(prefix + ".b2"), 0.0);
}

std::vector<double> burst_mlp_forward(const ModelParams& params, const std::string& prefix,
                                      std::span<const double> x, size_t positions,
                                      BurstMlpCache* cache, double floor) {
  const Tensor& w1 = params.get(prefix + ".w1");
  const Tensor& b1 = params.get(prefix + ".b1");
  const Tensor& w2 = params.get(prefix + ".w2");
  const Tensor& b2 = params.get(prefix + ".b2");
  const size_t n = w1.shape[0];
  if (x.size() != positions * n) throw InvalidArgument("burst_mlp: burst size mismatch");

  std::vector<double> pre(positions * n), out(positions * n);
  dense_forward({x.data(), positions, n, n}, w1, b1, {pre.data(), positions, n, n});
  std::vector<double> hidden = pre;
  for (auto& v : hidden) v = std::max(v, floor);
  dense_forward({hidden.data(), positions, n, n}, w2, b2, {out.data(), positions, n, n});
  if (cache) {
    cache->positions = positions;
    cache->burst = n;
    cache->floor = floor;
    cache->input.assign(x.begin(), x.end());
    cache->pre = std::move(pre);
    cache->hidden = std::move(hidden);
  }
  return out;
}

std::vector<double> burst_mlp_backward(const ModelParams& params, const std::string& prefix,
                                       const BurstMlpCache& cache, std::span<const double> grad_out,
                                       ModelParams& grads) {
  const size_t m = cache.positions, n = cache.burst;
  if (grad_out.size() != m * n) throw InvalidArgument("burst_mlp_backward: shape mismatch");
  std::vector<double> g_hidden(m * n), g_x(m * n);
  simd::Mat gh{g_hidden.data(), m, n, n};
  dense_backward({cache.hidden.data(), m, n, n}, params.get(prefix + ".w2"),
                 {grad_out.data(), m, n, n}, grads.get(prefix + ".w2"), grads.get(prefix + ".b2"),
                 &gh);
  for (size_t i = 0; i < g_hidden.size(); ++i)
    if (!(cache.pre[i] > cache.floor)) g_hidden[i] = 0.0;
  simd::Mat gx{g_x.data(), m, n, n};
  dense_backward({cache.input.data(), m, n, n}, params.get(prefix + ".w1"),
                 {g_hidden.data(), m, n, n}, grads.get(prefix + ".w1"), grads.get(prefix + ".b1"),
                 &gx);
  return g_x;
}

// Loss ------------------------------------------------------------------------------------

LossAndGrad mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw InvalidArgument("mse_loss: shape mismatch");
  if (pred.empty()) throw InvalidArgument("mse_loss: empty input");
  LossAndGrad out;
  out.grad.resize(pred.size());
  const double inv = 1.0 / static_cast<double>(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    out.loss += d * d;
    out.grad[i] = 2.0 * d * inv;
  }
  out.loss *= inv;
  return out;
}

LossAndGrad mse_loss(const Plane& pred, const Plane& target) {
  if (!pred.same_shape(target)) throw InvalidArgument("mse_loss: shape mismatch");
  return mse_loss(std::span<const double>(pred.values()), std::span<const double>(target.values()));
}

// Optimizer --------------------------------------------------------------------------------

double lr_schedule(int64_t step, const SgdConfig& cfg) {
  if (step < 0) throw InvalidArgument("lr_schedule: negative step");
  return cfg.base_lr * std::pow(cfg.decay, static_cast<double>(step / cfg.decay_every));
}

SgdMomentum::SgdMomentum(const SgdConfig& cfg, const ModelParams& params)
    : cfg_(cfg), velocity_(params.zeros_like()) {
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw InvalidArgument("SgdMomentum: momentum must lie in [0,1)");
  if (cfg.decay_every <= 0) throw InvalidArgument("SgdMomentum: decay period must be positive");
}

StepOutcome SgdMomentum::step(ModelParams& params, const ModelParams& grads) {
  if (!params.same_layout(velocity_) || !grads.same_layout(velocity_))
    throw InvalidArgument("SgdMomentum::step: parameter layout mismatch");
  if (!grads.all_finite()) throw NumericFailure("SgdMomentum::step: non-finite gradient");
  if (std::sqrt(grads.squared_norm()) > cfg_.max_grad_norm) return StepOutcome::skipped_exploding;

  const double lr = lr_schedule(step_, cfg_);
  for (size_t i = 0; i < params.count(); ++i) {
    auto& v = velocity_.tensor(i).values;
    auto& p = params.tensor(i).values;
    const auto& g = grads.tensor(i).values;
    for (size_t j = 0; j < v.size(); ++j) {
      v[j] = cfg_.momentum * v[j] + g[j];
      p[j] -= lr * v[j];
    }
  }
  ++step_;
  return StepOutcome::applied;
}

// Gradient checking ----------------------------------------------------------------------

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> x, std::span<const double> analytic, double eps,
                  std::span<const size_t> coords) {
  if (analytic.size() != x.size()) throw InvalidArgument("grad_check: gradient size mismatch");
  std::vector<double> probe(x.begin(), x.end());
  double worst = 0.0;
  auto check = [&](size_t i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double fp = f(probe);
    probe[i] = orig - eps;
    const double fm = f(probe);
    probe[i] = orig;
    worst = std::max(worst, relative_error(analytic[i], (fp - fm) / (2.0 * eps)));
  };
  if (coords.empty()) {
    for (size_t i = 0; i < x.size(); ++i) check(i);
  } else {
    for (size_t i : coords) check(i);
  }
  return worst;
}

// Checkpoints --------------------------------------------------------------------------------

namespace {

constexpr char kMagic[6] = {'B', 'D', 'N', 'E', 'T', '1'};

template <class U>
void put_le(std::ostream& out, U v) {
  unsigned char buf[sizeof(U)];
  for (size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <class U>
U get_le(std::istream& in, const std::string& path) {
  unsigned char buf[sizeof(U)];
  in.read(reinterpret_cast<char*>(buf), sizeof(U));
  if (!in) throw InvalidArgument("load_checkpoint: truncated file " + path);
  U v = 0;
  for (size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("save_checkpoint: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  put_le<uint32_t>(out, static_cast<uint32_t>(params.count()));
  for (size_t i = 0; i < params.count(); ++i) {
    const std::string& name = params.name(i);
    const Tensor& t = params.tensor(i);
    if (name.size() > 0xFFFF || t.shape.size() > 0xFF)
      throw InvalidArgument("save_checkpoint: name or rank too large");
    put_le<uint16_t>(out, static_cast<uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<uint8_t>(out, static_cast<uint8_t>(t.shape.size()));
    for (size_t d : t.shape) put_le<uint32_t>(out, static_cast<uint32_t>(d));
    for (double v : t.values) put_le<uint64_t>(out, std::bit_cast<uint64_t>(v));
  }
  if (!out) throw InvalidArgument("save_checkpoint: write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("load_checkpoint: cannot open " + path);
  char magic[6];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw InvalidArgument("load_checkpoint: bad magic in " + path);
  const uint32_t count = get_le<uint32_t>(in, path);
  ModelParams params;
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t len = get_le<uint16_t>(in, path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw InvalidArgument("load_checkpoint: truncated file " + path);
    const uint8_t rank = get_le<uint8_t>(in, path);
    std::vector<size_t> shape(rank);
    for (auto& d : shape) d = get_le<uint32_t>(in, path);
    Tensor& t = params.add(name, shape);
    for (auto& v : t.values) v = std::bit_cast<double>(get_le<uint64_t>(in, path));
  }
  return params;
}

}  // namespace bdeblur
