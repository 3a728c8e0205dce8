#include "bdeblur/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

namespace bdeblur {

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw InvalidArgument("TrainConfig: batch_size must be >= 1");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw InvalidArgument("TrainConfig: momentum must lie in [0,1)");
  if (!(cfg.width_scale > 0.0 && cfg.width_scale <= 1.0))
    throw InvalidArgument("TrainConfig: width_scale must lie in (0,1]");
  if (!(cfg.base_lr >= 0.0) || !std::isfinite(cfg.base_lr))
    throw InvalidArgument("TrainConfig: base_lr must be finite and >= 0");
  if (!(cfg.lr_decay > 0.0) || cfg.decay_every < 1)
    throw InvalidArgument("TrainConfig: bad learning-rate decay");
  if (cfg.max_steps < 0) throw InvalidArgument("TrainConfig: max_steps must be >= 0");
  if (cfg.log_every < 1 || cfg.val_every < 1)
    throw InvalidArgument("TrainConfig: log_every and val_every must be positive");
}

DatasetSource::DatasetSource(std::vector<TrainingExample> examples, uint64_t seed)
    : examples_(std::move(examples)), seed_(seed) {
  if (examples_.empty()) throw InvalidArgument("DatasetSource: empty dataset");
}

TrainingExample DatasetSource::example(uint64_t index) const {
  return examples_[example_seed(seed_, index) % examples_.size()];
}

SyntheticSource::SyntheticSource(std::vector<Plane> patches, DatagenConfig cfg)
    : patches_(std::move(patches)), cfg_(std::move(cfg)) {
  if (patches_.empty()) throw InvalidArgument("SyntheticSource: no source patches");
  validate(cfg_);
}

TrainingExample SyntheticSource::example(uint64_t index) const {
  return generate_example(patches_, cfg_, index);
}

std::string format_log_row(const TrainLogRow& row) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,", static_cast<long long>(row.step), row.lr,
                row.train_mse);
  out = buf;
  if (row.val_mse) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g", *row.val_mse, *row.val_psnr);
    out += buf;
  } else {
    out += ",";
  }
  return out;
}

namespace {

std::vector<Burst> bursts_of(const std::vector<TrainingExample>& batch) {
  std::vector<Burst> out;
  out.reserve(batch.size());
  for (const auto& ex : batch) out.push_back(ex.burst);
  return out;
}

void write_checkpoint_atomic(const std::string& path, const ModelParams& params) {
  const std::string tmp = path + ".tmp";
  save_checkpoint(tmp, params);
  std::filesystem::rename(tmp, path);
}

}  // namespace

double batch_loss_and_grad(const ModelParams& params, const std::vector<TrainingExample>& batch,
                           ModelParams& grads) {
  if (batch.empty()) throw InvalidArgument("batch_loss_and_grad: empty batch");
  NetCache cache;
  const auto pred = net_forward(params, bursts_of(batch), &cache);
  std::vector<Plane> g(batch.size());
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (size_t b = 0; b < batch.size(); ++b) {
    auto lg = mse_loss(pred[b], batch[b].target);
    loss += lg.loss * inv;
    g[b] = Plane(kOutputSide, kOutputSide);
    for (size_t i = 0; i < g[b].size(); ++i) g[b].values()[i] = lg.grad[i] * inv;
  }
  net_backward(params, cache, g, grads);
  return loss;
}

TrainResult train(const TrainConfig& cfg, const ExampleSource& data,
                  const std::vector<TrainingExample>& val, const std::string& checkpoint_path,
                  const std::string& log_path, const TrainHooks& hooks) {
  validate(cfg);
  NetConfig net;
  net.width_scale = cfg.width_scale;
  TrainResult result;
  result.params = hooks.init ? *hooks.init : make_model(net, cfg.seed);
  if (hooks.init) infer_config(result.params);
  result.best_val_mse = std::numeric_limits<double>::infinity();
  ModelParams& params = result.params;

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) throw InvalidArgument("train: cannot open log " + log_path);
    log << kTrainLogHeader << "\n";
    log.flush();
  }
  write_checkpoint_atomic(checkpoint_path, params);

  SgdConfig sgd;
  sgd.base_lr = cfg.base_lr;
  sgd.momentum = cfg.momentum;
  sgd.decay = cfg.lr_decay;
  sgd.decay_every = cfg.decay_every;
  sgd.max_grad_norm = cfg.max_grad_norm;
  SgdMomentum opt(sgd, params);
  ModelParams grads = params.zeros_like();

  double window_loss = 0.0;
  int window_count = 0;
  uint64_t next_index = 0;
  for (int64_t step = 1; step <= cfg.max_steps; ++step) {
    std::vector<TrainingExample> batch;
    batch.reserve(cfg.batch_size);
    for (int j = 0; j < cfg.batch_size; ++j) batch.push_back(data.example(next_index++));

    const double lr = opt.current_lr();
    grads.set_zero();
    const double loss = batch_loss_and_grad(params, batch, grads);
    if (!std::isfinite(loss))
      throw NumericFailure("train: non-finite loss at step " + std::to_string(step) +
                           "; last good checkpoint kept at " + checkpoint_path);
    if (opt.step(params, grads) == StepOutcome::skipped_exploding) ++result.skipped_steps;
    window_loss += loss;
    ++window_count;

    const bool is_val = step % cfg.val_every == 0 || step == cfg.max_steps;
    const bool is_log = step % cfg.log_every == 0 || is_val;
    if (!is_log) continue;
    TrainLogRow row;
    row.step = step;
    row.lr = lr;
    row.train_mse = window_loss / window_count;
    window_loss = 0.0;
    window_count = 0;
    if (is_val) {
      if (val.empty()) {
        write_checkpoint_atomic(checkpoint_path, params);
      } else {
        const EvalResult ev = evaluate(params, val);
        row.val_mse = ev.mse;
        row.val_psnr = ev.psnr;
        if (ev.mse < result.best_val_mse) {
          result.best_val_mse = ev.mse;
          write_checkpoint_atomic(checkpoint_path, params);
        }
      }
    }
    result.log.push_back(row);
    if (log.is_open()) {
      log << format_log_row(row) << "\n";
      log.flush();
    }
    if (hooks.on_log) hooks.on_log(row);
  }
  return result;
}

EvalResult evaluate(const Predictor& predict, const std::vector<TrainingExample>& examples,
                    size_t chunk) {
  if (examples.empty()) throw InvalidArgument("evaluate: empty validation set");
  if (chunk == 0) chunk = 1;
  EvalResult r;
  for (size_t start = 0; start < examples.size(); start += chunk) {
    const size_t end = std::min(examples.size(), start + chunk);
    std::vector<Burst> bursts;
    for (size_t i = start; i < end; ++i) bursts.push_back(examples[i].burst);
    const auto pred = predict(bursts);
    if (pred.size() != bursts.size()) throw InvalidArgument("evaluate: predictor output count mismatch");
    for (size_t i = start; i < end; ++i) {
      const Plane& p = pred[i - start];
      if (!p.same_shape(examples[i].target)) throw InvalidArgument("evaluate: prediction shape mismatch");
      const double e = mse(p, examples[i].target);
      r.example_mse.push_back(e);
      r.example_psnr.push_back(psnr_from_mse(e));
    }
  }
  double sm = 0.0, sp = 0.0;
  for (size_t i = 0; i < r.example_mse.size(); ++i) {
    sm += r.example_mse[i];
    sp += r.example_psnr[i];
  }
  r.mse = sm / r.example_mse.size();
  r.psnr = sp / r.example_psnr.size();
  return r;
}

EvalResult evaluate(const ModelParams& params, const std::vector<TrainingExample>& examples) {
  infer_config(params);
  return evaluate([&](const std::vector<Burst>& b) { return net_forward(params, b); }, examples);
}

}  // namespace bdeblur
