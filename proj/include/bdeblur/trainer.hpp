#pragma once

// End-to-end training of the deconvolution network and learnable FBA on
// synthetic bursts, plus validation.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bdeblur/datagen.hpp"
#include "bdeblur/deconvnet.hpp"
#include "bdeblur/nn.hpp"

namespace bdeblur {

struct TrainConfig {
  int batch_size = 32;
  double momentum = 0.9;
  double base_lr = 2.0;
  double lr_decay = 0.8;
  int64_t decay_every = 5000;
  int64_t max_steps = 0;
  double width_scale = 0.0625;
  uint64_t seed = 0;
  int log_every = 50;
  int val_every = 500;
  double max_grad_norm = 1e4;
};

void validate(const TrainConfig& cfg);

/// Indexed example stream; example(i) must be a pure function of i.
class ExampleSource {
 public:
  virtual ~ExampleSource() = default;
  virtual TrainingExample example(uint64_t index) const = 0;
};

/// Draws from a fixed list (e.g. a loaded dataset), uniformly per index.
class DatasetSource : public ExampleSource {
 public:
  DatasetSource(std::vector<TrainingExample> examples, uint64_t seed);
  TrainingExample example(uint64_t index) const override;
  size_t size() const { return examples_.size(); }

 private:
  std::vector<TrainingExample> examples_;
  uint64_t seed_;
};

/// Generates bursts on the fly from a pool of sharp patches.
class SyntheticSource : public ExampleSource {
 public:
  SyntheticSource(std::vector<Plane> patches, DatagenConfig cfg);
  TrainingExample example(uint64_t index) const override;

 private:
  std::vector<Plane> patches_;
  DatagenConfig cfg_;
};

struct TrainLogRow {
  int64_t step = 0;
  double lr = 0.0;
  double train_mse = 0.0;  // mean batch loss since the previous row
  std::optional<double> val_mse;
  std::optional<double> val_psnr;
};

inline constexpr const char* kTrainLogHeader = "step,lr,train_mse,val_mse,val_psnr";
std::string format_log_row(const TrainLogRow& row);

struct TrainResult {
  ModelParams params;  // final parameters
  std::vector<TrainLogRow> log;
  int64_t skipped_steps = 0;
  double best_val_mse = 0.0;  // infinity when no validation ran
};

struct TrainHooks {
  std::function<void(const TrainLogRow&)> on_log;
  const ModelParams* init = nullptr;  // start from these instead of a fresh model
};

/// Runs cfg.max_steps SGD steps. The checkpoint at `checkpoint_path` always
/// holds the last good parameters: written at start, then on every validation
/// improvement (or at every validation point and at the end when `val` is
/// empty). The CSV log goes to `log_path` when non-empty. Throws
/// NumericFailure on a non-finite loss, leaving the checkpoint in place.
TrainResult train(const TrainConfig& cfg, const ExampleSource& data,
                  const std::vector<TrainingExample>& val, const std::string& checkpoint_path,
                  const std::string& log_path = "", const TrainHooks& hooks = {});

/// Loss and parameter gradient of one batch (mean over examples of the patch MSE).
double batch_loss_and_grad(const ModelParams& params, const std::vector<TrainingExample>& batch,
                           ModelParams& grads);

struct EvalResult {
  double mse = 0.0;   // mean over examples
  double psnr = 0.0;  // mean over examples
  std::vector<double> example_mse;
  std::vector<double> example_psnr;
};

using Predictor = std::function<std::vector<Plane>(const std::vector<Burst>&)>;

/// Deterministic pass without smoothing or augmentation.
EvalResult evaluate(const ModelParams& params, const std::vector<TrainingExample>& examples);
EvalResult evaluate(const Predictor& predict, const std::vector<TrainingExample>& examples,
                    size_t chunk = 32);

}  // namespace bdeblur
