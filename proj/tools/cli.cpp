#include "cli.hpp"

#include <glob.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>

#include "bdeblur/datagen.hpp"
#include "bdeblur/fba.hpp"
#include "bdeblur/fourier.hpp"
#include "bdeblur/gradcheck.hpp"
#include "bdeblur/pipeline.hpp"
#include "bdeblur/psf.hpp"
#include "bdeblur/trainer.hpp"

namespace bdeblur::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool is_image_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

// A directory (all netpbm files, sorted) or a glob pattern.
std::vector<Image> load_burst(const std::string& spec) {
  std::vector<std::string> files;
  if (fs::is_directory(spec)) {
    for (const auto& e : fs::directory_iterator(spec))
      if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path().string());
  } else {
    glob_t g{};
    if (::glob(spec.c_str(), 0, nullptr, &g) == 0)
      for (size_t i = 0; i < g.gl_pathc; ++i) files.emplace_back(g.gl_pathv[i]);
    globfree(&g);
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InvalidArgument("no burst images found at '" + spec + "'");
  std::vector<Image> out;
  for (const auto& f : files) out.push_back(read_pnm(f));
  return out;
}

std::vector<int> parse_int_list(const std::string& s, char sep) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) throw UsageError("bad integer list '" + s + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<Plane> source_patches(const std::string& where, double threshold, int crops, size_t procedural,
                                  uint64_t seed) {
  std::mt19937_64 rng(seed);
  if (where == "dead-leaves") return dead_leaves_patches(procedural, threshold, rng);
  return harvest_patches(fs::path(where), threshold, rng, crops);
}

// Reads "key = value" lines and turns them into command-line tokens for `sub`.
// Unknown keys are rejected by name.
std::vector<std::string> config_tokens(const std::string& path, CLI::App* sub) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path + "'");
  std::vector<std::string> tokens;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const CLI::Option* opt = key == "config" ? nullptr : sub->get_option_no_throw("--" + key);
    if (!opt) throw UsageError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1" || value == "yes") tokens.push_back("--" + key);
      else if (value != "false" && value != "0" && value != "no")
        throw UsageError(path + ":" + std::to_string(lineno) + ": '" + key + "' expects true or false");
    } else {
      tokens.push_back("--" + key);
      tokens.push_back(value);
    }
  }
  return tokens;
}

// Subcommands -----------------------------------------------------------------------

struct DeblurArgs {
  std::string burst, model, out;
  int stride = 5;
  double sigma = 2.0;
  double p = 11.0;
  bool no_align = false, no_color = false;
};

int cmd_deblur(const DeblurArgs& a) {
  const auto images = load_burst(a.burst);
  const ModelParams params = load_checkpoint(a.model);
  DeployConfig cfg;
  cfg.stride = a.stride;
  cfg.smoothing_sigma = a.sigma;
  cfg.vanilla_p = a.p;
  cfg.align = !a.no_align;
  cfg.color_transfer = !a.no_color;
  cfg.burst = infer_config(params).burst;
  const DeblurResult r = deblur_burst(images, params, cfg);
  write_pnm(a.out, r.image);
  std::cout << "deblurred " << images.size() << " frames (" << r.image.width() << "x"
            << r.image.height() << ") -> " << a.out << "\n";
  return kExitOk;
}

struct FbaArgs {
  std::string burst, out;
  double p = 11.0, sigma = 2.0;
  bool no_align = false;
};

int cmd_fba(const FbaArgs& a) {
  const auto images = load_burst(a.burst);
  const Image fused = fba_only(images, a.p, a.sigma, !a.no_align);
  write_pnm(a.out, fused.clamped());
  std::cout << "fused " << images.size() << " frames -> " << a.out << "\n";
  return kExitOk;
}

struct DataArgs {
  double threshold = 1e-3;
  double noise_var = 0.1;
  std::string kernel_sizes = "17,7";
  int crops = 64;
  size_t patches = 4096;
  uint64_t seed = 0;
  bool no_augment = false;

  DatagenConfig datagen() const {
    DatagenConfig cfg;
    cfg.noise_variance = noise_var;
    cfg.kernel_sizes = parse_int_list(kernel_sizes, ',');
    cfg.gradient_threshold = threshold;
    cfg.augment = !no_augment;
    cfg.seed = seed;
    return cfg;
  }
};

void add_data_options(CLI::App* sub, DataArgs& d) {
  sub->add_option("--threshold", d.threshold, "Gradient-energy threshold for sharp patches");
  sub->add_option("--noise-var", d.noise_var, "Variance of the added Gaussian noise");
  sub->add_option("--kernel-sizes", d.kernel_sizes, "Comma-separated blur kernel sizes");
  sub->add_option("--crops", d.crops, "Random crops per source image");
  sub->add_option("--patches", d.patches, "Sharp patches drawn when the source is dead-leaves");
  sub->add_option("--seed", d.seed, "Random seed");
  sub->add_flag("--no-augment", d.no_augment, "Disable dihedral augmentation");
}

struct TrainArgs {
  std::string data, out, val, log;
  int64_t steps = 5000;
  double width_scale = 0.0625;
  int batch = 32;
  double lr = 2.0, momentum = 0.9;
  int val_every = 500, log_every = 50;
  size_t val_count = kValidationCount;
  DataArgs d;
};

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg;
  cfg.max_steps = a.steps;
  cfg.width_scale = a.width_scale;
  cfg.batch_size = a.batch;
  cfg.base_lr = a.lr;
  cfg.momentum = a.momentum;
  cfg.seed = a.d.seed;
  cfg.val_every = a.val_every;
  cfg.log_every = a.log_every;
  validate(cfg);

  std::unique_ptr<ExampleSource> source;
  std::vector<TrainingExample> val;
  const DatagenConfig dcfg = a.d.datagen();
  if (a.data != "dead-leaves" && fs::is_regular_file(a.data)) {
    source = std::make_unique<DatasetSource>(load_dataset(a.data), a.d.seed);
  } else {
    auto patches = source_patches(a.data, a.d.threshold, a.d.crops, a.d.patches, a.d.seed);
    if (a.val.empty() && a.val_count > 0) val = make_validation_set(patches, dcfg, a.val_count);
    source = std::make_unique<SyntheticSource>(std::move(patches), dcfg);
  }
  if (!a.val.empty()) val = load_dataset(a.val);

  const std::string log = a.log.empty() ? a.out + ".csv" : a.log;
  TrainHooks hooks;
  hooks.on_log = [](const TrainLogRow& row) { std::cout << format_log_row(row) << std::endl; };
  std::cout << kTrainLogHeader << "\n";
  const TrainResult r = train(cfg, *source, val, a.out, log, hooks);
  std::cerr << "done: " << cfg.max_steps << " steps, " << r.skipped_steps
            << " skipped, checkpoint " << a.out << ", log " << log << "\n";
  return kExitOk;
}

struct GenArgs {
  std::string images, out;
  size_t count = kValidationCount;
  DataArgs d;
};

int cmd_gen_data(const GenArgs& a) {
  const auto patches = source_patches(a.images, a.d.threshold, a.d.crops, a.d.patches, a.d.seed);
  const auto examples = generate_examples(patches, a.d.datagen(), a.count);
  save_dataset(a.out, examples);
  std::cout << "wrote " << examples.size() << " examples from " << patches.size() << " patches -> "
            << a.out << "\n";
  return kExitOk;
}

struct SynthArgs {
  std::string image, out_dir, grid = "2x4";
  int frames = 14, kernel_size = 17;
  double noise_var = 0.0;
  bool spatially_varying = false;
  uint64_t seed = 0;
};

int cmd_synth_blur(const SynthArgs& a) {
  if (a.frames < 1) throw UsageError("--frames must be positive");
  const auto grid = parse_int_list(a.grid, 'x');
  if (grid.size() != 2 || grid[0] < 1 || grid[1] < 1) throw UsageError("--grid expects RxC, e.g. 2x4");
  const Image img = read_pnm(a.image);
  fs::create_directories(a.out_dir);
  std::mt19937_64 rng(a.seed);
  std::normal_distribution<double> noise(0.0, std::sqrt(a.noise_var));
  const GpConfig gp;
  const bool gray = img.channels() == 1;
  char name[64];
  for (int t = 0; t < a.frames; ++t) {
    Image frame;
    if (a.spatially_varying) {
      const auto kernels =
          split_trajectory(sample_trajectory(gp, rng), grid[0] * grid[1], a.kernel_size);
      frame = eff_blur(img, kernels, grid[0], grid[1]);
      for (size_t k = 0; k < kernels.size(); ++k) {
        std::snprintf(name, sizeof(name), "kernel_%02d_r%02zu.txt", t, k);
        write_kernel((fs::path(a.out_dir) / name).string(), kernels[k]);
      }
    } else {
      const BlurKernel k = rasterize(sample_trajectory(gp, rng), a.kernel_size);
      frame = fft_convolve(img, k, Boundary::reflect);
      std::snprintf(name, sizeof(name), "kernel_%02d.txt", t);
      write_kernel((fs::path(a.out_dir) / name).string(), k);
    }
    if (a.noise_var > 0.0)
      for (auto& v : frame.values()) v += noise(rng);
    std::snprintf(name, sizeof(name), gray ? "frame_%02d.pgm" : "frame_%02d.ppm", t);
    write_pnm((fs::path(a.out_dir) / name).string(), frame.clamped());
  }
  std::cout << "wrote " << a.frames << " frames to " << a.out_dir << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& model, const std::string& data) {
  const ModelParams params = load_checkpoint(model);
  const auto examples = load_dataset(data);
  const EvalResult r = evaluate(params, examples);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "examples %zu\nmse %.9g\npsnr %.6f\n", examples.size(), r.mse, r.psnr);
  std::cout << buf;
  return kExitOk;
}

int cmd_grad_check(const std::string& module) {
  const auto reports = run_grad_checks(module);
  bool ok = true;
  for (const auto& r : reports) {
    const bool pass = r.max_rel_error < kGradCheckTolerance;
    ok = ok && pass;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-18s max_rel_error %.3e  coords %5zu  %s\n", r.name.c_str(), r.max_rel_error,
                  r.coords, pass ? "ok" : "FAIL");
    std::cout << buf;
  }
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Multi-frame blind deconvolution: learned Wiener filtering with Fourier burst accumulation",
               "bdeblur"};
  app.option_defaults()->always_capture_default();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  std::string config;

  DeblurArgs deblur;
  auto* s_deblur = app.add_subcommand("deblur", "Restore one image from a burst with a trained model");
  s_deblur->add_option("--burst", deblur.burst, "Directory or glob of burst frames (PPM/PGM)")->required();
  s_deblur->add_option("--model", deblur.model, "Model checkpoint")->required();
  s_deblur->add_option("--out", deblur.out, "Output image")->required();
  s_deblur->add_option("--stride", deblur.stride, "Patch grid stride in pixels");
  s_deblur->add_option("--sigma", deblur.sigma, "Fusion-weight smoothing sigma (frequency bins)");
  s_deblur->add_option("--p", deblur.p, "Vanilla FBA exponent for the chroma path");
  s_deblur->add_flag("--no-align", deblur.no_align, "Skip phase-correlation alignment");
  s_deblur->add_flag("--no-color-transfer", deblur.no_color, "Keep the network's own chroma");

  FbaArgs fba;
  auto* s_fba = app.add_subcommand("fba", "Vanilla Fourier burst accumulation");
  s_fba->add_option("--burst", fba.burst, "Directory or glob of burst frames (PPM/PGM)")->required();
  s_fba->add_option("--out", fba.out, "Output image")->required();
  s_fba->add_option("--p", fba.p, "Weight exponent");
  s_fba->add_option("--sigma", fba.sigma, "Weight smoothing sigma (frequency bins)");
  s_fba->add_flag("--no-align", fba.no_align, "Skip phase-correlation alignment");

  TrainArgs train_args;
  auto* s_train = app.add_subcommand("train", "Train the network end to end");
  s_train->add_option("--data", train_args.data,
                      "BDDS1 dataset, image directory, or 'dead-leaves' for procedural images")
      ->required();
  s_train->add_option("--out", train_args.out, "Checkpoint path")->required();
  s_train->add_option("--steps", train_args.steps, "Number of SGD steps");
  s_train->add_option("--width-scale", train_args.width_scale, "Width factor of the dense layers");
  s_train->add_option("--batch", train_args.batch, "Batch size");
  s_train->add_option("--lr", train_args.lr, "Initial learning rate");
  s_train->add_option("--momentum", train_args.momentum, "Momentum");
  s_train->add_option("--val", train_args.val, "Validation dataset (BDDS1)");
  s_train->add_option("--val-count", train_args.val_count,
                      "Generated validation examples when --val is absent");
  s_train->add_option("--val-every", train_args.val_every, "Steps between validations");
  s_train->add_option("--log-every", train_args.log_every, "Steps between log rows");
  s_train->add_option("--log", train_args.log, "CSV log path (default: <out>.csv)");
  add_data_options(s_train, train_args.d);

  GenArgs gen;
  auto* s_gen = app.add_subcommand("gen-data", "Generate a BDDS1 dataset of synthetic bursts");
  s_gen->add_option("--images", gen.images, "Image directory, or 'dead-leaves'")->required();
  s_gen->add_option("--out", gen.out, "Dataset path")->required();
  s_gen->add_option("--count", gen.count, "Number of examples");
  add_data_options(s_gen, gen.d);

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth-blur", "Blur one image into a synthetic burst");
  s_synth->add_option("--image", synth.image, "Sharp input image")->required();
  s_synth->add_option("--out-dir", synth.out_dir, "Output directory")->required();
  s_synth->add_option("--frames", synth.frames, "Burst length");
  s_synth->add_option("--kernel-size", synth.kernel_size, "Blur kernel size (odd)");
  s_synth->add_option("--noise-var", synth.noise_var, "Variance of the added Gaussian noise");
  s_synth->add_flag("--spatially-varying", synth.spatially_varying, "Efficient Filter Flow blur");
  s_synth->add_option("--grid", synth.grid, "Region grid for spatially varying blur, RxC");
  s_synth->add_option("--seed", synth.seed, "Random seed");

  std::string eval_model, eval_data;
  auto* s_eval = app.add_subcommand("eval", "Mean MSE / PSNR of a model on a dataset");
  s_eval->add_option("--model", eval_model, "Model checkpoint")->required();
  s_eval->add_option("--data", eval_data, "BDDS1 dataset")->required();

  std::string gc_module = "all";
  auto* s_gc = app.add_subcommand("grad-check", "Finite-difference checks of all backward passes");
  s_gc->add_option("--module", gc_module, "all, nn, fba or deconvnet")
      ->check(CLI::IsMember({"all", "nn", "fba", "deconvnet"}));

  for (auto* sub : app.get_subcommands({}))
    sub->add_option("--config", config, "File of 'key = value' lines; command-line flags win");

  // Config-file values go right after the subcommand name, so that later
  // command-line occurrences take precedence.
  std::vector<std::string> tokens = args;
  try {
    auto sub_it = std::find_if(tokens.begin(), tokens.end(),
                               [&](const std::string& t) { return app.get_subcommand_no_throw(t) != nullptr; });
    if (sub_it != tokens.end()) {
      CLI::App* sub = app.get_subcommand(*sub_it);
      for (auto it = sub_it + 1; it != tokens.end(); ++it) {
        std::string path;
        if (*it == "--config" && it + 1 != tokens.end()) path = *(it + 1);
        else if (it->rfind("--config=", 0) == 0) path = it->substr(9);
        if (path.empty()) continue;
        const auto extra = config_tokens(path, sub);
        tokens.insert(sub_it + 1, extra.begin(), extra.end());
        break;
      }
    }
    std::vector<std::string> reversed(tokens.rbegin(), tokens.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*s_deblur) return cmd_deblur(deblur);
    if (*s_fba) return cmd_fba(fba);
    if (*s_train) return cmd_train(train_args);
    if (*s_gen) return cmd_gen_data(gen);
    if (*s_synth) return cmd_synth_blur(synth);
    if (*s_eval) return cmd_eval(eval_model, eval_data);
    if (*s_gc) return cmd_grad_check(gc_module);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace bdeblur::cli
