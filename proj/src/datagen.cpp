#include "bdeblur/datagen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>

#include "bdeblur/fourier.hpp"

namespace bdeblur {

namespace fs = std::filesystem;

void validate(const DatagenConfig& cfg) {
  if (!(cfg.noise_variance >= 0.0) || !std::isfinite(cfg.noise_variance))
    throw InvalidArgument("DatagenConfig: noise_variance must be >= 0");
  if (cfg.kernel_sizes.empty()) throw InvalidArgument("DatagenConfig: no kernel sizes");
  for (int k : cfg.kernel_sizes)
    if (k < 1 || k % 2 == 0 || k > kPatchSide)
      throw InvalidArgument("DatagenConfig: kernel sizes must be odd and at most 65");
  if (cfg.frames < 1) throw InvalidArgument("DatagenConfig: frames must be positive");
}

// Harvesting ---------------------------------------------------------------------

namespace {

Plane crop(const Plane& p, int r0, int c0, int side) {
  Plane out(side, side);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) out(r, c) = p(r0 + r, c0 + c);
  return out;
}

void harvest_from(const Plane& gray, double threshold, std::mt19937_64& rng, int crops,
                  std::vector<Plane>& out) {
  if (gray.rows() < kPatchSide || gray.cols() < kPatchSide) return;
  std::uniform_int_distribution<int> rows(0, gray.rows() - kPatchSide);
  std::uniform_int_distribution<int> cols(0, gray.cols() - kPatchSide);
  for (int i = 0; i < crops; ++i) {
    const int r = rows(rng), c = cols(rng);
    Plane patch = crop(gray, r, c, kPatchSide);
    if (gradient_energy(patch) > threshold) out.push_back(std::move(patch));
  }
}

}  // namespace

std::vector<Plane> harvest_patches(const std::vector<Image>& images, double threshold,
                                   std::mt19937_64& rng, int crops_per_image) {
  if (crops_per_image < 1) throw InvalidArgument("harvest_patches: crops_per_image must be positive");
  std::vector<Plane> out;
  for (const auto& img : images) harvest_from(img.gray(), threshold, rng, crops_per_image, out);
  if (out.empty()) throw InvalidArgument("harvest_patches: no patch passed the gradient threshold");
  return out;
}

std::vector<Plane> harvest_patches(const fs::path& image_dir, double threshold,
                                   std::mt19937_64& rng, int crops_per_image) {
  if (!fs::is_directory(image_dir))
    throw InvalidArgument("harvest_patches: not a directory: " + image_dir.string());
  if (crops_per_image < 1) throw InvalidArgument("harvest_patches: crops_per_image must be positive");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(image_dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::vector<Plane> out;
  for (const auto& f : files) {
    Image img;
    try {
      img = read_pnm(f.string());
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << f.string() << ": " << e.what() << "\n";
      continue;
    }
    harvest_from(img.gray(), threshold, rng, crops_per_image, out);
  }
  if (out.empty())
    throw InvalidArgument("harvest_patches: empty dataset (no patch passed the threshold in " +
                          image_dir.string() + ")");
  return out;
}

// Augmentation ---------------------------------------------------------------------

namespace {

Plane rotate90(const Plane& p) {
  // Counter-clockwise: out(r, c) = p(c, n-1-r).
  Plane out(p.cols(), p.rows());
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c) out(r, c) = p(c, p.cols() - 1 - r);
  return out;
}

Plane transpose(const Plane& p) {
  Plane out(p.cols(), p.rows());
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c) out(r, c) = p(c, r);
  return out;
}

}  // namespace

Plane dihedral(const Plane& p, int index) {
  if (index < 0 || index > 7) throw InvalidArgument("dihedral: index must be in 0..7");
  if (p.rows() != p.cols()) throw InvalidArgument("dihedral: patch must be square");
  Plane out = (index & 4) ? transpose(p) : p;
  for (int k = 0; k < (index & 3); ++k) out = rotate90(out);
  return out;
}

int dihedral_inverse(int index) {
  if (index < 0 || index > 7) throw InvalidArgument("dihedral_inverse: index must be in 0..7");
  // Rotations invert by the opposite turn; reflections are involutions.
  if (index & 4) return index;
  return (4 - index) & 3;
}

Plane augment(const Plane& p, std::mt19937_64& rng, int* chosen) {
  const int index = std::uniform_int_distribution<int>(0, 7)(rng);
  if (chosen) *chosen = index;
  return dihedral(p, index);
}

// Bursts -----------------------------------------------------------------------------

namespace {

const TrajectorySampler& cached_sampler(const GpConfig& gp) {
  static std::mutex mu;
  static std::map<std::tuple<double, double, int>, std::unique_ptr<TrajectorySampler>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{gp.length_scale, gp.variance, gp.samples}];
  if (!slot) slot = std::make_unique<TrajectorySampler>(gp);
  return *slot;
}

}  // namespace

BlurKernel random_kernel(int side, const GpConfig& gp, std::mt19937_64& rng) {
  if (side == 1) return delta_kernel(1);
  return rasterize(center_trajectory(cached_sampler(gp).sample(rng)), side);
}

TrainingExample make_burst(const Plane& sharp, const DatagenConfig& cfg, std::mt19937_64& rng,
                           BurstTrace* trace) {
  validate(cfg);
  if (sharp.rows() != kPatchSide || sharp.cols() != kPatchSide)
    throw InvalidArgument("make_burst: sharp patch must be 65x65");
  TrainingExample ex;
  ex.target = crop_center(sharp, kOutputSide);
  if (trace) *trace = BurstTrace();
  const double sigma = std::sqrt(cfg.noise_variance);
  std::uniform_int_distribution<size_t> pick(0, cfg.kernel_sizes.size() - 1);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<BlurKernel> kernels;
  for (int t = 0; t < cfg.frames; ++t)
    kernels.push_back(random_kernel(cfg.kernel_sizes[pick(rng)], cfg.gp, rng));
  std::vector<Plane> frames = fft_convolve_many(sharp, kernels, Boundary::circular);
  if (trace) {
    trace->kernels = kernels;
    trace->blurred = frames;
  }
  for (auto& frame : frames) {
    for (auto& v : frame) v += sigma * noise(rng);
    if (trace) trace->noisy.push_back(frame);
    for (auto& v : frame) v = std::clamp(v, 0.0, 1.0);
  }
  ex.burst = std::move(frames);
  return ex;
}

uint64_t example_seed(uint64_t global_seed, uint64_t index) {
  // splitmix64 finalizer over a combination of both words.
  uint64_t z = global_seed * 0x9E3779B97F4A7C15ull + index + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

TrainingExample generate_example(const std::vector<Plane>& patches, const DatagenConfig& cfg,
                                 uint64_t index) {
  if (patches.empty()) throw InvalidArgument("generate_example: no source patches");
  std::mt19937_64 rng(example_seed(cfg.seed, index));
  const size_t which = std::uniform_int_distribution<size_t>(0, patches.size() - 1)(rng);
  const Plane sharp = cfg.augment ? augment(patches[which], rng) : patches[which];
  return make_burst(sharp, cfg, rng);
}

std::vector<TrainingExample> generate_examples(const std::vector<Plane>& patches,
                                               const DatagenConfig& cfg, size_t count,
                                               uint64_t first_index) {
  std::vector<TrainingExample> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) out.push_back(generate_example(patches, cfg, first_index + i));
  return out;
}

std::vector<TrainingExample> make_validation_set(const std::vector<Plane>& patches,
                                                 DatagenConfig cfg, size_t count) {
  cfg.seed = kValidationSeed;
  cfg.augment = false;
  return generate_examples(patches, cfg, count);
}

// Procedural images --------------------------------------------------------------------

Plane dead_leaves(int rows, int cols, std::mt19937_64& rng) {
  if (rows < 1 || cols < 1) throw InvalidArgument("dead_leaves: empty image");
  Plane img(rows, cols, 0.5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double rmin = 2.0, rmax = 0.25 * std::max(rows, cols) + rmin;
  const int discs = std::max(50, rows * cols / 12);
  for (int i = 0; i < discs; ++i) {
    // Radius density proportional to r^-3 on [rmin, rmax] (inverse CDF).
    const double u = unit(rng);
    const double a = 1.0 / (rmin * rmin), b = 1.0 / (rmax * rmax);
    const double r = 1.0 / std::sqrt(a - u * (a - b));
    const double cy = unit(rng) * rows, cx = unit(rng) * cols;
    const double level = 0.1 + 0.8 * unit(rng);
    const double gy = (unit(rng) - 0.5) * 0.2 / r, gx = (unit(rng) - 0.5) * 0.2 / r;
    const int r0 = std::max(0, static_cast<int>(std::floor(cy - r)));
    const int r1 = std::min(rows - 1, static_cast<int>(std::ceil(cy + r)));
    const int c0 = std::max(0, static_cast<int>(std::floor(cx - r)));
    const int c1 = std::min(cols - 1, static_cast<int>(std::ceil(cx + r)));
    for (int y = r0; y <= r1; ++y)
      for (int x = c0; x <= c1; ++x) {
        const double dy = y - cy, dx = x - cx;
        if (dy * dy + dx * dx <= r * r) img(y, x) = std::clamp(level + gy * dy + gx * dx, 0.0, 1.0);
      }
  }
  return img;
}

std::vector<Plane> dead_leaves_patches(size_t count, double threshold, std::mt19937_64& rng) {
  std::vector<Plane> out;
  out.reserve(count);
  while (out.size() < count) {
    Plane img = dead_leaves(kPatchSide, kPatchSide, rng);
    if (gradient_energy(img) > threshold) out.push_back(std::move(img));
  }
  return out;
}

// Dataset files ------------------------------------------------------------------------

namespace {

constexpr char kMagic[5] = {'B', 'D', 'D', 'S', '1'};

void put_u32(std::ostream& os, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw InvalidArgument("load_dataset: truncated file");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

void put_plane(std::ostream& os, const Plane& p) {
  for (double v : p) put_u32(os, std::bit_cast<uint32_t>(static_cast<float>(v)));
}

Plane get_plane(std::istream& is, int side) {
  Plane p(side, side);
  for (auto& v : p) v = std::bit_cast<float>(get_u32(is));
  return p;
}

}  // namespace

void save_dataset(const std::string& path, const std::vector<TrainingExample>& examples) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("save_dataset: cannot open " + path);
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, static_cast<uint32_t>(examples.size()));
  for (const auto& ex : examples) {
    if (ex.burst.size() != static_cast<size_t>(kStandardBurst))
      throw InvalidArgument("save_dataset: examples must hold 14 frames");
    for (const auto& f : ex.burst) {
      if (f.rows() != kPatchSide || f.cols() != kPatchSide)
        throw InvalidArgument("save_dataset: frames must be 65x65");
      put_plane(os, f);
    }
    if (ex.target.rows() != kOutputSide || ex.target.cols() != kOutputSide)
      throw InvalidArgument("save_dataset: targets must be 33x33");
    put_plane(os, ex.target);
  }
  if (!os) throw NumericFailure("save_dataset: write failed for " + path);
}

std::vector<TrainingExample> load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("load_dataset: cannot open " + path);
  char magic[5];
  if (!is.read(magic, 5) || std::memcmp(magic, kMagic, 5) != 0)
    throw InvalidArgument("load_dataset: not a BDDS1 file: " + path);
  const uint32_t count = get_u32(is);
  std::vector<TrainingExample> out(count);
  for (auto& ex : out) {
    for (int t = 0; t < kStandardBurst; ++t) ex.burst.push_back(get_plane(is, kPatchSide));
    ex.target = get_plane(is, kOutputSide);
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw InvalidArgument("load_dataset: trailing bytes in " + path);
  return out;
}

}  // namespace bdeblur
