#pragma once

// Training data: sharp patch harvesting, dihedral augmentation, synthetic
// burst generation and the BDDS1 dataset format.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "bdeblur/core.hpp"
#include "bdeblur/deconvnet.hpp"
#include "bdeblur/psf.hpp"

namespace bdeblur {

struct TrainingExample {
  Burst burst;   // kStandardBurst frames, 65 x 65
  Plane target;  // 33 x 33 center of the sharp patch

  bool operator==(const TrainingExample&) const = default;
};

struct DatagenConfig {
  std::vector<int> kernel_sizes = {17, 7};  // size 1 gives a delta kernel
  double noise_variance = 0.1;
  double gradient_threshold = 1e-3;
  bool augment = true;
  uint64_t seed = 0;
  int frames = kStandardBurst;
  GpConfig gp;
};

void validate(const DatagenConfig& cfg);

// Patch harvesting ------------------------------------------------------------

/// Random 65 x 65 grayscale crops of every readable image in `image_dir`
/// (files visited in sorted order), kept when gradient_energy > threshold.
/// Unreadable files are skipped with a warning on stderr. Throws
/// InvalidArgument when nothing is kept.
std::vector<Plane> harvest_patches(const std::filesystem::path& image_dir, double threshold,
                                   std::mt19937_64& rng, int crops_per_image = 64);

/// Same selection rule applied to in-memory images.
std::vector<Plane> harvest_patches(const std::vector<Image>& images, double threshold,
                                   std::mt19937_64& rng, int crops_per_image = 64);

// Augmentation ------------------------------------------------------------------

/// Element `index` (0..7) of the dihedral group of the square: bit 2 = transpose
/// first, then bits 0..1 = quarter turns counter-clockwise. 0 is the identity.
Plane dihedral(const Plane& p, int index);
int dihedral_inverse(int index);

/// Uniformly chosen dihedral transform; `chosen` receives its index.
Plane augment(const Plane& p, std::mt19937_64& rng, int* chosen = nullptr);

// Bursts -----------------------------------------------------------------------

/// Intermediate products of make_burst, for inspection.
struct BurstTrace {
  std::vector<BlurKernel> kernels;
  std::vector<Plane> blurred;  // noise free
  std::vector<Plane> noisy;    // before clamping
};

/// One kernel per frame (size drawn uniformly from cfg.kernel_sizes), circular
/// blur, additive Gaussian noise, clamp to [0,1].
TrainingExample make_burst(const Plane& sharp, const DatagenConfig& cfg, std::mt19937_64& rng,
                           BurstTrace* trace = nullptr);

/// Random camera-shake kernel of the given odd size (delta for size 1).
BlurKernel random_kernel(int side, const GpConfig& gp, std::mt19937_64& rng);

/// Per-example stream seed.
uint64_t example_seed(uint64_t global_seed, uint64_t index);

/// Example `index` of the stream defined by (patches, cfg): picks a patch,
/// augments it if enabled and synthesizes a burst, all from example_seed().
TrainingExample generate_example(const std::vector<Plane>& patches, const DatagenConfig& cfg,
                                 uint64_t index);

std::vector<TrainingExample> generate_examples(const std::vector<Plane>& patches,
                                               const DatagenConfig& cfg, size_t count,
                                               uint64_t first_index = 0);

inline constexpr uint64_t kValidationSeed = 0xC0C0;
inline constexpr size_t kValidationCount = 2048;

/// Precomputed validation examples: cfg with seed kValidationSeed, no
/// augmentation.
std::vector<TrainingExample> make_validation_set(const std::vector<Plane>& patches,
                                                 DatagenConfig cfg,
                                                 size_t count = kValidationCount);

// Procedural images ---------------------------------------------------------------

/// Dead-leaves image: occluding discs with power-law radii and random gray
/// levels, plus a little texture. Values in [0,1].
Plane dead_leaves(int rows, int cols, std::mt19937_64& rng);

/// `count` dead-leaves patches passing the gradient threshold.
std::vector<Plane> dead_leaves_patches(size_t count, double threshold, std::mt19937_64& rng);

// Dataset files ---------------------------------------------------------------------
//
// "BDDS1", u32 count, then per example the 14 frames (65 x 65 f32) and the
// target (33 x 33 f32), little-endian.

void save_dataset(const std::string& path, const std::vector<TrainingExample>& examples);
std::vector<TrainingExample> load_dataset(const std::string& path);

}  // namespace bdeblur
