#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "latentce/image.hpp"

namespace latentce {

inline constexpr int kCorpusImageSize = 32;
inline constexpr int kMaxGrade = 3;
inline constexpr int kManifestVersion = 1;

enum class Split { TrainDae, TrainProbe, Calibrate, Test };
inline constexpr std::array<Split, 4> kAllSplits = {Split::TrainDae, Split::TrainProbe,
                                                   Split::Calibrate, Split::Test};

std::string_view split_name(Split s);
// Throws DomainError for unknown names.
Split parse_split(std::string_view name);

struct SyntheticSample {
  int id = 0;
  Image image;
  double g = 0.0;
  int grade = 0;
  std::optional<int> binary_label;
  Split split = Split::TrainDae;
  std::string path;  // relative to the manifest directory
};

struct CorpusManifest {
  int version = kManifestVersion;
  std::uint64_t global_seed = 0;
  std::array<double, 4> fractions{};
  std::vector<SyntheticSample> samples;  // images left empty
  std::filesystem::path manifest_path;
};

// min(3, floor(4g)).
int grade_of(double g);
// 1 iff grade in {2,3}.
int binary_label_of(int grade);
// Block height in pixels for severity g: round(20 - 12g).
int block_height(double g);
// Per-sample seed derived from the corpus seed and sample id.
std::uint64_t mix_seed(std::uint64_t global_seed, std::uint64_t id);

// 32x32 image: noisy background, softened bright block whose height encodes g.
Image render_sample(std::uint64_t seed, double g);

// Split sizes for n samples; the last split absorbs rounding.
std::array<int, 4> split_sizes(int n, const std::array<double, 4>& fractions);

// Writes `manifest.csv`, `corpus.json` and `images/<id>.pgm` under `out_dir`.
CorpusManifest generate_corpus(int n, std::uint64_t global_seed,
                               const std::array<double, 4>& fractions,
                               const std::filesystem::path& out_dir);

// Loads and revalidates every sample. Accepts the manifest file or its directory.
std::vector<SyntheticSample> load_corpus(const std::filesystem::path& manifest);

std::vector<const SyntheticSample*> select_split(const std::vector<SyntheticSample>& corpus,
                                                 Split split);

}  // namespace latentce
