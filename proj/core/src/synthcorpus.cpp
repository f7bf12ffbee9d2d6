#include "latentce/synthcorpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "latentce/error.hpp"

namespace latentce {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kBackgroundMean = 0.1;
constexpr double kBackgroundStd = 0.05;
constexpr float kBlockIntensity = 0.8f;
constexpr int kBlockWidth = 16;
constexpr int kWidthJitter = 2;
constexpr int kVerticalJitter = 3;
constexpr const char* kManifestHeader = "id,g,grade,binary_label,split,path";

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::string format_g(double g) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", g);
  return buf;
}

std::string image_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "images/%06d.pgm", id);
  return buf;
}

fs::path manifest_file(const fs::path& p) {
  return fs::is_directory(p) ? p / "manifest.csv" : p;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string_view split_name(Split s) {
  switch (s) {
    case Split::TrainDae: return "train-dae";
    case Split::TrainProbe: return "train-probe";
    case Split::Calibrate: return "calibrate";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  for (Split s : kAllSplits)
    if (split_name(s) == name) return s;
  throw DomainError("unknown split '" + std::string(name) + "'");
}

int grade_of(double g) { return std::min(kMaxGrade, static_cast<int>(std::floor(4.0 * g))); }

int binary_label_of(int grade) { return grade >= 2 ? 1 : 0; }

int block_height(double g) { return static_cast<int>(std::lround(20.0 - 12.0 * g)); }

std::uint64_t mix_seed(std::uint64_t global_seed, std::uint64_t id) {
  return splitmix64(global_seed ^ splitmix64(id + 0x632be59bd9b4e019ull));
}

Image render_sample(std::uint64_t seed, double g) {
  if (!(g >= 0.0 && g <= 1.0)) throw DomainError("severity must lie in [0,1]");
  constexpr int n = kCorpusImageSize;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> width_jitter(-kWidthJitter, kWidthJitter);
  std::uniform_int_distribution<int> shift_jitter(-kVerticalJitter, kVerticalJitter);
  const int width = kBlockWidth + width_jitter(rng);
  const int shift = shift_jitter(rng);
  const int height = block_height(g);
  const int top = n / 2 - height / 2 + shift;
  const int left = n / 2 - width / 2;

  std::normal_distribution<double> noise(kBackgroundMean, kBackgroundStd);
  Image img(n, n);
  for (auto& v : img.pixels) v = static_cast<float>(std::clamp(noise(rng), 0.0, 1.0));

  // The block mask is box-blurred once so only its edges are softened.
  std::vector<float> mask(static_cast<std::size_t>(n) * n, 0.0f);
  for (int y = top; y < top + height; ++y)
    for (int x = left; x < left + width; ++x) mask[y * n + x] = 1.0f;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      float acc = 0.0f;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < n && xx >= 0 && xx < n) acc += mask[yy * n + xx];
        }
      const float m = acc / 9.0f;
      float& p = img.at(y, x);
      p = (1.0f - m) * p + m * kBlockIntensity;
    }
  }
  return img;
}

std::array<int, 4> split_sizes(int n, const std::array<double, 4>& fractions) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw DomainError("split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("split fractions must sum to 1");
  std::array<int, 4> sizes{};
  int used = 0;
  for (int i = 0; i < 3; ++i) {
    sizes[i] = static_cast<int>(std::lround(n * fractions[i]));
    used += sizes[i];
  }
  sizes[3] = n - used;
  for (int s : sizes)
    if (s < 1) throw DomainError("every split needs at least one sample");
  return sizes;
}

CorpusManifest generate_corpus(int n, std::uint64_t global_seed,
                               const std::array<double, 4>& fractions, const fs::path& out_dir) {
  if (n < 100) throw DomainError("corpus size must be at least 100");
  const auto sizes = split_sizes(n, fractions);

  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  CorpusManifest m;
  m.global_seed = global_seed;
  m.fractions = fractions;
  m.manifest_path = out_dir / "manifest.csv";

  std::mt19937_64 rng(global_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  json image_hashes = json::array();
  int split_index = 0, split_end = sizes[0];
  for (int id = 0; id < n; ++id) {
    while (id >= split_end) split_end += sizes[++split_index];
    SyntheticSample s;
    s.id = id;
    // Stored at manifest precision so reloads are exact.
    s.g = std::stod(format_g(unit(rng)));
    s.grade = grade_of(s.g);
    s.split = kAllSplits[split_index];
    if (!(s.split == Split::TrainProbe && s.g > 0.4 && s.g < 0.6))
      s.binary_label = binary_label_of(s.grade);
    s.path = image_name(id);
    const Image img = render_sample(mix_seed(global_seed, id), s.g);
    write_pgm(img, out_dir / s.path);
    image_hashes.push_back(hex64(file_hash(out_dir / s.path)));
    m.samples.push_back(std::move(s));
  }

  {
    std::ofstream os(m.manifest_path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + m.manifest_path.string());
    os << kManifestHeader << '\n';
    for (const auto& s : m.samples) {
      os << s.id << ',' << format_g(s.g) << ',' << s.grade << ',';
      if (s.binary_label) os << *s.binary_label;
      os << ',' << split_name(s.split) << ',' << s.path << '\n';
    }
    if (!os) throw IoError("write failed for " + m.manifest_path.string());
  }

  json sidecar = {{"version", m.version},
                  {"global_seed", global_seed},
                  {"n", n},
                  {"fractions", fractions},
                  {"manifest_fnv", hex64(file_hash(m.manifest_path))},
                  {"image_fnv", image_hashes}};
  std::ofstream js(out_dir / "corpus.json", std::ios::trunc);
  if (!js) throw IoError("cannot write " + (out_dir / "corpus.json").string());
  js << sidecar.dump(2) << '\n';
  return m;
}

std::vector<SyntheticSample> load_corpus(const fs::path& manifest) {
  const fs::path file = manifest_file(manifest);
  const fs::path root = file.parent_path();
  std::ifstream is(file);
  if (!is) throw IoError("cannot open manifest " + file.string());

  std::string line;
  if (!std::getline(is, line) || line != kManifestHeader)
    throw FormatError(file.string() + ": missing or wrong header row");

  std::vector<SyntheticSample> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const long long row_id = static_cast<long long>(out.size());
    const auto cells = split_csv(line);
    if (cells.size() != 6) throw CorruptCorpusError(row_id, "expected 6 columns");
    SyntheticSample s;
    try {
      s.id = std::stoi(cells[0]);
      s.g = std::stod(cells[1]);
      s.grade = std::stoi(cells[2]);
      if (!cells[3].empty()) s.binary_label = std::stoi(cells[3]);
      s.split = parse_split(cells[4]);
    } catch (const CorruptCorpusError&) {
      throw;
    } catch (const std::exception& e) {
      throw CorruptCorpusError(row_id, std::string("unparsable row: ") + e.what());
    }
    s.path = cells[5];
    if (s.id != row_id) throw CorruptCorpusError(s.id, "ids must be contiguous from 0");
    if (!(s.g >= 0.0 && s.g <= 1.0)) throw CorruptCorpusError(s.id, "severity outside [0,1]");
    if (s.grade != grade_of(s.g)) throw CorruptCorpusError(s.id, "grade inconsistent with severity");
    if (s.binary_label && *s.binary_label != binary_label_of(s.grade))
      throw CorruptCorpusError(s.id, "binary label inconsistent with grade");
    const fs::path img_path = root / s.path;
    if (!fs::exists(img_path)) throw CorruptCorpusError(s.id, "missing image " + img_path.string());
    try {
      s.image = read_pgm(img_path);
    } catch (const Error& e) {
      throw CorruptCorpusError(s.id, e.what());
    }
    if (s.image.height != kCorpusImageSize || s.image.width != kCorpusImageSize)
      throw CorruptCorpusError(s.id, "image is not 32x32");
    out.push_back(std::move(s));
  }
  if (out.empty()) throw CorruptCorpusError(-1, "manifest has no samples");

  const fs::path sidecar_path = root / "corpus.json";
  if (fs::exists(sidecar_path)) {
    json sidecar;
    try {
      std::ifstream js(sidecar_path);
      sidecar = json::parse(js);
    } catch (const json::exception& e) {
      throw FormatError(sidecar_path.string() + ": " + e.what());
    }
    const auto& hashes = sidecar.at("image_fnv");
    if (hashes.size() != out.size()) throw CorruptCorpusError(-1, "sample count differs from sidecar");
    for (const auto& s : out)
      if (hashes[s.id].get<std::string>() != hex64(file_hash(root / s.path)))
        throw CorruptCorpusError(s.id, "image checksum mismatch");
    if (sidecar.at("manifest_fnv").get<std::string>() != hex64(file_hash(file)))
      throw CorruptCorpusError(-1, "manifest checksum mismatch");
  }
  return out;
}

std::vector<const SyntheticSample*> select_split(const std::vector<SyntheticSample>& corpus,
                                                 Split split) {
  std::vector<const SyntheticSample*> out;
  for (const auto& s : corpus)
    if (s.split == split) out.push_back(&s);
  return out;
}

}  // namespace latentce
