#include "latentce/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "latentce/error.hpp"

namespace latentce {

namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string get_string(std::size_t n) {
    need(n, "record name");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void get_floats(float* dst, std::size_t n) {
    need(n * sizeof(float), "tensor data");
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_records(const std::vector<TensorRecord>& records) {
  std::string out = "DAEC";
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    if (r.name.size() > 0xffff) throw FormatError("record name too long: " + r.name);
    if (r.dims.size() > 0xff) throw FormatError("record rank too large: " + r.name);
    std::size_t count = 1;
    for (auto d : r.dims) count *= d;
    if (count != r.data.size()) throw ShapeError("record '" + r.name + "' dims do not match data");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(r.name.size()));
    out += r.name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(r.dims.size()));
    for (auto d : r.dims) put<std::uint32_t>(out, d);
    out.append(reinterpret_cast<const char*>(r.data.data()), r.data.size() * sizeof(float));
  }
  return out;
}

std::vector<TensorRecord> decode_records(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "DAEC") != 0)
    throw FormatError("not a checkpoint: bad magic");
  Reader rd(bytes);
  rd.get_string(4);
  const auto version = rd.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (reader version " +
                      std::to_string(kCheckpointVersion) + ")");
  const auto count = rd.get<std::uint32_t>("record count");
  std::vector<TensorRecord> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord r;
    r.name = rd.get_string(rd.get<std::uint16_t>("name length"));
    const auto rank = rd.get<std::uint8_t>("rank");
    std::size_t n = 1;
    for (int k = 0; k < rank; ++k) {
      r.dims.push_back(rd.get<std::uint32_t>("dims"));
      n *= r.dims.back();
    }
    if (n > bytes.size()) throw FormatError("checkpoint truncated in record " + r.name);
    r.data.resize(n);
    rd.get_floats(r.data.data(), n);
    out.push_back(std::move(r));
  }
  if (!rd.done()) throw FormatError("checkpoint has trailing bytes");
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_records(const std::filesystem::path& path, const std::vector<TensorRecord>& records) {
  write_file_atomic(path, encode_records(records));
}

std::vector<TensorRecord> read_records(const std::filesystem::path& path) {
  return decode_records(read_file(path));
}

void push_double(std::vector<float>& words, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  words.push_back(std::bit_cast<float>(static_cast<std::uint32_t>(bits & 0xffffffffu)));
  words.push_back(std::bit_cast<float>(static_cast<std::uint32_t>(bits >> 32)));
}

double pop_double(const std::vector<float>& words, std::size_t offset) {
  if (offset + 2 > words.size()) throw FormatError("scalar record too short");
  const std::uint64_t lo = std::bit_cast<std::uint32_t>(words[offset]);
  const std::uint64_t hi = std::bit_cast<std::uint32_t>(words[offset + 1]);
  return std::bit_cast<double>(lo | (hi << 32));
}

}  // namespace latentce
