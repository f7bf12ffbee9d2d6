#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace latentce {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// One named tensor as stored on disk.
struct TensorRecord {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

// "DAEC", u32 version, u32 count, then per record: u16 name length, name,
// u8 rank, u32 dims[rank], little-endian f32 data. No padding.
std::string encode_records(const std::vector<TensorRecord>& records);
std::vector<TensorRecord> decode_records(const std::string& bytes);

void write_records(const std::filesystem::path& path, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> read_records(const std::filesystem::path& path);

// Carries a 64-bit scalar bit-exactly in two 32-bit words.
void push_double(std::vector<float>& words, double v);
double pop_double(const std::vector<float>& words, std::size_t offset);

std::string read_file(const std::filesystem::path& path);
// Writes via a temporary file and rename so readers never see partial files.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace latentce
