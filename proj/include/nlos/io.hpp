#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace nlos::io {

std::string read_file(const std::filesystem::path& path);

/// Writes through a temporary sibling file and renames it into place, so a
/// failed run never leaves a partial file behind.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Stages several outputs and publishes them together on commit(). Nothing is
/// written if the object is destroyed without commit().
class StagedOutputs {
 public:
  void add(std::filesystem::path path, std::string content);
  void commit();
  const std::map<std::filesystem::path, std::string>& files() const { return files_; }

 private:
  std::map<std::filesystem::path, std::string> files_;
};

/// 64-bit FNV-1a; stable across platforms.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);
/// Fixed-point with the given number of decimals.
std::string format_fixed(double v, int decimals);

/// Strict parse of a whole field; throws DataError mentioning `context`.
double parse_double(std::string_view field, const std::string& context);
long long parse_int(std::string_view field, const std::string& context);

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

}  // namespace nlos::io
