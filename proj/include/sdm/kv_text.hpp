#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sdm {

/// One `key = value` assignment. Keys inside a `[section]` are reported as
/// "section.key".
struct KvEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Parses `key = value` lines with `#` comments and optional `[section]`
/// headers. Errors (format) carry `source:line`.
std::vector<KvEntry> parse_kv(std::string_view text, std::string_view source);
std::vector<KvEntry> read_kv_file(const std::filesystem::path& path);

/// Typed conversions; a format error names the source line.
double kv_double(const KvEntry& e, std::string_view source);
std::size_t kv_size(const KvEntry& e, std::string_view source);
std::uint64_t kv_u64(const KvEntry& e, std::string_view source);
bool kv_bool(const KvEntry& e, std::string_view source);
std::vector<double> kv_doubles(const KvEntry& e, std::string_view source);
std::vector<std::size_t> kv_sizes(const KvEntry& e, std::string_view source);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace sdm
