#include "sdm/kv_text.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "sdm/error.hpp"

namespace sdm {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const KvEntry& e, std::string_view source, std::string_view expected) {
  fail(ErrorKind::format, std::string(source) + ":" + std::to_string(e.line) + ": " + e.key + ": expected " +
                              std::string(expected) + ", got '" + e.value + "'");
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const char* b = s.data();
  const char* end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(b, end, out);
  return ec == std::errc() && p == end;
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> parts;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == ',' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != ',' && s[j] != '\t') ++j;
    if (j > i) parts.push_back(s.substr(i, j - i));
    i = j;
  }
  return parts;
}

}  // namespace

std::vector<KvEntry> parse_kv(std::string_view text, std::string_view source) {
  std::vector<KvEntry> entries;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    const std::string where = std::string(source) + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      require(line.back() == ']' && line.size() > 2, ErrorKind::format, where + "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string_view::npos, ErrorKind::format, where + "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    require(!key.empty(), ErrorKind::format, where + "empty key");
    KvEntry e;
    e.key = section.empty() ? std::string(key) : section + "." + std::string(key);
    e.value = std::string(trim(line.substr(eq + 1)));
    e.line = line_no;
    for (const auto& prev : entries) {
      require(prev.key != e.key, ErrorKind::format,
              where + "duplicate key '" + e.key + "' (first set on line " + std::to_string(prev.line) + ")");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<KvEntry> read_kv_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_kv(ss.str(), path.string());
}

double kv_double(const KvEntry& e, std::string_view source) {
  double v = 0.0;
  if (!parse_number(std::string_view(e.value), v)) bad_value(e, source, "a number");
  return v;
}

std::size_t kv_size(const KvEntry& e, std::string_view source) {
  std::size_t v = 0;
  if (!parse_number(std::string_view(e.value), v)) bad_value(e, source, "a non-negative integer");
  return v;
}

std::uint64_t kv_u64(const KvEntry& e, std::string_view source) {
  std::uint64_t v = 0;
  if (!parse_number(std::string_view(e.value), v)) bad_value(e, source, "a non-negative integer");
  return v;
}

bool kv_bool(const KvEntry& e, std::string_view source) {
  if (e.value == "true" || e.value == "1") return true;
  if (e.value == "false" || e.value == "0") return false;
  bad_value(e, source, "true or false");
}

std::vector<double> kv_doubles(const KvEntry& e, std::string_view source) {
  std::vector<double> out;
  for (auto part : split_list(e.value)) {
    double v = 0.0;
    if (!parse_number(part, v)) bad_value(e, source, "a list of numbers");
    out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> kv_sizes(const KvEntry& e, std::string_view source) {
  std::vector<std::size_t> out;
  for (auto part : split_list(e.value)) {
    std::size_t v = 0;
    if (!parse_number(part, v)) bad_value(e, source, "a list of non-negative integers");
    out.push_back(v);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace sdm
