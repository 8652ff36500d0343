#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace twofield::io {

// Shortest round-trip decimal form; "nan", "inf", "-inf" for non-finite.
std::string fmt(double v);
std::string fmt(long long v);
std::string fmt(unsigned long long v);
inline std::string fmt(int v) { return fmt(static_cast<long long>(v)); }
inline std::string fmt(long v) { return fmt(static_cast<long long>(v)); }
inline std::string fmt(unsigned long v) { return fmt(static_cast<unsigned long long>(v)); }
inline std::string fmt(bool v) { return v ? "1" : "0"; }
inline std::string fmt(std::string_view v) { return std::string(v); }
inline std::string fmt(const char* v) { return std::string(v); }

// CSV table assembled in memory; cells are written verbatim.
class Csv {
 public:
  explicit Csv(std::vector<std::string> header);

  template <typename... Ts>
  void row(const Ts&... cells) {
    std::vector<std::string> r;
    r.reserve(sizeof...(Ts));
    (r.push_back(fmt(cells)), ...);
    add(std::move(r));
  }
  void add(std::vector<std::string> cells);

  std::size_t columns() const { return header_.size(); }
  std::string str() const;

 private:
  std::vector<std::string> header_;
  std::string body_;
};

// key=value lines in insertion order.
class KeyValue {
 public:
  template <typename T>
  void set(std::string_view key, const T& value) {
    lines_ += std::string(key) + "=" + fmt(value) + "\n";
  }
  std::string str() const { return lines_; }

 private:
  std::string lines_;
};

// Writes content to `path` through a temporary sibling and a rename, so a
// failed run never leaves a partially written file behind.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

}  // namespace twofield::io
