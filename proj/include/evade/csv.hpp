#pragma once

// Minimal CSV access for the numeric, unquoted tables this project exchanges.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace evade::csv {

class Table {
 public:
  static Table read(const std::filesystem::path& path);
  static Table parse(std::string_view text);

  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return rows_.size(); }

  /// Column index by exact header name, or nullopt.
  std::optional<std::size_t> find(std::string_view name) const;
  /// Column index; throws DataError naming the missing column.
  std::size_t require(std::string_view name) const;

  const std::vector<std::string>& row(std::size_t i) const { return rows_[i]; }
  /// 1-based line number of data row i in the source (header is line 1).
  std::size_t line(std::size_t i) const { return lines_[i]; }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::size_t> lines_;
};

/// Strict whole-field parsers; nullopt on any malformed content.
std::optional<double> to_double(std::string_view field);
std::optional<std::int64_t> to_int(std::string_view field);

/// Shortest decimal text that round-trips to the same double.
std::string format(double value);
/// Empty field for nullopt.
std::string format(const std::optional<double>& value);

/// Writes comma-separated rows with '\n' line endings.
class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  Writer& field(std::string_view text);
  Writer& field(double value) { return field(std::string_view(format(value))); }
  Writer& field(const std::optional<double>& value) {
    return field(std::string_view(format(value)));
  }
  Writer& field(std::int64_t value) { return field(std::string_view(std::to_string(value))); }
  Writer& field(int value) { return field(static_cast<std::int64_t>(value)); }
  void end_row();
  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& out_;
  bool first_ = true;
};

}  // namespace evade::csv
