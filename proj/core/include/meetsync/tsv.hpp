#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace meetsync::tsv {

inline constexpr std::string_view kNA = "n/a";

/// Appends `value` in fixed-point notation with six decimals.
void append_fixed6(std::string& out, double value);
std::string fixed6(double value);

/// Strict reader for tab-separated text with a mandatory header. Every error
/// is reported as Error{parse} prefixed with "<source>:<line>: ".
class Reader {
 public:
  Reader(std::string_view text, std::string source_name);

  /// Throws unless the header line equals `expected` column-for-column.
  void expect_header(const std::vector<std::string_view>& expected);
  const std::vector<std::string_view>& header() const noexcept { return header_; }

  /// Advances to the next data row; returns false at end of input. Each row
  /// must have exactly as many fields as the header.
  bool next();
  const std::vector<std::string_view>& fields() const noexcept { return fields_; }
  std::size_t line() const noexcept { return line_; }

  double number(std::size_t column) const;
  std::optional<double> optional_number(std::size_t column) const;
  std::optional<std::string> optional_text(std::size_t column) const;

  [[noreturn]] void fail(const std::string& message) const;

 private:
  static void split(std::string_view line, std::vector<std::string_view>& out);
  bool read_line(std::string_view& line);

  std::string_view text_;
  std::size_t pos_ = 0;
  std::string source_;
  std::size_t line_ = 0;
  std::vector<std::string_view> header_;
  std::vector<std::string_view> fields_;
};

/// Parses a finite decimal number; nullopt if `text` is not one.
std::optional<double> parse_number(std::string_view text) noexcept;

}  // namespace meetsync::tsv
