#include "meetsync/tsv.hpp"

#include <charconv>
#include <cmath>

#include "meetsync/error.hpp"

namespace meetsync::tsv {

void append_fixed6(std::string& out, double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed, 6);
  if (ec != std::errc{}) {
    throw Error(ErrorKind::invalid_time, "value out of range for fixed-point output");
  }
  // Values that round to zero are written unsigned.
  const char* first = buf;
  if (*first == '-' && std::string_view(buf + 1, end) == "0.000000") ++first;
  out.append(first, static_cast<std::size_t>(end - first));
}

std::string fixed6(double value) {
  std::string s;
  append_fixed6(s, value);
  return s;
}

std::optional<double> parse_number(std::string_view text) noexcept {
  if (text.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

Reader::Reader(std::string_view text, std::string source_name)
    : text_(text), source_(std::move(source_name)) {
  std::string_view line;
  if (!read_line(line)) fail("missing header line");
  split(line, header_);
}

void Reader::split(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      return;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

bool Reader::read_line(std::string_view& line) {
  if (pos_ >= text_.size()) return false;
  const auto nl = text_.find('\n', pos_);
  if (nl == std::string_view::npos) {
    line = text_.substr(pos_);
    pos_ = text_.size();
  } else {
    line = text_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
  }
  ++line_;
  if (!line.empty() && line.back() == '\r') fail("CRLF line ending (expected \\n)");
  return true;
}

void Reader::expect_header(const std::vector<std::string_view>& expected) {
  line_ = 1;
  if (header_ != expected) {
    std::string want;
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (i) want += '\t';
      want += expected[i];
    }
    fail("unexpected header (want '" + want + "')");
  }
}

bool Reader::next() {
  std::string_view line;
  if (!read_line(line)) return false;
  if (line.empty()) fail("empty line");
  split(line, fields_);
  if (fields_.size() != header_.size()) {
    fail("expected " + std::to_string(header_.size()) + " fields, found " +
         std::to_string(fields_.size()));
  }
  return true;
}

double Reader::number(std::size_t column) const {
  const auto v = parse_number(fields_.at(column));
  if (!v) {
    fail("column '" + std::string(header_.at(column)) + "': not a number: '" +
         std::string(fields_.at(column)) + "'");
  }
  return *v;
}

std::optional<double> Reader::optional_number(std::size_t column) const {
  if (fields_.at(column) == kNA) return std::nullopt;
  return number(column);
}

std::optional<std::string> Reader::optional_text(std::size_t column) const {
  const auto f = fields_.at(column);
  if (f == kNA) return std::nullopt;
  if (f.empty()) fail("column '" + std::string(header_.at(column)) + "' is empty (use n/a)");
  return std::string(f);
}

void Reader::fail(const std::string& message) const {
  throw Error(ErrorKind::parse, source_ + ":" + std::to_string(line_) + ": " + message);
}

}  // namespace meetsync::tsv
