#pragma once

#include <charconv>
#include <cstdint>
#include <ostream>
#include <string>
#include <system_error>
#include <vector>

namespace fedsim {

// Shortest round-trip decimal representation; the same value always formats
// to the same text, which is what makes re-runs byte-comparable.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc{}) return "nan";
  return std::string(buf, res.ptr);
}

inline std::string format_u64(std::uint64_t v) { return std::to_string(v); }

// Quotes a field when it contains a comma, quote, or newline (RFC 4180).
inline std::string csv_escape(const std::string& field) {
  const bool needs_quotes = field.find_first_of(",\"\r\n") != std::string::npos;
  if (!needs_quotes) return field;
  std::string out;
  out.reserve(field.size() + 2);
  out.push_back('"');
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

// Append-only writer: one header row, then data rows with the same arity.
class CsvWriter {
 public:
  CsvWriter(std::ostream& os, std::vector<std::string> header) : os_(os), arity_(header.size()) {
    write_raw(header);
  }

  void write_row(const std::vector<std::string>& fields) {
    if (fields.size() != arity_)
      throw std::invalid_argument("CsvWriter: row arity does not match the header");
    write_raw(fields);
  }

  std::size_t rows_written() const { return rows_; }

 private:
  void write_raw(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) os_ << ',';
      os_ << csv_escape(fields[i]);
    }
    os_ << '\n';
    ++rows_;
  }

  std::ostream& os_;
  std::size_t arity_;
  std::size_t rows_ = 0;
};

}  // namespace fedsim
