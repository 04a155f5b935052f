#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace reshare::csv {

/// One parsed record. `line` is the 1-based line on which the record starts.
struct Record {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

/// Streaming RFC 4180 reader: quoted fields may contain commas, doubled quotes and newlines.
class Reader {
 public:
  explicit Reader(const std::filesystem::path& path);

  /// Reads the next record; false at end of file. Throws DataError on unterminated quotes.
  bool next(Record& record);

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_ = 0;
};

/// Reads the header, checks that every name in `required` is present and returns the
/// column position of each required name, in the order given.
std::vector<std::size_t> require_columns(const Record& header, const std::vector<std::string>& required,
                                         const std::filesystem::path& path);

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path);

  Writer& field(std::string_view value);
  Writer& field(double value);  // shortest round-trip representation
  Writer& field(long long value);
  Writer& field(std::size_t value) { return field(static_cast<long long>(value)); }
  Writer& field(int value) { return field(static_cast<long long>(value)); }
  Writer& field(const char* value) { return field(std::string_view(value)); }
  Writer& field(const std::string& value) { return field(std::string_view(value)); }
  void end_row();

  template <class... Ts>
  void row(const Ts&... values) {
    (field(values), ...);
    end_row();
  }

  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  bool first_in_row_ = true;
};

/// Formats a double so that parsing it back yields the identical value.
std::string format_double(double value);

double parse_double(std::string_view text, const std::filesystem::path& path, std::size_t line,
                    std::string_view column);
long long parse_int(std::string_view text, const std::filesystem::path& path, std::size_t line,
                    std::string_view column);
bool parse_bool(std::string_view text, const std::filesystem::path& path, std::size_t line,
                std::string_view column);

}  // namespace reshare::csv
