#include "reshare/csv.hpp"

#include <charconv>
#include <system_error>

#include "reshare/error.hpp"

namespace reshare::csv {

namespace {

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

}  // namespace

Reader::Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw DataError("cannot open " + path.string());
}

bool Reader::next(Record& record) {
  record.fields.clear();
  std::string line;
  if (!std::getline(in_, line)) return false;
  ++line_;
  record.line = line_;

  std::string field;
  bool in_quotes = false;
  bool was_quoted = false;
  std::size_t i = 0;
  for (;;) {
    if (i >= line.size()) {
      if (in_quotes) {
        // Quoted field spans a newline.
        if (!std::getline(in_, line)) {
          throw DataError(where(path_, record.line) + ": unterminated quoted field", record.line);
        }
        ++line_;
        field.push_back('\n');
        i = 0;
        continue;
      }
      break;
    }
    const char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty() && !was_quoted) {
      in_quotes = true;
      was_quoted = true;
    } else if (c == ',') {
      record.fields.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else if (c == '\r' && i + 1 == line.size()) {
      // tolerate CRLF
    } else {
      field.push_back(c);
    }
    ++i;
  }
  record.fields.push_back(std::move(field));
  return true;
}

std::vector<std::size_t> require_columns(const Record& header, const std::vector<std::string>& required,
                                         const std::filesystem::path& path) {
  std::vector<std::size_t> positions;
  positions.reserve(required.size());
  for (const auto& name : required) {
    std::size_t pos = header.fields.size();
    for (std::size_t i = 0; i < header.fields.size(); ++i) {
      if (header.fields[i] == name) {
        pos = i;
        break;
      }
    }
    if (pos == header.fields.size()) {
      throw DataError(where(path, header.line) + ": missing required column '" + name + "'", header.line);
    }
    positions.push_back(pos);
  }
  return positions;
}

Writer::Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
}

Writer& Writer::field(std::string_view value) {
  if (!first_in_row_) out_.put(',');
  first_in_row_ = false;
  if (value.find_first_of(",\"\n\r") == std::string_view::npos) {
    out_.write(value.data(), static_cast<std::streamsize>(value.size()));
    return *this;
  }
  out_.put('"');
  for (char c : value) {
    if (c == '"') out_.put('"');
    out_.put(c);
  }
  out_.put('"');
  return *this;
}

Writer& Writer::field(double value) { return field(std::string_view(format_double(value))); }

Writer& Writer::field(long long value) { return field(std::string_view(std::to_string(value))); }

void Writer::end_row() {
  out_.put('\n');
  first_in_row_ = true;
}

void Writer::close() {
  out_.close();
  if (!out_) throw std::runtime_error("failed writing " + path_.string());
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

double parse_double(std::string_view text, const std::filesystem::path& path, std::size_t line,
                    std::string_view column) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw DataError(where(path, line) + ": column '" + std::string(column) + "': not a number: '" +
                        std::string(text) + "'",
                    line);
  }
  return value;
}

long long parse_int(std::string_view text, const std::filesystem::path& path, std::size_t line,
                    std::string_view column) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw DataError(where(path, line) + ": column '" + std::string(column) + "': not an integer: '" +
                        std::string(text) + "'",
                    line);
  }
  return value;
}

bool parse_bool(std::string_view text, const std::filesystem::path& path, std::size_t line,
                std::string_view column) {
  if (text == "1" || text == "true" || text == "True" || text == "TRUE") return true;
  if (text == "0" || text == "false" || text == "False" || text == "FALSE") return false;
  throw DataError(where(path, line) + ": column '" + std::string(column) + "': not a boolean: '" +
                      std::string(text) + "'",
                  line);
}

}  // namespace reshare::csv
