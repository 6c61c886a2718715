#include "poly/csv.hpp"

#include <fmt/format.h>

#include "poly/error.hpp"

namespace poly::csv {

std::vector<Record> parse(std::string_view text) {
  std::vector<Record> out;
  if (text.empty()) return out;

  Record current;
  current.row = 1;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  std::size_t i = 0;
  const std::size_t n = text.size();

  auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    out.push_back(std::move(current));
    current = Record{};
    current.row = out.size() + 1;
  };

  while (i < n) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && text[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        in_quotes = false;
        ++i;
        continue;
      }
      field += c;
      ++i;
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_was_quoted) {
          throw Error(Errc::MalformedRow, fmt::format("row {}: stray quote", current.row));
        }
        in_quotes = true;
        field_was_quoted = true;
        ++i;
        break;
      case ',':
        end_field();
        ++i;
        break;
      case '\r':
        if (i + 1 < n && text[i + 1] == '\n') ++i;
        [[fallthrough]];
      case '\n':
        end_record();
        ++i;
        break;
      default:
        if (field_was_quoted) {
          throw Error(Errc::MalformedRow,
                      fmt::format("row {}: text after closing quote", current.row));
        }
        field += c;
        ++i;
    }
  }
  if (in_quotes) {
    throw Error(Errc::MalformedRow, fmt::format("row {}: unterminated quote", current.row));
  }
  // no trailing newline: flush the last record
  if (!field.empty() || field_was_quoted || !current.fields.empty()) end_record();
  return out;
}

std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string join_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += quote(fields[i]);
  }
  out += '\n';
  return out;
}

}  // namespace poly::csv
