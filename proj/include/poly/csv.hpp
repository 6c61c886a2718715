#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace poly::csv {

struct Record {
  std::size_t row = 0;  // 1-based record number; the header is row 1
  std::vector<std::string> fields;
};

/// RFC-4180 reader. Accepts LF or CRLF record separators and quoted fields
/// spanning lines. Throws Error(MalformedRow) on an unterminated quote or
/// stray quote inside an unquoted field.
std::vector<Record> parse(std::string_view text);

/// Quotes only when the field contains a comma, quote, CR or LF.
std::string quote(std::string_view field);

std::string join_row(const std::vector<std::string>& fields);

}  // namespace poly::csv
