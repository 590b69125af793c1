#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace behave::csv {

struct Row {
    std::size_t line = 0;  // 1-based line on which the record starts
    std::vector<std::string> fields;
};

// RFC 4180 reader. Accepts LF or CRLF record separators, strips a UTF-8 BOM,
// and skips fully blank lines. Throws Error{MalformedRow} on quoting errors.
std::vector<Row> parse(std::string_view text);

std::string quote_field(std::string_view field);

// One record terminated by CRLF.
std::string format_row(const std::vector<std::string>& fields);

}  // namespace behave::csv
