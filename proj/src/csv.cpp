#include "behave/csv.hpp"

#include "behave/error.hpp"

namespace behave::csv {

std::vector<Row> parse(std::string_view text) {
    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

    std::vector<Row> rows;
    Row current;
    std::string field;
    std::size_t line = 1;
    std::size_t i = 0;
    const std::size_t n = text.size();
    bool row_has_content = false;

    auto end_field = [&] {
        current.fields.push_back(std::move(field));
        field.clear();
    };
    auto end_row = [&] {
        end_field();
        if (row_has_content) rows.push_back(std::move(current));
        current = Row{};
        row_has_content = false;
    };

    while (i < n) {
        if (current.fields.empty() && field.empty() && !row_has_content) current.line = line;
        char c = text[i];
        if (c == '"' && field.empty()) {
            // Quoted field.
            row_has_content = true;
            std::size_t start_line = line;
            ++i;
            bool closed = false;
            while (i < n) {
                char q = text[i];
                if (q == '"') {
                    if (i + 1 < n && text[i + 1] == '"') {
                        field.push_back('"');
                        i += 2;
                        continue;
                    }
                    closed = true;
                    ++i;
                    break;
                }
                if (q == '\n') ++line;
                field.push_back(q);
                ++i;
            }
            if (!closed) {
                throw Error(ErrorCode::MalformedRow,
                            "line " + std::to_string(start_line) + ": unterminated quoted field");
            }
            if (i < n && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
                throw Error(ErrorCode::MalformedRow,
                            "line " + std::to_string(line) + ": unexpected character after closing quote");
            }
            continue;
        }
        if (c == ',') {
            row_has_content = true;
            end_field();
            ++i;
            continue;
        }
        if (c == '\r' || c == '\n') {
            if (c == '\r' && i + 1 < n && text[i + 1] == '\n') ++i;
            ++i;
            end_row();
            ++line;
            continue;
        }
        row_has_content = true;
        field.push_back(c);
        ++i;
    }
    if (row_has_content || !field.empty()) end_row();
    return rows;
}

std::string quote_field(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
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

std::string format_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += quote_field(fields[i]);
    }
    out += "\r\n";
    return out;
}

}  // namespace behave::csv
