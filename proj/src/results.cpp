#include "behave/results.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "behave/csv.hpp"
#include "behave/error.hpp"
#include "text_util.hpp"

namespace behave {

OutputFormat output_format_for(std::string_view path) {
    const auto ext = detail::to_lower(std::filesystem::path(path).extension().string());
    if (ext == ".csv") return OutputFormat::Csv;
    if (ext == ".xlsx") return OutputFormat::Xlsx;
    throw Error(ErrorCode::UnsupportedExtension,
                "save path must end in .csv or .xlsx: " + std::string(path));
}

std::vector<std::string> result_header(const std::vector<std::string>& extra_columns) {
    std::vector<std::string> header(kResultColumns.begin(), kResultColumns.end());
    header.insert(header.end(), extra_columns.begin(), extra_columns.end());
    return header;
}

std::vector<std::string> record_fields(const ResultRecord& r) {
    std::vector<std::string> f = {std::to_string(r.session), std::to_string(r.run), std::to_string(r.item),
                                  std::to_string(r.trial), r.condition, r.prompt, r.response,
                                  std::to_string(r.n), r.message, r.raw_response};
    f.insert(f.end(), r.extra.begin(), r.extra.end());
    return f;
}

namespace {

std::string read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

template <typename Int>
Int parse_int(const std::string& text, std::string_view column, std::size_t line) {
    Int value{};
    auto t = detail::trim(text);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
        throw Error(ErrorCode::SchemaMismatch,
                    "line " + std::to_string(line) + ": " + std::string(column) + " is not an integer");
    }
    return value;
}

}  // namespace

void write_results(const std::vector<ResultRecord>& records, const std::string& path,
                   const std::vector<std::string>& extra_columns) {
    const auto header = result_header(extra_columns);
    if (output_format_for(path) == OutputFormat::Xlsx) {
        std::vector<std::vector<std::string>> rows{header};
        for (const auto& r : records) rows.push_back(record_fields(r));
        std::vector<bool> numeric(header.size(), false);
        for (std::size_t c : {0, 1, 2, 3, 7}) numeric[c] = true;
        write_xlsx(path, rows, numeric);
        return;
    }

    bool need_header = true;
    std::error_code ec;
    if (std::filesystem::exists(path, ec) && std::filesystem::file_size(path, ec) > 0) {
        auto existing = csv::parse(read_all(path));
        if (!existing.empty()) {
            if (existing.front().fields != header) {
                throw Error(ErrorCode::SchemaMismatch, "cannot append to " + path + ": header differs");
            }
            need_header = false;
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
    if (need_header) out << csv::format_row(header);
    for (const auto& r : records) out << csv::format_row(record_fields(r));
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "write to " + path + " failed");
}

ResultTable parse_results(std::string_view csv_text) {
    auto rows = csv::parse(csv_text);
    if (rows.empty()) throw Error(ErrorCode::SchemaMismatch, "results file is empty");
    const auto& header = rows.front().fields;
    if (header.size() < kResultColumns.size()) {
        throw Error(ErrorCode::SchemaMismatch, "results header has too few columns");
    }
    for (std::size_t i = 0; i < kResultColumns.size(); ++i) {
        if (header[i] != kResultColumns[i]) {
            throw Error(ErrorCode::SchemaMismatch, "results column " + std::to_string(i + 1) + " is '" + header[i] +
                                                       "', expected '" + std::string(kResultColumns[i]) + "'");
        }
    }
    ResultTable table;
    table.extra_columns.assign(header.begin() + kResultColumns.size(), header.end());
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& f = rows[i].fields;
        const auto line = rows[i].line;
        if (f.size() != header.size()) {
            throw Error(ErrorCode::SchemaMismatch, "line " + std::to_string(line) + ": expected " +
                                                       std::to_string(header.size()) + " fields, got " +
                                                       std::to_string(f.size()));
        }
        ResultRecord r;
        r.session = parse_int<int>(f[0], "Session", line);
        r.run = parse_int<std::int64_t>(f[1], "Run", line);
        r.item = parse_int<std::int64_t>(f[2], "Item", line);
        r.trial = parse_int<int>(f[3], "Trial", line);
        r.condition = f[4];
        r.prompt = f[5];
        r.response = f[6];
        r.n = parse_int<int>(f[7], "N", line);
        r.message = f[8];
        r.raw_response = f[9];
        r.extra.assign(f.begin() + kResultColumns.size(), f.end());
        table.records.push_back(std::move(r));
    }
    return table;
}

ResultTable read_results(const std::string& path) { return parse_results(read_all(path)); }

}  // namespace behave
