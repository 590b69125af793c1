#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace behave {

inline constexpr std::array<std::string_view, 10> kResultColumns = {
    "Session", "Run", "Item", "Trial", "Condition", "Prompt", "Response", "N", "Message", "rawResponse"};

struct ResultRecord {
    int session = 0;
    std::int64_t run = 0;
    std::int64_t item = 0;
    int trial = 0;  // 1-based turn within the run
    std::string condition;
    std::string prompt;
    std::string response;
    int n = 1;  // 1-based response index
    std::string message;       // request message list (chat) or prompt (text) as sent
    std::string raw_response;  // provider payload, verbatim
    std::vector<std::string> extra;  // stimulus metadata columns, echoed after rawResponse

    friend bool operator==(const ResultRecord&, const ResultRecord&) = default;
};

struct ResultTable {
    std::vector<std::string> extra_columns;
    std::vector<ResultRecord> records;
};

enum class OutputFormat { Csv, Xlsx };

// Throws UnsupportedExtension unless the path ends in .csv or .xlsx.
OutputFormat output_format_for(std::string_view path);

std::vector<std::string> result_header(const std::vector<std::string>& extra_columns);
std::vector<std::string> record_fields(const ResultRecord& record);

// CSV: appends to an existing file whose header matches, otherwise creates it
// with a header. XLSX: writes a single-sheet workbook (replacing the file).
void write_results(const std::vector<ResultRecord>& records, const std::string& path,
                   const std::vector<std::string>& extra_columns = {});

// Reads a results CSV. Throws SchemaMismatch when the header does not begin
// with the ten result columns in order.
ResultTable parse_results(std::string_view csv_text);
ResultTable read_results(const std::string& path);

// Minimal OOXML workbook with one sheet named "results". Cells longer than
// the spreadsheet limit of 32767 characters are truncated; returns the number
// of truncated cells.
std::size_t write_xlsx(const std::string& path, const std::vector<std::vector<std::string>>& rows,
                       const std::vector<bool>& numeric_columns);

}  // namespace behave
