// Minimal single-sheet OOXML writer: uncompressed (stored) zip entries with
// inline-string cells.
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>
#include <zlib.h>

#include "behave/error.hpp"
#include "behave/results.hpp"

namespace behave {

namespace {

constexpr std::size_t kMaxCellChars = 32767;

void put16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>(v >> 8));
}

void put32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class StoredZip {
public:
    void add(const std::string& name, const std::string& data) {
        const auto crc = static_cast<std::uint32_t>(
            crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
        const auto offset = static_cast<std::uint32_t>(body_.size());
        const auto size = static_cast<std::uint32_t>(data.size());
        // 1980-01-01 00:00 keeps output byte-stable.
        constexpr std::uint16_t kTime = 0, kDate = (0 << 9) | (1 << 5) | 1;

        put32(body_, 0x04034b50);
        put16(body_, 20);
        put16(body_, 0x0800);  // UTF-8 names
        put16(body_, 0);       // stored
        put16(body_, kTime);
        put16(body_, kDate);
        put32(body_, crc);
        put32(body_, size);
        put32(body_, size);
        put16(body_, static_cast<std::uint16_t>(name.size()));
        put16(body_, 0);
        body_ += name;
        body_ += data;

        put32(central_, 0x02014b50);
        put16(central_, 20);
        put16(central_, 20);
        put16(central_, 0x0800);
        put16(central_, 0);
        put16(central_, kTime);
        put16(central_, kDate);
        put32(central_, crc);
        put32(central_, size);
        put32(central_, size);
        put16(central_, static_cast<std::uint16_t>(name.size()));
        put16(central_, 0);
        put16(central_, 0);
        put16(central_, 0);
        put16(central_, 0);
        put32(central_, 0);
        put32(central_, offset);
        central_ += name;
        ++entries_;
    }

    std::string finish() const {
        std::string out = body_ + central_;
        put32(out, 0x06054b50);
        put16(out, 0);
        put16(out, 0);
        put16(out, entries_);
        put16(out, entries_);
        put32(out, static_cast<std::uint32_t>(central_.size()));
        put32(out, static_cast<std::uint32_t>(body_.size()));
        put16(out, 0);
        return out;
    }

private:
    std::string body_;
    std::string central_;
    std::uint16_t entries_ = 0;
};

std::string column_name(std::size_t index) {
    std::string name;
    ++index;
    while (index > 0) {
        const auto rem = (index - 1) % 26;
        name.insert(name.begin(), static_cast<char>('A' + rem));
        index = (index - 1) / 26;
    }
    return name;
}

// Cuts at a UTF-8 boundary at or below the cell limit.
bool truncate_cell(std::string& s) {
    if (s.size() <= kMaxCellChars) return false;
    std::size_t cut = kMaxCellChars;
    while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
    s.resize(cut);
    return true;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char ch : s) {
        const auto c = static_cast<unsigned char>(ch);
        switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default:
                // Control characters other than tab/newline/CR are not legal XML 1.0.
                if (c < 0x20 && ch != '\t' && ch != '\n' && ch != '\r') break;
                out.push_back(ch);
        }
    }
    return out;
}

}  // namespace

std::size_t write_xlsx(const std::string& path, const std::vector<std::vector<std::string>>& rows,
                       const std::vector<bool>& numeric_columns) {
    std::size_t truncated = 0;
    std::string sheet =
        "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n"
        "<worksheet xmlns=\"http://schemas.openxmlformats.org/spreadsheetml/2006/main\"><sheetData>";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto row_ref = std::to_string(r + 1);
        sheet += "<row r=\"" + row_ref + "\">";
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            const auto ref = column_name(c) + row_ref;
            std::string value = rows[r][c];
            const bool numeric = r > 0 && c < numeric_columns.size() && numeric_columns[c] && !value.empty();
            if (numeric) {
                sheet += "<c r=\"" + ref + "\"><v>" + xml_escape(value) + "</v></c>";
                continue;
            }
            if (truncate_cell(value)) ++truncated;
            sheet += "<c r=\"" + ref + "\" t=\"inlineStr\"><is><t xml:space=\"preserve\">" + xml_escape(value) +
                     "</t></is></c>";
        }
        sheet += "</row>";
    }
    sheet += "</sheetData></worksheet>";

    StoredZip zip;
    zip.add("[Content_Types].xml",
            "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n"
            "<Types xmlns=\"http://schemas.openxmlformats.org/package/2006/content-types\">"
            "<Default Extension=\"rels\" ContentType=\"application/vnd.openxmlformats-package.relationships+xml\"/>"
            "<Default Extension=\"xml\" ContentType=\"application/xml\"/>"
            "<Override PartName=\"/xl/workbook.xml\" "
            "ContentType=\"application/vnd.openxmlformats-officedocument.spreadsheetml.sheet.main+xml\"/>"
            "<Override PartName=\"/xl/worksheets/sheet1.xml\" "
            "ContentType=\"application/vnd.openxmlformats-officedocument.spreadsheetml.worksheet+xml\"/>"
            "</Types>");
    zip.add("_rels/.rels",
            "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n"
            "<Relationships xmlns=\"http://schemas.openxmlformats.org/package/2006/relationships\">"
            "<Relationship Id=\"rId1\" "
            "Type=\"http://schemas.openxmlformats.org/officeDocument/2006/relationships/officeDocument\" "
            "Target=\"xl/workbook.xml\"/></Relationships>");
    zip.add("xl/workbook.xml",
            "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n"
            "<workbook xmlns=\"http://schemas.openxmlformats.org/spreadsheetml/2006/main\" "
            "xmlns:r=\"http://schemas.openxmlformats.org/officeDocument/2006/relationships\">"
            "<sheets><sheet name=\"results\" sheetId=\"1\" r:id=\"rId1\"/></sheets></workbook>");
    zip.add("xl/_rels/workbook.xml.rels",
            "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n"
            "<Relationships xmlns=\"http://schemas.openxmlformats.org/package/2006/relationships\">"
            "<Relationship Id=\"rId1\" "
            "Type=\"http://schemas.openxmlformats.org/officeDocument/2006/relationships/worksheet\" "
            "Target=\"worksheets/sheet1.xml\"/></Relationships>");
    zip.add("xl/worksheets/sheet1.xml", sheet);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
    out << zip.finish();
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "write to " + path + " failed");
    return truncated;
}

}  // namespace behave
