#include "behave/stimuli.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "behave/csv.hpp"
#include "behave/error.hpp"
#include "text_util.hpp"

namespace behave {

const char* to_string(ImageDetail detail) noexcept {
    switch (detail) {
        case ImageDetail::Low: return "low";
        case ImageDetail::High: return "high";
        case ImageDetail::Auto: break;
    }
    return "auto";
}

std::optional<ImageDetail> parse_image_detail(std::string_view text) noexcept {
    if (text == "auto") return ImageDetail::Auto;
    if (text == "low") return ImageDetail::Low;
    if (text == "high") return ImageDetail::High;
    return std::nullopt;
}

namespace {

struct OpenTag {
    SegmentKind kind;
    std::size_t length;
    std::optional<ImageDetail> detail;
};

std::string_view tag_name(SegmentKind kind) {
    switch (kind) {
        case SegmentKind::Image: return "img";
        case SegmentKind::Audio: return "audio";
        case SegmentKind::Text: break;
    }
    return "text";
}

// Recognizes an opening tag at the start of `s`.
std::optional<OpenTag> match_open_tag(std::string_view s) {
    if (s.starts_with("<text>")) return OpenTag{SegmentKind::Text, 6, std::nullopt};
    if (s.starts_with("<audio>")) return OpenTag{SegmentKind::Audio, 7, std::nullopt};
    if (s.starts_with("<img>")) return OpenTag{SegmentKind::Image, 5, std::nullopt};
    constexpr std::string_view detail_prefix = "<img detail=\"";
    if (s.starts_with(detail_prefix)) {
        auto rest = s.substr(detail_prefix.size());
        auto quote = rest.find("\">");
        if (quote == std::string_view::npos) return std::nullopt;
        auto detail = parse_image_detail(rest.substr(0, quote));
        if (!detail) return std::nullopt;
        return OpenTag{SegmentKind::Image, detail_prefix.size() + quote + 2, detail};
    }
    return std::nullopt;
}

}  // namespace

std::vector<ContentSegment> parse_prompt_segments(std::string_view raw) {
    std::vector<ContentSegment> segments;
    std::size_t literal_start = 0;
    std::size_t pos = 0;

    auto flush_literal = [&](std::size_t end) {
        if (end > literal_start) {
            segments.push_back(ContentSegment::text(std::string(raw.substr(literal_start, end - literal_start))));
        }
    };

    while (pos < raw.size()) {
        auto lt = raw.find('<', pos);
        if (lt == std::string_view::npos) break;
        auto tag = match_open_tag(raw.substr(lt));
        if (!tag) {
            pos = lt + 1;
            continue;
        }
        const std::string close = "</" + std::string(tag_name(tag->kind)) + ">";
        const std::size_t body_start = lt + tag->length;
        const std::size_t close_at = raw.find(close, body_start);
        if (close_at == std::string_view::npos) {
            throw Error(ErrorCode::UnbalancedTag, "<" + std::string(tag_name(tag->kind)) +
                                                      "> at offset " + std::to_string(lt) +
                                                      " has no matching " + close);
        }
        std::string body(raw.substr(body_start, close_at - body_start));
        if (detail::trim(body).empty()) {
            throw Error(ErrorCode::InvalidSegment,
                        "empty <" + std::string(tag_name(tag->kind)) + "> segment at offset " +
                            std::to_string(lt));
        }
        flush_literal(lt);
        segments.push_back(ContentSegment{tag->kind, std::move(body), tag->detail, true});
        pos = close_at + close.size();
        literal_start = pos;
    }
    flush_literal(raw.size());
    return segments;
}

std::string render_segments(const std::vector<ContentSegment>& segments) {
    std::string out;
    for (const auto& seg : segments) {
        if (!seg.tagged && seg.kind == SegmentKind::Text) {
            out += seg.payload;
            continue;
        }
        const auto name = tag_name(seg.kind);
        out += '<';
        out += name;
        if (seg.kind == SegmentKind::Image && seg.detail) {
            out += " detail=\"";
            out += to_string(*seg.detail);
            out += '"';
        }
        out += '>';
        out += seg.payload;
        out += "</";
        out += name;
        out += '>';
    }
    return out;
}

bool has_non_text(const std::vector<ContentSegment>& segments) noexcept {
    return std::any_of(segments.begin(), segments.end(),
                       [](const ContentSegment& s) { return s.kind != SegmentKind::Text; });
}

std::string text_of(const std::vector<ContentSegment>& segments) {
    std::string out;
    for (const auto& seg : segments) {
        if (seg.kind == SegmentKind::Text) out += seg.payload;
    }
    return out;
}

bool looks_like_url(std::string_view locator) noexcept {
    locator = detail::trim(locator);
    return locator.starts_with("http://") || locator.starts_with("https://") ||
           locator.starts_with("data:");
}

std::vector<std::int64_t> StimulusSet::runs() const {
    std::vector<std::int64_t> out;
    std::set<std::int64_t> seen;
    for (const auto& row : rows) {
        if (seen.insert(row.run).second) out.push_back(row.run);
    }
    return out;
}

namespace {

constexpr std::array<std::string_view, 4> kRequiredColumns = {"Run", "Item", "Condition", "Prompt"};

std::string row_label(std::size_t data_row, std::size_t line) {
    return "row " + std::to_string(data_row) + " (line " + std::to_string(line) + ")";
}

std::int64_t parse_index(std::string_view text, std::string_view column, std::size_t data_row,
                         std::size_t line) {
    auto trimmed = detail::trim(text);
    // Spreadsheet exports often write integral numbers as "3.0".
    if (trimmed.ends_with(".0")) trimmed.remove_suffix(2);
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(trimmed.data(), trimmed.data() + trimmed.size(), value);
    if (trimmed.empty() || ec != std::errc{} || ptr != trimmed.data() + trimmed.size()) {
        throw Error(ErrorCode::MalformedRow, row_label(data_row, line) + ": " + std::string(column) +
                                                 " value '" + std::string(text) +
                                                 "' is not an integer");
    }
    if (value < 1) {
        throw Error(ErrorCode::MalformedRow, row_label(data_row, line) + ": " + std::string(column) +
                                                 " must be >= 1, got " + std::to_string(value));
    }
    return value;
}

}  // namespace

StimulusSet parse_stimuli(std::string_view csv_text, std::string source_path) {
    auto table = csv::parse(csv_text);
    if (table.empty()) throw Error(ErrorCode::EmptyTable, "stimuli table is empty");

    const auto& header = table.front().fields;
    std::array<std::size_t, 4> index{};
    std::vector<std::size_t> extra_index;
    std::vector<std::string> extra_names;
    std::vector<bool> used(header.size(), false);

    for (std::size_t r = 0; r < kRequiredColumns.size(); ++r) {
        bool found = false;
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (!used[c] && detail::iequals(detail::trim(header[c]), kRequiredColumns[r])) {
                index[r] = c;
                used[c] = true;
                found = true;
                break;
            }
        }
        if (!found) {
            throw Error(ErrorCode::MissingColumn,
                        "missing required column \"" + std::string(kRequiredColumns[r]) + "\"");
        }
    }
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (!used[c]) {
            extra_index.push_back(c);
            extra_names.emplace_back(detail::trim(header[c]));
        }
    }

    StimulusSet set;
    set.source_path = std::move(source_path);
    set.extra_columns = std::move(extra_names);
    std::set<std::pair<std::int64_t, std::int64_t>> seen;

    for (std::size_t i = 1; i < table.size(); ++i) {
        const auto& rec = table[i];
        if (rec.fields.size() != header.size()) {
            throw Error(ErrorCode::MalformedRow, row_label(i, rec.line) + ": expected " +
                                                     std::to_string(header.size()) + " fields, got " +
                                                     std::to_string(rec.fields.size()));
        }
        StimulusRow row;
        row.run = parse_index(rec.fields[index[0]], "Run", i, rec.line);
        row.item = parse_index(rec.fields[index[1]], "Item", i, rec.line);
        row.condition = rec.fields[index[2]];
        row.prompt = rec.fields[index[3]];
        if (detail::trim(row.prompt).empty()) {
            throw Error(ErrorCode::MalformedRow, row_label(i, rec.line) + ": Prompt is empty");
        }
        try {
            (void)parse_prompt_segments(row.prompt);
        } catch (const Error& e) {
            throw Error(ErrorCode::MalformedRow, row_label(i, rec.line) + ": " + e.what());
        }
        for (auto c : extra_index) row.extra.push_back(rec.fields[c]);
        if (!seen.emplace(row.run, row.item).second) {
            throw Error(ErrorCode::DuplicateRunItem, row_label(i, rec.line) + ": duplicate (Run " +
                                                         std::to_string(row.run) + ", Item " +
                                                         std::to_string(row.item) + ")");
        }
        set.rows.push_back(std::move(row));
    }
    if (set.rows.empty()) throw Error(ErrorCode::EmptyTable, "stimuli table has a header but no rows");
    return set;
}

StimulusSet load_stimuli(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open stimuli file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_stimuli(buf.str(), path);
}

std::string to_csv(const StimulusSet& set) {
    std::vector<std::string> header(kRequiredColumns.begin(), kRequiredColumns.end());
    header.insert(header.end(), set.extra_columns.begin(), set.extra_columns.end());
    std::string out = csv::format_row(header);
    for (const auto& row : set.rows) {
        std::vector<std::string> fields = {std::to_string(row.run), std::to_string(row.item),
                                           row.condition, row.prompt};
        fields.insert(fields.end(), row.extra.begin(), row.extra.end());
        out += csv::format_row(fields);
    }
    return out;
}

}  // namespace behave
