#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace behave {

enum class ImageDetail { Auto, Low, High };

const char* to_string(ImageDetail detail) noexcept;
std::optional<ImageDetail> parse_image_detail(std::string_view text) noexcept;

enum class SegmentKind { Text, Image, Audio };

// One typed piece of a stimulus prompt. `payload` is the text body for Text,
// or the locator (URL or file path) for Image and Audio.
struct ContentSegment {
    SegmentKind kind = SegmentKind::Text;
    std::string payload;
    std::optional<ImageDetail> detail;  // Image only, from <img detail="...">
    bool tagged = false;                // written with explicit tags in the source

    static ContentSegment text(std::string body) {
        return ContentSegment{SegmentKind::Text, std::move(body), std::nullopt, false};
    }

    friend bool operator==(const ContentSegment&, const ContentSegment&) = default;
};

// Splits a raw prompt on <text>, <img> and <audio> tags. Untagged spans become
// Text segments; unknown tags are literal text. Throws UnbalancedTag when an
// opening tag has no matching close, InvalidSegment for empty tagged bodies.
std::vector<ContentSegment> parse_prompt_segments(std::string_view raw);

// Inverse of parse_prompt_segments: render_segments(parse_prompt_segments(s)) == s.
std::string render_segments(const std::vector<ContentSegment>& segments);

bool has_non_text(const std::vector<ContentSegment>& segments) noexcept;

// Concatenation of the Text payloads, in order.
std::string text_of(const std::vector<ContentSegment>& segments);

bool looks_like_url(std::string_view locator) noexcept;

struct StimulusRow {
    std::int64_t run = 0;
    std::int64_t item = 0;
    std::string condition;
    std::string prompt;
    std::vector<std::string> extra;  // aligned with StimulusSet::extra_columns

    friend bool operator==(const StimulusRow&, const StimulusRow&) = default;
};

struct StimulusSet {
    std::vector<StimulusRow> rows;
    std::vector<std::string> extra_columns;
    std::string source_path;

    // Distinct run indices in first-appearance order.
    std::vector<std::int64_t> runs() const;

    friend bool operator==(const StimulusSet& a, const StimulusSet& b) {
        return a.rows == b.rows && a.extra_columns == b.extra_columns;
    }
};

// Column names are matched case-insensitively after trimming; columns other
// than Run/Item/Condition/Prompt are kept as opaque metadata.
StimulusSet parse_stimuli(std::string_view csv_text, std::string source_path = {});
StimulusSet load_stimuli(const std::string& path);

// Canonical CSV (Run,Item,Condition,Prompt,extras...).
std::string to_csv(const StimulusSet& set);

}  // namespace behave
