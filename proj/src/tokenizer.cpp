#include "behave/tokenizer.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <json.hpp>
#include <queue>
#include <sstream>

#include "behave/error.hpp"

namespace behave {

namespace {

struct CodepointRange {
    char32_t first;
    char32_t last;
};

#include "unicode_tables.inc"

template <std::size_t N>
bool in_ranges(const CodepointRange (&table)[N], char32_t cp) {
    auto it = std::upper_bound(std::begin(table), std::end(table), cp,
                               [](char32_t v, const CodepointRange& r) { return v < r.first; });
    if (it == std::begin(table)) return false;
    --it;
    return cp <= it->last;
}

enum class CharClass { Letter, Number, Space, Other };

struct Decoded {
    char32_t cp;
    std::size_t len;
    bool valid;
};

Decoded decode_utf8(std::string_view s, std::size_t i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) return {b0, 1, true};
    std::size_t len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        return {0, 1, false};
    }
    if (i + len > s.size()) return {0, 1, false};
    for (std::size_t k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) return {0, 1, false};
        cp = (cp << 6) | (b & 0x3F);
    }
    return {cp, len, true};
}

CharClass classify(const Decoded& d) {
    if (!d.valid) return CharClass::Other;
    if (in_ranges(kLetterRanges, d.cp)) return CharClass::Letter;
    if (in_ranges(kNumberRanges, d.cp)) return CharClass::Number;
    if (in_ranges(kSpaceRanges, d.cp)) return CharClass::Space;
    return CharClass::Other;
}

std::size_t contraction_length(std::string_view rest) {
    // rest starts with '\''
    for (std::string_view c : {"'s", "'t", "'re", "'ve", "'m", "'ll", "'d"}) {
        if (rest.starts_with(c)) return c.size();
    }
    return 0;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

std::vector<std::string_view> gpt2_pretokenize(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    const std::size_t n = text.size();

    auto run_of = [&](std::size_t from, CharClass cls) {
        std::size_t j = from;
        while (j < n) {
            auto d = decode_utf8(text, j);
            if (classify(d) != cls) break;
            j += d.len;
        }
        return j;
    };

    while (i < n) {
        if (text[i] == '\'') {
            if (auto len = contraction_length(text.substr(i))) {
                out.push_back(text.substr(i, len));
                i += len;
                continue;
            }
        }
        const auto here = decode_utf8(text, i);
        CharClass cls = classify(here);
        std::size_t body = i;
        if (text[i] == ' ' && i + 1 < n) {
            const auto next_cls = classify(decode_utf8(text, i + 1));
            if (next_cls != CharClass::Space) {
                cls = next_cls;
                body = i + 1;
            }
        }
        if (cls != CharClass::Space) {
            const std::size_t end = run_of(body, cls);
            out.push_back(text.substr(i, end - i));
            i = end;
            continue;
        }
        // Whitespace: \s+(?!\S) leaves the last space to prefix the next word.
        std::size_t end = i;
        std::size_t last_start = i;
        std::size_t chars = 0;
        while (end < n) {
            auto d = decode_utf8(text, end);
            if (classify(d) != CharClass::Space) break;
            last_start = end;
            end += d.len;
            ++chars;
        }
        if (end < n && chars > 1) end = last_start;
        out.push_back(text.substr(i, end - i));
        i = end;
    }
    return out;
}

const std::array<std::string, 256>& byte_encoder() {
    static const std::array<std::string, 256> table = [] {
        std::array<std::string, 256> t;
        auto printable = [](int b) {
            return (b >= '!' && b <= '~') || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE && b <= 0xFF);
        };
        int extra = 0;
        for (int b = 0; b < 256; ++b) {
            const char32_t cp = printable(b) ? static_cast<char32_t>(b) : static_cast<char32_t>(256 + extra++);
            append_utf8(t[static_cast<std::size_t>(b)], cp);
        }
        return t;
    }();
    return table;
}

BpeTokenizer::BpeTokenizer(std::string id, std::string_view vocab_json, std::string_view merges_txt)
    : id_(std::move(id)) {
    try {
        auto vocab = nlohmann::json::parse(vocab_json);
        vocab_.reserve(vocab.size());
        for (auto& [key, value] : vocab.items()) vocab_.emplace(key, value.get<std::int64_t>());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::UnknownVocabulary, "invalid vocabulary for " + id_ + ": " + e.what());
    }

    std::uint32_t rank = 0;
    std::size_t pos = 0;
    while (pos < merges_txt.size()) {
        auto eol = merges_txt.find('\n', pos);
        if (eol == std::string_view::npos) eol = merges_txt.size();
        auto line = merges_txt.substr(pos, eol - pos);
        pos = eol + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.starts_with("#version")) continue;
        const auto space = line.find(' ');
        if (space == std::string_view::npos || space == 0 || space + 1 == line.size()) {
            throw Error(ErrorCode::UnknownVocabulary, "malformed merge rule in " + id_ + ": " + std::string(line));
        }
        ranks_.emplace(std::string(line), rank++);
    }
}

std::shared_ptr<const BpeTokenizer> BpeTokenizer::from_files(std::string id, const std::string& vocab_path,
                                                             const std::string& merges_path) {
    return std::make_shared<const BpeTokenizer>(std::move(id), read_file(vocab_path), read_file(merges_path));
}

void BpeTokenizer::bpe(std::string_view word, std::vector<std::string>& out) const {
    const auto& enc = byte_encoder();
    struct Symbol {
        std::string text;
        int prev;
        int next;
        unsigned version = 0;
    };
    std::vector<Symbol> sym;
    sym.reserve(word.size());
    for (std::size_t i = 0; i < word.size(); ++i) {
        sym.push_back(Symbol{enc[static_cast<unsigned char>(word[i])], static_cast<int>(i) - 1,
                             i + 1 < word.size() ? static_cast<int>(i) + 1 : -1});
    }

    struct Candidate {
        std::uint32_t rank;
        int left;
        int right;
        unsigned left_version;
        unsigned right_version;
        bool operator>(const Candidate& o) const {
            return rank != o.rank ? rank > o.rank : left > o.left;
        }
    };
    std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap;
    std::string key;
    auto push_pair = [&](int left, int right) {
        if (left < 0 || right < 0) return;
        key.assign(sym[left].text).append(1, ' ').append(sym[right].text);
        auto it = ranks_.find(key);
        if (it != ranks_.end()) {
            heap.push(Candidate{it->second, left, right, sym[left].version, sym[right].version});
        }
    };
    for (int i = 0; i + 1 < static_cast<int>(sym.size()); ++i) push_pair(i, i + 1);

    while (!heap.empty()) {
        const Candidate c = heap.top();
        heap.pop();
        auto& l = sym[c.left];
        auto& r = sym[c.right];
        if (l.version != c.left_version || r.version != c.right_version || l.next != c.right) continue;
        l.text += r.text;
        ++l.version;
        ++r.version;
        r.text.clear();
        l.next = r.next;
        if (r.next >= 0) sym[r.next].prev = c.left;
        r.prev = r.next = -1;
        r.version += 1u << 30;  // dead
        push_pair(l.prev, c.left);
        push_pair(c.left, l.next);
    }
    for (int i = sym.empty() ? -1 : 0; i >= 0; i = sym[i].next) out.push_back(std::move(sym[i].text));
}

std::vector<std::string> BpeTokenizer::encode_pieces(std::string_view text) const {
    std::vector<std::string> pieces;
    for (auto word : gpt2_pretokenize(text)) bpe(word, pieces);
    return pieces;
}

std::vector<std::int64_t> BpeTokenizer::encode(std::string_view text) const {
    std::vector<std::int64_t> ids;
    for (const auto& piece : encode_pieces(text)) {
        auto it = vocab_.find(piece);
        ids.push_back(it == vocab_.end() ? -1 : it->second);
    }
    return ids;
}

std::size_t BpeTokenizer::count(std::string_view text) const {
    std::size_t total = 0;
    std::vector<std::string> scratch;
    for (auto word : gpt2_pretokenize(text)) {
        scratch.clear();
        bpe(word, scratch);
        total += scratch.size();
    }
    return total;
}

std::string bundled_data_dir() {
    if (const char* env = std::getenv("BEHAVE_DATA_DIR"); env && *env) return env;
#ifdef BEHAVE_DATA_DIR_DEFAULT
    return BEHAVE_DATA_DIR_DEFAULT;
#else
    return "data";
#endif
}

TokenizerRegistry TokenizerRegistry::with_defaults() {
    TokenizerRegistry reg;
    const auto dir = std::filesystem::path(bundled_data_dir()) / "tokenizers" / "gpt2";
    TokenizerFiles files{(dir / "vocab.json").string(), (dir / "merges.txt").string()};
    reg.add("gpt2", files);
    reg.add("gpt2-*", files);
    return reg;
}

void TokenizerRegistry::add(std::string model_pattern, TokenizerFiles files) {
    entries_[std::move(model_pattern)] = std::move(files);
}

void TokenizerRegistry::load_file(const std::string& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, "tokenizer registry " + path + ": " + e.what());
    }
    const auto base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return (fp.is_absolute() ? fp : base / fp).string();
    };
    if (!doc.contains("models") || !doc["models"].is_object()) {
        throw Error(ErrorCode::InvalidArgument, "tokenizer registry " + path + ": missing \"models\" object");
    }
    for (auto& [model, entry] : doc["models"].items()) {
        if (!entry.contains("vocab") || !entry.contains("merges")) {
            throw Error(ErrorCode::InvalidArgument,
                        "tokenizer registry " + path + ": entry '" + model + "' needs vocab and merges");
        }
        add(model, TokenizerFiles{resolve(entry["vocab"].get<std::string>()),
                                  resolve(entry["merges"].get<std::string>())});
    }
}

const TokenizerFiles* TokenizerRegistry::find(std::string_view model) const {
    if (auto it = entries_.find(model); it != entries_.end()) return &it->second;
    const TokenizerFiles* best = nullptr;
    std::size_t best_len = 0;
    for (const auto& [pattern, files] : entries_) {
        if (!pattern.ends_with('*')) continue;
        std::string_view prefix(pattern.data(), pattern.size() - 1);
        if (model.starts_with(prefix) && prefix.size() >= best_len) {
            best = &files;
            best_len = prefix.size();
        }
    }
    return best;
}

namespace {

std::shared_ptr<const Tokenizer> load_cached(const std::string& id, const TokenizerFiles& files) {
    static std::mutex mu;
    static std::map<std::pair<std::string, std::string>, std::shared_ptr<const Tokenizer>> cache;
    std::lock_guard lock(mu);
    auto key = std::make_pair(files.vocab, files.merges);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    auto tok = BpeTokenizer::from_files(id, files.vocab, files.merges);
    cache.emplace(key, tok);
    return tok;
}

}  // namespace

ResolvedTokenizer resolve_tokenizer(std::string_view model, const TokenizerRegistry& registry) {
    if (const auto* files = registry.find(model)) {
        return {load_cached(std::string(model), *files), false, {}};
    }
    const auto* fallback = registry.find(TokenizerRegistry::kDefaultId);
    if (!fallback) {
        throw Error(ErrorCode::UnknownVocabulary,
                    "no tokenizer registered for '" + std::string(model) + "' and no default available");
    }
    ResolvedTokenizer out{load_cached(TokenizerRegistry::kDefaultId, *fallback), true, {}};
    out.warning = "warning: no tokenizer registered for model '" + std::string(model) +
                  "'; token counts were calculated with the default GPT-2 tokenizer and are approximate";
    return out;
}

std::vector<std::size_t> count_tokens(const Tokenizer& tok, const std::vector<std::string>& texts) {
    std::vector<std::size_t> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(tok.count(t));
    return out;
}

}  // namespace behave
