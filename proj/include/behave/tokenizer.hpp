#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace behave {

class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual const std::string& id() const noexcept = 0;
    virtual std::size_t count(std::string_view text) const = 0;
};

// Splits text into pre-tokens with the GPT-2 pattern
//   's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
std::vector<std::string_view> gpt2_pretokenize(std::string_view text);

// GPT-2 reversible byte -> printable code point mapping, UTF-8 encoded.
const std::array<std::string, 256>& byte_encoder();

// Byte-level BPE over a vocab.json / merges.txt pair.
class BpeTokenizer final : public Tokenizer {
public:
    BpeTokenizer(std::string id, std::string_view vocab_json, std::string_view merges_txt);

    static std::shared_ptr<const BpeTokenizer> from_files(std::string id, const std::string& vocab_path,
                                                          const std::string& merges_path);

    const std::string& id() const noexcept override { return id_; }
    std::size_t count(std::string_view text) const override;

    std::vector<std::string> encode_pieces(std::string_view text) const;
    std::vector<std::int64_t> encode(std::string_view text) const;

    std::size_t merge_count() const noexcept { return ranks_.size(); }

private:
    void bpe(std::string_view word, std::vector<std::string>& out) const;

    std::string id_;
    std::unordered_map<std::string, std::int64_t> vocab_;
    // Key is "left right" exactly as written in merges.txt.
    std::unordered_map<std::string, std::uint32_t> ranks_;
};

struct TokenizerFiles {
    std::string vocab;
    std::string merges;
};

// Model id -> vocabulary files. Keys ending in '*' match by prefix; the
// longest matching key wins.
class TokenizerRegistry {
public:
    static constexpr const char* kDefaultId = "gpt2";

    // Registry containing the bundled GPT-2 vocabulary only.
    static TokenizerRegistry with_defaults();

    // {"models": {"<id or prefix*>": {"vocab": "...", "merges": "..."}}}.
    // Relative paths resolve against the registry file's directory.
    void load_file(const std::string& path);

    void add(std::string model_pattern, TokenizerFiles files);
    const TokenizerFiles* find(std::string_view model) const;

private:
    std::map<std::string, TokenizerFiles, std::less<>> entries_;
};

struct ResolvedTokenizer {
    std::shared_ptr<const Tokenizer> tokenizer;
    bool approximate = false;
    std::string warning;
};

// Looks the model up; unknown ids fall back to the default GPT-2 vocabulary
// with approximate = true and a warning message.
ResolvedTokenizer resolve_tokenizer(std::string_view model, const TokenizerRegistry& registry);

// Directory holding the bundled vocabularies. BEHAVE_DATA_DIR overrides the
// compiled-in location.
std::string bundled_data_dir();

std::vector<std::size_t> count_tokens(const Tokenizer& tok, const std::vector<std::string>& texts);

}  // namespace behave
