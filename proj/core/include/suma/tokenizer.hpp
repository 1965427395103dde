#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace suma {

using TokenId = std::uint32_t;

struct TokenSequence {
    std::vector<TokenId> ids;
    std::string source_text;
};

/// Abstract tokenization surface so experiments can swap the BPE vocabulary
/// against the word-based control without touching the pipeline.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual TokenSequence encode(std::string_view text) const = 0;
    /// Number of distinct ids the encoder's embedding must cover. Hash-based
    /// tokenizers report their full bucket space.
    virtual std::uint64_t id_space() const = 0;
    virtual std::string name() const = 0;
    /// Stable digest of the tokenizer's behavior, for caching keys.
    virtual std::uint64_t content_hash() const = 0;
};

/// Byte-level BPE vocabulary. Ids 0..255 are the raw bytes, 256/257 are the
/// unknown and begin-of-sequence specials, and every learned merge appends
/// one token. The byte alphabet makes out-of-vocabulary failures impossible;
/// the unknown id exists only to satisfy downstream id budgeting.
class Vocab : public Tokenizer {
public:
    static constexpr TokenId kUnknownId = 256;
    static constexpr TokenId kBosId = 257;
    static constexpr std::size_t kBaseSize = 258;

    Vocab();

    std::size_t size() const { return tokens_.size(); }
    const std::string& token_bytes(TokenId id) const;
    const std::vector<std::pair<TokenId, TokenId>>& merges() const { return merges_; }

    TokenSequence encode(std::string_view text) const override;
    std::string decode(std::span<const TokenId> ids) const;
    std::uint64_t id_space() const override { return tokens_.size(); }
    std::string name() const override { return "bpe"; }
    std::uint64_t content_hash() const override;

    std::string serialize() const;
    static Vocab deserialize(std::string_view text);
    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);

    friend Vocab bpe_train(std::string_view corpus, std::size_t vocab_size);

private:
    std::vector<std::string> tokens_;
    std::vector<std::pair<TokenId, TokenId>> merges_;

    void add_merge(TokenId left, TokenId right);
    std::vector<TokenId> encode_chunk(std::string_view chunk) const;
};

/// Greedy highest-frequency pair merging over a whitespace-chunked corpus
/// until vocab_size tokens exist or no adjacent pair repeats. Ties break by
/// the lexicographic order of the pair's byte strings, so training is fully
/// deterministic.
Vocab bpe_train(std::string_view corpus, std::size_t vocab_size);

/// Splits on whitespace and strips leading/trailing ASCII punctuation into
/// separate tokens.
std::vector<std::string> word_tokenize(std::string_view text);

/// 32-bit bucket id for a surface word; distinct words collide with
/// probability 2^-32 per pair.
TokenId word_bucket_id(std::string_view word);

/// Open-vocabulary tokenizer for the word-based ablation: every surface word
/// maps to a hash bucket in a 2^32 id space.
class WordTokenizer : public Tokenizer {
public:
    TokenSequence encode(std::string_view text) const override;
    std::uint64_t id_space() const override { return 1ull << 32; }
    std::string name() const override { return "word"; }
    std::uint64_t content_hash() const override { return fnv_of_name(); }

private:
    std::uint64_t fnv_of_name() const;
};

}  // namespace suma
