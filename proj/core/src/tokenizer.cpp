#include "suma/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "suma/io.hpp"
#include "suma/rng.hpp"

namespace suma {

namespace {

bool is_space_byte(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

/// Partition text into maximal whitespace / non-whitespace runs. Merges are
/// learned and applied within chunks, so they never bridge a word boundary
/// and concatenating chunk encodings equals encoding the whole text.
std::vector<std::string_view> chunk_text(std::string_view text) {
    std::vector<std::string_view> chunks;
    std::size_t start = 0;
    while (start < text.size()) {
        const bool ws = is_space_byte(text[start]);
        std::size_t end = start + 1;
        while (end < text.size() && is_space_byte(text[end]) == ws) ++end;
        chunks.push_back(text.substr(start, end - start));
        start = end;
    }
    return chunks;
}

std::string escape_token(std::string_view bytes) {
    std::string out;
    for (unsigned char c : bytes) {
        if (c == '\\') {
            out += "\\\\";
        } else if (c >= 32 && c < 127) {
            out += static_cast<char>(c);
        } else {
            char buf[5];
            std::snprintf(buf, sizeof(buf), "\\x%02x", c);
            out += buf;
        }
    }
    return out;
}

std::string unescape_token(std::string_view text) {
    std::string out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '\\') {
            out += text[i];
            continue;
        }
        if (i + 1 < text.size() && text[i + 1] == '\\') {
            out += '\\';
            ++i;
        } else if (i + 3 < text.size() && text[i + 1] == 'x') {
            out += static_cast<char>(std::stoi(std::string(text.substr(i + 2, 2)), nullptr, 16));
            i += 3;
        } else {
            throw std::runtime_error("vocab file: bad escape sequence");
        }
    }
    return out;
}

std::vector<TokenId> apply_merge(const std::vector<TokenId>& ids, TokenId left, TokenId right,
                                 TokenId merged) {
    std::vector<TokenId> out;
    out.reserve(ids.size());
    std::size_t i = 0;
    while (i < ids.size()) {
        if (i + 1 < ids.size() && ids[i] == left && ids[i + 1] == right) {
            out.push_back(merged);
            i += 2;
        } else {
            out.push_back(ids[i]);
            ++i;
        }
    }
    return out;
}

}  // namespace

Vocab::Vocab() {
    tokens_.reserve(kBaseSize);
    for (int b = 0; b < 256; ++b) tokens_.push_back(std::string(1, static_cast<char>(b)));
    tokens_.push_back("<unk>");
    tokens_.push_back("<bos>");
}

const std::string& Vocab::token_bytes(TokenId id) const {
    if (id >= tokens_.size()) throw std::out_of_range("Vocab: token id out of range");
    return tokens_[id];
}

void Vocab::add_merge(TokenId left, TokenId right) {
    merges_.emplace_back(left, right);
    tokens_.push_back(tokens_[left] + tokens_[right]);
}

std::vector<TokenId> Vocab::encode_chunk(std::string_view chunk) const {
    std::vector<TokenId> ids;
    ids.reserve(chunk.size());
    for (unsigned char c : chunk) ids.push_back(c);
    TokenId next_id = kBaseSize;
    for (const auto& [left, right] : merges_) {
        if (ids.size() >= 2) ids = apply_merge(ids, left, right, next_id);
        ++next_id;
    }
    return ids;
}

TokenSequence Vocab::encode(std::string_view text) const {
    TokenSequence seq;
    seq.source_text.assign(text);
    // Running texts repeat the same words constantly; memoize per call.
    std::unordered_map<std::string_view, std::vector<TokenId>> cache;
    for (std::string_view chunk : chunk_text(text)) {
        auto it = cache.find(chunk);
        if (it == cache.end()) it = cache.emplace(chunk, encode_chunk(chunk)).first;
        seq.ids.insert(seq.ids.end(), it->second.begin(), it->second.end());
    }
    return seq;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) {
        if (id >= tokens_.size()) throw std::out_of_range("Vocab::decode: id out of range");
        if (id == kUnknownId || id == kBosId) continue;
        out += tokens_[id];
    }
    return out;
}

Vocab bpe_train(std::string_view corpus, std::size_t vocab_size) {
    if (corpus.empty()) throw std::invalid_argument("bpe_train: empty corpus");
    if (vocab_size < Vocab::kBaseSize)
        throw std::invalid_argument("bpe_train: vocab_size below base alphabet size");

    Vocab vocab;

    // Unique chunks with multiplicities; ordering fixed by first appearance
    // but all decisions below depend only on counts and byte strings.
    std::map<std::string, std::size_t> chunk_counts;
    for (std::string_view chunk : chunk_text(corpus)) ++chunk_counts[std::string(chunk)];

    struct WeightedChunk {
        std::vector<TokenId> ids;
        std::size_t count;
    };
    std::vector<WeightedChunk> chunks;
    chunks.reserve(chunk_counts.size());
    for (const auto& [bytes, count] : chunk_counts) {
        std::vector<TokenId> ids;
        ids.reserve(bytes.size());
        for (unsigned char c : bytes) ids.push_back(c);
        chunks.push_back({std::move(ids), count});
    }

    while (vocab.size() < vocab_size) {
        std::map<std::pair<TokenId, TokenId>, std::size_t> pair_counts;
        for (const auto& chunk : chunks) {
            for (std::size_t i = 0; i + 1 < chunk.ids.size(); ++i)
                pair_counts[{chunk.ids[i], chunk.ids[i + 1]}] += chunk.count;
        }

        std::size_t best_count = 0;
        std::pair<TokenId, TokenId> best_pair{0, 0};
        for (const auto& [pair, count] : pair_counts) {
            if (count < 2 || count < best_count) continue;
            if (count > best_count) {
                best_count = count;
                best_pair = pair;
                continue;
            }
            // Equal frequency: smaller (left bytes, right bytes) wins.
            const auto key = [&vocab](const std::pair<TokenId, TokenId>& p) {
                return std::make_pair(vocab.token_bytes(p.first), vocab.token_bytes(p.second));
            };
            if (key(pair) < key(best_pair)) best_pair = pair;
        }
        if (best_count < 2) break;  // no pair repeats

        const TokenId merged = static_cast<TokenId>(vocab.size());
        vocab.add_merge(best_pair.first, best_pair.second);
        for (auto& chunk : chunks) {
            if (chunk.ids.size() >= 2)
                chunk.ids = apply_merge(chunk.ids, best_pair.first, best_pair.second, merged);
        }
    }
    return vocab;
}

std::string Vocab::serialize() const {
    std::string out = "# suma bpe vocab\nversion = 1\nvocab_size = " +
                      std::to_string(tokens_.size()) + "\ntokens:\n";
    for (const auto& t : tokens_) {
        out += escape_token(t);
        out += '\n';
    }
    out += "merges:\n";
    for (const auto& [l, r] : merges_) {
        out += std::to_string(l);
        out += ' ';
        out += std::to_string(r);
        out += '\n';
    }
    return out;
}

Vocab Vocab::deserialize(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t declared_size = 0;

    // Header until the tokens section; token lines are raw (only the escape
    // encoding applies), so comment skipping only happens up here.
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line == "tokens:") break;
        if (line.rfind("version", 0) == 0) {
            if (parse_kv(line).at("version") != "1")
                throw std::runtime_error("vocab file: unsupported version");
        } else if (line.rfind("vocab_size", 0) == 0) {
            declared_size = std::stoull(parse_kv(line).at("vocab_size"));
        } else {
            throw std::runtime_error("vocab file: unexpected header line: " + line);
        }
    }
    if (declared_size < kBaseSize) throw std::runtime_error("vocab file: bad vocab_size header");

    std::vector<std::string> tokens;
    tokens.reserve(declared_size);
    for (std::size_t i = 0; i < declared_size; ++i) {
        if (!std::getline(in, line)) throw std::runtime_error("vocab file: truncated tokens");
        tokens.push_back(unescape_token(line));
    }
    if (!std::getline(in, line) || line != "merges:")
        throw std::runtime_error("vocab file: missing merges section");

    Vocab vocab;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        TokenId l = 0, r = 0;
        if (!(fields >> l >> r)) throw std::runtime_error("vocab file: bad merge line");
        vocab.add_merge(l, r);
    }
    if (vocab.tokens_ != tokens)
        throw std::runtime_error("vocab file: token list does not match merge reconstruction");
    return vocab;
}

void Vocab::save(const std::filesystem::path& path) const { write_text_file(path, serialize()); }

Vocab Vocab::load(const std::filesystem::path& path) {
    return deserialize(read_text_file(path));
}

std::vector<std::string> word_tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    for (std::string_view chunk : chunk_text(text)) {
        if (is_space_byte(chunk[0])) continue;
        std::size_t begin = 0, end = chunk.size();
        std::vector<std::string> leading, trailing;
        while (begin < end && std::ispunct(static_cast<unsigned char>(chunk[begin])))
            leading.emplace_back(1, chunk[begin++]);
        while (end > begin && std::ispunct(static_cast<unsigned char>(chunk[end - 1])))
            trailing.emplace_back(1, chunk[--end]);
        tokens.insert(tokens.end(), leading.begin(), leading.end());
        if (end > begin) tokens.emplace_back(chunk.substr(begin, end - begin));
        tokens.insert(tokens.end(), trailing.rbegin(), trailing.rend());
    }
    return tokens;
}

TokenId word_bucket_id(std::string_view word) {
    const std::uint64_t h = fnv1a64(word);
    return static_cast<TokenId>(h ^ (h >> 32));
}

TokenSequence WordTokenizer::encode(std::string_view text) const {
    TokenSequence seq;
    seq.source_text.assign(text);
    for (const std::string& w : word_tokenize(text)) seq.ids.push_back(word_bucket_id(w));
    return seq;
}

std::uint64_t WordTokenizer::fnv_of_name() const { return fnv1a64("word-tokenizer-v1"); }

std::uint64_t Vocab::content_hash() const { return fnv1a64(serialize()); }

}  // namespace suma
