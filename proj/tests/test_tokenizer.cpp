#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <string>

#include "suma/grammar.hpp"
#include "suma/rng.hpp"
#include "suma/tokenizer.hpp"

using namespace suma;

namespace {
std::string random_bytes(Rng& rng, std::size_t max_len) {
    std::string s;
    const std::size_t len = rng.below(max_len + 1);
    for (std::size_t i = 0; i < len; ++i) s += static_cast<char>(rng.below(256));
    return s;
}
}  // namespace

TEST_CASE("first learned merge on a repeated-pair corpus is (a, a)") {
    const Vocab vocab = bpe_train("aaab aaab", Vocab::kBaseSize + 1);
    REQUIRE(vocab.merges().size() == 1);
    CHECK(vocab.merges()[0].first == static_cast<TokenId>('a'));
    CHECK(vocab.merges()[0].second == static_cast<TokenId>('a'));
    CHECK(vocab.token_bytes(Vocab::kBaseSize) == "aa");
}

TEST_CASE("vocab budget equal to the base alphabet learns no merges") {
    const Vocab vocab = bpe_train("the dog chased the cat", Vocab::kBaseSize);
    CHECK(vocab.merges().empty());
    // Byte-level fallback still encodes everything.
    const TokenSequence seq = vocab.encode("xyz");
    CHECK(seq.ids.size() == 3);
}

TEST_CASE("training is deterministic") {
    Rng rng(5);
    const std::string corpus = make_corpus(rng, 60);
    const Vocab a = bpe_train(corpus, 400);
    const Vocab b = bpe_train(corpus, 400);
    CHECK(a.serialize() == b.serialize());
}

TEST_CASE("training rejects bad inputs") {
    CHECK_THROWS_AS(bpe_train("", 300), std::invalid_argument);
    CHECK_THROWS_AS(bpe_train("abc", 10), std::invalid_argument);
}

TEST_CASE("encode/decode round-trips arbitrary byte strings") {
    Rng corpus_rng(3);
    const Vocab vocab = bpe_train(make_corpus(corpus_rng, 40), 350);
    Rng rng(9);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::string s = random_bytes(rng, 40);
        const TokenSequence seq = vocab.encode(s);
        CHECK(vocab.decode(seq.ids) == s);
    }
    CHECK(vocab.encode("").ids.empty());
}

TEST_CASE("decode rejects out-of-range ids") {
    const Vocab vocab;
    const std::vector<TokenId> bad{static_cast<TokenId>(vocab.size())};
    CHECK_THROWS_AS(vocab.decode(bad), std::out_of_range);
}

TEST_CASE("frequent words tokenize shorter than rare words of equal length") {
    // Zipfian corpus: "garden" is everywhere, "hamlet" almost nowhere.
    std::string corpus;
    for (int i = 0; i < 400; ++i) corpus += "garden ";
    corpus += "hamlet";
    const Vocab vocab = bpe_train(corpus, Vocab::kBaseSize + 24);
    const std::size_t frequent = vocab.encode("garden").ids.size();
    const std::size_t rare = vocab.encode("hamlet").ids.size();
    CHECK(frequent < rare);
}

TEST_CASE("token count is non-increasing as vocab_size grows") {
    Rng rng(21);
    const std::string corpus = make_corpus(rng, 80);
    const std::string probe = make_corpus(rng, 10);
    std::size_t previous = std::string::npos;
    for (std::size_t budget : {Vocab::kBaseSize, Vocab::kBaseSize + 64, Vocab::kBaseSize + 256,
                               Vocab::kBaseSize + 512}) {
        const Vocab vocab = bpe_train(corpus, budget);
        const std::size_t count = vocab.encode(probe).ids.size();
        CHECK(count <= previous);
        previous = count;
    }
}

TEST_CASE("vocab serialization round-trips") {
    Rng rng(33);
    const Vocab vocab = bpe_train(make_corpus(rng, 50), 380);
    const Vocab reloaded = Vocab::deserialize(vocab.serialize());
    CHECK(reloaded.serialize() == vocab.serialize());
    CHECK(reloaded.size() == vocab.size());
    const std::string text = "the quiet dog waited";
    CHECK(reloaded.encode(text).ids == vocab.encode(text).ids);
}

TEST_CASE("word tokenizer splits words and strips edge punctuation") {
    const std::vector<std::string> tokens = word_tokenize("Alex was tired.");
    CHECK(tokens == std::vector<std::string>{"Alex", "was", "tired", "."});
    CHECK(word_tokenize("\"hello,\" she said!") ==
          std::vector<std::string>{"\"", "hello", ",", "\"", "she", "said", "!"});
    CHECK(word_tokenize("don't stop") == std::vector<std::string>{"don't", "stop"});
}

TEST_CASE("word ids are consistent and whitespace-normalization invariant") {
    const WordTokenizer tok;
    const TokenSequence a = tok.encode("the dog  the\tdog");
    REQUIRE(a.ids.size() == 4);
    CHECK(a.ids[0] == a.ids[2]);
    CHECK(a.ids[1] == a.ids[3]);
    CHECK(tok.encode("the dog").ids == tok.encode("  the   dog ").ids);
}

TEST_CASE("hash buckets keep distinct rare words distinct") {
    // 2000 distinct words: expected pairwise collisions ~ 2e6 / 2^32 < 1e-3,
    // so this fixed lexicon must hash with no collision at all.
    Rng rng(55);
    std::set<std::string> words;
    while (words.size() < 2000) words.insert(make_nonword(rng, 2 + rng.below(2)));
    std::set<TokenId> ids;
    for (const auto& w : words) ids.insert(word_bucket_id(w));
    CHECK(ids.size() == words.size());
}
