#include "suma/grammar.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace suma {

namespace {

Lexicon build_full() {
    Lexicon lex;
    lex.determiners = {"the", "a", "every", "some", "his", "her", "their", "one"};
    lex.prepositions = {"in", "on", "near", "under", "behind", "beside", "above", "across"};
    lex.conjunctions = {"and", "while", "because", "but"};
    lex.nouns = {"dog",     "cat",     "teacher", "child",   "garden",  "river",
                 "story",   "friend",  "house",   "bird",    "doctor",  "window",
                 "road",    "mountain", "letter", "farmer",  "king",    "boat",
                 "tree",    "song",    "city",    "horse",   "sister",  "brother",
                 "market",  "field",   "winter",  "morning", "village", "painter",
                 "student", "lantern", "bridge",  "meadow",  "castle",  "library",
                 "valley",  "sailor",  "orchard", "harbor"};
    lex.transitive_verbs = {"chased",   "found",   "admired",  "watched",  "followed",
                            "helped",   "visited", "remembered", "carried", "painted",
                            "crossed",  "opened",  "climbed",  "fixed",    "borrowed",
                            "studied",  "guarded", "greeted",  "trusted",  "observed",
                            "repaired", "explored", "gathered", "praised"};
    lex.intransitive_verbs = {"slept",    "smiled",  "arrived",  "waited",   "laughed",
                              "wandered", "rested",  "listened", "stumbled", "hurried",
                              "paused",   "dreamed", "whistled", "shivered", "nodded",
                              "vanished"};
    lex.adjectives = {"happy",  "old",      "little",  "quiet",   "bright", "tired",
                      "gentle", "clever",   "warm",    "strange", "tall",   "brave",
                      "curious", "silver",  "narrow",  "ancient", "cheerful", "distant",
                      "golden", "patient",  "humble",  "sturdy",  "foggy",  "crimson"};
    lex.adverbs = {"quietly", "slowly",   "often",  "always", "never",  "gladly",
                   "carefully", "suddenly", "rarely", "calmly", "eagerly", "proudly"};
    return lex;
}

std::vector<std::string> take_parity(const std::vector<std::string>& pool, bool odd) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < pool.size(); ++i)
        if ((i % 2 == 1) == odd) out.push_back(pool[i]);
    return out;
}

Lexicon build_half(bool odd) {
    const Lexicon& full = build_full();
    Lexicon lex = full;  // function words shared
    lex.nouns = take_parity(full.nouns, odd);
    lex.transitive_verbs = take_parity(full.transitive_verbs, odd);
    lex.intransitive_verbs = take_parity(full.intransitive_verbs, odd);
    lex.adjectives = take_parity(full.adjectives, odd);
    lex.adverbs = take_parity(full.adverbs, odd);
    return lex;
}

const std::unordered_set<std::string>& full_word_set() {
    static const std::unordered_set<std::string> words = [] {
        std::unordered_set<std::string> set;
        const Lexicon& lex = full_lexicon();
        for (const auto* pool :
             {&lex.determiners, &lex.prepositions, &lex.conjunctions, &lex.nouns,
              &lex.transitive_verbs, &lex.intransitive_verbs, &lex.adjectives, &lex.adverbs})
            set.insert(pool->begin(), pool->end());
        return set;
    }();
    return words;
}

/// Zipf-weighted draw: earlier pool entries are proportionally more common,
/// giving the corpus a natural frequency profile.
const std::string& pick(Rng& rng, const std::vector<std::string>& pool) {
    double total = 0.0;
    for (std::size_t i = 0; i < pool.size(); ++i) total += 1.0 / static_cast<double>(i + 1);
    double target = rng.uniform01() * total;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        target -= 1.0 / static_cast<double>(i + 1);
        if (target <= 0.0) return pool[i];
    }
    return pool.back();
}

// Clause templates keyed by word count.
enum class Slot { Det, Adj, Noun, VerbT, VerbI, Adv, Prep };

const std::vector<std::vector<std::vector<Slot>>>& clause_patterns() {
    using S = Slot;
    static const std::vector<std::vector<std::vector<Slot>>> by_size = {
        /*3*/ {{S::Det, S::Noun, S::VerbI}},
        /*4*/ {{S::Det, S::Adj, S::Noun, S::VerbI}, {S::Det, S::Noun, S::VerbI, S::Adv}},
        /*5*/ {{S::Det, S::Noun, S::VerbT, S::Det, S::Noun},
               {S::Det, S::Adj, S::Noun, S::VerbI, S::Adv}},
        /*6*/ {{S::Det, S::Adj, S::Noun, S::VerbT, S::Det, S::Noun},
               {S::Det, S::Noun, S::VerbT, S::Det, S::Adj, S::Noun}},
        /*7*/ {{S::Det, S::Adj, S::Noun, S::VerbT, S::Det, S::Adj, S::Noun}},
    };
    return by_size;
}

void emit_clause(Rng& rng, const Lexicon& lex, std::size_t size, std::vector<std::string>& out) {
    const auto& options = clause_patterns().at(size - 3);
    const auto& pattern = options[rng.below(options.size())];
    for (Slot slot : pattern) {
        switch (slot) {
            case Slot::Det: out.push_back(pick(rng, lex.determiners)); break;
            case Slot::Adj: out.push_back(pick(rng, lex.adjectives)); break;
            case Slot::Noun: out.push_back(pick(rng, lex.nouns)); break;
            case Slot::VerbT: out.push_back(pick(rng, lex.transitive_verbs)); break;
            case Slot::VerbI: out.push_back(pick(rng, lex.intransitive_verbs)); break;
            case Slot::Adv: out.push_back(pick(rng, lex.adverbs)); break;
            case Slot::Prep: out.push_back(pick(rng, lex.prepositions)); break;
        }
    }
}

void emit_sentence(Rng& rng, const Lexicon& lex, std::size_t n, std::vector<std::string>& out) {
    if (n < 3) throw std::invalid_argument("make_sentence: needs at least 3 words");
    // Feasible clause sizes leave a remainder of 0 (done), 3 (prepositional
    // phrase) or >= 4 (conjunction plus another clause).
    std::vector<std::size_t> feasible;
    for (std::size_t s = 3; s <= std::min<std::size_t>(7, n); ++s) {
        const std::size_t rest = n - s;
        if (rest == 0 || rest == 3 || rest >= 4) feasible.push_back(s);
    }
    const std::size_t size = feasible[rng.below(feasible.size())];
    emit_clause(rng, lex, size, out);
    const std::size_t rest = n - size;
    if (rest == 3) {
        out.push_back(pick(rng, lex.prepositions));
        out.push_back(pick(rng, lex.determiners));
        out.push_back(pick(rng, lex.nouns));
    } else if (rest >= 4) {
        out.push_back(pick(rng, lex.conjunctions));
        emit_sentence(rng, lex, rest - 1, out);
    }
}

}  // namespace

bool Lexicon::is_function_word(std::string_view word) const {
    for (const auto* pool : {&determiners, &prepositions, &conjunctions})
        if (std::find(pool->begin(), pool->end(), word) != pool->end()) return true;
    return false;
}

bool Lexicon::contains(std::string_view word) const {
    for (const auto* pool : {&determiners, &prepositions, &conjunctions, &nouns,
                             &transitive_verbs, &intransitive_verbs, &adjectives, &adverbs})
        if (std::find(pool->begin(), pool->end(), word) != pool->end()) return true;
    return false;
}

const Lexicon& full_lexicon() {
    static const Lexicon lex = build_full();
    return lex;
}

const Lexicon& localizer_lexicon() {
    static const Lexicon lex = build_half(false);
    return lex;
}

const Lexicon& analysis_lexicon() {
    static const Lexicon lex = build_half(true);
    return lex;
}

std::string make_sentence(Rng& rng, const Lexicon& lexicon, std::size_t n_words) {
    std::vector<std::string> words;
    words.reserve(n_words);
    emit_sentence(rng, lexicon, n_words, words);
    return join_words(words);
}

std::string make_nonword(Rng& rng, std::size_t n_syllables) {
    static const std::vector<std::string> onsets = {
        "b", "bl", "br", "d", "dr", "fl", "g",  "gl", "gr", "k",  "kl", "kr",
        "m", "n",  "p",  "pl", "pr", "sl", "sn", "st", "t",  "tr", "v",  "z"};
    static const std::vector<std::string> vowels = {"a", "e", "i", "o", "u", "ai", "ee", "oa", "ou"};
    static const std::vector<std::string> codas = {"b", "d", "k", "l", "m", "n", "p", "r", "s", "t"};
    if (n_syllables == 0) throw std::invalid_argument("make_nonword: needs >= 1 syllable");
    for (int attempt = 0; attempt < 64; ++attempt) {
        std::string word;
        for (std::size_t s = 0; s < n_syllables; ++s) {
            word += onsets[rng.below(onsets.size())];
            word += vowels[rng.below(vowels.size())];
        }
        // Closing coda keeps even single syllables >= 3 characters.
        word += codas[rng.below(codas.size())];
        if (!full_word_set().contains(word)) return word;
    }
    throw std::runtime_error("make_nonword: could not avoid lexicon collision");
}

std::string matched_nonword(Rng& rng, std::string_view word) {
    const std::size_t syllables =
        std::clamp<std::size_t>((word.size() + 2) / 3, 1, 3);
    return make_nonword(rng, syllables);
}

std::string make_corpus(Rng& rng, std::size_t n_sentences) {
    std::string out;
    std::size_t in_paragraph = 0;
    std::size_t paragraph_len = 3 + rng.below(5);
    for (std::size_t i = 0; i < n_sentences; ++i) {
        const std::size_t words = 3 + rng.below(10);
        out += make_sentence(rng, full_lexicon(), words);
        out += ".";
        ++in_paragraph;
        if (in_paragraph >= paragraph_len && i + 1 < n_sentences) {
            out += "\n\n";
            in_paragraph = 0;
            paragraph_len = 3 + rng.below(5);
        } else if (i + 1 < n_sentences) {
            out += " ";
        }
    }
    out += "\n";
    return out;
}

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::size_t start = 0;
    while (start < text.size()) {
        while (start < text.size() && text[start] == ' ') ++start;
        std::size_t end = start;
        while (end < text.size() && text[end] != ' ') ++end;
        if (end > start) words.emplace_back(text.substr(start, end - start));
        start = end;
    }
    return words;
}

}  // namespace suma
