#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "suma/rng.hpp"

namespace suma {

/// Word pools for the bundled template grammar. Function words (determiners,
/// prepositions, conjunctions) are shared between the localizer and analysis
/// materials; content pools are split so the two stimulus families never
/// share a content word.
struct Lexicon {
    std::vector<std::string> determiners;
    std::vector<std::string> prepositions;
    std::vector<std::string> conjunctions;
    std::vector<std::string> nouns;
    std::vector<std::string> transitive_verbs;
    std::vector<std::string> intransitive_verbs;
    std::vector<std::string> adjectives;
    std::vector<std::string> adverbs;

    bool is_function_word(std::string_view word) const;
    bool contains(std::string_view word) const;
};

const Lexicon& full_lexicon();
const Lexicon& localizer_lexicon();
const Lexicon& analysis_lexicon();

/// Lowercase sentence with exactly n_words words (n_words >= 3), built from
/// clause templates optionally extended by prepositional phrases and
/// conjunctions. No punctuation; words joined by single spaces.
std::string make_sentence(Rng& rng, const Lexicon& lexicon, std::size_t n_words);

/// Pronounceable consonant-vowel pseudo-word, guaranteed absent from the
/// full lexicon.
std::string make_nonword(Rng& rng, std::size_t n_syllables);

/// Pseudo-word sized to roughly match a given surface word.
std::string matched_nonword(Rng& rng, std::string_view word);

/// Paragraphed text from the full grammar for tokenizer and language-model
/// training; paragraphs are separated by blank lines and sentences end with
/// a period.
std::string make_corpus(Rng& rng, std::size_t n_sentences);

std::string join_words(const std::vector<std::string>& words);
std::vector<std::string> split_words(std::string_view text);

}  // namespace suma
