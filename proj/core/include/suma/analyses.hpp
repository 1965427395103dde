#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "suma/encoder.hpp"
#include "suma/localizer.hpp"
#include "suma/matrix.hpp"

namespace suma {

/// The four classic condition types: well-formed sentences (S), scrambled
/// words (W), jabberwocky sentences with content words replaced by
/// pronounceable non-words (J), and scrambled jabberwocky (N).
struct ConditionSet {
    std::vector<std::string> sentences;
    std::vector<std::string> words;
    std::vector<std::string> jabberwocky;
    std::vector<std::string> nonwords;
    std::uint64_t seed = 0;

    const std::vector<std::string>& condition(std::size_t index) const;
    static constexpr std::array<const char*, 4> kNames{"S", "W", "J", "N"};
};

/// W is a per-item word permutation of S; J preserves S's function words and
/// word count; N is a per-item permutation of J. Content words come from the
/// analysis half of the lexicon, disjoint from localizer materials.
ConditionSet generate_conditions(std::uint64_t seed, std::size_t n_items, std::size_t length_words);

struct ProfileResult {
    std::array<double, 4> condition_mean{};  // S, W, J, N
    std::array<double, 4> condition_sd{};    // dispersion across items
    /// Per-item unit-mean z values; lets multi-seed runs pool dispersion
    /// across seeds x stimuli.
    std::array<std::vector<double>, 4> item_means;
    std::string unit_source = "localized";
    std::string tokenizer_tag;
};

struct PatternResult {
    double lexical = 0.0;    // mean discrimination over (S,J) and (W,N)
    double syntactic = 0.0;  // mean discrimination over (S,W) and (J,N)
};

/// Token-mean masked features per condition, one row per item.
std::array<RealMatrix, 4> condition_features(const EncoderWeights& weights,
                                             const Tokenizer& tokenizer, const UnitMask& mask,
                                             const ConditionSet& conditions);

/// Units are z-scored across the pooled stimuli of all four conditions, then
/// averaged per condition over items and units. Zero-variance units z to 0.
ProfileResult univariate_from_features(const std::array<RealMatrix, 4>& features);
ProfileResult univariate_profile(const EncoderWeights& weights, const Tokenizer& tokenizer,
                                 const UnitMask& mask, const ConditionSet& conditions);

/// Split-half pattern discrimination, Fisher-transformed, averaged over
/// n_splits seeded half-splits.
PatternResult pattern_from_features(const std::array<RealMatrix, 4>& features, std::uint64_t seed,
                                    std::size_t n_splits = 10);
PatternResult multivariate_pattern(const EncoderWeights& weights, const Tokenizer& tokenizer,
                                   const UnitMask& mask, const ConditionSet& conditions,
                                   std::uint64_t seed);

std::vector<std::pair<std::size_t, ProfileResult>> k_sweep_univariate(
    const EncoderWeights& weights, const Tokenizer& tokenizer, const UnitMask& mask,
    const ConditionSet& conditions, std::span<const std::size_t> ks);

std::vector<std::pair<std::size_t, PatternResult>> k_sweep_multivariate(
    const EncoderWeights& weights, const Tokenizer& tokenizer, const UnitMask& mask,
    const ConditionSet& conditions, std::span<const std::size_t> ks, std::uint64_t seed);

}  // namespace suma
