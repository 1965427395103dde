#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "suma/encoder.hpp"
#include "suma/matrix.hpp"

namespace suma {

/// Sentence / non-word contrast materials, token-length matched within +-1
/// under the tokenizer that generated them.
struct LocalizerStimuli {
    std::vector<std::string> sentences;
    std::vector<std::string> nonwords;
    std::uint64_t seed = 0;
    std::size_t length_words = 0;
};

LocalizerStimuli generate_localizer_stimuli(std::uint64_t seed, std::size_t n_items,
                                            std::size_t length_words, const Tokenizer& tokenizer);

struct UnitCoord {
    std::size_t layer = 0, tap = 0, channel = 0;
    auto operator<=>(const UnitCoord&) const = default;
};

struct RecordShape {
    std::size_t layers = 0, taps = 0, d_model = 0;
    std::size_t unit_count() const { return layers * taps * d_model; }
};

/// Ordered set of selected units, descending by t.
struct UnitMask {
    struct Entry {
        UnitCoord coord;
        double t_value = 0.0;
    };
    std::vector<Entry> entries;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;

    std::size_t k() const { return entries.size(); }
    UnitMask prefix(std::size_t k) const;

    void save_csv(const std::filesystem::path& path) const;
    static UnitMask load_csv(const std::filesystem::path& path);
};

/// Per-unit, per-stimulus scalar responses: one row per unit in
/// (layer, tap, channel) order, one column per stimulus. The scalar is the
/// token-mean (or last-token) activation of that unit.
RealMatrix unit_scalars(const EncoderWeights& weights, const Tokenizer& tokenizer,
                        std::span<const std::string> texts, Aggregation reduction);

/// Ranks every unit by Welch t between sentence and non-word scalar samples
/// and keeps the top k. Ties (including the zero-variance sentinels) break by
/// (layer, tap, channel) order, making the ranking total and the mask at k a
/// prefix of the mask at any larger k.
UnitMask localize_scalars(const RealMatrix& sentence_scalars, const RealMatrix& nonword_scalars,
                          RecordShape shape, std::size_t k);

UnitMask localize(const EncoderWeights& weights, const Tokenizer& tokenizer,
                  const LocalizerStimuli& stimuli, std::size_t k,
                  Aggregation reduction = Aggregation::Mean);

/// Memoized variant keyed by a content hash of (weights seed+config,
/// tokenizer, stimuli, k, reduction).
const UnitMask& localize_cached(const EncoderWeights& weights, const Tokenizer& tokenizer,
                                const LocalizerStimuli& stimuli, std::size_t k,
                                Aggregation reduction = Aggregation::Mean);

/// Aggregated activation of each masked unit, in mask order.
std::vector<double> extract(const ActivationRecord& record, const UnitMask& mask,
                            Aggregation mode);

/// Same, restricted to positions [begin, end) of the record.
std::vector<double> extract_span(const ActivationRecord& record, const UnitMask& mask,
                                 Aggregation mode, std::size_t begin, std::size_t end);

/// Uniform sample of k units without replacement; the control for the
/// localized selection.
UnitMask random_mask(std::uint64_t seed, std::size_t k, RecordShape shape);

RecordShape record_shape(const EncoderConfig& config);

}  // namespace suma
