#include "suma/analyses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "suma/grammar.hpp"
#include "suma/rng.hpp"
#include "suma/stats.hpp"

namespace suma {

namespace {

constexpr std::uint64_t kSentenceStream = 201;
constexpr std::uint64_t kWordShuffleStream = 202;
constexpr std::uint64_t kJabberStream = 203;
constexpr std::uint64_t kNonwordShuffleStream = 204;
constexpr std::uint64_t kSplitStreamBase = 210;

std::vector<std::string> shuffled_distinct(Rng& rng, const std::vector<std::string>& words) {
    std::vector<std::string> out = words;
    for (int attempt = 0; attempt < 32; ++attempt) {
        rng.shuffle(out);
        if (out != words || words.size() < 2) return out;
    }
    return out;  // forced identity only for degenerate inputs
}

/// Fisher transform with the boundary clamped one ulp-ish inside; identical
/// patterns then cancel exactly in within-minus-between differences.
double fisher_clamped(double r) {
    const double limit = 1.0 - 1e-12;
    return fisher_z(std::clamp(r, -limit, limit));
}

std::vector<double> column_mean_rows(const RealMatrix& m, std::span<const std::size_t> rows) {
    std::vector<double> mean(m.cols(), 0.0);
    for (std::size_t r : rows)
        for (std::size_t j = 0; j < m.cols(); ++j) mean[j] += m(r, j);
    for (double& v : mean) v /= static_cast<double>(rows.size());
    return mean;
}

}  // namespace

const std::vector<std::string>& ConditionSet::condition(std::size_t index) const {
    switch (index) {
        case 0: return sentences;
        case 1: return words;
        case 2: return jabberwocky;
        case 3: return nonwords;
    }
    throw std::out_of_range("ConditionSet: condition index");
}

ConditionSet generate_conditions(std::uint64_t seed, std::size_t n_items,
                                 std::size_t length_words) {
    if (n_items < 8)
        throw std::invalid_argument("generate_conditions: needs >= 8 items per condition");
    if (length_words < 3) throw std::invalid_argument("generate_conditions: needs length >= 3");

    ConditionSet set;
    set.seed = seed;
    Rng sentence_rng = Rng(seed).fork(kSentenceStream);
    Rng shuffle_w_rng = Rng(seed).fork(kWordShuffleStream);
    Rng jabber_rng = Rng(seed).fork(kJabberStream);
    Rng shuffle_n_rng = Rng(seed).fork(kNonwordShuffleStream);

    const Lexicon& lex = analysis_lexicon();
    for (std::size_t i = 0; i < n_items; ++i) {
        const std::string sentence = make_sentence(sentence_rng, lex, length_words);
        const std::vector<std::string> s_words = split_words(sentence);

        std::vector<std::string> j_words = s_words;
        for (std::string& w : j_words)
            if (!lex.is_function_word(w)) w = matched_nonword(jabber_rng, w);

        set.sentences.push_back(sentence);
        set.words.push_back(join_words(shuffled_distinct(shuffle_w_rng, s_words)));
        set.jabberwocky.push_back(join_words(j_words));
        set.nonwords.push_back(join_words(shuffled_distinct(shuffle_n_rng, j_words)));
    }
    return set;
}

std::array<RealMatrix, 4> condition_features(const EncoderWeights& weights,
                                             const Tokenizer& tokenizer, const UnitMask& mask,
                                             const ConditionSet& conditions) {
    std::array<RealMatrix, 4> features;
    for (std::size_t c = 0; c < 4; ++c) {
        const auto& texts = conditions.condition(c);
        features[c] = RealMatrix(texts.size(), mask.k());
        for (std::size_t i = 0; i < texts.size(); ++i) {
            const TokenSequence seq = tokenizer.encode(texts[i]);
            if (seq.ids.empty())
                throw std::invalid_argument("condition_features: stimulus tokenized to nothing");
            const ActivationRecord record = forward(weights, seq.ids);
            const std::vector<double> row = extract(record, mask, Aggregation::Mean);
            std::copy(row.begin(), row.end(), features[c].row(i).begin());
        }
    }
    return features;
}

ProfileResult univariate_from_features(const std::array<RealMatrix, 4>& features) {
    const std::size_t k = features[0].cols();
    std::size_t total_rows = 0;
    for (const auto& f : features) {
        if (f.cols() != k)
            throw std::invalid_argument("univariate_from_features: unit counts differ");
        total_rows += f.rows();
    }

    // Per-unit mean/sd across the pooled stimuli of all conditions.
    std::vector<double> mean(k, 0.0), sd(k, 0.0);
    for (const auto& f : features)
        for (std::size_t i = 0; i < f.rows(); ++i)
            for (std::size_t j = 0; j < k; ++j) mean[j] += f(i, j);
    for (double& v : mean) v /= static_cast<double>(total_rows);
    for (const auto& f : features)
        for (std::size_t i = 0; i < f.rows(); ++i)
            for (std::size_t j = 0; j < k; ++j) {
                const double d = f(i, j) - mean[j];
                sd[j] += d * d;
            }
    for (double& v : sd) v = std::sqrt(v / static_cast<double>(total_rows));

    ProfileResult result;
    for (std::size_t c = 0; c < 4; ++c) {
        const RealMatrix& f = features[c];
        std::vector<double> item_means(f.rows(), 0.0);
        for (std::size_t i = 0; i < f.rows(); ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                const double z = sd[j] > 0.0 ? (f(i, j) - mean[j]) / sd[j] : 0.0;
                acc += z;
            }
            item_means[i] = acc / static_cast<double>(k);
        }
        double m = 0.0;
        for (double v : item_means) m += v;
        m /= static_cast<double>(item_means.size());
        double var = 0.0;
        for (double v : item_means) var += (v - m) * (v - m);
        result.condition_mean[c] = m;
        result.condition_sd[c] = std::sqrt(var / static_cast<double>(item_means.size()));
        result.item_means[c] = std::move(item_means);
    }
    return result;
}

ProfileResult univariate_profile(const EncoderWeights& weights, const Tokenizer& tokenizer,
                                 const UnitMask& mask, const ConditionSet& conditions) {
    ProfileResult result = univariate_from_features(
        condition_features(weights, tokenizer, mask, conditions));
    result.tokenizer_tag = tokenizer.name();
    return result;
}

PatternResult pattern_from_features(const std::array<RealMatrix, 4>& features, std::uint64_t seed,
                                    std::size_t n_splits) {
    const std::size_t n = features[0].rows();
    for (const auto& f : features)
        if (f.rows() != n)
            throw std::invalid_argument("pattern_from_features: item counts differ");
    if (n < 4)
        throw std::invalid_argument("pattern_from_features: needs >= 2 items per half");
    if (features[0].cols() < 3)
        throw std::invalid_argument("pattern_from_features: needs >= 3 units for correlations");

    const Rng root = Rng(seed);
    double lexical_sum = 0.0, syntactic_sum = 0.0;
    for (std::size_t split = 0; split < n_splits; ++split) {
        // One seeded item split shared by all four conditions, mirroring the
        // run-based splits of the original studies; identical condition
        // patterns then cancel exactly in within-minus-between differences.
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng rng = root.fork(kSplitStreamBase + split);
        rng.shuffle(order);
        const std::size_t first = (n + 1) / 2;
        std::array<std::vector<double>, 4> half1, half2;
        for (std::size_t c = 0; c < 4; ++c) {
            half1[c] = column_mean_rows(features[c], {order.data(), first});
            half2[c] = column_mean_rows(features[c], {order.data() + first, n - first});
        }

        const auto discrimination = [&](std::size_t a, std::size_t b) {
            const double within = (fisher_clamped(pearson_r(half1[a], half2[a])) +
                                   fisher_clamped(pearson_r(half1[b], half2[b]))) /
                                  2.0;
            const double between = (fisher_clamped(pearson_r(half1[a], half2[b])) +
                                    fisher_clamped(pearson_r(half2[a], half1[b]))) /
                                   2.0;
            return within - between;
        };

        // Lexical pairs: (S,J), (W,N); syntactic pairs: (S,W), (J,N).
        lexical_sum += (discrimination(0, 2) + discrimination(1, 3)) / 2.0;
        syntactic_sum += (discrimination(0, 1) + discrimination(2, 3)) / 2.0;
    }
    return {lexical_sum / static_cast<double>(n_splits),
            syntactic_sum / static_cast<double>(n_splits)};
}

PatternResult multivariate_pattern(const EncoderWeights& weights, const Tokenizer& tokenizer,
                                   const UnitMask& mask, const ConditionSet& conditions,
                                   std::uint64_t seed) {
    return pattern_from_features(condition_features(weights, tokenizer, mask, conditions), seed);
}

std::vector<std::pair<std::size_t, ProfileResult>> k_sweep_univariate(
    const EncoderWeights& weights, const Tokenizer& tokenizer, const UnitMask& mask,
    const ConditionSet& conditions, std::span<const std::size_t> ks) {
    const auto features = condition_features(weights, tokenizer, mask, conditions);
    std::vector<std::pair<std::size_t, ProfileResult>> out;
    for (std::size_t k : ks) {
        if (k > mask.k()) throw std::out_of_range("k_sweep_univariate: k exceeds mask size");
        std::array<RealMatrix, 4> sliced;
        for (std::size_t c = 0; c < 4; ++c) {
            sliced[c] = RealMatrix(features[c].rows(), k);
            for (std::size_t i = 0; i < features[c].rows(); ++i)
                for (std::size_t j = 0; j < k; ++j) sliced[c](i, j) = features[c](i, j);
        }
        out.emplace_back(k, univariate_from_features(sliced));
    }
    return out;
}

std::vector<std::pair<std::size_t, PatternResult>> k_sweep_multivariate(
    const EncoderWeights& weights, const Tokenizer& tokenizer, const UnitMask& mask,
    const ConditionSet& conditions, std::span<const std::size_t> ks, std::uint64_t seed) {
    const auto features = condition_features(weights, tokenizer, mask, conditions);
    std::vector<std::pair<std::size_t, PatternResult>> out;
    for (std::size_t k : ks) {
        if (k > mask.k()) throw std::out_of_range("k_sweep_multivariate: k exceeds mask size");
        std::array<RealMatrix, 4> sliced;
        for (std::size_t c = 0; c < 4; ++c) {
            sliced[c] = RealMatrix(features[c].rows(), k);
            for (std::size_t i = 0; i < features[c].rows(); ++i)
                for (std::size_t j = 0; j < k; ++j) sliced[c](i, j) = features[c](i, j);
        }
        out.emplace_back(k, pattern_from_features(sliced, seed));
    }
    return out;
}

}  // namespace suma
