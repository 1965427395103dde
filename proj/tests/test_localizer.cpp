#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "suma/grammar.hpp"
#include "suma/localizer.hpp"
#include "suma/rng.hpp"
#include "suma/tokenizer.hpp"

using namespace suma;

namespace {

Vocab trained_vocab(std::uint64_t seed = 2, std::size_t sentences = 120, std::size_t size = 420) {
    Rng rng(seed);
    return bpe_train(make_corpus(rng, sentences), size);
}

/// Gaussian unit scalars with a +effect shift planted into `planted` rows of
/// the sentence condition.
std::pair<RealMatrix, RealMatrix> planted_scalars(Rng& rng, std::size_t units,
                                                  std::size_t stimuli,
                                                  const std::set<std::size_t>& planted,
                                                  double effect) {
    RealMatrix sent(units, stimuli), nonw(units, stimuli);
    for (std::size_t u = 0; u < units; ++u)
        for (std::size_t s = 0; s < stimuli; ++s) {
            sent(u, s) = rng.normal() + (planted.contains(u) ? effect : 0.0);
            nonw(u, s) = rng.normal();
        }
    return {sent, nonw};
}

}  // namespace

TEST_CASE("localizer stimuli are deterministic and token-length matched") {
    const Vocab vocab = trained_vocab();
    const LocalizerStimuli a = generate_localizer_stimuli(5, 12, 6, vocab);
    const LocalizerStimuli b = generate_localizer_stimuli(5, 12, 6, vocab);
    CHECK(a.sentences == b.sentences);
    CHECK(a.nonwords == b.nonwords);
    REQUIRE(a.sentences.size() == 12);
    REQUIRE(a.nonwords.size() == 12);

    for (std::size_t i = 0; i < a.sentences.size(); ++i) {
        const auto s_len = vocab.encode(a.sentences[i]).ids.size();
        const auto n_len = vocab.encode(a.nonwords[i]).ids.size();
        CHECK(s_len + 1 >= n_len);
        CHECK(n_len + 1 >= s_len);
    }
}

TEST_CASE("non-words never collide with the grammar lexicon") {
    const Vocab vocab = trained_vocab();
    const LocalizerStimuli stimuli = generate_localizer_stimuli(7, 16, 7, vocab);
    const Lexicon& lex = full_lexicon();
    for (const auto& item : stimuli.nonwords)
        for (const auto& word : split_words(item)) CHECK_FALSE(lex.contains(word));
}

TEST_CASE("planted-selectivity units are recovered") {
    const RecordShape shape{2, 2, 128};  // 512 units
    const std::size_t n_stim = 240;
    std::size_t recovered_total = 0, planted_total = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        std::set<std::size_t> planted;
        while (planted.size() < 50)
            planted.insert(static_cast<std::size_t>(rng.below(shape.unit_count())));
        const auto [sent, nonw] = planted_scalars(rng, shape.unit_count(), n_stim, planted, 3.0);
        const UnitMask mask = localize_scalars(sent, nonw, shape, 50);
        for (const auto& e : mask.entries) {
            const std::size_t flat =
                (e.coord.layer * shape.taps + e.coord.tap) * shape.d_model + e.coord.channel;
            if (planted.contains(flat)) ++recovered_total;
        }
        planted_total += 50;
    }
    CHECK(static_cast<double>(recovered_total) >= 0.99 * static_cast<double>(planted_total));
}

TEST_CASE("localization rejects k beyond the unit count and tiny samples") {
    const RecordShape shape{1, 2, 8};
    Rng rng(4);
    const auto [sent, nonw] = planted_scalars(rng, shape.unit_count(), 6, {}, 0.0);
    CHECK_THROWS_AS(localize_scalars(sent, nonw, shape, shape.unit_count() + 1),
                    std::out_of_range);
    RealMatrix single(shape.unit_count(), 1, 0.0);
    CHECK_THROWS_AS(localize_scalars(single, single, shape, 2), std::invalid_argument);
}

TEST_CASE("k equal to the unit count selects a permutation of all units") {
    const RecordShape shape{1, 2, 16};
    Rng rng(3);
    const auto [sent, nonw] = planted_scalars(rng, shape.unit_count(), 10, {}, 0.0);
    const UnitMask mask = localize_scalars(sent, nonw, shape, shape.unit_count());
    std::set<std::size_t> seen;
    for (const auto& e : mask.entries)
        seen.insert((e.coord.layer * shape.taps + e.coord.tap) * shape.d_model + e.coord.channel);
    CHECK(seen.size() == shape.unit_count());
    // Descending t with deterministic tie-break.
    for (std::size_t i = 1; i < mask.entries.size(); ++i)
        CHECK(mask.entries[i - 1].t_value >= mask.entries[i].t_value);
}

TEST_CASE("mask at k is a prefix of the mask at larger k") {
    const RecordShape shape{2, 2, 32};
    Rng rng(9);
    const auto [sent, nonw] = planted_scalars(rng, shape.unit_count(), 20, {}, 0.0);
    const UnitMask small = localize_scalars(sent, nonw, shape, 10);
    const UnitMask large = localize_scalars(sent, nonw, shape, 40);
    for (std::size_t i = 0; i < small.entries.size(); ++i) {
        CHECK(small.entries[i].coord == large.entries[i].coord);
    }
    const UnitMask sliced = large.prefix(10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(sliced.entries[i].coord == small.entries[i].coord);
}

TEST_CASE("localization ignores stimulus presentation order") {
    const Vocab vocab = trained_vocab();
    EncoderConfig cfg = EncoderConfig::suma(16, 2, vocab.size(), 77);
    const EncoderWeights weights = init_weights(cfg);
    LocalizerStimuli stimuli = generate_localizer_stimuli(11, 8, 5, vocab);
    const UnitMask base = localize(weights, vocab, stimuli, 12);

    LocalizerStimuli reordered = stimuli;
    std::reverse(reordered.sentences.begin(), reordered.sentences.end());
    std::reverse(reordered.nonwords.begin(), reordered.nonwords.end());
    const UnitMask shuffled = localize(weights, vocab, reordered, 12);
    for (std::size_t i = 0; i < base.entries.size(); ++i) {
        CHECK(base.entries[i].coord == shuffled.entries[i].coord);
        CHECK(base.entries[i].t_value == doctest::Approx(shuffled.entries[i].t_value));
    }
}

TEST_CASE("null activations rank far below planted ones") {
    const RecordShape shape{1, 2, 64};
    double planted_median_sum = 0.0, null_median_sum = 0.0;
    for (std::uint64_t seed = 11; seed < 16; ++seed) {
        Rng rng(seed);
        std::set<std::size_t> planted;
        while (planted.size() < 16)
            planted.insert(static_cast<std::size_t>(rng.below(shape.unit_count())));
        const auto [sent_p, nonw_p] = planted_scalars(rng, shape.unit_count(), 60, planted, 3.0);
        const UnitMask mask_p = localize_scalars(sent_p, nonw_p, shape, 16);
        planted_median_sum += mask_p.entries[mask_p.entries.size() / 2].t_value;

        const auto [sent_0, nonw_0] = planted_scalars(rng, shape.unit_count(), 60, {}, 0.0);
        const UnitMask mask_0 = localize_scalars(sent_0, nonw_0, shape, 16);
        null_median_sum += mask_0.entries[mask_0.entries.size() / 2].t_value;
    }
    CHECK(planted_median_sum >= 2.0 * null_median_sum);
}

TEST_CASE("extract returns masked aggregated activations in order") {
    ActivationRecord record;
    record.layers = 1;
    record.taps = 2;
    record.positions = 2;
    record.d_model = 3;
    record.data.resize(record.layers * record.taps * record.positions * record.d_model);
    for (std::size_t i = 0; i < record.data.size(); ++i)
        record.data[i] = static_cast<double>(i);

    UnitMask one;
    one.entries.push_back({{0, 1, 2}, 0.0});
    const auto single = extract(record, one, Aggregation::Mean);
    REQUIRE(single.size() == 1);
    // tap 1, channel 2: positions hold 8 and 11 -> mean 9.5
    CHECK(single[0] == doctest::Approx(9.5));

    UnitMask two;
    two.entries.push_back({{0, 0, 0}, 0.0});
    two.entries.push_back({{0, 1, 1}, 0.0});
    const auto pair = extract(record, two, Aggregation::LastToken);
    REQUIRE(pair.size() == 2);
    CHECK(pair[0] == 3.0);   // tap 0, last position, channel 0
    CHECK(pair[1] == 10.0);  // tap 1, last position, channel 1

    // Disjoint masks concatenate to the union's extraction.
    UnitMask united;
    united.entries = {one.entries[0], two.entries[0], two.entries[1]};
    const auto all = extract(record, united, Aggregation::LastToken);
    const auto first = extract(record, one, Aggregation::LastToken);
    CHECK(all[0] == first[0]);
    CHECK(all[1] == pair[0]);
    CHECK(all[2] == pair[1]);

    UnitMask bad;
    bad.entries.push_back({{5, 0, 0}, 0.0});
    CHECK_THROWS_AS(extract(record, bad, Aggregation::Mean), std::out_of_range);
}

TEST_CASE("random masks are seeded, bounded, and overlap as expected") {
    const RecordShape shape{2, 2, 256};  // N = 1024
    const UnitMask a = random_mask(21, 64, shape);
    const UnitMask b = random_mask(21, 64, shape);
    REQUIRE(a.entries.size() == 64);
    for (std::size_t i = 0; i < a.entries.size(); ++i)
        CHECK(a.entries[i].coord == b.entries[i].coord);

    CHECK_THROWS_AS(random_mask(1, shape.unit_count() + 1, shape), std::out_of_range);
    const UnitMask full = random_mask(4, shape.unit_count(), shape);
    std::set<std::size_t> seen;
    for (const auto& e : full.entries)
        seen.insert((e.coord.layer * shape.taps + e.coord.tap) * shape.d_model + e.coord.channel);
    CHECK(seen.size() == shape.unit_count());

    // Overlap of two independent k-of-N draws concentrates near k^2 / N = 4.
    double overlap_sum = 0.0;
    const int draws = 20;
    for (int i = 0; i < draws; ++i) {
        const UnitMask x = random_mask(100 + i, 64, shape);
        const UnitMask y = random_mask(900 + i, 64, shape);
        std::set<UnitCoord> coords;
        for (const auto& e : x.entries) coords.insert(e.coord);
        for (const auto& e : y.entries) overlap_sum += coords.contains(e.coord) ? 1.0 : 0.0;
    }
    const double mean_overlap = overlap_sum / draws;
    CHECK(mean_overlap >= 2.0);
    CHECK(mean_overlap <= 6.0);
}

TEST_CASE("mask csv round-trips with header metadata") {
    const RecordShape shape{2, 2, 8};
    UnitMask mask = random_mask(31, 5, shape);
    mask.seed = 31;
    mask.config_hash = 0xDEADBEEFull;
    const auto path = std::filesystem::temp_directory_path() / "suma_mask_test.csv";
    mask.save_csv(path);
    const UnitMask loaded = UnitMask::load_csv(path);
    REQUIRE(loaded.entries.size() == mask.entries.size());
    for (std::size_t i = 0; i < mask.entries.size(); ++i)
        CHECK(loaded.entries[i].coord == mask.entries[i].coord);
    CHECK(loaded.seed == 31);
    CHECK(loaded.config_hash == 0xDEADBEEFull);
    std::filesystem::remove(path);
}

TEST_CASE("localize_cached memoizes by content") {
    const Vocab vocab = trained_vocab();
    EncoderConfig cfg = EncoderConfig::suma(16, 2, vocab.size(), 123);
    const EncoderWeights weights = init_weights(cfg);
    const LocalizerStimuli stimuli = generate_localizer_stimuli(3, 6, 5, vocab);
    const UnitMask& first = localize_cached(weights, vocab, stimuli, 8);
    const UnitMask& second = localize_cached(weights, vocab, stimuli, 8);
    CHECK(&first == &second);  // same cached instance
    const UnitMask fresh = localize(weights, vocab, stimuli, 8);
    for (std::size_t i = 0; i < fresh.entries.size(); ++i)
        CHECK(first.entries[i].coord == fresh.entries[i].coord);
}
