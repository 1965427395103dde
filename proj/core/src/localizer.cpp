#include "suma/localizer.hpp"

#include <algorithm>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "suma/grammar.hpp"
#include "suma/io.hpp"
#include "suma/rng.hpp"
#include "suma/stats.hpp"

namespace suma {

namespace {
constexpr std::uint64_t kStimuliSentenceStream = 101;
constexpr std::uint64_t kStimuliNonwordStream = 102;
}  // namespace

RecordShape record_shape(const EncoderConfig& config) {
    // Adaptive depth grows with the token count, so the fixed unit space that
    // masks index into is the first pass, which every stimulus has.
    const std::size_t layers = config.adaptive_depth ? 1 : config.unroll_depth;
    return {layers, config.taps_per_layer(), config.d_model};
}

LocalizerStimuli generate_localizer_stimuli(std::uint64_t seed, std::size_t n_items,
                                            std::size_t length_words,
                                            const Tokenizer& tokenizer) {
    if (n_items < 2) throw std::invalid_argument("generate_localizer_stimuli: needs >= 2 items");
    if (length_words < 3)
        throw std::invalid_argument("generate_localizer_stimuli: needs length >= 3 words");

    LocalizerStimuli stimuli;
    stimuli.seed = seed;
    stimuli.length_words = length_words;
    Rng sentence_rng = Rng(seed).fork(kStimuliSentenceStream);
    Rng nonword_rng = Rng(seed).fork(kStimuliNonwordStream);

    for (std::size_t i = 0; i < n_items; ++i) {
        const std::string sentence =
            make_sentence(sentence_rng, localizer_lexicon(), length_words);
        const std::size_t target = tokenizer.encode(sentence).ids.size();

        // Grow a pseudo-word string until its token count lands within +-1 of
        // the sentence's; overshoots drop the offending word and redraw.
        std::vector<std::string> words;
        std::size_t count = 0;
        bool matched = false;
        for (int attempt = 0; attempt < 500; ++attempt) {
            count = tokenizer.encode(join_words(words)).ids.size();
            if (!words.empty() && count + 1 >= target && count <= target + 1) {
                matched = true;
                break;
            }
            if (count + 1 < target || words.empty()) {
                const std::size_t gap = target > count ? target - count : 1;
                words.push_back(make_nonword(nonword_rng, std::clamp<std::size_t>(gap / 2, 1, 3)));
            } else {
                words.pop_back();
                words.push_back(make_nonword(nonword_rng, 1));
            }
        }
        if (!matched)
            throw std::runtime_error("generate_localizer_stimuli: token-length matching failed");
        stimuli.sentences.push_back(sentence);
        stimuli.nonwords.push_back(join_words(words));
    }
    return stimuli;
}

RealMatrix unit_scalars(const EncoderWeights& weights, const Tokenizer& tokenizer,
                        std::span<const std::string> texts, Aggregation reduction) {
    const RecordShape shape = record_shape(weights.config);
    RealMatrix scalars(shape.unit_count(), texts.size());
    for (std::size_t s = 0; s < texts.size(); ++s) {
        const TokenSequence seq = tokenizer.encode(texts[s]);
        if (seq.ids.empty())
            throw std::invalid_argument("unit_scalars: stimulus tokenized to nothing: " +
                                        std::string(texts[s]));
        const ActivationRecord record = forward(weights, seq.ids);
        const RealMatrix per_tap = aggregate(record, reduction);
        // Adaptive records may run deeper than the fixed unit space; only the
        // shared first-pass rows participate.
        const std::size_t rows = shape.layers * shape.taps;
        std::size_t unit = 0;
        for (std::size_t row = 0; row < rows; ++row)
            for (std::size_t ch = 0; ch < per_tap.cols(); ++ch) scalars(unit++, s) = per_tap(row, ch);
    }
    return scalars;
}

UnitMask localize_scalars(const RealMatrix& sentence_scalars, const RealMatrix& nonword_scalars,
                          RecordShape shape, std::size_t k) {
    const std::size_t units = shape.unit_count();
    if (sentence_scalars.rows() != units || nonword_scalars.rows() != units)
        throw std::invalid_argument("localize_scalars: scalar row count != unit count");
    if (k > units) throw std::out_of_range("localize_scalars: k exceeds unit count");
    if (sentence_scalars.cols() < 2 || nonword_scalars.cols() < 2)
        throw std::invalid_argument("localize_scalars: need >= 2 stimuli per condition");

    std::vector<std::pair<double, std::size_t>> ranked(units);
    for (std::size_t u = 0; u < units; ++u) {
        const WelchResult w = welch_t(sentence_scalars.row(u), nonword_scalars.row(u));
        ranked[u] = {w.t, u};
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;  // (layer, tap, channel) order by construction
    });

    UnitMask mask;
    mask.entries.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t u = ranked[i].second;
        const std::size_t layer = u / (shape.taps * shape.d_model);
        const std::size_t tap = (u / shape.d_model) % shape.taps;
        const std::size_t channel = u % shape.d_model;
        mask.entries.push_back({{layer, tap, channel}, ranked[i].first});
    }
    return mask;
}

UnitMask localize(const EncoderWeights& weights, const Tokenizer& tokenizer,
                  const LocalizerStimuli& stimuli, std::size_t k, Aggregation reduction) {
    if (stimuli.sentences.size() < 2 || stimuli.nonwords.size() < 2)
        throw std::invalid_argument("localize: need >= 2 stimuli per condition");
    const RealMatrix sent = unit_scalars(weights, tokenizer, stimuli.sentences, reduction);
    const RealMatrix nonw = unit_scalars(weights, tokenizer, stimuli.nonwords, reduction);
    UnitMask mask = localize_scalars(sent, nonw, record_shape(weights.config), k);
    mask.seed = stimuli.seed;
    mask.config_hash = weights.config.content_hash();
    return mask;
}

const UnitMask& localize_cached(const EncoderWeights& weights, const Tokenizer& tokenizer,
                                const LocalizerStimuli& stimuli, std::size_t k,
                                Aggregation reduction) {
    static std::mutex mutex;
    static std::unordered_map<std::uint64_t, UnitMask> cache;

    std::string key_text;
    for (const auto& s : stimuli.sentences) key_text += s + '\n';
    for (const auto& s : stimuli.nonwords) key_text += s + '\n';
    std::uint64_t key = weights.config.content_hash();
    key = hash_mix(key, tokenizer.content_hash());
    key = hash_mix(key, fnv1a64(key_text));
    key = hash_mix(key, k);
    key = hash_mix(key, reduction == Aggregation::Mean ? 0 : 1);

    {
        std::lock_guard<std::mutex> lock(mutex);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    UnitMask mask = localize(weights, tokenizer, stimuli, k, reduction);
    std::lock_guard<std::mutex> lock(mutex);
    return cache.emplace(key, std::move(mask)).first->second;
}

std::vector<double> extract_span(const ActivationRecord& record, const UnitMask& mask,
                                 Aggregation mode, std::size_t begin, std::size_t end) {
    const RealMatrix per_tap = aggregate_span(record, mode, begin, end);
    std::vector<double> features;
    features.reserve(mask.entries.size());
    for (const auto& entry : mask.entries) {
        if (entry.coord.layer >= record.layers || entry.coord.tap >= record.taps ||
            entry.coord.channel >= record.d_model)
            throw std::out_of_range("extract: mask coordinate outside record shape");
        features.push_back(
            per_tap(entry.coord.layer * record.taps + entry.coord.tap, entry.coord.channel));
    }
    return features;
}

std::vector<double> extract(const ActivationRecord& record, const UnitMask& mask,
                            Aggregation mode) {
    return extract_span(record, mask, mode, 0, record.positions);
}

UnitMask random_mask(std::uint64_t seed, std::size_t k, RecordShape shape) {
    const std::size_t units = shape.unit_count();
    if (k > units) throw std::out_of_range("random_mask: k exceeds unit count");
    std::vector<std::size_t> order(units);
    for (std::size_t i = 0; i < units; ++i) order[i] = i;
    Rng rng(seed);
    // Partial Fisher-Yates: the first k slots are a uniform sample, and the
    // prefix property carries over to sweeps just like localized masks.
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(units - i));
        std::swap(order[i], order[j]);
    }
    UnitMask mask;
    mask.seed = seed;
    mask.entries.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t u = order[i];
        mask.entries.push_back({{u / (shape.taps * shape.d_model),
                                 (u / shape.d_model) % shape.taps, u % shape.d_model},
                                0.0});
    }
    return mask;
}

UnitMask UnitMask::prefix(std::size_t k) const {
    if (k > entries.size()) throw std::out_of_range("UnitMask::prefix: k exceeds mask size");
    UnitMask out;
    out.seed = seed;
    out.config_hash = config_hash;
    out.entries.assign(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(k));
    return out;
}

void UnitMask::save_csv(const std::filesystem::path& path) const {
    std::string out = "# k=" + std::to_string(entries.size()) + " seed=" + std::to_string(seed) +
                      " config_hash=" + std::to_string(config_hash) + "\n";
    out += "layer,tap,channel,t_value\n";
    for (const auto& e : entries) {
        out += std::to_string(e.coord.layer) + ',' + std::to_string(e.coord.tap) + ',' +
               std::to_string(e.coord.channel) + ',' + format_double(e.t_value) + '\n';
    }
    write_text_file(path, out);
}

UnitMask UnitMask::load_csv(const std::filesystem::path& path) {
    UnitMask mask;
    std::istringstream in(read_text_file(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream header(line.substr(1));
            std::string field;
            while (header >> field) {
                const auto eq = field.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = field.substr(0, eq);
                const std::string value = field.substr(eq + 1);
                if (key == "seed") mask.seed = std::stoull(value);
                if (key == "config_hash") mask.config_hash = std::stoull(value);
            }
            continue;
        }
        if (line.rfind("layer,", 0) == 0) continue;  // column header
        const auto fields = split_csv_line(line);
        if (fields.size() != 4) throw std::runtime_error("mask csv: bad row: " + line);
        UnitMask::Entry e;
        e.coord.layer = std::stoull(fields[0]);
        e.coord.tap = std::stoull(fields[1]);
        e.coord.channel = std::stoull(fields[2]);
        e.t_value = std::stod(fields[3]);
        mask.entries.push_back(e);
    }
    return mask;
}

}  // namespace suma
