#include "suma/synthetic.hpp"

#include <cmath>
#include <stdexcept>

#include "suma/grammar.hpp"
#include "suma/rng.hpp"

namespace suma {

namespace {
constexpr std::uint64_t kTextStream = 401;
constexpr std::uint64_t kReadoutStream = 402;
constexpr std::uint64_t kNoiseStream = 403;
constexpr std::uint64_t kLocalizerStream = 404;
}  // namespace

StimulusResponseDataset generate_synthetic_dataset(const SyntheticDatasetSpec& spec,
                                                   const Tokenizer& tokenizer) {
    if (spec.n_subjects < 2)
        throw std::invalid_argument("generate_synthetic_dataset: needs >= 2 subjects");
    if (spec.n_stimuli < 2 || spec.n_channels < spec.n_subjects)
        throw std::invalid_argument("generate_synthetic_dataset: degenerate sizes");
    if (spec.words_min < 3 || spec.words_max < spec.words_min)
        throw std::invalid_argument("generate_synthetic_dataset: bad word-length range");

    StimulusResponseDataset dataset;
    dataset.name = spec.name;
    dataset.context_window = spec.context_window;

    Rng text_rng = Rng(spec.seed).fork(kTextStream);
    for (std::size_t i = 0; i < spec.n_stimuli; ++i) {
        const std::size_t words =
            spec.words_min + static_cast<std::size_t>(
                                 text_rng.below(spec.words_max - spec.words_min + 1));
        Stimulus stim;
        stim.text = make_sentence(text_rng, full_lexicon(), words);
        stim.group = i / spec.group_size;
        stim.position = i % spec.group_size;
        dataset.stimuli.push_back(std::move(stim));
    }

    // Signal: localized features of the reference encoder over these stimuli.
    const EncoderWeights weights = init_weights(spec.encoder);
    const LocalizerStimuli loc_stimuli = generate_localizer_stimuli(
        Rng(spec.seed).fork(kLocalizerStream).seed(), spec.localizer_items, spec.localizer_words,
        tokenizer);
    const UnitMask mask = localize(weights, tokenizer, loc_stimuli, spec.mask_k);

    dataset.responses = RealMatrix(spec.n_stimuli, spec.n_channels);
    dataset.channel_subject.resize(spec.n_channels);
    const RealMatrix features = [&] {
        StimulusResponseDataset skeleton = dataset;  // responses unused by model_features
        return model_features(weights, tokenizer, skeleton, mask);
    }();

    Rng readout_rng = Rng(spec.seed).fork(kReadoutStream);
    Rng noise_rng = Rng(spec.seed).fork(kNoiseStream);
    const double noise_sd = spec.snr > 0.0 ? 1.0 / spec.snr : 0.0;

    for (std::size_t c = 0; c < spec.n_channels; ++c) {
        dataset.channel_subject[c] = c % spec.n_subjects;
        std::vector<double> readout(features.cols());
        for (double& w : readout) w = readout_rng.normal();

        std::vector<double> signal(spec.n_stimuli, 0.0);
        double mean = 0.0;
        for (std::size_t i = 0; i < spec.n_stimuli; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < features.cols(); ++j) acc += features(i, j) * readout[j];
            signal[i] = acc;
            mean += acc;
        }
        mean /= static_cast<double>(spec.n_stimuli);
        double var = 0.0;
        for (double s : signal) var += (s - mean) * (s - mean);
        var /= static_cast<double>(spec.n_stimuli);
        const double scale = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;

        for (std::size_t i = 0; i < spec.n_stimuli; ++i) {
            const double noise = noise_sd > 0.0 ? noise_rng.normal(0.0, noise_sd) : 0.0;
            dataset.responses(i, c) = (signal[i] - mean) * scale + noise;
        }
    }

    dataset.validate();
    return dataset;
}

}  // namespace suma
