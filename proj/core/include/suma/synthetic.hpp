#pragma once

#include <cstdint>
#include <string>

#include "suma/alignment.hpp"
#include "suma/dataset.hpp"
#include "suma/encoder.hpp"
#include "suma/localizer.hpp"
#include "suma/tokenizer.hpp"

namespace suma {

/// Recipe for a synthetic stimulus-response dataset: template-grammar
/// stimuli, responses planted as a per-subject linear readout of a reference
/// encoder's localized features plus i.i.d. noise at the requested
/// signal-to-noise ratio.
struct SyntheticDatasetSpec {
    std::string name = "synthetic";
    std::uint64_t seed = 0;
    std::size_t n_stimuli = 120;
    std::size_t n_channels = 30;
    std::size_t n_subjects = 3;
    double snr = 1.0;  // signal sd over noise sd; <= 0 means noiseless
    std::size_t context_window = 0;
    std::size_t group_size = 6;
    std::size_t words_min = 5;
    std::size_t words_max = 10;
    EncoderConfig encoder;       // reference encoder for the planted readout
    std::size_t mask_k = 64;     // localized units used as the signal source
    std::size_t localizer_items = 24;
    std::size_t localizer_words = 6;
};

StimulusResponseDataset generate_synthetic_dataset(const SyntheticDatasetSpec& spec,
                                                   const Tokenizer& tokenizer);

}  // namespace suma
