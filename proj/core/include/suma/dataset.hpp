#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "suma/matrix.hpp"

namespace suma {

struct Stimulus {
    std::string text;
    std::size_t group = 0;     // passage / story id
    std::size_t position = 0;  // index within the group
};

/// Stimuli paired with a stimuli x channels response matrix, a channel ->
/// subject map, and the number of preceding in-group stimuli to prepend as
/// model context.
struct StimulusResponseDataset {
    std::string name;
    std::vector<Stimulus> stimuli;
    RealMatrix responses;
    std::vector<std::size_t> channel_subject;
    std::size_t context_window = 0;

    void validate() const;
    std::size_t n_subjects() const;
    std::vector<std::vector<std::size_t>> channels_by_subject() const;
};

/// Writes manifest.json, stimuli.csv, channels.csv and the responses (flat
/// binary with a shape sidecar, or CSV) into a directory.
void save_dataset(const StimulusResponseDataset& dataset, const std::filesystem::path& dir,
                  bool binary_responses = true);

StimulusResponseDataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace suma
