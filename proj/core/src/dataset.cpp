#include "suma/dataset.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "suma/io.hpp"

namespace suma {

void StimulusResponseDataset::validate() const {
    if (stimuli.empty()) throw std::invalid_argument("dataset: no stimuli");
    if (responses.rows() != stimuli.size())
        throw std::invalid_argument("dataset: response rows do not align with stimuli");
    if (channel_subject.size() != responses.cols())
        throw std::invalid_argument("dataset: channel/subject map size mismatch");
    // Groups must be contiguous runs with positions counting from 0.
    std::set<std::size_t> seen_groups;
    for (std::size_t i = 0; i < stimuli.size(); ++i) {
        const bool new_group = i == 0 || stimuli[i].group != stimuli[i - 1].group;
        if (new_group) {
            if (!seen_groups.insert(stimuli[i].group).second)
                throw std::invalid_argument("dataset: group ids are not contiguous");
            if (stimuli[i].position != 0)
                throw std::invalid_argument("dataset: group does not start at position 0");
        } else if (stimuli[i].position != stimuli[i - 1].position + 1) {
            throw std::invalid_argument("dataset: positions within a group must increment");
        }
    }
}

std::size_t StimulusResponseDataset::n_subjects() const {
    return std::set<std::size_t>(channel_subject.begin(), channel_subject.end()).size();
}

std::vector<std::vector<std::size_t>> StimulusResponseDataset::channels_by_subject() const {
    const std::set<std::size_t> ids(channel_subject.begin(), channel_subject.end());
    std::vector<std::vector<std::size_t>> by_subject;
    for (std::size_t subject : ids) {
        std::vector<std::size_t> channels;
        for (std::size_t c = 0; c < channel_subject.size(); ++c)
            if (channel_subject[c] == subject) channels.push_back(c);
        by_subject.push_back(std::move(channels));
    }
    return by_subject;
}

void save_dataset(const StimulusResponseDataset& dataset, const std::filesystem::path& dir,
                  bool binary_responses) {
    dataset.validate();
    std::filesystem::create_directories(dir);

    std::string stimuli_csv = "text,group,position\n";
    for (const auto& s : dataset.stimuli) {
        stimuli_csv += csv_escape(s.text) + ',' + std::to_string(s.group) + ',' +
                       std::to_string(s.position) + '\n';
    }
    write_text_file(dir / "stimuli.csv", stimuli_csv);

    std::string channels_csv = "channel,subject\n";
    for (std::size_t c = 0; c < dataset.channel_subject.size(); ++c)
        channels_csv += std::to_string(c) + ',' + std::to_string(dataset.channel_subject[c]) + '\n';
    write_text_file(dir / "channels.csv", channels_csv);

    nlohmann::json manifest{{"format_version", 1},
                            {"name", dataset.name},
                            {"context_window", dataset.context_window},
                            {"stimuli", "stimuli.csv"},
                            {"channel_subject", "channels.csv"}};
    if (binary_responses) {
        write_doubles_binary(dir / "responses.bin", dataset.responses.flat());
        nlohmann::json shape{{"rows", dataset.responses.rows()},
                             {"cols", dataset.responses.cols()},
                             {"dtype", "float64"}};
        write_text_file(dir / "responses.shape.json", shape.dump(2) + "\n");
        manifest["responses"] = "responses.bin";
        manifest["responses_shape"] = "responses.shape.json";
    } else {
        std::string csv;
        for (std::size_t i = 0; i < dataset.responses.rows(); ++i) {
            for (std::size_t j = 0; j < dataset.responses.cols(); ++j) {
                if (j) csv += ',';
                csv += format_double(dataset.responses(i, j));
            }
            csv += '\n';
        }
        write_text_file(dir / "responses.csv", csv);
        manifest["responses"] = "responses.csv";
    }
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

StimulusResponseDataset load_dataset(const std::filesystem::path& manifest_path) {
    const auto manifest = nlohmann::json::parse(read_text_file(manifest_path));
    const std::filesystem::path dir = manifest_path.parent_path();

    StimulusResponseDataset dataset;
    dataset.name = manifest.at("name").get<std::string>();
    dataset.context_window = manifest.at("context_window").get<std::size_t>();

    const auto stimuli_rows = read_csv(dir / manifest.at("stimuli").get<std::string>());
    for (std::size_t i = 1; i < stimuli_rows.size(); ++i) {  // skip header
        const auto& row = stimuli_rows[i];
        if (row.size() != 3) throw std::runtime_error("stimuli.csv: bad row");
        dataset.stimuli.push_back({row[0], std::stoull(row[1]), std::stoull(row[2])});
    }

    const std::string responses_file = manifest.at("responses").get<std::string>();
    if (responses_file.ends_with(".bin")) {
        const auto shape = nlohmann::json::parse(
            read_text_file(dir / manifest.at("responses_shape").get<std::string>()));
        const std::size_t rows = shape.at("rows").get<std::size_t>();
        const std::size_t cols = shape.at("cols").get<std::size_t>();
        const std::vector<double> values = read_doubles_binary(dir / responses_file);
        if (values.size() != rows * cols)
            throw std::runtime_error("responses.bin size does not match shape sidecar");
        dataset.responses = RealMatrix(rows, cols);
        std::copy(values.begin(), values.end(), dataset.responses.flat().begin());
    } else {
        const auto rows = read_csv(dir / responses_file);
        if (rows.empty()) throw std::runtime_error("responses.csv: empty");
        dataset.responses = RealMatrix(rows.size(), rows[0].size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != dataset.responses.cols())
                throw std::runtime_error("responses.csv: ragged rows");
            for (std::size_t j = 0; j < rows[i].size(); ++j)
                dataset.responses(i, j) = std::stod(rows[i][j]);
        }
    }

    const auto channel_rows = read_csv(dir / manifest.at("channel_subject").get<std::string>());
    dataset.channel_subject.resize(channel_rows.size() - 1);
    for (std::size_t i = 1; i < channel_rows.size(); ++i) {
        const auto& row = channel_rows[i];
        if (row.size() != 2) throw std::runtime_error("channels.csv: bad row");
        dataset.channel_subject.at(std::stoull(row[0])) = std::stoull(row[1]);
    }

    dataset.validate();
    return dataset;
}

}  // namespace suma
