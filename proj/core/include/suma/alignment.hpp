#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "suma/dataset.hpp"
#include "suma/encoder.hpp"
#include "suma/localizer.hpp"
#include "suma/matrix.hpp"
#include "suma/rng.hpp"

namespace suma {

enum class Metric { Linear, Cka, Rdm };
enum class Control { Original, Shuffled, RandomSameLength };

std::string metric_name(Metric m);
std::string control_name(Control c);
Metric metric_from_name(std::string_view name);
Control control_from_name(std::string_view name);

struct LinearCvOptions {
    std::size_t folds = 10;
    std::size_t inner_folds = 5;
    /// Penalty grid searched by the inner cross-validation; recorded in every
    /// result for auditability.
    std::vector<double> lambda_grid = {1e-3, 1e-2, 1e-1, 1e0, 1e1, 1e2, 1e3, 1e4, 1e5};
    bool shuffle_folds = false;  // contiguous blocks by default
    std::uint64_t fold_seed = 0;
};

struct FoldScore {
    double score = 0.0;
    double lambda = 0.0;
    std::size_t skipped_channels = 0;
};

struct LinearPredictivityResult {
    double raw = 0.0;
    std::vector<FoldScore> per_fold;
    std::size_t skipped_channels_total() const;
};

/// Cross-validated ridge encoding score: contiguous-block folds, penalty
/// chosen per fold by an inner search, Pearson per channel on the held-out
/// block (zero-variance channels skipped and counted), channels pooled within
/// fold, folds averaged last.
LinearPredictivityResult linear_predictivity(const RealMatrix& features,
                                             const RealMatrix& responses,
                                             const LinearCvOptions& options = {});

double cka_benchmark(const RealMatrix& features, const RealMatrix& responses);
double rdm_benchmark(const RealMatrix& features, const RealMatrix& responses);

/// Mean over subjects of predicting each subject's channels from the pooled
/// channels of all remaining subjects.
double consistency_linear(const StimulusResponseDataset& dataset,
                          const LinearCvOptions& options = {});

/// Average metric score between channel-pooled halves over balanced subject
/// bipartitions: exhaustive up to 12 subjects, otherwise 100 seeded draws.
double consistency_splithalf(const StimulusResponseDataset& dataset, Metric metric,
                             std::uint64_t seed = 0);

/// max(0, raw) / consistency; consistency must be positive.
double normalize_score(double raw, double consistency);

/// Token-level control conditions. Shuffled permutes the stimulus context's
/// ids; RandomSameLength redraws every id uniformly from the id space.
std::vector<TokenId> apply_control(std::vector<TokenId> ids, Control control, Rng& rng,
                                   std::uint64_t id_space);

struct BaselineFeatures {
    RealMatrix features;  // stimuli x 2: token count, position-in-group
    bool length_constant = false;
    bool position_constant = false;
};

BaselineFeatures baseline_features(const StimulusResponseDataset& dataset,
                                   const Tokenizer& tokenizer);

/// Masked encoder features for every stimulus, its declared context window
/// prepended and the aggregation restricted to the stimulus's own tokens.
RealMatrix model_features(const EncoderWeights& weights, const Tokenizer& tokenizer,
                          const StimulusResponseDataset& dataset, const UnitMask& mask,
                          Control control = Control::Original, std::uint64_t control_seed = 0);

struct BenchmarkOptions {
    Metric metric = Metric::Linear;
    Control control = Control::Original;
    std::uint64_t control_seed = 0;
    std::uint64_t consistency_seed = 0;
    LinearCvOptions cv;
};

struct BenchmarkResult {
    std::string dataset_name;
    Metric metric = Metric::Linear;
    Control control = Control::Original;
    double raw = 0.0;
    double consistency = 0.0;
    double normalized = 0.0;
    std::vector<FoldScore> per_fold;  // empty for non-parametric metrics
    std::vector<double> lambda_grid;
    std::size_t skipped_channels = 0;
};

BenchmarkResult run_benchmark(const EncoderWeights& weights, const Tokenizer& tokenizer,
                              const UnitMask& mask, const StimulusResponseDataset& dataset,
                              const BenchmarkOptions& options);

double aggregate_normalized(std::span<const BenchmarkResult> results);

std::string benchmark_result_json(const BenchmarkResult& result);
std::string benchmark_result_csv_header();
std::string benchmark_result_csv_row(const BenchmarkResult& result);

}  // namespace suma
