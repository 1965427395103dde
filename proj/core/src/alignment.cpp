#include "suma/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "suma/io.hpp"
#include "suma/ridge.hpp"
#include "suma/rng.hpp"
#include "suma/similarity.hpp"
#include "suma/stats.hpp"

namespace suma {

namespace {

constexpr std::uint64_t kControlStream = 301;
constexpr std::uint64_t kSplithalfStream = 302;

std::vector<std::pair<std::size_t, std::size_t>> fold_bounds(std::size_t n, std::size_t folds) {
    std::vector<std::pair<std::size_t, std::size_t>> bounds;
    for (std::size_t f = 0; f < folds; ++f)
        bounds.emplace_back(f * n / folds, (f + 1) * n / folds);
    return bounds;
}

RealMatrix take_rows(const RealMatrix& m, std::span<const std::size_t> rows) {
    RealMatrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = m.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

RealMatrix take_cols(const RealMatrix& m, std::span<const std::size_t> cols) {
    RealMatrix out(m.rows(), cols.size());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(i, cols[j]);
    return out;
}

bool zero_variance(std::span<const double> xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    for (double x : xs)
        if (x != mean) return false;
    return true;
}

std::vector<double> matrix_col(const RealMatrix& m, std::size_t col) {
    std::vector<double> out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) out[i] = m(i, col);
    return out;
}

/// Mean Pearson over channels of predicting `responses` from `features` on
/// the given train/test split at one penalty. Returns the score and how many
/// channels were skipped as degenerate.
std::pair<double, std::size_t> scored_split(const RealMatrix& train_x, const RealMatrix& train_y,
                                            const RealMatrix& test_x, const RealMatrix& test_y,
                                            double lambda) {
    const RidgeFit fit = ridge_fit(train_x, train_y, lambda);
    const RealMatrix predicted = fit.predict(test_x);
    double sum = 0.0;
    std::size_t kept = 0, skipped = 0;
    for (std::size_t c = 0; c < test_y.cols(); ++c) {
        const std::vector<double> actual = matrix_col(test_y, c);
        const std::vector<double> guess = matrix_col(predicted, c);
        if (test_y.rows() < 3 || zero_variance(actual) || zero_variance(guess)) {
            ++skipped;
            continue;
        }
        sum += pearson_r(guess, actual);
        ++kept;
    }
    return {kept ? sum / static_cast<double>(kept) : 0.0, skipped};
}

}  // namespace

std::string metric_name(Metric m) {
    switch (m) {
        case Metric::Linear: return "linear";
        case Metric::Cka: return "cka";
        case Metric::Rdm: return "rdm";
    }
    return "?";
}

std::string control_name(Control c) {
    switch (c) {
        case Control::Original: return "original";
        case Control::Shuffled: return "shuffled";
        case Control::RandomSameLength: return "random_same_length";
    }
    return "?";
}

Metric metric_from_name(std::string_view name) {
    if (name == "linear") return Metric::Linear;
    if (name == "cka") return Metric::Cka;
    if (name == "rdm") return Metric::Rdm;
    throw std::invalid_argument("unknown metric: " + std::string(name));
}

Control control_from_name(std::string_view name) {
    if (name == "original") return Control::Original;
    if (name == "shuffled") return Control::Shuffled;
    if (name == "random_same_length" || name == "random") return Control::RandomSameLength;
    throw std::invalid_argument("unknown control: " + std::string(name));
}

std::size_t LinearPredictivityResult::skipped_channels_total() const {
    std::size_t total = 0;
    for (const auto& f : per_fold) total += f.skipped_channels;
    return total;
}

LinearPredictivityResult linear_predictivity(const RealMatrix& features,
                                             const RealMatrix& responses,
                                             const LinearCvOptions& options) {
    const std::size_t n = features.rows();
    if (responses.rows() != n)
        throw std::invalid_argument("linear_predictivity: stimulus counts differ");
    if (features.cols() == 0) throw std::invalid_argument("linear_predictivity: k must be >= 1");
    if (n < options.folds)
        throw std::invalid_argument("linear_predictivity: fewer stimuli than folds");
    if (options.folds < 2) throw std::invalid_argument("linear_predictivity: needs >= 2 folds");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (options.shuffle_folds) {
        Rng rng(options.fold_seed);
        rng.shuffle(order);
    }

    LinearPredictivityResult result;
    const auto outer = fold_bounds(n, options.folds);
    for (const auto& [test_begin, test_end] : outer) {
        std::vector<std::size_t> train_rows, test_rows;
        for (std::size_t i = 0; i < n; ++i) {
            if (i >= test_begin && i < test_end)
                test_rows.push_back(order[i]);
            else
                train_rows.push_back(order[i]);
        }
        const RealMatrix train_x = take_rows(features, train_rows);
        const RealMatrix train_y = take_rows(responses, train_rows);

        // Inner search over the penalty grid; first grid point wins ties.
        double best_lambda = options.lambda_grid.front();
        double best_score = -2.0;
        const auto inner = fold_bounds(train_rows.size(), options.inner_folds);
        for (double lambda : options.lambda_grid) {
            double score_sum = 0.0;
            std::size_t score_count = 0;
            for (const auto& [val_begin, val_end] : inner) {
                if (val_end - val_begin == 0) continue;
                std::vector<std::size_t> fit_rows, val_rows;
                for (std::size_t i = 0; i < train_rows.size(); ++i) {
                    if (i >= val_begin && i < val_end)
                        val_rows.push_back(i);
                    else
                        fit_rows.push_back(i);
                }
                const auto [score, skipped] =
                    scored_split(take_rows(train_x, fit_rows), take_rows(train_y, fit_rows),
                                 take_rows(train_x, val_rows), take_rows(train_y, val_rows), lambda);
                (void)skipped;
                score_sum += score;
                ++score_count;
            }
            const double mean_score =
                score_count ? score_sum / static_cast<double>(score_count) : -2.0;
            if (mean_score > best_score) {
                best_score = mean_score;
                best_lambda = lambda;
            }
        }

        const auto [fold_score, skipped] =
            scored_split(train_x, train_y, take_rows(features, test_rows),
                         take_rows(responses, test_rows), best_lambda);
        result.per_fold.push_back({fold_score, best_lambda, skipped});
    }

    double sum = 0.0;
    for (const auto& f : result.per_fold) sum += f.score;
    result.raw = sum / static_cast<double>(result.per_fold.size());
    return result;
}

double cka_benchmark(const RealMatrix& features, const RealMatrix& responses) {
    return linear_cka(features, responses);
}

double rdm_benchmark(const RealMatrix& features, const RealMatrix& responses) {
    return rdm_similarity(features, responses);
}

double consistency_linear(const StimulusResponseDataset& dataset,
                          const LinearCvOptions& options) {
    dataset.validate();
    const auto by_subject = dataset.channels_by_subject();
    if (by_subject.size() < 2)
        throw std::invalid_argument("consistency_linear: needs >= 2 subjects");

    double sum = 0.0;
    for (std::size_t target = 0; target < by_subject.size(); ++target) {
        std::vector<std::size_t> predictor_cols;
        for (std::size_t other = 0; other < by_subject.size(); ++other) {
            if (other == target) continue;
            predictor_cols.insert(predictor_cols.end(), by_subject[other].begin(),
                                  by_subject[other].end());
        }
        const RealMatrix x = take_cols(dataset.responses, predictor_cols);
        const RealMatrix y = take_cols(dataset.responses, by_subject[target]);
        sum += linear_predictivity(x, y, options).raw;
    }
    return sum / static_cast<double>(by_subject.size());
}

double consistency_splithalf(const StimulusResponseDataset& dataset, Metric metric,
                             std::uint64_t seed) {
    dataset.validate();
    if (metric == Metric::Linear)
        throw std::invalid_argument("consistency_splithalf: use consistency_linear for linear");
    const auto by_subject = dataset.channels_by_subject();
    const std::size_t n_subj = by_subject.size();
    if (n_subj < 2) throw std::invalid_argument("consistency_splithalf: needs >= 2 subjects");

    const auto half_score = [&](const std::vector<std::size_t>& in_a) {
        std::vector<std::size_t> cols_a, cols_b;
        std::vector<bool> is_a(n_subj, false);
        for (std::size_t s : in_a) is_a[s] = true;
        for (std::size_t s = 0; s < n_subj; ++s) {
            auto& cols = is_a[s] ? cols_a : cols_b;
            cols.insert(cols.end(), by_subject[s].begin(), by_subject[s].end());
        }
        const RealMatrix a = take_cols(dataset.responses, cols_a);
        const RealMatrix b = take_cols(dataset.responses, cols_b);
        return metric == Metric::Cka ? linear_cka(a, b) : rdm_similarity(a, b);
    };

    const auto next_combination = [](std::vector<std::size_t>& idx, std::size_t m) {
        const std::size_t k = idx.size();
        std::size_t i = k;
        while (i > 0) {
            --i;
            if (idx[i] != i + m - k) {
                ++idx[i];
                for (std::size_t j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
                return true;
            }
        }
        return false;
    };

    const std::size_t half = n_subj / 2;
    double sum = 0.0;
    std::size_t count = 0;
    if (n_subj <= 12) {
        // Exhaustive balanced bipartitions. For even counts subject 0 is
        // pinned to side A so each unordered split appears once; for odd
        // counts choosing the smaller side already identifies the split.
        const bool even = n_subj % 2 == 0;
        std::vector<std::size_t> choose_from;
        for (std::size_t s = even ? 1 : 0; s < n_subj; ++s) choose_from.push_back(s);
        const std::size_t pick = even ? half - 1 : half;
        std::vector<std::size_t> idx(pick);
        std::iota(idx.begin(), idx.end(), 0);
        std::vector<std::size_t> members;
        do {
            members.clear();
            if (even) members.push_back(0);
            for (std::size_t i : idx) members.push_back(choose_from[i]);
            sum += half_score(members);
            ++count;
        } while (next_combination(idx, choose_from.size()));
    } else {
        Rng rng = Rng(seed).fork(kSplithalfStream);
        std::vector<std::size_t> subjects(n_subj);
        std::iota(subjects.begin(), subjects.end(), 0);
        for (int draw = 0; draw < 100; ++draw) {
            rng.shuffle(subjects);
            sum += half_score({subjects.begin(), subjects.begin() + static_cast<std::ptrdiff_t>(half)});
            ++count;
        }
    }
    return sum / static_cast<double>(count);
}

double normalize_score(double raw, double consistency) {
    if (!(consistency > 0.0))
        throw std::invalid_argument("normalize_score: consistency must be > 0");
    return std::max(0.0, raw) / consistency;
}

std::vector<TokenId> apply_control(std::vector<TokenId> ids, Control control, Rng& rng,
                                   std::uint64_t id_space) {
    switch (control) {
        case Control::Original: break;
        case Control::Shuffled: rng.shuffle(ids); break;
        case Control::RandomSameLength:
            if (id_space == 0) throw std::invalid_argument("apply_control: empty id space");
            for (TokenId& id : ids) id = static_cast<TokenId>(rng.below(id_space));
            break;
    }
    return ids;
}

BaselineFeatures baseline_features(const StimulusResponseDataset& dataset,
                                   const Tokenizer& tokenizer) {
    BaselineFeatures out;
    out.features = RealMatrix(dataset.stimuli.size(), 2);
    for (std::size_t i = 0; i < dataset.stimuli.size(); ++i) {
        out.features(i, 0) =
            static_cast<double>(tokenizer.encode(dataset.stimuli[i].text).ids.size());
        out.features(i, 1) = static_cast<double>(dataset.stimuli[i].position);
    }
    out.length_constant = zero_variance(matrix_col(out.features, 0));
    out.position_constant = zero_variance(matrix_col(out.features, 1));
    return out;
}

RealMatrix model_features(const EncoderWeights& weights, const Tokenizer& tokenizer,
                          const StimulusResponseDataset& dataset, const UnitMask& mask,
                          Control control, std::uint64_t control_seed) {
    dataset.validate();
    const Rng control_root = Rng(control_seed).fork(kControlStream);
    RealMatrix features(dataset.stimuli.size(), mask.k());

    for (std::size_t i = 0; i < dataset.stimuli.size(); ++i) {
        const Stimulus& stim = dataset.stimuli[i];
        // Preceding stimuli of the same group, most recent context_window.
        std::vector<std::string> context;
        const std::size_t available = stim.position;
        const std::size_t use = std::min(dataset.context_window, available);
        for (std::size_t back = use; back >= 1; --back)
            context.push_back(dataset.stimuli[i - back].text);

        std::string prefix;
        for (const auto& c : context) prefix += c + ' ';
        const std::size_t prefix_tokens = prefix.empty()
                                              ? 0
                                              : tokenizer.encode(prefix).ids.size();
        std::vector<TokenId> ids = tokenizer.encode(prefix + stim.text).ids;
        if (ids.size() <= prefix_tokens)
            throw std::invalid_argument("model_features: stimulus tokenized to nothing: " +
                                        stim.text);
        Rng rng = control_root.fork(i);
        ids = apply_control(std::move(ids), control, rng, tokenizer.id_space());

        const ActivationRecord record = forward(weights, ids);
        const std::vector<double> row = extract_span(
            record, mask, weights.config.aggregation, prefix_tokens, ids.size());
        std::copy(row.begin(), row.end(), features.row(i).begin());
    }
    return features;
}

BenchmarkResult run_benchmark(const EncoderWeights& weights, const Tokenizer& tokenizer,
                              const UnitMask& mask, const StimulusResponseDataset& dataset,
                              const BenchmarkOptions& options) {
    const auto stage = [](const char* name, auto&& fn) {
        try {
            return fn();
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("benchmark stage '") + name + "': " + e.what());
        }
    };

    BenchmarkResult result;
    result.dataset_name = dataset.name;
    result.metric = options.metric;
    result.control = options.control;

    const RealMatrix features = stage("features", [&] {
        return model_features(weights, tokenizer, dataset, mask, options.control,
                              options.control_seed);
    });

    if (options.metric == Metric::Linear) {
        const LinearPredictivityResult lp = stage("metric", [&] {
            return linear_predictivity(features, dataset.responses, options.cv);
        });
        result.raw = lp.raw;
        result.per_fold = lp.per_fold;
        result.skipped_channels = lp.skipped_channels_total();
        result.lambda_grid = options.cv.lambda_grid;
        result.consistency =
            stage("consistency", [&] { return consistency_linear(dataset, options.cv); });
    } else if (options.metric == Metric::Cka) {
        result.raw = stage("metric", [&] { return cka_benchmark(features, dataset.responses); });
        result.consistency = stage("consistency", [&] {
            return consistency_splithalf(dataset, Metric::Cka, options.consistency_seed);
        });
    } else {
        result.raw = stage("metric", [&] { return rdm_benchmark(features, dataset.responses); });
        result.consistency = stage("consistency", [&] {
            return consistency_splithalf(dataset, Metric::Rdm, options.consistency_seed);
        });
    }
    result.normalized =
        stage("normalize", [&] { return normalize_score(result.raw, result.consistency); });
    return result;
}

double aggregate_normalized(std::span<const BenchmarkResult> results) {
    if (results.empty()) throw std::invalid_argument("aggregate_normalized: no results");
    double sum = 0.0;
    for (const auto& r : results) sum += r.normalized;
    return sum / static_cast<double>(results.size());
}

std::string benchmark_result_json(const BenchmarkResult& result) {
    nlohmann::json j{{"dataset", result.dataset_name},
                     {"metric", metric_name(result.metric)},
                     {"control", control_name(result.control)},
                     {"raw", result.raw},
                     {"consistency", result.consistency},
                     {"normalized", result.normalized},
                     {"skipped_channels", result.skipped_channels}};
    if (!result.per_fold.empty()) {
        nlohmann::json folds = nlohmann::json::array();
        for (const auto& f : result.per_fold)
            folds.push_back({{"score", f.score},
                             {"lambda", f.lambda},
                             {"skipped_channels", f.skipped_channels}});
        j["per_fold"] = folds;
        j["lambda_grid"] = result.lambda_grid;
    }
    return j.dump(2) + "\n";
}

std::string benchmark_result_csv_header() {
    return "dataset,metric,control,raw,consistency,normalized,skipped_channels\n";
}

std::string benchmark_result_csv_row(const BenchmarkResult& result) {
    return csv_escape(result.dataset_name) + ',' + metric_name(result.metric) + ',' +
           control_name(result.control) + ',' + format_double(result.raw) + ',' +
           format_double(result.consistency) + ',' + format_double(result.normalized) + ',' +
           std::to_string(result.skipped_channels) + '\n';
}

}  // namespace suma
