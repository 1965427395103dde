#include "cli.hpp"

#include <CLI11.hpp>
#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "suma/alignment.hpp"
#include "suma/analyses.hpp"
#include "suma/dataset.hpp"
#include "suma/decoder.hpp"
#include "suma/encoder.hpp"
#include "suma/grammar.hpp"
#include "suma/io.hpp"
#include "suma/localizer.hpp"
#include "suma/synthetic.hpp"
#include "suma/tokenizer.hpp"

namespace suma::cli {

namespace {

namespace fs = std::filesystem;

constexpr const char* kArtifactVersion = "0.1.0";

/// Relative --out paths resolve under $SUMA_OUT_ROOT when it is set.
std::string resolve_out(const std::string& out) {
    if (out.empty()) return out;
    const fs::path path(out);
    if (path.is_absolute()) return out;
    const char* root = std::getenv("SUMA_OUT_ROOT");
    if (!root || !*root) return out;
    return (fs::path(root) / path).string();
}

struct TokenizerChoice {
    std::string vocab_path;
    bool word_based = false;

    std::unique_ptr<Tokenizer> build() const {
        if (word_based) return std::make_unique<WordTokenizer>();
        if (vocab_path.empty())
            throw std::runtime_error("a tokenizer is required: --tokenizer FILE or --word-tokenizer");
        return std::make_unique<Vocab>(Vocab::load(vocab_path));
    }

    void attach(CLI::App* cmd) {
        cmd->add_option("--tokenizer", vocab_path, "Trained BPE vocab file");
        cmd->add_flag("--word-tokenizer", word_based, "Use the hash-bucketed word tokenizer");
    }
};

struct EncoderChoice {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Encoder config (key = value file)");
        cmd->add_option_function<std::uint64_t>(
               "--seed",
               [this](std::uint64_t v) {
                   seed = v;
                   seed_set = true;
               },
               "Override the encoder seed")
            ->expected(1);
    }

    EncoderConfig build(const Tokenizer& tokenizer) const {
        EncoderConfig cfg;
        if (!config_path.empty()) {
            cfg = EncoderConfig::from_kv(read_kv_file(config_path));
        } else {
            cfg = EncoderConfig::suma(64, 8, /*vocab_size=*/1, /*seed=*/0);
        }
        if (seed_set) cfg.seed = seed;
        // The embedding space always follows the active tokenizer.
        if (tokenizer.name() == "word") {
            cfg.hashed_embeddings = true;
        } else {
            cfg.hashed_embeddings = false;
            cfg.vocab_size = tokenizer.id_space();
        }
        cfg.validate();
        return cfg;
    }
};

struct LocalizeChoice {
    std::string mask_path;
    std::size_t k = 64;
    std::uint64_t stimuli_seed = 0;
    std::size_t items = 24;
    std::size_t length = 6;
    bool random_units = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--mask", mask_path, "Existing unit-mask CSV");
        cmd->add_option("--k", k, "Units to select when localizing");
        cmd->add_option("--loc-seed", stimuli_seed, "Localizer stimuli seed");
        cmd->add_option("--loc-items", items, "Localizer items per condition");
        cmd->add_option("--loc-length", length, "Localizer sentence length in words");
        cmd->add_flag("--random-units", random_units,
                      "Sample units uniformly instead of localizing");
    }

    UnitMask build(const EncoderWeights& weights, const Tokenizer& tokenizer) const {
        if (!mask_path.empty()) return UnitMask::load_csv(mask_path);
        if (random_units) return random_mask(stimuli_seed, k, record_shape(weights.config));
        const LocalizerStimuli stimuli =
            generate_localizer_stimuli(stimuli_seed, items, length, tokenizer);
        return localize_cached(weights, tokenizer, stimuli, k);
    }

    KvMap describe() const {
        KvMap kv;
        kv["mask"] = mask_path.empty() ? (random_units ? "random" : "localized") : mask_path;
        kv["k"] = std::to_string(k);
        kv["loc_seed"] = std::to_string(stimuli_seed);
        kv["loc_items"] = std::to_string(items);
        kv["loc_length"] = std::to_string(length);
        return kv;
    }
};

void write_manifest(const fs::path& out_dir, const std::string& command, const KvMap& effective,
                    const std::vector<std::uint64_t>& seeds) {
    nlohmann::json config = nlohmann::json::object();
    for (const auto& [k, v] : effective) config[k] = v;
    nlohmann::json manifest{{"command", command},
                            {"artifact_version", kArtifactVersion},
                            {"config", config},
                            {"config_hash", fnv1a64(format_kv(effective))},
                            {"seeds", seeds}};
    write_text_file(out_dir / "run_manifest.json", manifest.dump(2) + "\n");
}

std::vector<std::uint64_t> parse_u64_list(const std::string& csv) {
    std::vector<std::uint64_t> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        std::size_t comma = csv.find(',', pos);
        if (comma == std::string::npos) comma = csv.size();
        out.push_back(std::stoull(csv.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    if (out.empty()) throw std::runtime_error("empty list: " + csv);
    return out;
}

// ---------------------------------------------------------------- tokenize
int cmd_tokenize_train(const std::string& corpus_path, std::size_t vocab_size,
                       const std::string& out_dir) {
    const std::string corpus = read_text_file(corpus_path);
    const Vocab vocab = bpe_train(corpus, vocab_size);
    vocab.save(fs::path(out_dir) / "vocab.txt");
    KvMap kv{{"corpus", corpus_path},
             {"vocab_size", std::to_string(vocab_size)},
             {"trained_size", std::to_string(vocab.size())}};
    write_manifest(out_dir, "tokenize-train", kv, {});
    std::cout << "trained vocab of " << vocab.size() << " tokens -> " << out_dir << "/vocab.txt\n";
    return 0;
}

// -------------------------------------------------------------------- synth
struct SynthArgs {
    std::string kind = "dataset";
    std::string out_dir;
    std::uint64_t seed = 0;
    std::size_t n_stimuli = 120;
    std::size_t n_channels = 30;
    std::size_t n_subjects = 3;
    double snr = 1.0;
    std::size_t context_window = 0;
    std::size_t group_size = 6;
    std::size_t mask_k = 64;
    std::size_t sentences = 400;
    TokenizerChoice tokenizer;
    EncoderChoice encoder;
};

int cmd_synth(const SynthArgs& args) {
    if (args.kind == "corpus") {
        Rng rng(args.seed);
        write_text_file(fs::path(args.out_dir) / "corpus.txt", make_corpus(rng, args.sentences));
        KvMap kv{{"kind", "corpus"},
                 {"sentences", std::to_string(args.sentences)},
                 {"seed", std::to_string(args.seed)}};
        write_manifest(args.out_dir, "synth", kv, {args.seed});
        std::cout << "wrote corpus.txt (" << args.sentences << " sentences)\n";
        return 0;
    }
    if (args.kind != "dataset") throw std::runtime_error("synth: unknown --kind " + args.kind);

    const auto tokenizer = args.tokenizer.build();
    SyntheticDatasetSpec spec;
    spec.seed = args.seed;
    spec.n_stimuli = args.n_stimuli;
    spec.n_channels = args.n_channels;
    spec.n_subjects = args.n_subjects;
    spec.snr = args.snr;
    spec.context_window = args.context_window;
    spec.group_size = args.group_size;
    spec.mask_k = args.mask_k;
    spec.encoder = args.encoder.build(*tokenizer);
    spec.name = "synthetic-" + std::to_string(args.seed);

    const StimulusResponseDataset dataset = generate_synthetic_dataset(spec, *tokenizer);
    save_dataset(dataset, args.out_dir);

    KvMap kv = spec.encoder.to_kv();
    kv["kind"] = "dataset";
    kv["snr"] = format_double(args.snr);
    kv["n_stimuli"] = std::to_string(args.n_stimuli);
    kv["n_channels"] = std::to_string(args.n_channels);
    kv["n_subjects"] = std::to_string(args.n_subjects);
    kv["mask_k"] = std::to_string(args.mask_k);
    kv["dataset_seed"] = std::to_string(args.seed);
    write_manifest(args.out_dir, "synth", kv, {args.seed});
    std::cout << "wrote dataset '" << dataset.name << "' (" << dataset.stimuli.size()
              << " stimuli, " << dataset.responses.cols() << " channels)\n";
    return 0;
}

// ----------------------------------------------------------------- localize
int cmd_localize(const TokenizerChoice& tok, const EncoderChoice& enc, std::uint64_t seed,
                 std::size_t k, std::size_t items, std::size_t length,
                 const std::string& reduction, const std::string& out_dir) {
    const auto tokenizer = tok.build();
    EncoderConfig cfg = enc.build(*tokenizer);
    const EncoderWeights weights = init_weights(cfg);
    const LocalizerStimuli stimuli = generate_localizer_stimuli(seed, items, length, *tokenizer);
    const Aggregation agg = reduction == "last" ? Aggregation::LastToken : Aggregation::Mean;
    UnitMask mask = localize(weights, *tokenizer, stimuli, k, agg);
    mask.save_csv(fs::path(out_dir) / "mask.csv");

    std::string stim_csv = "kind,text\n";
    for (const auto& s : stimuli.sentences) stim_csv += "sentence," + csv_escape(s) + '\n';
    for (const auto& s : stimuli.nonwords) stim_csv += "nonword," + csv_escape(s) + '\n';
    write_text_file(fs::path(out_dir) / "localizer_stimuli.csv", stim_csv);

    KvMap kv = cfg.to_kv();
    kv["k"] = std::to_string(k);
    kv["items"] = std::to_string(items);
    kv["length"] = std::to_string(length);
    kv["reduction"] = reduction;
    kv["stimuli_seed"] = std::to_string(seed);
    kv["tokenizer"] = tokenizer->name();
    kv["tap_policy"] = "all_passes";  // units span every pass, not only the last
    if (tokenizer->name() == "word")
        kv["tokenizer_note"] = "hash-bucketed open vocabulary (word-based control)";
    write_manifest(out_dir, "localize", kv, {seed, cfg.seed});
    std::cout << "selected " << mask.k() << " units -> " << out_dir << "/mask.csv\n";
    return 0;
}

// -------------------------------------------------------------------- align
int cmd_align(const TokenizerChoice& tok, const EncoderChoice& enc, const LocalizeChoice& loc,
              const std::string& manifest_path, const std::string& metric,
              const std::string& control, std::uint64_t control_seed,
              const std::string& out_dir) {
    const auto tokenizer = tok.build();
    const EncoderConfig cfg = enc.build(*tokenizer);
    const EncoderWeights weights = init_weights(cfg);
    const StimulusResponseDataset dataset = load_dataset(manifest_path);
    const UnitMask mask = loc.build(weights, *tokenizer);

    BenchmarkOptions options;
    options.metric = metric_from_name(metric);
    options.control = control_from_name(control);
    options.control_seed = control_seed;
    const BenchmarkResult result = run_benchmark(weights, *tokenizer, mask, dataset, options);

    write_text_file(fs::path(out_dir) / "result.json", benchmark_result_json(result));
    write_text_file(fs::path(out_dir) / "result.csv",
                    benchmark_result_csv_header() + benchmark_result_csv_row(result));

    KvMap kv = cfg.to_kv();
    for (const auto& [k2, v2] : loc.describe()) kv["loc_" + k2] = v2;
    kv["dataset"] = manifest_path;
    kv["metric"] = metric;
    kv["control"] = control;
    kv["control_seed"] = std::to_string(control_seed);
    kv["tokenizer"] = tokenizer->name();
    if (tokenizer->name() == "word")
        kv["tokenizer_note"] = "hash-bucketed open vocabulary (word-based control)";
    write_manifest(out_dir, "align", kv, {cfg.seed, control_seed});
    std::cout << "raw " << result.raw << "  consistency " << result.consistency
              << "  normalized " << result.normalized << "\n";
    return 0;
}

// ------------------------------------------------------------------ analyze
int cmd_analyze(const TokenizerChoice& tok, const EncoderChoice& enc, const LocalizeChoice& loc,
                const std::string& seeds_csv, std::size_t items, std::size_t length,
                std::uint64_t condition_seed, const std::string& out_dir) {
    const auto tokenizer = tok.build();
    const std::vector<std::uint64_t> seeds = parse_u64_list(seeds_csv);
    const ConditionSet conditions = generate_conditions(condition_seed, items, length);

    std::string profile_csv = "encoder_seed,condition,mean,sd,unit_source,tokenizer\n";
    std::string pattern_csv = "encoder_seed,lexical,syntactic,unit_source,tokenizer\n";
    std::array<std::vector<double>, 4> pooled_items;  // seeds x stimuli
    std::vector<double> lexical_values, syntactic_values;
    std::string source = "localized";
    for (std::uint64_t seed : seeds) {
        EncoderChoice enc_seeded = enc;
        enc_seeded.seed = seed;
        enc_seeded.seed_set = true;
        const EncoderConfig cfg = enc_seeded.build(*tokenizer);
        const EncoderWeights weights = init_weights(cfg);
        const UnitMask mask = loc.build(weights, *tokenizer);
        source = loc.random_units ? "random" : "localized";

        const ProfileResult profile = univariate_profile(weights, *tokenizer, mask, conditions);
        for (std::size_t c = 0; c < 4; ++c) {
            profile_csv += std::to_string(seed) + ',' + ConditionSet::kNames[c] + ',' +
                           format_double(profile.condition_mean[c]) + ',' +
                           format_double(profile.condition_sd[c]) + ',' + source + ',' +
                           tokenizer->name() + '\n';
            pooled_items[c].insert(pooled_items[c].end(), profile.item_means[c].begin(),
                                   profile.item_means[c].end());
        }
        const PatternResult pattern =
            multivariate_pattern(weights, *tokenizer, mask, conditions, seed);
        lexical_values.push_back(pattern.lexical);
        syntactic_values.push_back(pattern.syntactic);
        pattern_csv += std::to_string(seed) + ',' + format_double(pattern.lexical) + ',' +
                       format_double(pattern.syntactic) + ',' + source + ',' + tokenizer->name() +
                       '\n';
    }
    write_text_file(fs::path(out_dir) / "univariate.csv", profile_csv);
    write_text_file(fs::path(out_dir) / "multivariate.csv", pattern_csv);

    // Summary with dispersion pooled over seeds x stimuli.
    const auto mean_sd = [](const std::vector<double>& xs) {
        double m = 0.0;
        for (double x : xs) m += x;
        m /= static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - m) * (x - m);
        return std::pair<double, double>(m, std::sqrt(var / static_cast<double>(xs.size())));
    };
    nlohmann::json summary{{"seeds", seeds},
                           {"unit_source", source},
                           {"tokenizer", tokenizer->name()}};
    for (std::size_t c = 0; c < 4; ++c) {
        const auto [m, sd] = mean_sd(pooled_items[c]);
        summary["univariate"][ConditionSet::kNames[c]] = {{"mean", m}, {"dispersion", sd}};
    }
    const auto [lex_m, lex_sd] = mean_sd(lexical_values);
    const auto [syn_m, syn_sd] = mean_sd(syntactic_values);
    summary["multivariate"] = {{"lexical", {{"mean", lex_m}, {"sd", lex_sd}}},
                               {"syntactic", {{"mean", syn_m}, {"sd", syn_sd}}}};
    write_text_file(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");

    KvMap kv;
    if (!enc.config_path.empty()) kv = EncoderConfig::from_kv(read_kv_file(enc.config_path)).to_kv();
    for (const auto& [k2, v2] : loc.describe()) kv["loc_" + k2] = v2;
    kv["seeds"] = seeds_csv;
    kv["items"] = std::to_string(items);
    kv["length"] = std::to_string(length);
    kv["condition_seed"] = std::to_string(condition_seed);
    kv["tokenizer"] = tokenizer->name();
    if (tokenizer->name() == "word")
        kv["tokenizer_note"] = "hash-bucketed open vocabulary (word-based control)";
    write_manifest(out_dir, "analyze", kv, seeds);
    std::cout << "wrote univariate.csv and multivariate.csv for " << seeds.size() << " seeds\n";
    return 0;
}

// -------------------------------------------------------------------- sweep
int cmd_sweep(const TokenizerChoice& tok, const EncoderChoice& enc, const LocalizeChoice& loc,
              const std::string& kind, const std::string& values_csv,
              const std::string& manifest_path, const std::string& metric,
              const std::string& seeds_csv, std::size_t threads, const std::string& out_dir) {
    const auto tokenizer = tok.build();
    const StimulusResponseDataset dataset = load_dataset(manifest_path);
    const std::vector<std::uint64_t> values = parse_u64_list(values_csv);
    const std::vector<std::uint64_t> seeds = parse_u64_list(seeds_csv);

    struct Task {
        std::uint64_t value = 0;
        std::uint64_t seed = 0;
    };
    std::vector<Task> tasks;
    for (std::uint64_t value : values)
        for (std::uint64_t seed : seeds) tasks.push_back({value, seed});
    std::vector<BenchmarkResult> results(tasks.size());

    const auto run_task = [&](std::size_t index) {
        const Task& task = tasks[index];
        EncoderChoice enc_seeded = enc;
        enc_seeded.seed = task.seed;
        enc_seeded.seed_set = true;
        EncoderConfig cfg = enc_seeded.build(*tokenizer);
        LocalizeChoice loc_task = loc;
        if (kind == "heads") {
            cfg.n_heads = task.value;
        } else if (kind == "depth") {
            if (task.value == 0) {  // 0 selects token-count-adaptive depth
                cfg.adaptive_depth = true;
                cfg.shared_weights = true;
                cfg.unroll_depth = 1;
            } else {
                cfg.adaptive_depth = false;
                cfg.unroll_depth = task.value;
            }
        } else if (kind == "k") {
            loc_task.k = task.value;
        } else {
            throw std::runtime_error("sweep: unknown --kind " + kind);
        }
        cfg.validate();
        const EncoderWeights weights = init_weights(cfg);
        const UnitMask mask = loc_task.build(weights, *tokenizer);
        BenchmarkOptions options;
        options.metric = metric_from_name(metric);
        results[index] = run_benchmark(weights, *tokenizer, mask, dataset, options);
    };

    const std::size_t workers = std::max<std::size_t>(1, threads);
    if (workers == 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) run_task(i);
    } else {
        std::mutex mutex;
        std::size_t next = 0;
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                while (true) {
                    std::size_t index;
                    {
                        std::lock_guard<std::mutex> lock(mutex);
                        if (next >= tasks.size() || failure) return;
                        index = next++;
                    }
                    try {
                        run_task(index);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(mutex);
                        failure = std::current_exception();
                        return;
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    std::string csv = "kind,value,seed,raw,consistency,normalized\n";
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        csv += kind + ',' + std::to_string(tasks[i].value) + ',' + std::to_string(tasks[i].seed) +
               ',' + format_double(results[i].raw) + ',' + format_double(results[i].consistency) +
               ',' + format_double(results[i].normalized) + '\n';
    }
    write_text_file(fs::path(out_dir) / "sweep.csv", csv);

    KvMap kv;
    kv["kind"] = kind;
    kv["values"] = values_csv;
    kv["seeds"] = seeds_csv;
    kv["metric"] = metric;
    kv["dataset"] = manifest_path;
    kv["tokenizer"] = tokenizer->name();
    write_manifest(out_dir, "sweep", kv, seeds);
    std::cout << "wrote sweep.csv with " << tasks.size() << " rows\n";
    return 0;
}

// ----------------------------------------------------------- train-decoder
struct TrainArgs {
    TokenizerChoice tokenizer;
    EncoderChoice encoder;
    LocalizeChoice localize;
    std::string corpus_path;
    std::string input_source = "localized_units";
    std::size_t n_blocks = 1;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t mlp_hidden = 256;
    std::size_t context = 128;
    std::uint64_t decoder_seed = 0;
    std::size_t epochs = 1;
    std::size_t batch = 16;
    double peak_lr = 5e-3;
    std::size_t warmup = 20;
    std::size_t eval_interval = 20;
    double val_fraction = 0.1;
    std::string out_dir;
};

int cmd_train_decoder(const TrainArgs& args) {
    const auto tokenizer_ptr = args.tokenizer.build();
    const auto* vocab = dynamic_cast<const Vocab*>(tokenizer_ptr.get());
    if (!vocab) throw std::runtime_error("train-decoder: requires a BPE vocab tokenizer");

    const EncoderConfig enc_cfg = args.encoder.build(*vocab);
    const EncoderWeights weights = init_weights(enc_cfg);
    const InputSource source = input_source_from_name(args.input_source);
    UnitMask mask;
    if (source == InputSource::LocalizedUnits) mask = args.localize.build(weights, *vocab);
    const FeatureProvider provider(source, &weights,
                                   source == InputSource::LocalizedUnits ? &mask : nullptr);

    const std::string corpus = read_text_file(args.corpus_path);
    const std::vector<TokenId> stream = prepare_lm_stream(*vocab, corpus);
    if (stream.size() < 16) throw std::runtime_error("train-decoder: corpus too small");
    const std::size_t split =
        stream.size() - std::max<std::size_t>(8, static_cast<std::size_t>(
                                                     static_cast<double>(stream.size()) *
                                                     args.val_fraction));
    const std::vector<TokenId> train_ids(stream.begin(), stream.begin() + split);
    const std::vector<TokenId> val_ids(stream.begin() + split, stream.end());

    DecoderConfig cfg;
    cfg.n_blocks = args.n_blocks;
    cfg.d_model = args.d_model;
    cfg.n_heads = args.n_heads;
    cfg.mlp_hidden = args.mlp_hidden;
    cfg.vocab_size = vocab->size();
    cfg.context_length = args.context;
    cfg.input_source = source;
    cfg.seed = args.decoder_seed;

    TrainConfig tc;
    tc.epochs = args.epochs;
    tc.batch_sequences = args.batch;
    tc.context_tokens = args.context;
    tc.peak_lr = args.peak_lr;
    tc.warmup_steps = args.warmup;
    tc.eval_interval = args.eval_interval;
    tc.data_seed = args.decoder_seed;

    DecoderModel model(cfg, provider.feature_dim());
    const TrainResult result = train_decoder(model, provider, train_ids, val_ids, tc);
    model.save(fs::path(args.out_dir) / "checkpoint");
    write_text_file(fs::path(args.out_dir) / "curves.csv", loss_curves_csv(result));

    const double val_ppl = perplexity(model, provider, val_ids, args.context);
    nlohmann::json summary{{"best_val_loss", result.best_val_loss},
                           {"best_step", result.best_step},
                           {"total_steps", result.total_steps},
                           {"val_perplexity", val_ppl},
                           {"trainable_parameters", model.trainable_count()}};
    write_text_file(fs::path(args.out_dir) / "train_summary.json", summary.dump(2) + "\n");

    KvMap kv = cfg.to_kv();
    for (const auto& [k2, v2] : enc_cfg.to_kv()) kv["encoder_" + k2] = v2;
    kv["corpus"] = args.corpus_path;
    kv["epochs"] = std::to_string(args.epochs);
    kv["batch"] = std::to_string(args.batch);
    kv["peak_lr"] = format_double(args.peak_lr);
    kv["warmup"] = std::to_string(args.warmup);
    kv["optimizer"] = "adam(beta1=0.9,beta2=0.999,eps=1e-8)";
    write_manifest(args.out_dir, "train-decoder", kv, {enc_cfg.seed, args.decoder_seed});
    std::cout << "best val loss " << result.best_val_loss << " at step " << result.best_step
              << "; val perplexity " << val_ppl << "\n";
    return 0;
}

// ------------------------------------------------------------------- behave
int cmd_behave(const TokenizerChoice& tok, const EncoderChoice& enc, const LocalizeChoice& loc,
               const std::string& checkpoint_dir, const std::string& rt_path,
               const std::string& out_dir) {
    const auto tokenizer_ptr = tok.build();
    const auto* vocab = dynamic_cast<const Vocab*>(tokenizer_ptr.get());
    if (!vocab) throw std::runtime_error("behave: requires a BPE vocab tokenizer");

    const DecoderModel model = DecoderModel::load(checkpoint_dir);
    const EncoderConfig enc_cfg = enc.build(*vocab);
    const EncoderWeights weights = init_weights(enc_cfg);
    UnitMask mask;
    const InputSource source = model.config().input_source;
    if (source == InputSource::LocalizedUnits) mask = loc.build(weights, *vocab);
    const FeatureProvider provider(source, &weights,
                                   source == InputSource::LocalizedUnits ? &mask : nullptr);

    const ReadingTimeData data = load_reading_times(rt_path);
    const BehavioralResult result = behavioral_alignment(model, provider, *vocab, data);

    nlohmann::json summary{{"pearson", result.pearson},
                           {"scored_words", result.scored_words},
                           {"skipped_words", result.skipped_words}};
    write_text_file(fs::path(out_dir) / "behavior.json", summary.dump(2) + "\n");

    KvMap kv = enc_cfg.to_kv();
    kv["checkpoint"] = checkpoint_dir;
    kv["reading_times"] = rt_path;
    write_manifest(out_dir, "behave", kv, {enc_cfg.seed});
    std::cout << "behavioral r = " << result.pearson << " over " << result.scored_words
              << " words (" << result.skipped_words << " skipped)\n";
    return 0;
}

// -------------------------------------------------------------------- flops
int cmd_flops(const EncoderChoice& enc, std::size_t seq_len, const std::string& out_dir) {
    EncoderConfig cfg;
    if (!enc.config_path.empty())
        cfg = EncoderConfig::from_kv(read_kv_file(enc.config_path));
    else
        cfg = EncoderConfig::suma(4096, 512, 32000, 0);
    if (enc.seed_set) cfg.seed = enc.seed;
    const std::uint64_t flops = flops_estimate(cfg, seq_len);
    std::cout << "flops(seq_len=" << seq_len << ") = " << flops << " ("
              << static_cast<double>(flops) / 1e6 << " MFLOPs)\n";
    if (!out_dir.empty()) {
        nlohmann::json j{{"seq_len", seq_len}, {"flops", flops}};
        write_text_file(fs::path(out_dir) / "flops.json", j.dump(2) + "\n");
        KvMap kv = cfg.to_kv();
        kv["seq_len"] = std::to_string(seq_len);
        write_manifest(out_dir, "flops", kv, {});
    }
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Untrained shallow multihead-attention encoder toolkit: localization, "
                 "brain-alignment benchmarking, condition analyses, decoder training"};
    app.require_subcommand(1);

    // tokenize-train
    auto* tt = app.add_subcommand("tokenize-train", "Train a byte-level BPE vocab on a corpus");
    std::string tt_corpus, tt_out;
    std::size_t tt_size = 512;
    tt->add_option("--corpus", tt_corpus, "Corpus text file")->required();
    tt->add_option("--vocab-size", tt_size, "Total vocab budget");
    tt->add_option("--out", tt_out, "Output directory")->required();

    // synth
    auto* sy = app.add_subcommand("synth", "Generate synthetic datasets or corpora");
    SynthArgs synth;
    sy->add_option("--kind", synth.kind, "dataset | corpus");
    sy->add_option("--out", synth.out_dir, "Output directory")->required();
    sy->add_option("--seed", synth.seed, "Generator seed");
    sy->add_option("--n-stimuli", synth.n_stimuli, "Stimulus count");
    sy->add_option("--n-channels", synth.n_channels, "Total channel count");
    sy->add_option("--n-subjects", synth.n_subjects, "Subject count (>= 2)");
    sy->add_option("--snr", synth.snr, "Signal-to-noise ratio");
    sy->add_option("--context-window", synth.context_window, "Dataset context window");
    sy->add_option("--group-size", synth.group_size, "Stimuli per group");
    sy->add_option("--mask-k", synth.mask_k, "Units behind the planted readout");
    sy->add_option("--sentences", synth.sentences, "Corpus sentences (kind=corpus)");
    synth.tokenizer.attach(sy);
    sy->add_option("--config", synth.encoder.config_path, "Reference encoder config");
    sy->add_option("--encoder-seed", synth.encoder.seed, "Reference encoder seed")
        ->each([&synth](const std::string&) { synth.encoder.seed_set = true; });

    // localize
    auto* lo = app.add_subcommand("localize", "Select language-selective units");
    TokenizerChoice lo_tok;
    EncoderChoice lo_enc;
    std::uint64_t lo_seed = 0;
    std::size_t lo_k = 64, lo_items = 24, lo_length = 6;
    std::string lo_reduction = "mean", lo_out;
    lo_tok.attach(lo);
    lo_enc.attach(lo);
    lo->add_option("--loc-seed", lo_seed, "Localizer stimuli seed");
    lo->add_option("--k", lo_k, "Units to select");
    lo->add_option("--items", lo_items, "Items per condition");
    lo->add_option("--length", lo_length, "Sentence length in words");
    lo->add_option("--reduction", lo_reduction, "Per-stimulus reduction: mean | last");
    lo->add_option("--out", lo_out, "Output directory")->required();

    // align
    auto* al = app.add_subcommand("align", "Benchmark model features against a dataset");
    TokenizerChoice al_tok;
    EncoderChoice al_enc;
    LocalizeChoice al_loc;
    std::string al_manifest, al_metric = "linear", al_control = "original", al_out;
    std::uint64_t al_control_seed = 0;
    al_tok.attach(al);
    al_enc.attach(al);
    al_loc.attach(al);
    al->add_option("--manifest", al_manifest, "Dataset manifest.json")->required();
    al->add_option("--metric", al_metric, "linear | cka | rdm");
    al->add_option("--control", al_control, "original | shuffled | random_same_length");
    al->add_option("--control-seed", al_control_seed, "Control condition seed");
    al->add_option("--out", al_out, "Output directory")->required();

    // analyze
    auto* an = app.add_subcommand("analyze", "Univariate and multivariate condition analyses");
    TokenizerChoice an_tok;
    EncoderChoice an_enc;
    LocalizeChoice an_loc;
    std::string an_seeds = "1,2,3,4,5", an_out;
    std::size_t an_items = 24, an_length = 6;
    std::uint64_t an_condition_seed = 0;
    an_tok.attach(an);
    an_enc.attach(an);
    an_loc.attach(an);
    an->add_option("--seeds", an_seeds, "Encoder seeds, comma-separated");
    an->add_option("--items", an_items, "Items per condition");
    an->add_option("--length", an_length, "Sentence length in words");
    an->add_option("--condition-seed", an_condition_seed, "Condition generation seed");
    an->add_option("--out", an_out, "Output directory")->required();

    // sweep
    auto* sw = app.add_subcommand("sweep", "Sweep heads, depth, or k over a dataset");
    TokenizerChoice sw_tok;
    EncoderChoice sw_enc;
    LocalizeChoice sw_loc;
    std::string sw_kind = "heads", sw_values, sw_manifest, sw_metric = "linear",
                sw_seeds = "1,2,3", sw_out;
    std::size_t sw_threads = 1;
    sw_tok.attach(sw);
    sw_enc.attach(sw);
    sw_loc.attach(sw);
    sw->add_option("--kind", sw_kind, "heads | depth | k");
    sw->add_option("--values", sw_values, "Comma-separated sweep values")->required();
    sw->add_option("--manifest", sw_manifest, "Dataset manifest.json")->required();
    sw->add_option("--metric", sw_metric, "linear | cka | rdm");
    sw->add_option("--seeds", sw_seeds, "Encoder seeds, comma-separated");
    sw->add_option("--threads", sw_threads, "Worker pool size");
    sw->add_option("--out", sw_out, "Output directory")->required();

    // train-decoder
    auto* tr = app.add_subcommand("train-decoder", "Train decoder blocks on a frozen encoder");
    TrainArgs train;
    train.tokenizer.attach(tr);
    tr->add_option("--config", train.encoder.config_path, "Encoder config file");
    tr->add_option("--encoder-seed", train.encoder.seed, "Encoder seed")
        ->each([&train](const std::string&) { train.encoder.seed_set = true; });
    train.localize.attach(tr);
    tr->add_option("--corpus", train.corpus_path, "Training corpus")->required();
    tr->add_option("--input-source", train.input_source,
                   "embeddings | final_layer | localized_units");
    tr->add_option("--n-blocks", train.n_blocks, "Trainable blocks (1 or 2)");
    tr->add_option("--d-model", train.d_model, "Decoder width");
    tr->add_option("--n-heads", train.n_heads, "Decoder heads");
    tr->add_option("--mlp-hidden", train.mlp_hidden, "Decoder MLP width");
    tr->add_option("--context", train.context, "Context window in tokens");
    tr->add_option("--seed", train.decoder_seed, "Decoder init/data seed");
    tr->add_option("--epochs", train.epochs, "Training epochs");
    tr->add_option("--batch", train.batch, "Effective batch in sequences");
    tr->add_option("--peak-lr", train.peak_lr, "Peak learning rate");
    tr->add_option("--warmup", train.warmup, "Warmup steps");
    tr->add_option("--eval-interval", train.eval_interval, "Validation interval in steps");
    tr->add_option("--val-fraction", train.val_fraction, "Held-out fraction of the stream");
    tr->add_option("--out", train.out_dir, "Output directory")->required();

    // behave
    auto* be = app.add_subcommand("behave", "Score a checkpoint against reading times");
    TokenizerChoice be_tok;
    EncoderChoice be_enc;
    LocalizeChoice be_loc;
    std::string be_checkpoint, be_rt, be_out;
    be_tok.attach(be);
    be_enc.attach(be);
    be_loc.attach(be);
    be->add_option("--checkpoint", be_checkpoint, "Checkpoint directory")->required();
    be->add_option("--rt", be_rt, "Reading-time CSV")->required();
    be->add_option("--out", be_out, "Output directory")->required();

    // flops
    auto* fl = app.add_subcommand("flops", "Estimate forward FLOPs for a config");
    EncoderChoice fl_enc;
    std::size_t fl_seq = 1;
    std::string fl_out;
    fl_enc.attach(fl);
    fl->add_option("--seq-len", fl_seq, "Sequence length");
    fl->add_option("--out", fl_out, "Optional output directory");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (tt->parsed()) return cmd_tokenize_train(tt_corpus, tt_size, resolve_out(tt_out));
        if (sy->parsed()) {
            synth.out_dir = resolve_out(synth.out_dir);
            return cmd_synth(synth);
        }
        if (lo->parsed())
            return cmd_localize(lo_tok, lo_enc, lo_seed, lo_k, lo_items, lo_length, lo_reduction,
                                resolve_out(lo_out));
        if (al->parsed())
            return cmd_align(al_tok, al_enc, al_loc, al_manifest, al_metric, al_control,
                             al_control_seed, resolve_out(al_out));
        if (an->parsed())
            return cmd_analyze(an_tok, an_enc, an_loc, an_seeds, an_items, an_length,
                               an_condition_seed, resolve_out(an_out));
        if (sw->parsed())
            return cmd_sweep(sw_tok, sw_enc, sw_loc, sw_kind, sw_values, sw_manifest, sw_metric,
                             sw_seeds, sw_threads, resolve_out(sw_out));
        if (tr->parsed()) {
            train.out_dir = resolve_out(train.out_dir);
            return cmd_train_decoder(train);
        }
        if (be->parsed())
            return cmd_behave(be_tok, be_enc, be_loc, be_checkpoint, be_rt, resolve_out(be_out));
        if (fl->parsed()) return cmd_flops(fl_enc, fl_seq, resolve_out(fl_out));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 2;
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args);
}

}  // namespace suma::cli
