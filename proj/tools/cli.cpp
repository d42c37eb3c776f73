#include "cli.hpp"

#include "fable/error.hpp"
#include "fable/inference.hpp"
#include "fable/ingest.hpp"
#include "fable/manifest.hpp"
#include "fable/model.hpp"
#include "fable/model_io.hpp"
#include "fable/sample_io.hpp"
#include "fable/sampler.hpp"
#include "fable/simharness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>

namespace fable::cli {

namespace {

using nlohmann::json;

const std::vector<std::string> kSubcommands = {"fit",      "sample",   "mean",  "intervals", "diagnose",
                                               "oos",      "simulate", "bench", "replay"};

struct DataArgs {
    std::string input;
    std::string format = "auto";
    std::string transform = "none";
    double fraction = 1.0;
    bool no_center = false;
};

struct FitArgs {
    double S0 = 0.75;
    double gamma0 = 1.0;
    double delta0_sq = 1.0;
    std::optional<int> k;
    std::optional<double> tau_sq;
    std::string rho_strategy = "mean_b";
    double alpha = 0.05;
    std::string svd = "exact";
};

/// Where a subcommand sends its main table: a file, or `out` for "-".
class Sink {
public:
    Sink(const std::string& path, std::ostream& fallback, bool binary = false) : path_(path) {
        if (path.empty() || path == "-") {
            stream_ = &fallback;
        } else {
            file_.open(path, binary ? std::ios::binary | std::ios::out : std::ios::out);
            if (!file_) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
            stream_ = &file_;
        }
    }

    std::ostream& stream() { return *stream_; }
    bool is_file() const { return stream_ == &file_; }
    const std::string& path() const { return path_; }

    void close() {
        if (!is_file()) return;
        file_.close();
        if (!file_) throw Error(ErrorCode::IoError, "failed writing '" + path_ + "'");
    }

private:
    std::string path_;
    std::ofstream file_;
    std::ostream* stream_ = nullptr;
};

void add_data_options(CLI::App* app, DataArgs& d, bool required = true) {
    auto* input = app->add_option("--input", d.input, "Matrix file (delimited text or FABLEMAT1 binary)");
    if (required) input->required();
    app->add_option("--format", d.format, "auto, text or binary")->capture_default_str();
    app->add_option("--transform", d.transform, "none or log2 (log2(x + 1))")->capture_default_str();
    app->add_option("--filter-fraction", d.fraction, "Keep this top fraction of columns by variance")
        ->capture_default_str();
    app->add_flag("--no-center", d.no_center, "Assume the columns are already centered");
}

void add_fit_options(CLI::App* app, FitArgs& f) {
    app->add_option("--S0", f.S0, "Spectrum share that bounds the rank search")->capture_default_str();
    app->add_option("--gamma0", f.gamma0, "Prior shape for the residual variances")->capture_default_str();
    app->add_option("--delta0-sq", f.delta0_sq, "Prior scale for the residual variances")->capture_default_str();
    app->add_option("--k", f.k, "Fix the number of factors");
    app->add_option("--tau-sq", f.tau_sq, "Fix the loadings prior variance");
    app->add_option("--rho-strategy", f.rho_strategy, "mean_b, sup_b or solve_mean_coverage")->capture_default_str();
    app->add_option("--alpha", f.alpha, "Target level for solve_mean_coverage")->capture_default_str();
    app->add_option("--svd", f.svd, "exact or randomized")->capture_default_str();
}

FitOptions to_fit_options(const FitArgs& f, int threads) {
    FitOptions o;
    o.S0 = f.S0;
    o.gamma0 = f.gamma0;
    o.delta0_sq = f.delta0_sq;
    o.k = f.k;
    o.tau_sq = f.tau_sq;
    o.rho_strategy = parse_rho_strategy(f.rho_strategy);
    o.alpha = f.alpha;
    if (f.svd == "exact") {
        o.svd_method = SvdMethod::exact;
    } else if (f.svd == "randomized") {
        o.svd_method = SvdMethod::randomized;
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown --svd '" + f.svd + "'");
    }
    o.threads = threads;
    return o;
}

json fit_json(const FitArgs& f) {
    return {{"S0", f.S0},
            {"gamma0", f.gamma0},
            {"delta0_sq", f.delta0_sq},
            {"k", f.k ? json(*f.k) : json(nullptr)},
            {"tau_sq", f.tau_sq ? json(*f.tau_sq) : json(nullptr)},
            {"rho_strategy", f.rho_strategy},
            {"alpha", f.alpha},
            {"svd", f.svd}};
}

json data_json(const DataArgs& d) {
    return {{"input", d.input},
            {"format", d.format},
            {"transform", d.transform},
            {"filter_fraction", d.fraction},
            {"center", !d.no_center}};
}

Preprocessed load_data(const DataArgs& d) {
    const auto loaded = load_matrix(d.input, parse_matrix_format(d.format));
    PreprocessOptions options;
    options.transform = parse_transform(d.transform);
    options.filter_top_variance_fraction = d.fraction;
    options.center = false;
    Preprocessed pre = preprocess(loaded.values, options);
    if (d.no_center) {
        pre.data = DataMatrix::adopt_centered(pre.data.values(), VectorXd::Zero(pre.data.cols()));
    } else {
        pre.data = center_columns(pre.data.values());
    }
    return pre;
}

std::vector<IndexPair> parse_pairs(const std::string& text, Index p) {
    std::vector<IndexPair> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find(',', pos);
        if (end == std::string::npos) end = text.size();
        const std::string part = text.substr(pos, end - pos);
        const auto colon = part.find(':');
        if (colon == std::string::npos) throw Error(ErrorCode::InvalidArgument, "pair '" + part + "' is not u:v");
        const auto u = parse_index_list(part.substr(0, colon), p);
        const auto v = parse_index_list(part.substr(colon + 1), p);
        if (u.size() != 1 || v.size() != 1) throw Error(ErrorCode::InvalidArgument, "pair '" + part + "' is not u:v");
        out.push_back({u[0], v[0]});
        pos = end + 1;
    }
    return out;
}

std::vector<IndexPair> resolve_pairs(const std::string& variables, const std::string& pairs, Index p) {
    if (!variables.empty() && !pairs.empty()) {
        throw Error(ErrorCode::InvalidArgument, "give either --variables or --pairs, not both");
    }
    if (!pairs.empty()) return parse_pairs(pairs, p);
    if (!variables.empty()) return submatrix_indices(parse_index_list(variables, p));
    throw Error(ErrorCode::InvalidArgument, "one of --variables or --pairs is required");
}

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

struct Run {
    std::vector<std::string> args;
    std::ostream& out;
    std::ostream& err;
    RunManifest manifest;
    std::string manifest_path;
    int threads = 0;

    void record_output(const std::string& path) {
        if (path.empty() || path == "-") return;
        manifest.outputs.push_back({path, sha256_hex(path)});
    }

    void record_input(const std::string& path) {
        manifest.input_path = path;
        manifest.input_sha256 = sha256_hex(path);
    }

    void record_model(const FableModel& m) {
        manifest.k_hat = m.k;
        manifest.tau_sq = m.tau_sq;
        manifest.rho = m.rho;
        manifest.gamma_n = m.gamma_n;
    }

    void finish() {
        if (manifest_path.empty()) return;
        manifest.finished_utc = utc_timestamp();
        save_manifest(manifest_path, manifest);
    }
};

void emit_error(std::ostream& err, std::string_view code, const std::string& message) {
    err << json{{"error", code}, {"message", message}}.dump() << '\n';
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        return dispatch(args, out, err);
    } catch (const Error& e) {
        emit_error(err, to_string(e.code()), e.what());
        return 2;
    } catch (const std::exception& e) {
        emit_error(err, "InternalError", e.what());
        return 3;
    }
}

namespace {

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    if (!args.empty() && !args[0].empty() && args[0][0] != '-' &&
        std::find(kSubcommands.begin(), kSubcommands.end(), args[0]) == kSubcommands.end()) {
        throw Error(ErrorCode::UnknownSubcommand, "unknown subcommand '" + args[0] + "'");
    }

    CLI::App app{"Factor-analytic covariance estimation with coverage-corrected pseudo-posteriors", "fable"};
    app.require_subcommand(1);
    app.set_version_flag("--version", FABLE_VERSION);

    Run run{args, out, err, {}, {}, 0};
    run.manifest.argv = args;
    run.manifest.version = FABLE_VERSION;
    run.manifest.started_utc = utc_timestamp();
    std::function<void()> action;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--threads", run.threads, "Worker threads (0: FABLE_THREADS or all cores)")
            ->capture_default_str();
        sub->add_option("--manifest", run.manifest_path, "Write a run manifest here");
    };

    // fit
    DataArgs fit_data;
    FitArgs fit_args;
    std::string fit_output, fit_retained;
    auto* fit_cmd = app.add_subcommand("fit", "Fit the model and write the model artifact");
    add_data_options(fit_cmd, fit_data);
    add_fit_options(fit_cmd, fit_args);
    fit_cmd->add_option("--output,-o", fit_output, "Model artifact path")->required();
    fit_cmd->add_option("--retained", fit_retained, "Write the retained-column map (CSV) here");
    add_common(fit_cmd);
    fit_cmd->callback([&] {
        action = [&] {
            if (run.manifest_path.empty()) run.manifest_path = fit_output + ".manifest.json";
            const auto pre = load_data(fit_data);
            const auto model = fit(pre.data, to_fit_options(fit_args, run.threads));
            save_model(fit_output, model);
            run.record_input(fit_data.input);
            run.record_model(model);
            run.record_output(fit_output);
            if (!fit_retained.empty()) {
                Sink s(fit_retained, out);
                s.stream() << "position,original_column\n";
                for (std::size_t i = 0; i < pre.retained.size(); ++i) s.stream() << i << ',' << pre.retained[i] << '\n';
                s.close();
                run.record_output(fit_retained);
            }
            json config = fit_json(fit_args);
            config["data"] = data_json(fit_data);
            run.manifest.config_json = config.dump();
            out << json{{"model", fit_output}, {"n", model.n}, {"p", model.p}, {"k", model.k},
                        {"tau_sq", model.tau_sq}, {"rho", model.rho}, {"gamma_n", model.gamma_n}}
                       .dump()
                << '\n';
        };
    });

    // sample
    std::string sample_model, sample_output = "-", sample_format = "text";
    std::uint64_t sample_n0 = 0;
    std::optional<std::uint64_t> sample_seed;
    auto* sample_cmd = app.add_subcommand("sample", "Draw pseudo-posterior covariance samples");
    sample_cmd->add_option("--model", sample_model, "Model artifact")->required();
    sample_cmd->add_option("--n0", sample_n0, "Number of draws")->required();
    sample_cmd->add_option("--seed", sample_seed, "Master seed")->required();
    sample_cmd->add_option("--output,-o", sample_output, "Sample stream path (- for stdout)")->capture_default_str();
    sample_cmd->add_option("--sample-format", sample_format, "text or binary")->capture_default_str();
    add_common(sample_cmd);
    sample_cmd->callback([&] {
        action = [&] {
            const auto model = load_model(sample_model);
            const auto format = parse_sample_format(sample_format);
            Sink s(sample_output, out, format == SampleFormat::binary);
            SampleWriter writer(s.stream(), format);
            draw_samples(model, sample_n0, RngSpec{*sample_seed}, [&](const CovarianceSample& c) { writer.write(c); },
                         run.threads);
            s.close();
            run.record_input(sample_model);
            run.record_model(model);
            run.record_output(sample_output);
            run.manifest.seed = sample_seed;
            run.manifest.config_json = json{{"n0", sample_n0}, {"format", sample_format}}.dump();
        };
    });

    // mean
    std::string mean_model, mean_output = "-", mean_form = "factored", mean_variables, mean_pairs;
    auto* mean_cmd = app.add_subcommand("mean", "Write the pseudo-posterior mean");
    mean_cmd->add_option("--model", mean_model, "Model artifact")->required();
    mean_cmd->add_option("--form", mean_form, "factored (G0 and delta) or exact (entries)")->capture_default_str();
    mean_cmd->add_option("--variables", mean_variables, "Variables for --form exact, e.g. 0-9");
    mean_cmd->add_option("--pairs", mean_pairs, "Entries for --form exact, e.g. 0:1,2:2");
    mean_cmd->add_option("--output,-o", mean_output, "Output path (- for stdout)")->capture_default_str();
    add_common(mean_cmd);
    mean_cmd->callback([&] {
        action = [&] {
            const auto model = load_model(mean_model);
            Sink s(mean_output, out);
            if (mean_form == "factored") {
                const auto mean = posterior_mean(model);
                s.stream() << "j,delta_sq";
                for (Index l = 0; l < mean.rank(); ++l) s.stream() << ",g" << l + 1;
                s.stream() << '\n';
                for (Index j = 0; j < mean.dim(); ++j) {
                    s.stream() << j << ',' << fmt(mean.diag(j));
                    for (Index l = 0; l < mean.rank(); ++l) s.stream() << ',' << fmt(mean.loadings(j, l));
                    s.stream() << '\n';
                }
            } else if (mean_form == "exact") {
                const auto pairs = resolve_pairs(mean_variables, mean_pairs, model.p);
                const auto values = posterior_mean_entries(model, pairs);
                s.stream() << "u,v,value\n";
                for (std::size_t e = 0; e < pairs.size(); ++e)
                    s.stream() << pairs[e].u << ',' << pairs[e].v << ',' << fmt(values[e]) << '\n';
            } else {
                throw Error(ErrorCode::InvalidArgument, "unknown --form '" + mean_form + "'");
            }
            s.close();
            run.record_input(mean_model);
            run.record_model(model);
            run.record_output(mean_output);
            run.manifest.config_json = json{{"form", mean_form}, {"variables", mean_variables}, {"pairs", mean_pairs}}.dump();
        };
    });

    // intervals
    std::string int_model, int_output = "-", int_method = "asymptotic", int_variables, int_pairs;
    double int_alpha = 0.05;
    std::uint64_t int_n0 = 1000;
    std::optional<std::uint64_t> int_seed;
    auto* int_cmd = app.add_subcommand("intervals", "Entrywise credible intervals");
    int_cmd->add_option("--model", int_model, "Model artifact")->required();
    int_cmd->add_option("--variables", int_variables, "Variables whose submatrix is reported, e.g. 0-99");
    int_cmd->add_option("--pairs", int_pairs, "Explicit entries, e.g. 0:1,2:2");
    int_cmd->add_option("--alpha", int_alpha, "1 - credible level")->capture_default_str();
    int_cmd->add_option("--method", int_method, "asymptotic or sample_quantile")->capture_default_str();
    int_cmd->add_option("--n0", int_n0, "Draws for sample_quantile")->capture_default_str();
    int_cmd->add_option("--seed", int_seed, "Master seed (sample_quantile only)");
    int_cmd->add_option("--output,-o", int_output, "Output path (- for stdout)")->capture_default_str();
    add_common(int_cmd);
    int_cmd->callback([&] {
        action = [&] {
            const auto model = load_model(int_model);
            const auto method = parse_interval_method(int_method);
            if (method == IntervalMethod::sample_quantile && !int_seed) {
                throw Error(ErrorCode::InvalidArgument, "--seed is required for sample_quantile intervals");
            }
            const auto pairs = resolve_pairs(int_variables, int_pairs, model.p);
            const auto grid = credible_intervals(model, pairs, int_alpha, method, int_n0,
                                                 RngSpec{int_seed.value_or(0)}, run.threads);
            Sink s(int_output, out);
            write_interval_grid(s.stream(), grid);
            s.close();
            run.record_input(int_model);
            run.record_model(model);
            run.record_output(int_output);
            run.manifest.seed = int_seed;
            run.manifest.config_json = json{{"alpha", int_alpha}, {"method", int_method}, {"n0", int_n0},
                                            {"variables", int_variables}, {"pairs", int_pairs}}
                                           .dump();
        };
    });

    // diagnose
    std::string diag_model, diag_pve;
    DataArgs diag_data;
    double diag_alpha = 0.05;
    auto* diag_cmd = app.add_subcommand("diagnose", "Fitted log-likelihood, variance explained, predictive coverage");
    diag_cmd->add_option("--model", diag_model, "Model artifact")->required();
    add_data_options(diag_cmd, diag_data);
    diag_cmd->add_option("--alpha", diag_alpha, "Predictive interval level is 1 - alpha")->capture_default_str();
    diag_cmd->add_option("--pve-output", diag_pve, "Per-variable variance explained (CSV)");
    add_common(diag_cmd);
    diag_cmd->callback([&] {
        action = [&] {
            const auto model = load_model(diag_model);
            const auto pre = load_data(diag_data);
            const double loglik = fitted_loglik(model, pre.data);
            const VectorXd pve = variance_explained(model);
            const double coverage = predictive_coverage(model, pre.data, diag_alpha);
            if (!diag_pve.empty()) {
                Sink s(diag_pve, out);
                s.stream() << "j,original_column,pve\n";
                for (Index j = 0; j < pve.size(); ++j)
                    s.stream() << j << ',' << pre.retained[static_cast<std::size_t>(j)] << ',' << fmt(pve(j)) << '\n';
                s.close();
                run.record_output(diag_pve);
            }
            out << json{{"fitted_loglik", loglik}, {"mean_pve", pve.mean()}, {"predictive_coverage", coverage},
                        {"alpha", diag_alpha}}
                       .dump()
                << '\n';
            run.record_input(diag_data.input);
            run.record_model(model);
            json config = data_json(diag_data);
            config["model"] = diag_model;
            config["alpha"] = diag_alpha;
            run.manifest.config_json = config.dump();
        };
    });

    // oos
    std::string oos_input, oos_train, oos_test, oos_targets, oos_extras, oos_transform = "none", oos_format = "auto";
    Index oos_n_test = 0;
    std::optional<std::uint64_t> oos_seed;
    FitArgs oos_fit;
    auto* oos_cmd = app.add_subcommand("oos", "Out-of-sample log-likelihood of target columns");
    oos_cmd->add_option("--input", oos_input, "Matrix to split into train and test rows");
    oos_cmd->add_option("--n-test", oos_n_test, "Rows held out from --input");
    oos_cmd->add_option("--seed", oos_seed, "Seed for the row split");
    oos_cmd->add_option("--train", oos_train, "Training matrix (instead of --input)");
    oos_cmd->add_option("--test", oos_test, "Test matrix (instead of --input)");
    oos_cmd->add_option("--targets", oos_targets, "Target columns, e.g. 0-99")->required();
    oos_cmd->add_option("--extras", oos_extras, "Extra training columns, e.g. 100-299");
    oos_cmd->add_option("--format", oos_format, "auto, text or binary")->capture_default_str();
    oos_cmd->add_option("--transform", oos_transform, "none or log2")->capture_default_str();
    add_fit_options(oos_cmd, oos_fit);
    add_common(oos_cmd);
    oos_cmd->callback([&] {
        action = [&] {
            const auto format = parse_matrix_format(oos_format);
            PreprocessOptions pre;
            pre.transform = parse_transform(oos_transform);
            pre.center = false;
            MatrixXd train, test;
            if (!oos_input.empty()) {
                if (!oos_train.empty() || !oos_test.empty()) {
                    throw Error(ErrorCode::InvalidArgument, "give --input or --train/--test, not both");
                }
                if (!oos_seed) throw Error(ErrorCode::InvalidArgument, "--seed is required to split --input");
                const MatrixXd raw = preprocess(load_matrix(oos_input, format).values, pre).data.values();
                auto split = split_rows(raw, oos_n_test, *oos_seed);
                train = std::move(split.train);
                test = std::move(split.test);
                run.record_input(oos_input);
            } else {
                if (oos_train.empty() || oos_test.empty()) {
                    throw Error(ErrorCode::InvalidArgument, "need --input or both --train and --test");
                }
                train = preprocess(load_matrix(oos_train, format).values, pre).data.values();
                test = preprocess(load_matrix(oos_test, format).values, pre).data.values();
                run.record_input(oos_train);
            }
            const auto targets = parse_index_list(oos_targets, train.cols());
            const auto extras = parse_index_list(oos_extras, train.cols());
            const double value = oos_loglik(DataMatrix(train), DataMatrix(test), targets, extras,
                                            to_fit_options(oos_fit, run.threads));
            out << json{{"oos_loglik", value},
                        {"n_train", train.rows()},
                        {"n_test", test.rows()},
                        {"targets", targets.size()},
                        {"extras", extras.size()}}
                       .dump()
                << '\n';
            run.manifest.seed = oos_seed;
            json config = fit_json(oos_fit);
            config["targets"] = oos_targets;
            config["extras"] = oos_extras;
            config["n_test"] = oos_n_test;
            config["transform"] = oos_transform;
            run.manifest.config_json = config.dump();
        };
    });

    // simulate
    std::string sim_preset, sim_records, sim_summary = "-";
    std::optional<std::uint64_t> sim_seed;
    std::optional<int> sim_replicates;
    Index sim_n = 500, sim_p = 1000, sim_tracked = 100;
    int sim_k = 10;
    std::uint64_t sim_n0 = 0;
    double sim_alpha = 0.05;
    bool sim_timings = false;
    auto* sim_cmd = app.add_subcommand("simulate", "Replicated simulation study");
    sim_cmd->add_option("--preset", sim_preset, "paper-table1: the four standard (n, p) cells");
    sim_cmd->add_option("--seed", sim_seed, "Master seed")->required();
    sim_cmd->add_option("--replicates,-R", sim_replicates, "Replicates per cell (default 100)");
    sim_cmd->add_option("--n", sim_n, "Rows (without --preset)")->capture_default_str();
    sim_cmd->add_option("--p", sim_p, "Columns (without --preset)")->capture_default_str();
    sim_cmd->add_option("--k-true", sim_k, "True factor count (without --preset)")->capture_default_str();
    sim_cmd->add_option("--tracked", sim_tracked, "Tracked submatrix size")->capture_default_str();
    sim_cmd->add_option("--alpha", sim_alpha, "Interval level is 1 - alpha")->capture_default_str();
    sim_cmd->add_option("--n0", sim_n0, "Also build sample-quantile intervals from this many draws")
        ->capture_default_str();
    sim_cmd->add_option("--records", sim_records, "Per-replicate records (CSV)");
    sim_cmd->add_option("--summary", sim_summary, "Per-cell summary (CSV, - for stdout)")->capture_default_str();
    sim_cmd->add_flag("--timings", sim_timings, "Include wall-clock columns");
    add_common(sim_cmd);
    sim_cmd->callback([&] {
        action = [&] {
            const int replicates = sim_replicates.value_or(100);
            std::vector<SimulationConfig> configs;
            if (!sim_preset.empty()) {
                configs = preset_configs(sim_preset, *sim_seed, replicates);
            } else {
                SimulationConfig c;
                c.name = "n" + std::to_string(sim_n) + "_p" + std::to_string(sim_p);
                c.id = 1;
                c.n = sim_n;
                c.p = sim_p;
                c.k_true = sim_k;
                c.R = replicates;
                c.seed = *sim_seed;
                configs.push_back(c);
            }
            for (auto& c : configs) {
                c.tracked_submatrix_size = std::min(sim_tracked, c.p);
                c.alpha = sim_alpha;
            }
            StudyOptions options;
            options.n0 = sim_n0;
            options.threads = run.threads;
            const auto result = run_study(configs, options);
            if (!sim_records.empty()) {
                Sink s(sim_records, out);
                write_records(s.stream(), result.records, sim_timings);
                s.close();
                run.record_output(sim_records);
            }
            Sink s(sim_summary, out);
            write_summaries(s.stream(), result.summaries, sim_timings);
            s.close();
            run.record_output(sim_summary);
            run.manifest.seed = sim_seed;
            run.manifest.config_json = json{{"preset", sim_preset}, {"replicates", replicates}, {"n0", sim_n0},
                                            {"alpha", sim_alpha},   {"tracked", sim_tracked}}
                                           .dump();
        };
    });

    // bench
    BenchmarkOptions bench;
    std::string bench_grid, bench_output = "-";
    auto* bench_cmd = app.add_subcommand("bench", "Runtime scaling in p at fixed n");
    bench_cmd->add_option("--n", bench.n, "Rows")->capture_default_str();
    bench_cmd->add_option("--p-grid", bench_grid, "Comma-separated p values (default 500..5000 by 500)");
    bench_cmd->add_option("--n0", bench.n0, "Draws per timing")->capture_default_str();
    bench_cmd->add_option("--repeats", bench.repeats, "Repeats per p (median reported)")->capture_default_str();
    bench_cmd->add_option("--seed", bench.seed, "Master seed")->capture_default_str();
    bench_cmd->add_option("--output,-o", bench_output, "Timing table (- for stdout)")->capture_default_str();
    add_common(bench_cmd);
    bench_cmd->callback([&] {
        action = [&] {
            if (!bench_grid.empty()) {
                for (Index p : parse_index_list(bench_grid, std::numeric_limits<Index>::max())) bench.p_grid.push_back(p);
            }
            bench.threads = run.threads;
            const auto table = runtime_benchmark(bench);
            Sink s(bench_output, out);
            write_benchmark(s.stream(), table);
            s.close();
            err << json{{"sample_slope", table.sample_slope},
                        {"total_slope", table.total_slope},
                        {"wall_clock_s", table.wall_clock_s}}
                       .dump()
                << '\n';
            run.record_output(bench_output);
            run.manifest.seed = bench.seed;
            run.manifest.config_json =
                json{{"n", bench.n}, {"p_grid", bench_grid}, {"n0", bench.n0}, {"repeats", bench.repeats}}.dump();
        };
    });

    // replay
    std::string replay_manifest;
    bool replay_check = false;
    auto* replay_cmd = app.add_subcommand("replay", "Re-run a command from its manifest");
    replay_cmd->add_option("manifest", replay_manifest, "Manifest path")->required();
    replay_cmd->add_flag("--check", replay_check, "Fail unless every recorded output is reproduced byte for byte");
    replay_cmd->callback([&] {
        action = [&] {
            const auto m = load_manifest(replay_manifest);
            if (!m.input_path.empty() && sha256_hex(m.input_path) != m.input_sha256) {
                throw Error(ErrorCode::IoError, "input '" + m.input_path + "' changed since the recorded run");
            }
            if (m.subcommand == "bench" && replay_check) {
                throw Error(ErrorCode::InvalidArgument, "bench output is wall-clock timing and cannot be checked");
            }
            const int code = fable::cli::run(m.argv, out, err);
            if (code != 0) throw Error(ErrorCode::InvalidArgument, "replayed command failed");
            if (!replay_check) return;
            for (const auto& o : m.outputs) {
                if (sha256_hex(o.path) != o.sha256) {
                    throw Error(ErrorCode::IoError, "replay produced a different '" + o.path + "'");
                }
            }
            err << json{{"replay", "identical"}, {"outputs", m.outputs.size()}}.dump() << '\n';
        };
    });

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << FABLE_VERSION << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        emit_error(err, "InvalidArgument", e.what());
        return 1;
    }

    if (!action) {
        out << app.help();
        return 1;
    }
    for (auto* sub : app.get_subcommands()) run.manifest.subcommand = sub->get_name();
    action();
    if (run.manifest.subcommand != "replay") run.finish();
    return 0;
}

}  // namespace

}  // namespace fable::cli
