#include "cityboost/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "cityboost/csv.hpp"
#include "cityboost/error.hpp"
#include "cityboost/kernels.hpp"
#include "cityboost/metrics.hpp"
#include "cityboost/pipeline.hpp"
#include "cityboost/syncity.hpp"

namespace cb::cli {

namespace {

constexpr const char* kDefaultWeights = "0.1,0.3,0.6";

struct TrainFlags {
    std::optional<int> num_leaves;
    std::optional<int> num_iters;
    std::optional<double> learning_rate;
    std::optional<int> min_data_in_leaf;
    std::optional<double> lambda_l2;
    std::optional<int> early_stopping_rounds;
    std::optional<int> max_bins;
    std::optional<double> feature_fraction;
    std::optional<double> bagging_fraction;
};

struct Options {
    int threads = 0;
    std::uint64_t seed = 7;

    // gen-city
    std::string out_dir;
    SynthConfig synth;

    // shared
    std::string world;
    std::string task;
    std::string config;
    std::string class_weights;
    std::string out;
    TrainFlags train_flags;
    bool no_pca = false;
    bool no_target_encoding = false;
    bool no_init_score = false;

    // train
    std::string data;
    std::string train;
    std::string valid;
    std::string init_train;
    std::string init_valid;
    std::string model;
    std::string log;

    // predict / evaluate
    std::string table;
    std::string init;
    std::string preds;

    // ablate / tune
    std::string arms = "ladder";
    std::string trace;
};

void add_train_flags(CLI::App* sub, TrainFlags& f) {
    sub->add_option("--num-leaves", f.num_leaves, "Leaf budget per tree");
    sub->add_option("--num-iters", f.num_iters, "Boosting iterations");
    sub->add_option("--learning-rate", f.learning_rate, "Shrinkage per iteration");
    sub->add_option("--min-data-in-leaf", f.min_data_in_leaf, "Minimum rows per leaf");
    sub->add_option("--lambda-l2", f.lambda_l2, "L2 penalty on leaf values");
    sub->add_option("--early-stopping-rounds", f.early_stopping_rounds, "Patience in iterations (0 disables)");
    sub->add_option("--max-bins", f.max_bins, "Histogram bins per feature");
    sub->add_option("--feature-fraction", f.feature_fraction, "Share of features sampled per iteration");
    sub->add_option("--bagging-fraction", f.bagging_fraction, "Share of rows sampled per iteration");
}

void add_config_flags(CLI::App* sub, Options& o) {
    sub->add_option("--config", o.config, "Run config file (key=value lines)");
    sub->add_option("--class-weights", o.class_weights, "Class weights green,yellow,red (default 0.1,0.3,0.6)");
}

void build(CLI::App& app, Options& o) {
    app.require_subcommand(1);
    app.add_option("--threads", o.threads, "Worker threads, 0 = OpenMP default")->capture_default_str();
    app.add_option("--seed", o.seed, "Seed for every random choice")->capture_default_str();

    auto* gen = app.add_subcommand("gen-city", "Generate a synthetic city");
    gen->add_option("--out", o.out_dir, "Output directory")->required();
    gen->add_option("--counters", o.synth.n_counters, "Number of counters")->capture_default_str();
    gen->add_option("--nodes", o.synth.n_nodes, "Number of nodes")->capture_default_str();
    gen->add_option("--edges", o.synth.n_edges, "Number of directed edges")->capture_default_str();
    gen->add_option("--supersegments", o.synth.n_supersegments, "Number of supersegments")->capture_default_str();
    gen->add_option("--weeks", o.synth.n_weeks, "Number of weeks")->capture_default_str();
    gen->add_option("--first-week", o.synth.first_week, "Index of the first week")->capture_default_str();
    gen->add_option("--amplitude", o.synth.peak_amplitude, "Rush-hour amplitude")->capture_default_str();
    gen->add_option("--noise-sd", o.synth.noise_sd, "Counter noise (vehicles per slot)")->capture_default_str();
    gen->add_option("--speed-noise-sd", o.synth.speed_noise_sd, "Log-scale speed noise")->capture_default_str();
    gen->add_option("--label-fraction", o.synth.label_fraction, "Share of labeled (edge, slot) pairs")
        ->capture_default_str();
    gen->add_option("--extent", o.synth.extent, "City side length in meters")->capture_default_str();

    auto* feat = app.add_subcommand("featurize", "Fit artifacts on train weeks and write feature tables");
    feat->add_option("--world", o.world, "City directory")->required();
    feat->add_option("--task", o.task, "core or extended");
    feat->add_option("--out", o.out_dir, "Output directory")->required();
    feat->add_flag("--no-pca", o.no_pca, "Drop principal-component columns");
    feat->add_flag("--no-target-encoding", o.no_target_encoding, "Drop target-encoding columns");
    add_config_flags(feat, o);

    auto* train = app.add_subcommand("train", "Train a boosted ensemble");
    train->add_option("--data", o.data, "featurize output directory (supplies the four table paths)");
    train->add_option("--train", o.train, "Training table");
    train->add_option("--valid", o.valid, "Validation table");
    train->add_option("--init-train", o.init_train, "Init scores for the training table");
    train->add_option("--init-valid", o.init_valid, "Init scores for the validation table");
    train->add_option("--task", o.task, "core or extended");
    train->add_option("--model", o.model, "Model output path")->required();
    train->add_option("--log", o.log, "Training log output path");
    train->add_flag("--no-init-score", o.no_init_score, "Start from zero scores");
    add_config_flags(train, o);
    add_train_flags(train, o.train_flags);

    auto* pred = app.add_subcommand("predict", "Score a feature table");
    pred->add_option("--model", o.model, "Model file")->required();
    pred->add_option("--table", o.table, "Feature table")->required();
    pred->add_option("--init", o.init, "Init scores aligned with the table");
    pred->add_option("--out", o.out, "Predictions output path")->required();

    auto* eval = app.add_subcommand("evaluate", "Score predictions against table labels");
    eval->add_option("--preds", o.preds, "Predictions file")->required();
    eval->add_option("--table", o.table, "Labeled feature table")->required();
    eval->add_option("--task", o.task, "core or extended")->required();
    eval->add_option("--class-weights", o.class_weights, "Class weights green,yellow,red (required for core)");
    eval->add_option("--out", o.out, "Report output path");

    auto* abl = app.add_subcommand("ablate", "Train one model per ablation arm");
    abl->add_option("--world", o.world, "City directory")->required();
    abl->add_option("--task", o.task, "core or extended");
    abl->add_option("--arms", o.arms,
                    "Comma-separated arms such as none,pca,pca+init_score, or 'ladder'")
        ->capture_default_str();
    abl->add_option("--out", o.out, "Report output path")->required();
    add_config_flags(abl, o);
    add_train_flags(abl, o.train_flags);

    auto* tune = app.add_subcommand("tune", "Stepwise hyperparameter search");
    tune->add_option("--world", o.world, "City directory")->required();
    tune->add_option("--task", o.task, "core or extended");
    tune->add_option("--out", o.out, "Tuned parameters output (key=value)")->required();
    tune->add_option("--trace", o.trace, "Trial trace output (CSV)");
    add_config_flags(tune, o);
    add_train_flags(tune, o.train_flags);

    auto* scatter = app.add_subcommand("export-pca-scatter", "Write the first two PC scores of every slot");
    scatter->add_option("--world", o.world, "City directory")->required();
    scatter->add_option("--out", o.out, "Output CSV")->required();
}

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    auto log = std::make_shared<spdlog::logger>("cityboost", sink);
    log->set_pattern("[%l] %v");
    const char* env = std::getenv("CB_LOG");
    const std::string level = env ? env : "info";
    if (level == "debug") {
        log->set_level(spdlog::level::debug);
    } else if (level == "warn") {
        log->set_level(spdlog::level::warn);
    } else {
        log->set_level(spdlog::level::info);
        if (level != "info") log->warn("CB_LOG='{}' not recognised, using info", level);
    }
    return log;
}

void print_resolved(const CLI::App& app, const CLI::App& sub, std::ostream& err) {
    auto show = [&](const CLI::App& a, const std::string& prefix) {
        for (const CLI::Option* opt : a.get_options()) {
            if (opt->get_lnames().empty() || opt->get_lnames()[0] == "help") continue;
            std::string value;
            if (opt->count() > 0) {
                const auto& res = opt->results();
                for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
            } else {
                value = opt->get_default_str();
            }
            err << "config: " << prefix << opt->get_lnames()[0] << '=' << value << '\n';
        }
    };
    show(app, "");
    show(sub, sub.get_name() + ".");
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error(ErrorKind::InvalidConfig, key + " must be true or false");
}

// Config keys understood by the training verbs; command-line flags win.
struct Resolved {
    gbdt::TrainParams params;
    std::array<double, 3> weights{};
    FeatureToggles toggles;
    std::optional<Task> task;
};

Resolved resolve(const Options& o) {
    Resolved r;
    KeyValues kv;
    if (!o.config.empty()) kv = read_key_values(o.config);
    static const std::set<std::string> extra = {"task", "class_weights", "use_pca", "use_init_score",
                                                "use_target_encoding"};
    const auto param_keys = params_to_key_values(gbdt::TrainParams{});
    for (const auto& [k, v] : kv) {
        if (!extra.contains(k) && !param_keys.contains(k)) {
            throw Error(ErrorKind::InvalidConfig, o.config + ": unknown key '" + k + "'");
        }
    }
    apply_params(r.params, kv);
    r.params.seed = o.seed;
    const auto& f = o.train_flags;
    if (f.num_leaves) r.params.num_leaves = *f.num_leaves;
    if (f.num_iters) r.params.num_iters = *f.num_iters;
    if (f.learning_rate) r.params.learning_rate = *f.learning_rate;
    if (f.min_data_in_leaf) r.params.min_data_in_leaf = *f.min_data_in_leaf;
    if (f.lambda_l2) r.params.lambda_l2 = *f.lambda_l2;
    if (f.early_stopping_rounds) r.params.early_stopping_rounds = *f.early_stopping_rounds;
    if (f.max_bins) r.params.max_bins = *f.max_bins;
    if (f.feature_fraction) r.params.feature_fraction = *f.feature_fraction;
    if (f.bagging_fraction) r.params.bagging_fraction = *f.bagging_fraction;
    r.params.validate();

    std::string weights = kDefaultWeights;
    if (kv.contains("class_weights")) weights = kv.at("class_weights");
    if (!o.class_weights.empty()) weights = o.class_weights;
    r.weights = parse_class_weights(weights);

    if (kv.contains("use_pca")) r.toggles.pca = parse_bool("use_pca", kv.at("use_pca"));
    if (kv.contains("use_init_score")) r.toggles.init_score = parse_bool("use_init_score", kv.at("use_init_score"));
    if (kv.contains("use_target_encoding")) {
        r.toggles.target_encoding = parse_bool("use_target_encoding", kv.at("use_target_encoding"));
    }
    if (o.no_pca) r.toggles.pca = false;
    if (o.no_target_encoding) r.toggles.target_encoding = false;
    if (o.no_init_score) r.toggles.init_score = false;

    if (kv.contains("task")) r.task = parse_task(kv.at("task"));
    if (!o.task.empty()) r.task = parse_task(o.task);
    return r;
}

Task require_task(const Resolved& r) {
    if (!r.task) throw Error(ErrorKind::Usage, "--task (or task= in --config) is required");
    return *r.task;
}

void print_params(const Resolved& r, std::ostream& err) {
    for (const auto& [k, v] : params_to_key_values(r.params)) err << "config: param." << k << '=' << v << '\n';
    err << "config: class_weights=" << csv::format_double(r.weights[0]) << ',' << csv::format_double(r.weights[1])
        << ',' << csv::format_double(r.weights[2]) << '\n';
    err << "config: toggles=" << arm_name(r.toggles, false) << '\n';
}

PipelineConfig pipeline_config(Task task) {
    PipelineConfig c;
    c.task = task;
    return c;
}

int run_gen(Options& o, spdlog::logger& log, std::ostream& out) {
    o.synth.seed = o.seed;
    const SynthWorld world = generate(o.synth);
    save_world(world, o.out_dir);
    log.info("wrote {} counters, {} edges, {} supersegments, {} slots to {}", world.graph.counters().size(),
             world.graph.edges().size(), world.graph.supersegments().size(), world.n_slots(), o.out_dir);
    out << "slots=" << world.n_slots() << " labels=" << world.congestion_labels.size() << '\n';
    return 0;
}

int run_featurize(const Options& o, spdlog::logger& log, std::ostream& out, std::ostream& err) {
    const Resolved r = resolve(o);
    print_params(r, err);
    const Task task = require_task(r);
    const SynthWorld world = load_world(o.world);
    const PipelineConfig cfg = pipeline_config(task);
    if (world.weeks().size() < cfg.min_split_weeks) {
        log.warn("only {} weeks; applying the interleaved rule with a relaxed minimum", world.weeks().size());
    }
    const PreparedData d = prepare(world, cfg, r.weights);
    const std::filesystem::path dir(o.out_dir);
    write_table(apply_toggles(d.train, d.artifacts, r.toggles), dir / "train.csv");
    write_table(apply_toggles(d.valid, d.artifacts, r.toggles), dir / "valid.csv");
    write_init(d.train, d.init_train, dir / "init_train.csv");
    write_init(d.valid, d.init_valid, dir / "init_valid.csv");
    csv::open_output(dir / "artifacts.json") << to_json(d.artifacts).dump(1) << '\n';
    log.info("train rows {}, valid rows {}, {} features", d.train.n_rows(), d.valid.n_rows(), d.train.n_features());
    out << "train_rows=" << d.train.n_rows() << " valid_rows=" << d.valid.n_rows() << '\n';
    return 0;
}

int run_train(const Options& o, spdlog::logger& log, std::ostream& out, std::ostream& err) {
    const Resolved r = resolve(o);
    print_params(r, err);
    const Task task = require_task(r);
    const std::filesystem::path data(o.data);
    auto pick = [&](const std::string& given, const char* file) -> std::string {
        if (!given.empty()) return given;
        if (!o.data.empty()) return (data / file).string();
        return {};
    };
    const std::string train_path = pick(o.train, "train.csv");
    const std::string valid_path = pick(o.valid, "valid.csv");
    if (train_path.empty()) throw Error(ErrorKind::Usage, "--train or --data is required");
    const FeatureTable train = read_table(train_path);
    const FeatureTable valid = valid_path.empty() ? FeatureTable{} : read_table(valid_path);
    Eigen::MatrixXd init_train;
    Eigen::MatrixXd init_valid;
    if (r.toggles.init_score) {
        const std::string it = pick(o.init_train, "init_train.csv");
        const std::string iv = pick(o.init_valid, "init_valid.csv");
        if (!it.empty()) init_train = read_init(it);
        if (!iv.empty() && !valid_path.empty()) init_valid = read_init(iv);
    }
    const auto result = gbdt::train(train, valid, init_train, init_valid, objective_for(task, r.weights), r.params);
    gbdt::save_model(result.model, o.model);
    if (!o.log.empty()) gbdt::write_log(result.log, o.log);
    const auto& best = result.log[static_cast<std::size_t>(result.best_iteration)];
    log.info("best iteration {} of {}", result.best_iteration, result.log.size() - 1);
    out << "best_iteration=" << result.best_iteration << " train_metric=" << csv::format_double(best.train_metric)
        << " valid_metric=" << csv::format_double(best.valid_metric) << '\n';
    return 0;
}

int run_predict(const Options& o, std::ostream& out) {
    const gbdt::TreeEnsemble model = gbdt::load_model(o.model);
    const FeatureTable table = read_table(o.table);
    const Eigen::MatrixXd init = o.init.empty() ? Eigen::MatrixXd() : read_init(o.init);
    const Eigen::MatrixXd preds = model.objective.kind == gbdt::ObjectiveKind::WeightedSoftmaxCE
                                      ? gbdt::predict_proba(model, table, init)
                                      : gbdt::predict(model, table, init);
    write_predictions(table, preds, o.out);
    out << "rows=" << preds.rows() << '\n';
    return 0;
}

int run_evaluate(const Options& o, std::ostream& out) {
    const Task task = parse_task(o.task);
    std::vector<RowKey> keys;
    const Eigen::MatrixXd preds = read_predictions(o.preds, &keys);
    const FeatureTable table = read_table(o.table);
    if (!table.has_labels()) throw Error(ErrorKind::SchemaError, o.table + ": no label column");
    if (keys.size() != table.n_rows()) throw Error(ErrorKind::SchemaMismatch, "prediction and table row counts differ");
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (keys[i].entity != table.keys[i].entity || keys[i].t != table.keys[i].t) {
            throw Error(ErrorKind::SchemaMismatch, "prediction row " + std::to_string(i + 1) + " does not match the table key");
        }
    }
    std::ostringstream report;
    double metric = 0.0;
    if (task == Task::Core) {
        if (o.class_weights.empty()) throw Error(ErrorKind::Usage, "evaluate --task core needs --class-weights");
        const auto w = parse_class_weights(o.class_weights);
        if (preds.cols() != 3) throw Error(ErrorKind::SchemaMismatch, "core predictions need three columns");
        metric = eval_core(preds, table.labels, w);
        report << "# class_weights green=" << csv::format_double(w[0]) << " yellow=" << csv::format_double(w[1])
               << " red=" << csv::format_double(w[2]) << '\n';
        report << "task,n_rows,weighted_cross_entropy\n";
    } else {
        const Eigen::VectorXd p = preds.col(0);
        metric = eval_extended(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), table.labels);
        report << "task,n_rows,mean_absolute_error\n";
    }
    report << task_name(task) << ',' << table.n_rows() << ',' << csv::format_double(metric) << '\n';
    out << report.str();
    if (!o.out.empty()) csv::open_output(o.out) << report.str();
    return 0;
}

std::vector<AblationArm> parse_arms(const std::string& spec, Task task) {
    if (spec == "ladder") return ladder_arms(task);
    std::vector<AblationArm> arms;
    for (auto part : csv::split(spec, ',')) arms.push_back(parse_arm(std::string(part)));
    return arms;
}

int run_ablate(const Options& o, spdlog::logger& log, std::ostream& out, std::ostream& err) {
    const Resolved r = resolve(o);
    print_params(r, err);
    const Task task = require_task(r);
    const auto arms = parse_arms(o.arms, task);
    const SynthWorld world = load_world(o.world);
    const PreparedData d = prepare(world, pipeline_config(task), r.weights);
    const AblationReport report = ablate(d, arms, objective_for(task, r.weights), r.params);
    write_ablation(report, o.out);
    for (const auto& row : report.rows) {
        log.info("{}: valid metric {:.6f} at iteration {}", row.arm, row.valid_metric, row.best_iteration);
    }
    out << "arms=" << report.rows.size() << '\n';
    return 0;
}

int run_tune(const Options& o, spdlog::logger& log, std::ostream& out, std::ostream& err) {
    const Resolved r = resolve(o);
    print_params(r, err);
    const Task task = require_task(r);
    const SynthWorld world = load_world(o.world);
    const PreparedData d = prepare(world, pipeline_config(task), r.weights);
    const auto objective = objective_for(task, r.weights);
    const auto space = default_tune_space(r.params);
    const TuneResult result = stepwise_tune(r.params, space, [&](const gbdt::TrainParams& p) {
        const auto res = train_arm(d, r.toggles, objective, p);
        const double m = res.log[static_cast<std::size_t>(res.best_iteration)].valid_metric;
        log.debug("trial valid metric {:.6f}", m);
        return m;
    });
    write_key_values(params_to_key_values(result.params), o.out);
    if (!o.trace.empty()) write_tune_trace(result, o.trace);
    out << "trials=" << result.trace.size() << " valid_metric=" << csv::format_double(result.metric) << '\n';
    return 0;
}

int run_scatter(const Options& o, std::ostream& out) {
    const SynthWorld world = load_world(o.world);
    const auto points = pca_scatter(world, PipelineConfig{});
    write_scatter(points, o.out);
    out << "points=" << points.size() << " silhouette=" << csv::format_double(silhouette(points)) << '\n';
    return 0;
}

int run(CLI::App& app, Options& o, std::ostream& out, std::ostream& err) {
    auto log = make_logger(err);
    kernels::set_num_threads(o.threads);
    CLI::App* sub = app.get_subcommands().front();
    print_resolved(app, *sub, err);
    const std::string verb = sub->get_name();
    if (verb == "gen-city") return run_gen(o, *log, out);
    if (verb == "featurize") return run_featurize(o, *log, out, err);
    if (verb == "train") return run_train(o, *log, out, err);
    if (verb == "predict") return run_predict(o, out);
    if (verb == "evaluate") return run_evaluate(o, out);
    if (verb == "ablate") return run_ablate(o, *log, out, err);
    if (verb == "tune") return run_tune(o, *log, out, err);
    if (verb == "export-pca-scatter") return run_scatter(o, out);
    throw Error(ErrorKind::Usage, "unknown verb " + verb);
}

int exit_code(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::Usage: return 2;
        case ErrorCategory::Data: return 3;
        case ErrorCategory::Internal: return 4;
    }
    return 4;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app("Traffic forecasting from sparse counters with boosted trees", "cityboost");
    Options o;
    build(app, o);
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: UsageError/Usage: " << e.what() << '\n';
        return 2;
    }
    try {
        return run(app, o, out, err);
    } catch (const Error& e) {
        err << "error: " << e.tag() << ": " << e.what() << '\n';
        return exit_code(category_of(e.kind()));
    } catch (const std::exception& e) {
        err << "error: InternalError/Internal: " << e.what() << '\n';
        return 4;
    }
}

std::string full_help() {
    CLI::App app("Traffic forecasting from sparse counters with boosted trees", "cityboost");
    Options o;
    build(app, o);
    std::string text = app.help();
    for (const CLI::App* sub : app.get_subcommands({})) text += "\n" + sub->help();
    return text;
}

}  // namespace cb::cli
