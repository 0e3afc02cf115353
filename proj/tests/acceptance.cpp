// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

#include "cityboost/cli.hpp"
#include "cityboost/counterfeat.hpp"
#include "cityboost/gbdt.hpp"
#include "cityboost/metrics.hpp"
#include "cityboost/pipeline.hpp"
#include "cityboost/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cb;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

const std::array<double, 3> kWeights{0.1, 0.3, 0.6};

// The seeded world shared by the ablation criteria.
SynthConfig default_world_config() {
    SynthConfig c;
    c.seed = 7;
    c.n_counters = 50;
    c.n_edges = 500;
    c.n_supersegments = 20;
    c.n_weeks = 4;
    return c;
}

const PreparedData& core_data() {
    static const PreparedData data = prepare(generate(default_world_config()), PipelineConfig{}, kWeights);
    return data;
}

gbdt::TrainResult train_core_arm(const char* arm) {
    return train_arm(core_data(), parse_arm(arm).toggles, objective_for(Task::Core, kWeights), gbdt::TrainParams{});
}

double final_valid(const gbdt::TrainResult& r) { return r.log[static_cast<std::size_t>(r.best_iteration)].valid_metric; }

Outcome gradients() {
    Rng rng(101);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const std::array<double, 3> z{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
        const std::array<double, 3> w{rng.uniform(0.1, 2), rng.uniform(0.1, 2), rng.uniform(0.1, 2)};
        const int y = static_cast<int>(rng.below(3));
        const auto gh = gbdt::grad_hess_wce(z, y, w);
        const auto fg = oracle::wce_fd_gradient(z, y, w);
        const auto fh = oracle::wce_fd_hessian_diag(z, y, w);
        for (int c = 0; c < 3; ++c) {
            worst = std::max(worst, oracle::rel_err(gh.g[c], fg[c]));
            worst = std::max(worst, oracle::rel_err(gh.h[c], fh[c]));
        }
    }
    for (int i = 0; i < 1000; ++i) {
        const double label = rng.uniform(-100, 100);
        double pred = rng.uniform(-100, 100);
        while (std::abs(pred - label) < 1e-3) pred = rng.uniform(-100, 100);
        worst = std::max(worst, oracle::rel_err(gbdt::grad_hess_mae(pred, label).g, oracle::mae_fd_gradient(pred, label)));
    }
    return {worst < 1e-4, "max relative error " + fmt("%.2e", worst) + " (limit 1e-4)"};
}

Outcome pca_oracle() {
    Rng rng(202);
    double worst_val = 0.0;
    double worst_ratio = 0.0;
    double worst_orth = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto k = static_cast<Eigen::Index>(2 + rng.below(9));
        const auto t = static_cast<Eigen::Index>(3 + rng.below(48));
        Eigen::MatrixXd x(k, t);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(0, 10);
        const auto m = fit_pca(x, static_cast<int>(k));
        const auto want = oracle::jacobi_eigen(oracle::covariance(x));
        double total = 0.0;
        for (double v : want.values) total += v;
        double cum = 0.0;
        for (Eigen::Index c = 0; c < k; ++c) {
            const double ev = std::max(0.0, want.values[static_cast<std::size_t>(c)]);
            cum += want.values[static_cast<std::size_t>(c)];
            worst_val = std::max(worst_val, std::abs(m.eigenvalues(c) - ev));
            worst_ratio = std::max(worst_ratio, std::abs(explained_variance(m, static_cast<int>(c + 1)) - cum / total));
        }
        const Eigen::MatrixXd gram = m.components.transpose() * m.components;
        worst_orth = std::max(worst_orth, (gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff());
    }
    const bool ok = worst_val <= 1e-8 && worst_ratio <= 1e-8 && worst_orth <= 1e-8;
    return {ok, "eigenvalue " + fmt("%.2e", worst_val) + ", ratio " + fmt("%.2e", worst_ratio) + ", orthonormality " +
                    fmt("%.2e", worst_orth) + " (limit 1e-8)"};
}

Outcome weighting() {
    Rng rng(303);
    double worst_row = 0.0;
    double worst_ctx = 0.0;
    for (int layout = 0; layout < 100; ++layout) {
        const auto k = static_cast<int>(2 + rng.below(29));
        std::vector<Point> pts;
        std::vector<Id> ids;
        for (int i = 0; i < k; ++i) {
            pts.push_back({rng.uniform(0, 5000), rng.uniform(0, 5000)});
            ids.push_back(i);
        }
        Eigen::MatrixXd v(k, 12);
        for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = rng.uniform(0, 500);
        const int knn = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(k - 1)));
        for (const auto& b : {build_weight_matrix(pts, ids, WeightMethod::SoftmaxInverseDistance),
                              build_weight_matrix(pts, ids, WeightMethod::KnnUniform, knn)}) {
            worst_row = std::max(worst_row, (b.weights.rowwise().sum().array() - 1.0).abs().maxCoeff());
            worst_ctx = std::max(worst_ctx, (spatial_context(v, b) - oracle::context(v, b.weights)).cwiseAbs().maxCoeff());
        }
    }
    const bool ok = worst_row <= 1e-9 && worst_ctx <= 1e-9;
    return {ok, "row sum " + fmt("%.2e", worst_row) + ", context " + fmt("%.2e", worst_ctx) + " (limit 1e-9)"};
}

Outcome exact_fit() {
    FeatureTable mae;
    mae.names = {"x"};
    mae.columns.resize(1);
    FeatureTable cls = mae;
    Rng rng(404);
    for (int i = 0; i < 600; ++i) {
        // Perfectly predictive after binning: 40 distinct values, one label each.
        const int level = static_cast<int>(rng.below(40));
        mae.columns[0].push_back(level);
        mae.labels.push_back(100.0 + 45.0 * level);
        mae.keys.push_back({i, 1, 0, i});
        const int c = static_cast<int>(rng.below(3));
        cls.columns[0].push_back(c + rng.uniform(0, 0.5));
        cls.labels.push_back(c);
        cls.keys.push_back({i, 1, 0, i});
    }
    gbdt::TrainParams p;
    p.num_iters = 200;
    p.min_data_in_leaf = 5;
    const auto r_mae = gbdt::train(mae, {}, {}, {}, {gbdt::ObjectiveKind::MAE, {}}, p);
    const double scale = 100.0 + 45.0 * 39;
    const double mae_ratio = r_mae.log.back().train_metric / scale;
    const auto r_ce = gbdt::train(cls, {}, {}, {}, gbdt::ObjectiveConfig{}, p);
    const double ce = r_ce.log.back().train_metric;
    return {mae_ratio < 1e-3 && ce < 0.01,
            "MAE/scale " + fmt("%.2e", mae_ratio) + " (limit 1e-3), weighted CE " + fmt("%.2e", ce) + " (limit 0.01)"};
}

Outcome init_direction() {
    const auto zero = train_core_arm("pca");
    const auto init = train_core_arm("pca+init_score");
    const double zero0 = zero.log[0].valid_metric;
    const double init0 = init.log[0].valid_metric;
    const double zero_final = final_valid(zero);
    const double init_final = final_valid(init);
    const bool ok = init0 < zero0 && init_final <= zero_final + 1e-6;
    return {ok, "iteration 0: " + fmt("%.6f", init0) + " with h0 vs " + fmt("%.6f", zero0) + " zero; final " +
                    fmt("%.6f", init_final) + " vs " + fmt("%.6f", zero_final)};
}

Outcome pca_direction() {
    const double with = final_valid(train_core_arm("pca+init_score"));
    const double without = final_valid(train_core_arm("init_score"));
    return {with < without, "final valid weighted CE " + fmt("%.6f", with) + " with PCs vs " + fmt("%.6f", without) +
                                " without"};
}

Outcome scatter() {
    const auto world = generate(default_world_config());
    const double s = silhouette(pca_scatter(world, PipelineConfig{}));
    return {s > 0.2, "silhouette " + fmt("%.4f", s) + " (limit 0.2)"};
}

Outcome leakage() {
    const auto& d = core_data();
    const auto& enc = *d.artifacts.class_encoding;
    std::size_t violations = 0;
    std::size_t scanned = 0;
    for (const FeatureTable* t : {&d.train, &d.valid}) {
        const auto& level = t->column("enc_level");
        const auto& regime = t->column("regime");
        const auto& log_count = t->column("enc_log_count");
        for (std::size_t i = 0; i < t->n_rows(); ++i) {
            ++scanned;
            const auto it = enc.entries.find({t->keys[i].entity, static_cast<int>(regime[i])});
            const bool thin = it == enc.entries.end() || it->second.count < enc.min_count;
            if (thin && level[i] == static_cast<double>(ServedLevel::Entry)) ++violations;
            if (level[i] != static_cast<double>(ServedLevel::Global) &&
                std::expm1(log_count[i]) < static_cast<double>(enc.min_count) - 0.5) {
                ++violations;
            }
        }
    }
    return {violations == 0, std::to_string(violations) + " violations in " + std::to_string(scanned) + " rows"};
}

Outcome determinism() {
    testutil::TempDir dir("accept_det");
    std::ostringstream sink;
    const auto city = (dir / "city").string();
    const auto feat = (dir / "feat").string();
    if (cli::dispatch({"gen-city", "--out", city}, sink, sink) != 0 ||
        cli::dispatch({"featurize", "--world", city, "--task", "core", "--out", feat}, sink, sink) != 0) {
        return {false, "could not prepare data"};
    }
    std::vector<std::string> models;
    for (const char* threads : {"1", "4"}) {
        const auto model = (dir / (std::string("model_") + threads + ".json")).string();
        const int code = cli::dispatch({"--threads", threads, "--seed", "11", "train", "--data", feat, "--task", "core",
                                        "--bagging-fraction", "0.8", "--feature-fraction", "0.8", "--model", model},
                                       sink, sink);
        if (code != 0) return {false, "train exited with " + std::to_string(code)};
        models.push_back(testutil::slurp(model));
    }
    kernels::set_num_threads(0);
    const bool same = models[0] == models[1] && !models[0].empty();
    return {same, same ? "model files identical (" + std::to_string(models[0].size()) + " bytes, 1 vs 4 threads)"
                       : "model files differ"};
}

Outcome split() {
    const auto s = interleaved_split({23, 25, 27, 29, 31, 33, 35, 37, 39, 41, 43, 45, 47, 49, 51, 53});
    std::string got;
    for (int w : s.valid_weeks) got += (got.empty() ? "" : ",") + std::to_string(w);
    return {s.valid_weeks == std::vector<int>{25, 33, 41, 49}, "validation weeks [" + got + "]"};
}

Outcome metrics() {
    Rng rng(505);
    const int n = 200;
    std::vector<double> labels(n);
    Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, 3);
    for (int i = 0; i < n; ++i) {
        labels[static_cast<std::size_t>(i)] = static_cast<double>(rng.below(3));
        onehot(i, static_cast<int>(labels[static_cast<std::size_t>(i)])) = 1.0;
    }
    const double zero = eval_core(onehot, labels, kWeights);
    const double uniform = eval_core(Eigen::MatrixXd::Constant(n, 3, 1.0 / 3.0), labels, kWeights);
    std::vector<double> a(1000);
    std::vector<double> b(1000);
    for (auto& v : a) v = rng.uniform(0, 2000);
    for (auto& v : b) v = rng.uniform(0, 2000);
    const double mae_err = std::abs(eval_extended(a, b) - oracle::mean_abs(a, b));
    const bool ok = zero == 0.0 && std::abs(uniform - std::log(3.0)) <= 1e-9 && mae_err <= 1e-12;
    return {ok, "one-hot " + fmt("%.1e", std::abs(zero)) + ", uniform - ln 3 = " + fmt("%.1e", uniform - std::log(3.0)) +
                    ", MAE vs loop " + fmt("%.1e", mae_err)};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
        double limit_seconds;  // 0 = no runtime bound
    };
    const std::vector<Criterion> criteria{
        {1, "gradient correctness", gradients, 5.0},
        {2, "PCA oracle equivalence", pca_oracle, 0.0},
        {3, "weighting matrices", weighting, 0.0},
        {4, "exact fit", exact_fit, 0.0},
        {5, "init-score ablation direction", init_direction, 120.0},
        {6, "PCA ablation direction", pca_direction, 240.0},
        {7, "peak vs off-peak PC separation", scatter, 0.0},
        {8, "leakage guard", leakage, 0.0},
        {9, "determinism across thread counts", determinism, 0.0},
        {10, "split conformance", split, 0.0},
        {11, "metric identities", metrics, 0.0},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::string timing = fmt("%.2f s", secs);
        if (c.limit_seconds > 0.0) {
            timing += fmt(" (limit %.0f s)", c.limit_seconds);
            if (secs >= c.limit_seconds) {
                o.pass = false;
                o.detail += "; too slow";
            }
        }
        failures += o.pass ? 0 : 1;
        std::printf("%s [%d] %s: %s, %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), timing.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
