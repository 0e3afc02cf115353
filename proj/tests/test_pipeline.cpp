#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "cityboost/error.hpp"
#include "cityboost/metrics.hpp"
#include "cityboost/pipeline.hpp"
#include "cityboost/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cb;

namespace {

const SynthWorld& small_world() {
    static const SynthWorld w = generate(testutil::small_config(7));
    return w;
}

gbdt::TrainParams quick_params() {
    gbdt::TrainParams p;
    p.num_iters = 10;
    p.num_leaves = 7;
    return p;
}

const std::array<double, 3> kWeights{0.1, 0.3, 0.6};

}  // namespace

TEST(Split, MelbourneWeeks) {
    const auto s = interleaved_split({23, 25, 27, 29, 31, 33, 35, 37, 39, 41, 43, 45, 47, 49, 51, 53});
    EXPECT_EQ(s.valid_weeks, (std::vector<int>{25, 33, 41, 49}));
    EXPECT_EQ(s.train_weeks.size(), 12u);
}

TEST(Split, FiveWeeks) {
    const auto s = interleaved_split({5, 4, 3, 2, 1});
    EXPECT_EQ(s.valid_weeks, std::vector<int>{2});
    EXPECT_EQ(s.train_weeks, (std::vector<int>{1, 3, 4, 5}));
}

TEST(Split, TooFewWeeks) {
    try {
        interleaved_split({1, 2, 3, 4});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::TooFewWeeks);
    }
}

TEST(Split, PartitionsAnyInput) {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        std::set<int> weeks;
        const auto n = 5 + rng.below(30);
        while (weeks.size() < n) weeks.insert(static_cast<int>(rng.below(100)));
        const std::vector<int> in(weeks.begin(), weeks.end());
        const auto s = interleaved_split(in);
        std::set<int> all(s.train_weeks.begin(), s.train_weeks.end());
        for (int v : s.valid_weeks) EXPECT_TRUE(all.insert(v).second);
        EXPECT_EQ(all, weeks);
    }
}

TEST(Split, ShortWorldsFallBackToTwoWeeks) {
    const auto s = split_for_world(small_world(), PipelineConfig{});
    EXPECT_EQ(s.train_weeks, std::vector<int>{1});
    EXPECT_EQ(s.valid_weeks, std::vector<int>{2});
}

TEST(Assembly, SchemaSizes) {
    PipelineConfig cfg;
    const auto split = split_for_world(small_world(), cfg);
    const auto core = fit_artifacts(small_world(), split, cfg);
    EXPECT_EQ(schema_for(core).size(), 44u);
    cfg.task = Task::Extended;
    const auto ext = fit_artifacts(small_world(), split, cfg);
    EXPECT_EQ(schema_for(ext).size(), 31u);
}

TEST(Assembly, OneLabelOneRow) {
    auto w = small_world();
    LabelRecord keep{};
    for (const auto& l : w.congestion_labels) {
        if (l.t > 0 && w.week_of(l.t) == 2) {
            keep = l;
            break;
        }
    }
    PipelineConfig cfg;
    const auto a = fit_artifacts(w, split_for_world(w, cfg), cfg);
    w.congestion_labels = {keep};
    const std::vector<int> weeks{2};
    const auto t = assemble_core(w, a, weeks);
    ASSERT_EQ(t.n_rows(), 1u);
    EXPECT_EQ(t.n_features(), 44u);
    EXPECT_EQ(t.keys[0].entity, keep.edge);
    EXPECT_EQ(t.keys[0].t, keep.t);
    EXPECT_EQ(t.labels[0], keep.cls);
}

TEST(Assembly, CoreRowsUsePrecedingCounterSlot) {
    const auto& w = small_world();
    PipelineConfig cfg;
    const auto a = fit_artifacts(w, split_for_world(w, cfg), cfg);
    const std::vector<int> weeks{1, 2};
    const auto t = assemble_core(w, a, weeks);
    const auto [last, sum] = window_matrices(w.volumes, cfg.window);
    const auto& nc_last = t.column("nc_last");
    const auto& nc_sum = t.column("nc_sum");
    const auto& pc1 = t.column("pc_last_1");
    for (std::size_t r = 0; r < t.n_rows(); r += 37) {
        const auto& edge = w.graph.edge(t.keys[r].entity);
        const auto c = static_cast<Eigen::Index>(
            w.graph.counter_index(nearest_counter(edge_representative_point(edge, w.graph), w.graph)));
        const int src = t.keys[r].t - 1;
        EXPECT_EQ(nc_last[r], last(c, src));
        EXPECT_EQ(nc_sum[r], sum(c, src));
        EXPECT_NEAR(pc1[r], project_pca(a.pca_last, last.col(src))(0), 1e-9);
    }
    std::size_t labeled = 0;
    for (const auto& l : w.congestion_labels) labeled += l.t >= 1;
    EXPECT_EQ(t.n_rows(), labeled);
}

TEST(Assembly, ExtendedRowCount) {
    auto cfg_w = testutil::small_config(5);
    cfg_w.n_supersegments = 3;
    cfg_w.n_weeks = 2;
    const auto w = generate(cfg_w);
    PipelineConfig cfg;
    cfg.task = Task::Extended;
    const auto a = fit_artifacts(w, split_for_world(w, cfg), cfg);
    const std::vector<int> first{1};
    EXPECT_EQ(assemble_extended(w, a, first).n_rows(), 3u * (kSlotsPerWeek - 1));
    const std::vector<int> second{2};
    EXPECT_EQ(assemble_extended(w, a, second).n_rows(), 3u * kSlotsPerWeek);

    auto holes = w;
    holes.etas(0, 5) = std::nan("");
    EXPECT_EQ(assemble_extended(holes, a, first).n_rows(), 3u * (kSlotsPerWeek - 1) - 1);
}

TEST(Assembly, ReversedSupersegmentKeepsMedoidAndLength) {
    const auto& g = small_world().graph;
    const auto& ss = g.supersegments()[0];
    Supersegment rev{ss.id, {ss.nodes.rbegin(), ss.nodes.rend()}};
    const auto a = supersegment_geometry(ss, g);
    const auto b = supersegment_geometry(rev, g);
    EXPECT_EQ(a.start, b.end);
    EXPECT_EQ(a.end, b.start);
    EXPECT_NEAR(a.length, b.length, 1e-9);
    EXPECT_EQ(a.medoid, b.medoid);
}

TEST(Leakage, FittersOnlySeeTrainWeeks) {
    const auto& w = small_world();
    PipelineConfig cfg;
    const auto split = split_for_world(w, cfg);
    for (Task task : {Task::Core, Task::Extended}) {
        cfg.task = task;
        std::vector<int> seen;
        FitObserver obs{[&](int t) { seen.push_back(t); }};
        fit_artifacts(w, split, cfg, &obs);
        ASSERT_FALSE(seen.empty());
        for (int t : seen) EXPECT_EQ(w.week_of(t), 1);
    }
}

TEST(Leakage, ValidationWeeksDoNotMoveArtifacts) {
    const auto& w = small_world();
    auto tampered = w;
    for (int t = kSlotsPerWeek; t < w.n_slots(); ++t) {
        tampered.volumes.values.col(t) *= 3.0;
        tampered.edge_speeds.col(t) *= 0.5;
        tampered.etas.col(t) *= 2.0;
    }
    for (auto& l : tampered.congestion_labels)
        if (w.week_of(l.t) == 2) l.cls = kRed;
    PipelineConfig cfg;
    const auto split = split_for_world(w, cfg);
    for (Task task : {Task::Core, Task::Extended}) {
        cfg.task = task;
        EXPECT_EQ(to_json(fit_artifacts(w, split, cfg)).dump(), to_json(fit_artifacts(tampered, split, cfg)).dump());
    }
}

TEST(Leakage, GuardedEntriesAreNeverServed) {
    const auto data = prepare(small_world(), PipelineConfig{}, kWeights);
    const auto& enc = *data.artifacts.class_encoding;
    const auto& level = data.train.column("enc_level");
    const auto& regime = data.train.column("regime");
    std::size_t violations = 0;
    for (std::size_t r = 0; r < data.train.n_rows(); ++r) {
        const auto it = enc.entries.find({data.train.keys[r].entity, static_cast<int>(regime[r])});
        const bool guarded = it == enc.entries.end() || it->second.count < enc.min_count;
        if (guarded && level[r] == static_cast<double>(ServedLevel::Entry)) ++violations;
    }
    EXPECT_EQ(violations, 0u);
}

TEST(Toggles, DropTheDocumentedColumns) {
    const auto data = prepare(small_world(), PipelineConfig{}, kWeights);
    const auto& a = data.artifacts;
    const auto no_pca = apply_toggles(data.train, a, {false, true, true});
    EXPECT_EQ(no_pca.n_features(), 44u - 13u);
    EXPECT_FALSE(no_pca.column_index("pc_last_1"));
    const auto no_te = apply_toggles(data.train, a, {true, true, false});
    EXPECT_EQ(no_te.n_features(), 44u - encoding_columns(a).size());
    EXPECT_FALSE(no_te.column_index("enc_p_red"));
    EXPECT_TRUE(no_te.column_index("pc_sum_5"));
    EXPECT_EQ(apply_toggles(data.train, a, {}).names, data.train.names);
}

TEST(Toggles, InitScoreArmsDiffer) {
    const auto data = prepare(small_world(), PipelineConfig{}, kWeights);
    const auto obj = objective_for(Task::Core, kWeights);
    auto p = quick_params();
    p.num_iters = 0;
    const auto with = train_arm(data, {true, true, true}, obj, p);
    const auto without = train_arm(data, {true, false, true}, obj, p);
    EXPECT_NEAR(without.log[0].valid_metric, std::log(3.0), 1e-12);
    EXPECT_NE(with.log[0].valid_metric, without.log[0].valid_metric);
}

TEST(InitScores, CoreRowsAreEncodingLogits) {
    const auto data = prepare(small_world(), PipelineConfig{}, kWeights);
    const auto& enc = *data.artifacts.class_encoding;
    const auto& regime = data.valid.column("regime");
    for (std::size_t r = 0; r < data.valid.n_rows(); r += 11) {
        const auto l = enc.logits(data.valid.keys[r].entity, static_cast<int>(regime[r]));
        for (int c = 0; c < 3; ++c) EXPECT_EQ(data.init_valid(static_cast<Eigen::Index>(r), c), l[c]);
    }
}

TEST(Metrics, CoreIdentities) {
    const std::vector<double> labels{0, 1, 2, 2};
    Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(4, 3);
    for (int i = 0; i < 4; ++i) onehot(i, static_cast<int>(labels[i])) = 1.0;
    const std::vector<double> w{0.1, 0.3, 0.6};
    EXPECT_EQ(eval_core(onehot, labels, w), 0.0);
    EXPECT_NEAR(eval_core(Eigen::MatrixXd::Constant(4, 3, 1.0 / 3.0), labels, w), std::log(3.0), 1e-12);

    Eigen::MatrixXd half(2, 3);
    half << 0.25, 0.25, 0.5, 0.5, 0.25, 0.25;
    const std::vector<double> rg{2, 0};
    const std::vector<double> w13{1, 1, 3};
    EXPECT_NEAR(eval_core(half, rg, w13), std::log(2.0), 1e-12);

    Rng rng(2);
    Eigen::MatrixXd p(50, 3);
    std::vector<double> y(50);
    double plain = 0.0;
    for (int i = 0; i < 50; ++i) {
        for (int c = 0; c < 3; ++c) p(i, c) = rng.uniform(0.05, 1.0);
        p.row(i) /= p.row(i).sum();
        y[static_cast<std::size_t>(i)] = static_cast<double>(rng.below(3));
        plain -= std::log(p(i, static_cast<int>(y[static_cast<std::size_t>(i)])));
    }
    const std::vector<double> ones{2, 2, 2};
    EXPECT_NEAR(eval_core(p, y, ones), plain / 50.0, 1e-12);
}

TEST(Metrics, ExtendedMae) {
    const std::vector<double> a{1, 3};
    const std::vector<double> b{2, 2};
    EXPECT_EQ(eval_extended(a, b), 1.0);
    EXPECT_EQ(eval_extended(b, b), 0.0);
    Rng rng(3);
    std::vector<double> x(100);
    std::vector<double> y(100);
    for (auto& v : x) v = rng.uniform(0, 1000);
    for (auto& v : y) v = rng.uniform(0, 1000);
    EXPECT_NEAR(eval_extended(x, y), oracle::mean_abs(x, y), 1e-12);
}

TEST(Tuner, TriesEveryCandidateOnce) {
    const std::vector<TuneCandidate> space{{"num_leaves", {15, 31}}, {"lambda_l2", {1, 10}}};
    int runs = 0;
    const auto r = stepwise_tune(gbdt::TrainParams{}, space, [&](const gbdt::TrainParams& p) {
        ++runs;
        return std::abs(p.num_leaves - 31) + std::abs(p.lambda_l2 - 10);
    });
    EXPECT_EQ(runs, 4);
    EXPECT_EQ(r.trace.size(), 4u);
    EXPECT_EQ(r.params.num_leaves, 31);
    EXPECT_EQ(r.params.lambda_l2, 10);
    EXPECT_EQ(r.metric, 0.0);
}

TEST(Tuner, TiesKeepTheFirstValue) {
    const std::vector<TuneCandidate> space{{"num_leaves", {15, 31, 63}}};
    const auto r = stepwise_tune(gbdt::TrainParams{}, space, [](const gbdt::TrainParams&) { return 1.0; });
    EXPECT_EQ(r.params.num_leaves, 15);
    EXPECT_THROW(stepwise_tune(gbdt::TrainParams{}, std::vector<TuneCandidate>{{"bogus", {1}}},
                               [](const gbdt::TrainParams&) { return 1.0; }),
                 Error);
}

TEST(Ablation, ArmsParseAndName) {
    const auto a = parse_arm("pca+init_score+tuned");
    EXPECT_TRUE(a.toggles.pca);
    EXPECT_TRUE(a.toggles.init_score);
    EXPECT_FALSE(a.toggles.target_encoding);
    EXPECT_TRUE(a.tuned);
    EXPECT_EQ(arm_name(a.toggles, a.tuned), "pca+init_score+tuned");
    const auto none = parse_arm("none");
    EXPECT_EQ(none.toggles, (FeatureToggles{false, false, false}));
    EXPECT_THROW(parse_arm("pca+magic"), Error);
    EXPECT_EQ(ladder_arms(Task::Core).size(), 4u);
    EXPECT_EQ(ladder_arms(Task::Extended).size(), 4u);
}

TEST(Ablation, TwoArmReportIsReproducible) {
    const auto data = prepare(small_world(), PipelineConfig{}, kWeights);
    const std::vector<AblationArm> arms{parse_arm("none"), parse_arm("pca")};
    const auto obj = objective_for(Task::Core, kWeights);
    const auto r1 = ablate(data, arms, obj, quick_params());
    const auto r2 = ablate(data, arms, obj, quick_params());
    ASSERT_EQ(r1.rows.size(), 2u);
    EXPECT_EQ(r1.rows[0].arm, "none");
    EXPECT_EQ(r1.rows[1].n_features, r1.rows[0].n_features + 13);
    testutil::TempDir dir("ablate");
    write_ablation(r1, dir / "a.csv");
    write_ablation(r2, dir / "b.csv");
    EXPECT_EQ(testutil::slurp(dir / "a.csv"), testutil::slurp(dir / "b.csv"));
    EXPECT_NE(testutil::slurp(dir / "a.csv").find("# class_weights"), std::string::npos);
}

TEST(Config, KeyValues) {
    testutil::TempDir dir("kv");
    testutil::write_file(dir / "run.cfg", "# comment\nnum_leaves = 15\n\nlearning_rate=0.05\n");
    const auto kv = read_key_values(dir / "run.cfg");
    EXPECT_EQ(kv.at("num_leaves"), "15");
    gbdt::TrainParams p;
    apply_params(p, kv);
    EXPECT_EQ(p.num_leaves, 15);
    EXPECT_EQ(p.learning_rate, 0.05);

    write_key_values(params_to_key_values(p), dir / "out.cfg");
    gbdt::TrainParams q;
    apply_params(q, read_key_values(dir / "out.cfg"));
    EXPECT_EQ(q.num_leaves, 15);
    EXPECT_EQ(q.learning_rate, 0.05);

    testutil::write_file(dir / "bad.cfg", "no equals sign\n");
    EXPECT_THROW(read_key_values(dir / "bad.cfg"), Error);
    EXPECT_THROW(read_key_values(dir / "missing.cfg"), Error);
    EXPECT_EQ(parse_class_weights("0.1,0.3,0.6"), kWeights);
    EXPECT_THROW(parse_class_weights("1,2"), Error);
}

TEST(Predictions, RoundTrip) {
    const auto data = prepare(small_world(), PipelineConfig{}, kWeights);
    testutil::TempDir dir("preds");
    write_predictions(data.valid, data.init_valid, dir / "p.csv");
    std::vector<RowKey> keys;
    const auto back = read_predictions(dir / "p.csv", &keys);
    EXPECT_EQ(back, data.init_valid);
    ASSERT_EQ(keys.size(), data.valid.n_rows());
    EXPECT_EQ(keys[3].entity, data.valid.keys[3].entity);
}

TEST(Scatter, PeakSlots) {
    EXPECT_TRUE(is_peak_slot(8 * 4));
    EXPECT_TRUE(is_peak_slot(17 * 4));
    EXPECT_FALSE(is_peak_slot(3 * 4));
    EXPECT_FALSE(is_peak_slot(5 * kSlotsPerDay + 8 * 4));
}

TEST(Scatter, SilhouetteOfSeparatedGroups) {
    std::vector<ScatterPoint> pts;
    for (int i = 0; i < 10; ++i) pts.push_back({i, 0.0 + 0.01 * i, 0.0, false, false});
    for (int i = 0; i < 10; ++i) pts.push_back({i, 10.0 + 0.01 * i, 0.0, false, true});
    EXPECT_GT(silhouette(pts), 0.95);
    for (auto& p : pts) p.pc1 = 0.0;
    EXPECT_NEAR(silhouette(pts), 0.0, 1e-12);
}
