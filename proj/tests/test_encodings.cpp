#include <gtest/gtest.h>

#include <cmath>

#include "cityboost/encodings.hpp"
#include "cityboost/error.hpp"
#include "cityboost/rng.hpp"
#include "cityboost/syncity.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cb;

namespace {

TrafficRegime binary_regime() {
    TrafficRegime r;
    r.n_clusters = 2;
    r.thresholds = {2.5};
    return r;
}

std::vector<ClassObservation> counts_for(Id entity, int regime, int g, int y, int r) {
    std::vector<ClassObservation> out;
    for (int i = 0; i < g; ++i) out.push_back({entity, regime, kGreen});
    for (int i = 0; i < y; ++i) out.push_back({entity, regime, kYellow});
    for (int i = 0; i < r; ++i) out.push_back({entity, regime, kRed});
    return out;
}

}  // namespace

TEST(Regime, MedianSplit) {
    const std::vector<double> s{1, 2, 3, 4};
    const auto r = fit_regime(s, 2);
    ASSERT_EQ(r.thresholds.size(), 1u);
    EXPECT_DOUBLE_EQ(r.thresholds[0], 2.5);
    EXPECT_EQ(r.classify(1), 0);
    EXPECT_EQ(r.classify(2), 0);
    EXPECT_EQ(r.classify(3), 1);
    EXPECT_EQ(r.classify(4), 1);
    EXPECT_EQ(r.classify(2.5), 0);
}

TEST(Regime, Errors) {
    const std::vector<double> flat{3, 3, 3};
    EXPECT_THROW(fit_regime(flat, 2), Error);
    const std::vector<double> one{3};
    EXPECT_THROW(fit_regime(one, 2), Error);
    const std::vector<double> s{1, 2};
    EXPECT_THROW(fit_regime(s, 5), Error);
}

TEST(Regime, BucketsAreBalancedOnSyntheticCity) {
    const auto w = generate(testutil::small_config(7));
    const auto s = citywide_volume(w.volumes, 4);
    for (int k : {2, 3, 4}) {
        const auto r = fit_regime(s, k);
        std::vector<int> occ(static_cast<std::size_t>(k));
        for (double v : s) ++occ[static_cast<std::size_t>(r.classify(v))];
        const auto [lo, hi] = std::minmax_element(occ.begin(), occ.end());
        EXPECT_LE(*hi - *lo, 1) << "clusters " << k;
    }
}

TEST(ClassEncoding, SmoothedDistribution) {
    const auto obs = counts_for(4, 1, 8, 1, 1);
    const auto t = fit_class_encoding(obs, binary_regime(), 5, 1.0);
    const auto r = t.lookup(4, 1);
    EXPECT_EQ(r.level, ServedLevel::Entry);
    EXPECT_NEAR(r.entry->values[0], 9.0 / 13.0, 1e-15);
    EXPECT_NEAR(r.entry->values[1], 2.0 / 13.0, 1e-15);
    EXPECT_NEAR(r.entry->values[2], 2.0 / 13.0, 1e-15);
    const auto l = t.logits(4, 1);
    EXPECT_NEAR(l[0], std::log(9.0 / 13.0), 1e-15);
    EXPECT_NEAR(l[2], std::log(2.0 / 13.0), 1e-15);

    const std::vector<EncodedRow> rows{{4, 1}};
    const std::vector<double> w{0.1, 0.3, 0.6};
    const auto h0 = build_init_scores(Task::Core, t, rows, w);
    EXPECT_NEAR(h0(0, 0), std::log(9.0 / 13.0), 1e-15);
    EXPECT_NEAR(h0(0, 1), std::log(2.0 / 13.0), 1e-15);
}

TEST(ClassEncoding, GuardAndFallbackChain) {
    auto obs = counts_for(1, 0, 2, 0, 0);          // 2 rows in regime 0
    const auto more = counts_for(1, 1, 3, 1, 1);   // 5 rows in regime 1
    obs.insert(obs.end(), more.begin(), more.end());
    const auto sparse = counts_for(2, 0, 1, 1, 0);  // entity 2 has only 2 rows overall
    obs.insert(obs.end(), sparse.begin(), sparse.end());
    const auto t = fit_class_encoding(obs, binary_regime(), 5, 1.0);

    EXPECT_EQ(t.lookup(1, 1).level, ServedLevel::Entry);
    EXPECT_EQ(t.lookup(1, 0).level, ServedLevel::Entity);
    EXPECT_EQ(t.lookup(1, 0).entry->count, 7);
    EXPECT_EQ(t.lookup(2, 0).level, ServedLevel::Global);
    EXPECT_EQ(t.lookup(99, 1).level, ServedLevel::Global);
    EXPECT_EQ(t.lookup(99, 1).entry, &t.global);
    EXPECT_EQ(t.global.count, 9);
    EXPECT_THROW(t.lookup(1, 2), Error);
}

TEST(ClassEncoding, GuardHoldsForEveryKey) {
    Rng rng(3);
    std::vector<ClassObservation> obs;
    for (int i = 0; i < 400; ++i) {
        obs.push_back({static_cast<Id>(rng.below(30)), static_cast<int>(rng.below(2)),
                       static_cast<int>(rng.below(3))});
    }
    const auto t = fit_class_encoding(obs, binary_regime(), 8, 1.0);
    for (Id e = 0; e < 32; ++e) {
        for (int r = 0; r < 2; ++r) {
            const auto res = t.lookup(e, r);
            EXPECT_GE(res.entry->count, res.level == ServedLevel::Global ? 0 : 8);
            const auto it = t.entries.find({e, r});
            if (it != t.entries.end() && it->second.count < 8) {
                EXPECT_NE(res.entry, &it->second);
            }
        }
    }
}

TEST(ClassEncoding, JsonRoundTrip) {
    const auto t = fit_class_encoding(counts_for(4, 1, 8, 1, 1), binary_regime(), 5, 1.0);
    EXPECT_EQ(encoding_from_json(to_json(t)), t);
}

TEST(EtaEncoding, MedianInterpolation) {
    const std::vector<double> levels{0.1, 0.5, 0.9};
    std::vector<ValueObservation> obs{{1, 0, 10}, {1, 0, 20}, {1, 0, 30}, {2, 0, 10}, {2, 0, 20}};
    const auto t = fit_eta_encoding(obs, binary_regime(), 1, levels);
    EXPECT_DOUBLE_EQ(t.lookup(1, 0).entry->values[t.median_index()], 20.0);
    EXPECT_DOUBLE_EQ(t.lookup(2, 0).entry->values[t.median_index()], 15.0);

    const std::vector<EncodedRow> rows{{1, 0}};
    const auto h0 = build_init_scores(Task::Extended, t, rows);
    ASSERT_EQ(h0.cols(), 1);
    EXPECT_EQ(h0(0, 0), 20.0);

    const std::vector<double> no_median{0.1, 0.9};
    EXPECT_THROW(fit_eta_encoding(obs, binary_regime(), 1, no_median), Error);
}

TEST(EtaEncoding, QuantilesMatchSortOracle) {
    Rng rng(9);
    const std::vector<double> levels{0.1, 0.5, 0.9};
    std::vector<ValueObservation> obs;
    std::map<std::pair<Id, int>, std::vector<double>> raw;
    for (int i = 0; i < 300; ++i) {
        ValueObservation o{static_cast<Id>(rng.below(5)), static_cast<int>(rng.below(2)), rng.uniform(100, 900)};
        obs.push_back(o);
        raw[{o.entity, o.regime}].push_back(o.value);
    }
    const auto t = fit_eta_encoding(obs, binary_regime(), 3, levels);
    for (const auto& [key, vals] : raw) {
        const auto& e = t.entries.at(key);
        for (std::size_t q = 0; q < levels.size(); ++q) {
            EXPECT_NEAR(e.values[q], oracle::quantile(vals, levels[q]), 1e-9);
        }
    }
}

TEST(SpeedStats, MedianAndFreeflow) {
    std::vector<SpeedObservation> obs{{1, 30}, {1, 40}, {1, 50}, {1, 60}, {1, 70}, {2, 44}};
    const auto s = fit_speed_stats(obs, 1);
    EXPECT_DOUBLE_EQ(s.lookup(1).median, 50.0);
    EXPECT_NEAR(s.lookup(1).freeflow, 64.0, 1e-12);
    EXPECT_EQ(s.lookup(2).median, 44.0);
    EXPECT_EQ(s.lookup(2).freeflow, 44.0);
    EXPECT_EQ(&s.lookup(3), &s.citywide);

    const auto guarded = fit_speed_stats(obs, 5);
    EXPECT_TRUE(guarded.lookup(2).fallback);
    EXPECT_EQ(guarded.lookup(2).median, guarded.citywide.median);
    EXPECT_FALSE(guarded.lookup(1).fallback);
}
