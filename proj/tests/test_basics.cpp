#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "cityboost/csv.hpp"
#include "cityboost/error.hpp"
#include "cityboost/rng.hpp"
#include "cityboost/stats.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cb;

TEST(Error, TagsCombineCategoryAndKind) {
    EXPECT_EQ(Error(ErrorKind::SchemaMismatch, "x").tag(), "DataError/SchemaMismatch");
    EXPECT_EQ(Error(ErrorKind::Usage, "x").tag(), "UsageError/Usage");
    EXPECT_EQ(Error(ErrorKind::Internal, "x").tag(), "InternalError/Internal");
    EXPECT_EQ(category_of(ErrorKind::InvalidConfig), ErrorCategory::Usage);
    EXPECT_EQ(category_of(ErrorKind::TooFewWeeks), ErrorCategory::Data);
}

TEST(Stats, InterpolatedQuantiles) {
    const std::vector<double> v{30, 40, 50, 60, 70};
    EXPECT_DOUBLE_EQ(median(v), 50.0);
    EXPECT_NEAR(quantile(v, 0.85), 64.0, 1e-12);
    EXPECT_DOUBLE_EQ(median(std::vector<double>{10, 20}), 15.0);
    EXPECT_DOUBLE_EQ(median(std::vector<double>{10, 20, 30}), 20.0);
}

TEST(Stats, MatchesSortOracle) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(1 + rng.below(40));
        for (auto& x : v) x = rng.uniform(-100, 100);
        for (double q : {0.0, 0.1, 0.25, 0.5, 0.85, 0.9, 1.0}) {
            EXPECT_NEAR(quantile(v, q), oracle::quantile(v, q), 1e-9);
        }
    }
}

TEST(Rng, SubstreamsAreReproducibleAndDistinct) {
    auto a = Rng::substream(7, 1);
    auto b = Rng::substream(7, 1);
    auto c = Rng::substream(7, 2);
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
}

TEST(Rng, UniformAndBelowStayInRange) {
    Rng rng(11);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        const auto k = rng.below(5);
        ASSERT_LT(k, 5u);
        seen.insert(k);
    }
    EXPECT_EQ(seen.size(), 5u);
}

TEST(Rng, NormalHasUnitMoments) {
    Rng rng(5);
    double s = 0.0;
    double s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        s += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Csv, FormatRoundTrips) {
    for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 123456789.0}) {
        EXPECT_EQ(std::stod(csv::format_double(x)), x);
    }
    EXPECT_EQ(csv::format_double(std::nan("")), "NA");
}

TEST(Csv, ReaderChecksHeaderAndWidth) {
    testutil::TempDir dir("csv");
    testutil::write_file(dir / "a.csv", "a,b\n1,2\n\n3,NA\n");
    csv::Reader ok(dir / "a.csv", {"a", "b"});
    ASSERT_TRUE(ok.next());
    EXPECT_EQ(ok.as_int(0), 1);
    ASSERT_TRUE(ok.next());
    EXPECT_TRUE(std::isnan(ok.as_double(1)));
    EXPECT_FALSE(ok.next());

    try {
        csv::Reader bad(dir / "a.csv", {"a", "c"});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SchemaError);
    }
    testutil::write_file(dir / "b.csv", "a,b\n1,2,3\n");
    csv::Reader wide(dir / "b.csv");
    try {
        wide.next();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SchemaError);
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
    }
    try {
        csv::Reader missing(dir / "nope.csv");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MissingFile);
    }
}
