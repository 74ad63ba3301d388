#include <cmath>
#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "pointnorm/dataset.hpp"
#include "test_util.hpp"

using namespace pointnorm;

namespace {

SeriesFrame parse(const std::string& text, bool stamped = false) {
    std::istringstream in(text);
    return parse_csv(in, stamped);
}

}  // namespace

TEST(LoadCsv, ReadsPlainRows) {
    const auto f = parse("1,2\n3,4\n5,6\n");
    ASSERT_EQ(f.length(), 3u);
    ASSERT_EQ(f.features(), 2u);
    EXPECT_EQ(f.values, (Matrix{{1, 2}, {3, 4}, {5, 6}}));
    EXPECT_EQ(f.feature_names, (std::vector<std::string>{"f0", "f1"}));
    EXPECT_FALSE(f.timestamps.has_value());
}

TEST(LoadCsv, DetectsHeaderAndTimestamp) {
    const auto f = parse("date,HUFL,OT\r\n2016-07-01 00:00:00,5.827,30.531\r\n2016-07-01 01:00:00,5.693,27.787\r\n", true);
    ASSERT_EQ(f.length(), 2u);
    ASSERT_EQ(f.features(), 2u);
    EXPECT_EQ(f.feature_names, (std::vector<std::string>{"HUFL", "OT"}));
    ASSERT_TRUE(f.timestamps.has_value());
    EXPECT_EQ((*f.timestamps)[1], "2016-07-01 01:00:00");
    EXPECT_DOUBLE_EQ(f.values(1, 1), 27.787);
}

TEST(LoadCsv, RejectsNonNumericCell) {
    try {
        parse("1,2\n3,abc\n5,6\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.row(), 2u);
        EXPECT_EQ(e.col(), 2u);
    }
}

TEST(LoadCsv, RejectsRaggedRowsAndShortFiles) {
    EXPECT_THROW(parse("1,2\n3\n"), ParseError);
    EXPECT_THROW(parse("a,b\n1,2\n"), EmptyDataset);
    EXPECT_THROW(parse(""), EmptyDataset);
    EXPECT_THROW(load_csv("/nonexistent/file.csv", false), IOError);
}

TEST(LoadCsv, WriteReadRoundTripIsExact) {
    std::mt19937_64 rng(5);
    SeriesFrame f;
    f.values = test_support::random_matrix(17, 3, rng, 1e3);
    f.feature_names = {"a", "b", "c"};
    std::ostringstream out;
    write_csv(out, f);
    const auto back = parse(out.str());
    EXPECT_EQ(back.values, f.values);
    EXPECT_EQ(back.feature_names, f.feature_names);
}

TEST(LoadCsv, Etth1ShapeWhenAvailable) {
    const char* dir = std::getenv("POINTNORM_DATA_DIR");
    const std::filesystem::path path =
        std::filesystem::path(dir ? dir : POINTNORM_SOURCE_DIR "/data") / "ETTh1.csv";
    if (!std::filesystem::exists(path)) GTEST_SKIP() << "ETTh1.csv not present at " << path;
    const auto f = load_csv(path.string(), true);
    EXPECT_EQ(f.length(), 17420u);
    EXPECT_EQ(f.features(), 7u);
}

TEST(TruncateFeatures, KeepsLeadingColumns) {
    const auto f = parse("1,2,3\n4,5,6\n");
    const auto t = truncate_features(f, 2);
    EXPECT_EQ(t.values, (Matrix{{1, 2}, {4, 5}}));
    EXPECT_EQ(truncate_features(f, 0).values, f.values);
}

TEST(MakeSplit, FloorArithmetic) {
    auto s = make_split(100);
    EXPECT_EQ(s.train, (Interval{0, 70}));
    EXPECT_EQ(s.val, (Interval{70, 80}));
    EXPECT_EQ(s.test, (Interval{80, 100}));

    s = make_split(10);
    EXPECT_EQ(s.train, (Interval{0, 7}));
    EXPECT_EQ(s.val, (Interval{7, 8}));
    EXPECT_EQ(s.test, (Interval{8, 10}));

    // floor(0.7 * 17420) = 12194, floor(0.1 * 17420) = 1742, remainder 3484
    s = make_split(17420);
    EXPECT_EQ(s.train.length(), 12194u);
    EXPECT_EQ(s.val.length(), 1742u);
    EXPECT_EQ(s.test.length(), 3484u);
}

TEST(MakeSplit, ContiguousAndDeterministic) {
    for (std::size_t t : {2u, 13u, 999u, 12345u}) {
        const auto a = make_split(t);
        const auto b = make_split(t);
        EXPECT_EQ(a.train, b.train);
        EXPECT_EQ(a.train.begin, 0u);
        EXPECT_EQ(a.train.end, a.val.begin);
        EXPECT_EQ(a.val.end, a.test.begin);
        EXPECT_EQ(a.test.end, t);
    }
    EXPECT_THROW(make_split(100, {0.7, 0.2, 0.2}), ConfigError);
    EXPECT_THROW(make_split(100, {0.0, 0.1, 0.2}), ConfigError);
}

TEST(Standardizer, TwoPointAndTextbookStats) {
    SeriesFrame f;
    f.values = Matrix{{0}, {2}};
    SplitSpec s{{0, 2}, {2, 2}, {2, 2}};
    auto st = fit_standardizer(f, s);
    EXPECT_DOUBLE_EQ(st.mean[0], 1.0);
    EXPECT_DOUBLE_EQ(st.std[0], std::sqrt(2.0));

    f.values = Matrix{{1}, {2}, {3}, {100}};
    s = {{0, 3}, {3, 4}, {4, 4}};
    st = fit_standardizer(f, s);
    EXPECT_DOUBLE_EQ(st.mean[0], 2.0);
    EXPECT_DOUBLE_EQ(st.std[0], 1.0);
}

TEST(Standardizer, ConstantFeatureIsDegenerate) {
    SeriesFrame f;
    f.values = Matrix{{1, 5}, {2, 5}, {3, 5}};
    try {
        fit_standardizer(f, {{0, 3}, {3, 3}, {3, 3}});
        FAIL() << "expected DegenerateFeature";
    } catch (const DegenerateFeature& e) {
        EXPECT_EQ(e.feature(), 1u);
    }
}

TEST(Standardizer, ApplyExamples) {
    SeriesFrame f;
    f.values = Matrix{{1}, {3}};
    EXPECT_EQ(apply_standardizer(f, {{1.0}, {2.0}}).values, (Matrix{{0}, {1}}));
    EXPECT_EQ(apply_standardizer(f, {{0.0}, {1.0}}).values, f.values);
    EXPECT_THROW(apply_standardizer(f, {{0.0, 0.0}, {1.0, 1.0}}), ShapeMismatch);
}

TEST(Standardizer, TrainRegionIsZeroMeanUnitStd) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        SeriesFrame f;
        f.values = test_support::random_matrix(200 + 37 * static_cast<std::size_t>(trial), 3, rng, 4.0, -9.0);
        const auto split = make_split(f.length());
        const auto z = apply_standardizer(f, fit_standardizer(f, split));
        const auto again = fit_standardizer(z, split);
        for (std::size_t k = 0; k < 3; ++k) {
            EXPECT_NEAR(again.mean[k], 0.0, 1e-8);
            EXPECT_NEAR(again.std[k], 1.0, 1e-8);
        }
        // val/test rows are transformed too
        EXPECT_NE(z.values(f.length() - 1, 0), f.values(f.length() - 1, 0));
    }
}

TEST(Windows, CountsAndBoundary) {
    SeriesFrame f;
    f.values = Matrix(10, 1);
    for (std::size_t t = 0; t < 10; ++t) f.values(t, 0) = static_cast<double>(t);
    EXPECT_EQ(windows(f, {0, 10}, 3, 2).size(), 6u);
    EXPECT_EQ(windows(f, {0, 5}, 3, 2).size(), 1u);
    EXPECT_THROW(windows(f, {0, 4}, 3, 2), TooShort);
    EXPECT_EQ(windows(f, {0, 10}, 3, 2, 2).size(), 3u);  // floor((10-5)/2)+1

    const auto w = windows(f, {2, 9}, 3, 2);
    ASSERT_EQ(w.size(), 3u);
    EXPECT_EQ(w[0].origin_index, 2u);
    EXPECT_EQ(w[0].x, (Matrix{{2}, {3}, {4}}));
    EXPECT_EQ(w[0].y, (Matrix{{5}, {6}}));
    EXPECT_EQ(w.back().y, (Matrix{{7}, {8}}));
}

TEST(Windows, StayInsideRangeAndOverlap) {
    SeriesFrame f;
    f.values = Matrix(60, 2);
    for (std::size_t t = 0; t < 60; ++t) {
        f.values(t, 0) = static_cast<double>(t);
        f.values(t, 1) = -static_cast<double>(t);
    }
    for (std::size_t l : {2u, 5u}) {
        for (std::size_t h : {1u, 4u}) {
            const Interval range{7, 41};
            const auto w = windows(f, range, l, h);
            for (const auto& p : w) {
                EXPECT_GE(p.x(0, 0), 7.0);
                EXPECT_LT(p.y(h - 1, 0), 41.0);
            }
            // adjacent stride-1 pairs share L+H-1 rows
            for (std::size_t i = 1; i < w.size(); ++i) {
                const double first_prev = w[i - 1].x(0, 0);
                const double last_next = w[i].y(h - 1, 0);
                EXPECT_EQ(last_next - first_prev + 1.0, static_cast<double>(l + h + 1));
            }
        }
    }
}
