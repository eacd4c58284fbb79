#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "scm/report.hpp"
#include "support.hpp"

using namespace scm;

TEST(RoundDollars, HalfAwayFromZero) {
    EXPECT_EQ(round_dollars(-32124.5), -32125);
    EXPECT_EQ(round_dollars(-32124.49), -32124);
    EXPECT_EQ(round_dollars(0.5), 1);
    EXPECT_EQ(round_dollars(12.0), 12);
}

TEST(WeightTable, SevenNamedRowsPlusOthers) {
    const std::vector<double> named{0.3553, 0.1866, 0.1069, 0.1047, 0.0761, 0.0605, 0.0550};
    std::vector<std::string> labels;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(58);
    for (std::size_t i = 0; i < named.size(); ++i) {
        labels.push_back("N" + std::to_string(i));
        w(static_cast<Eigen::Index>(i)) = named[i];
    }
    for (int i = 7; i < 58; ++i) labels.push_back("O" + std::to_string(i));
    for (int i = 7; i < 48; ++i) w(i) = 0.0549 / 41;
    const auto t = weight_table(labels, w);
    ASSERT_EQ(t.rows.size(), 7u);
    const std::vector<std::string> expect{"35.53", "18.66", "10.69", "10.47", "7.61", "6.05", "5.50"};
    long long total = 0;
    for (std::size_t i = 0; i < 7; ++i) {
        EXPECT_EQ(t.rows[i].label, "N" + std::to_string(i));
        EXPECT_EQ(WeightTable::percent(t.rows[i].hundredths), expect[i]);
        total += t.rows[i].hundredths;
    }
    ASSERT_TRUE(t.has_others);
    EXPECT_EQ(t.others_nonzero, 41u);
    EXPECT_EQ(WeightTable::percent(t.others.hundredths), "5.49");
    EXPECT_EQ(total + t.others.hundredths, 10000);
}

TEST(WeightTable, AlwaysSumsToOneHundred) {
    std::mt19937_64 rng(8);
    std::exponential_distribution<double> e(1);
    for (int trial = 0; trial < 300; ++trial) {
        const int J = 1 + trial % 40;
        Eigen::VectorXd w(J);
        for (auto& x : w) x = trial % 3 == 0 ? std::pow(e(rng), 4) : e(rng);
        w /= w.sum();
        std::vector<std::string> labels;
        for (int j = 0; j < J; ++j) labels.push_back(std::to_string(j));
        const auto t = weight_table(labels, w);
        long long total = t.has_others ? t.others.hundredths : 0;
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            total += t.rows[i].hundredths;
            EXPECT_GE(t.rows[i].weight, 0.05);
            if (i > 0) {
                EXPECT_LE(t.rows[i].weight, t.rows[i - 1].weight);
            }
            EXPECT_LE(std::abs(t.rows[i].hundredths - t.rows[i].weight * 10000), 1.0);
        }
        EXPECT_EQ(total, 10000);
    }
}

TEST(WeightTable, Errors) {
    EXPECT_THROW((void)weight_table({"a"}, Eigen::Vector2d(0.5, 0.5)), ParameterError);
}

TEST(WeightsCsv, PoolOrder) {
    std::ostringstream os;
    write_weights_csv(os, {"b", "a"}, Eigen::Vector2d(0.25, 0.75));
    EXPECT_EQ(os.str(), "unit,weight,weight_pct\nb,0.25,25\na,0.75,75\n");
}

TEST(Quantile, MatchesLinearInterpolationReference) {
    const std::vector<double> xs{3, -1.5, 7.25, 0, 2, -4, 10};
    EXPECT_EQ(quantile(xs, 0.05), -3.25);
    EXPECT_EQ(quantile(xs, 0.95), 9.174999999999997);
    EXPECT_EQ(quantile(xs, 0.5), 2);
    EXPECT_EQ(quantile(xs, 0), -4);
    EXPECT_EQ(quantile(xs, 1), 10);
    EXPECT_EQ(quantile({4.5}, 0.05), 4.5);
    EXPECT_EQ(quantile({4.5}, 0.95), 4.5);
    EXPECT_THROW((void)quantile({}, 0.5), ParameterError);
    EXPECT_THROW((void)quantile({1}, 1.5), ParameterError);
}

TEST(Quantile, MonotoneInLevelAndBounded) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0, 1e4);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> xs(1 + trial % 30);
        for (auto& x : xs) x = n(rng);
        const double lo = quantile(xs, 0.05), hi = quantile(xs, 0.95);
        EXPECT_LE(lo, hi);
        EXPECT_GE(lo, *std::min_element(xs.begin(), xs.end()));
        EXPECT_LE(hi, *std::max_element(xs.begin(), xs.end()));
    }
}

namespace {

double num(std::string_view s) {
    double v = 0;
    EXPECT_TRUE(csv::parse_double(s, v)) << s;
    return v;
}

PlaceboSet ranked_set(double treated_ratio, std::vector<double> ratios) {
    PlaceboSet ps;
    ps.treated = "T";
    ps.treated_entry.rmspe_pre = 1;
    ps.treated_entry.rmspe_ratio = treated_ratio;
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        PlaceboEntry e;
        e.unit = "P" + std::to_string(i);
        e.effect.rmspe_pre = 1;
        e.effect.rmspe_ratio = ratios[i];
        ps.entries.push_back(e);
    }
    return ps;
}

} // namespace

TEST(RatioRanking, TreatedRankEqualsKPlusOne) {
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<int> u(0, 12);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> ratios(1 + trial % 25);
        for (auto& r : ratios) r = u(rng) / 2.0;
        const auto ps = ranked_set(u(rng) / 2.0, ratios);
        const auto ranking = ratio_ranking(ps);
        std::size_t treated_rank = 0;
        for (const auto& r : ranking)
            if (r.is_treated) treated_rank = r.rank;
        EXPECT_EQ(static_cast<std::int64_t>(treated_rank), p_value_ratio(ps).rank);
    }
}

TEST(RatioRanking, Csv) {
    std::ostringstream os;
    write_ratio_ranking_csv(os, ranked_set(5.5, {1, 7, 5.5}));
    EXPECT_EQ(os.str(),
              "rank,unit,rmspe_ratio,is_treated\n"
              "1,P1,7,0\n"
              "2,P2,5.5,0\n"
              "3,T,5.5,1\n"
              "4,P0,1,0\n");
}

TEST(PlaceboGapsCsv, BandColumns) {
    std::mt19937_64 rng(11);
    const auto study = scm::test::trending_study(rng, 5, 6, 2);
    const auto ps = run_placebos(study, 0.005);
    std::ostringstream os;
    write_placebo_gaps_csv(os, ps);
    const auto rows = csv::parse_records(os.str());
    ASSERT_EQ(rows.size(), 9u);
    EXPECT_EQ(rows[0].front(), "period");
    EXPECT_EQ(rows[0].size(), 2u + 5u + 3u);
    EXPECT_EQ(rows[0][rows[0].size() - 2], "p05");
    for (std::size_t r = 1; r < rows.size(); ++r) {
        std::vector<double> sample;
        for (std::size_t c = 2; c < 7; ++c) sample.push_back(num(rows[r][c]));
        EXPECT_EQ(num(rows[r][8]), quantile(sample, 0.05));
        EXPECT_EQ(num(rows[r][9]), quantile(sample, 0.95));
    }
}

TEST(TrajectoryCsv, RowPerPeriod) {
    std::mt19937_64 rng(12);
    const auto study = scm::test::trending_study(rng, 3, 5, 3);
    const auto e = gaps(study, fit(study, time_weights(study, 0.005)).weights);
    std::ostringstream os;
    write_trajectory_csv(os, study, e);
    const auto rows = csv::parse_records(os.str());
    ASSERT_EQ(rows.size(), 9u);
    EXPECT_EQ(rows[5][1], "pre");
    EXPECT_EQ(rows[6][1], "post");
    EXPECT_EQ(num(rows[6][3]), e.synthetic_post(0));
}
