#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "scm/cli.hpp"

namespace fs = std::filesystem;
using namespace scm;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class CliTest : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("scm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    // Wide CSV, 2023-01 .. 2024-12. "Treated" follows 0.6 * D1 + 0.4 * D2 and
    // drops by `effect` from 2024-07 on.
    fs::path write_panel(int n_donors, double effect, unsigned seed = 1) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> eps(0, 1);
        const int T = 24;
        std::vector<std::vector<double>> d(static_cast<std::size_t>(n_donors), std::vector<double>(T));
        for (int j = 0; j < n_donors; ++j) {
            double v = 3e5 + 1e5 * j;
            for (int t = 0; t < T; ++t) {
                v *= 1.003 + 0.001 * (j % 3) + 0.002 * eps(rng);
                d[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)] = v;
            }
        }
        std::ostringstream os;
        os << "RegionID,RegionName";
        for (int t = 0; t < T; ++t) os << ',' << Period(2023, 1).plus(t).str() << "-01";
        os << '\n';
        os << "0,Treated";
        for (std::size_t t = 0; t < T; ++t) {
            double v = 0.6 * d[0][t] + 0.4 * d[1][t];
            if (t >= 18) v -= effect;
            os << ',' << csv::format_double(v);
        }
        os << '\n';
        for (int j = 0; j < n_donors; ++j) {
            os << j + 1 << ",D" << j + 1;
            for (double v : d[static_cast<std::size_t>(j)]) os << ',' << csv::format_double(v);
            os << '\n';
        }
        const fs::path p = dir / "panel.csv";
        std::ofstream(p, std::ios::binary) << os.str();
        return p;
    }

    std::vector<std::string> base_args(const fs::path& data, const fs::path& out) {
        return {"--data", data.string(), "--treated", "Treated", "--pre-start", "2023-01", "--intervention",
                "2024-06", "--post-end", "2024-12", "--out", out.string()};
    }

    int run(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
        std::ostringstream out, err;
        const int rc = cli::run(args, out, err);
        if (out_text) *out_text = out.str();
        if (err_text) *err_text = err.str();
        return rc;
    }
};

} // namespace

TEST_F(CliTest, KnownEffectIsRecovered) {
    const auto data = write_panel(5, 1000);
    const auto out = dir / "out";
    ASSERT_EQ(run(base_args(data, out)), 0);
    const auto report = nlohmann::json::parse(slurp(out / "report.json"));
    EXPECT_NEAR(report["effects"]["att"].get<double>(), -1000, 1e-6 * 1000);
    EXPECT_EQ(report["effects"]["att_dollars"].get<long long>(), -1000);
    EXPECT_EQ(report["study"]["pre_periods"].get<int>(), 18);
    EXPECT_EQ(report["study"]["post_periods"].get<int>(), 6);
    for (const char* f : {"weights.csv", "gaps.csv", "trajectory.csv", "placebos.csv", "placebo_gaps.csv",
                          "placebo_gaps_filtered.csv", "loo.csv", "alpha_sweep.csv"})
        EXPECT_TRUE(fs::exists(out / f)) << f;
}

TEST_F(CliTest, NoPlacebosSkipsPlaceboOutputs) {
    const auto data = write_panel(3, 500);
    const auto out = dir / "out";
    auto args = base_args(data, out);
    args.push_back("--no-placebos");
    std::string err;
    ASSERT_EQ(run(args, nullptr, &err), 0);
    EXPECT_FALSE(fs::exists(out / "placebos.csv"));
    EXPECT_FALSE(fs::exists(out / "placebo_gaps.csv"));
    EXPECT_TRUE(fs::exists(out / "weights.csv"));
    EXPECT_FALSE(nlohmann::json::parse(slurp(out / "report.json")).contains("inference"));
}

TEST_F(CliTest, ExitCodes) {
    const auto data = write_panel(3, 0);
    EXPECT_EQ(run({"--bogus"}), 2);
    EXPECT_EQ(run({"--data", data.string()}), 2);  // required options missing
    auto args = base_args(data, dir / "out");
    args.insert(args.end(), {"--alpha", "abc"});
    EXPECT_EQ(run(args), 2);
    EXPECT_EQ(run(base_args(dir / "missing.csv", dir / "out")), 1);
    auto unknown = base_args(data, dir / "out");
    unknown[3] = "Nowhere";
    std::string err;
    EXPECT_EQ(run(unknown, nullptr, &err), 1);
    EXPECT_NE(err.find("Nowhere"), std::string::npos);
    std::string out;
    EXPECT_EQ(run({"--version"}, &out), 0);
    EXPECT_EQ(out, std::string(version) + "\n");
}

TEST_F(CliTest, ConfigFileFillsUnsetKeysOnly) {
    const auto data = write_panel(4, 0);
    const auto cfg = dir / "run.cfg";
    std::ofstream(cfg) << "# study\ndata = " << data.string()
                       << "\ntreated = Treated\npre_start = 2023-01\nintervention = 2024-06\n"
                          "post_end = 2024-12\nalpha = 0.01\nplacebos = false\nalpha_sweep = none\nloo = none\n";
    const auto out = dir / "out";
    ASSERT_EQ(run({"--config", cfg.string(), "--alpha", "0.003", "--out", out.string()}), 0);
    const auto report = nlohmann::json::parse(slurp(out / "report.json"));
    EXPECT_EQ(report["spec"]["alpha"].get<double>(), 0.003);
    EXPECT_FALSE(fs::exists(out / "placebos.csv"));
    EXPECT_FALSE(fs::exists(out / "alpha_sweep.csv"));
    EXPECT_FALSE(fs::exists(out / "loo.csv"));

    std::ofstream(cfg) << "treatd = Treated\n";
    EXPECT_EQ(run({"--config", cfg.string()}), 2);
}

TEST_F(CliTest, ReportIsRecomputableFromCsvs) {
    const auto data = write_panel(6, 2500, 7);
    const auto out = dir / "out";
    ASSERT_EQ(run(base_args(data, out)), 0);
    const auto report = nlohmann::json::parse(slurp(out / "report.json"));

    const auto gap_rows = csv::parse_records(slurp(out / "gaps.csv"));
    double sum = 0, pre_sq = 0;
    int n_post = 0, n_pre = 0;
    for (std::size_t r = 1; r < gap_rows.size(); ++r) {
        double treated = 0, synth = 0, gap = 0;
        ASSERT_TRUE(csv::parse_double(gap_rows[r][2], treated));
        ASSERT_TRUE(csv::parse_double(gap_rows[r][3], synth));
        ASSERT_TRUE(csv::parse_double(gap_rows[r][4], gap));
        EXPECT_NEAR(treated - synth, gap, 1e-9 * treated);
        if (gap_rows[r][1] == "post") {
            sum += gap;
            ++n_post;
        } else {
            pre_sq += gap * gap;
            ++n_pre;
        }
    }
    EXPECT_NEAR(report["effects"]["att"].get<double>(), sum / n_post, 1e-9 * std::abs(sum / n_post));
    EXPECT_NEAR(report["effects"]["rmspe_pre"].get<double>(), std::sqrt(pre_sq / n_pre), 1e-9);

    const auto w_rows = csv::parse_records(slurp(out / "weights.csv"));
    double total = 0;
    for (std::size_t r = 1; r < w_rows.size(); ++r) {
        double w = 0;
        ASSERT_TRUE(csv::parse_double(w_rows[r][1], w));
        EXPECT_GE(w, 0);
        total += w;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);

    const auto placebo_rows = csv::parse_records(slurp(out / "placebos.csv"));
    EXPECT_EQ(placebo_rows.size(), 7u);
    EXPECT_EQ(report["inference"]["ratio"]["J"].get<int>(), 6);
}

TEST_F(CliTest, OutputsIdenticalAcrossWorkerCounts) {
    const auto data = write_panel(8, 3000, 3);
    std::map<std::string, std::string> first;
    for (const char* workers : {"1", "8", "1", "8"}) {
        const auto out = dir / (std::string("w") + workers);
        auto args = base_args(data, out);
        args.insert(args.end(), {"--workers", workers, "--loo", "all"});
        ASSERT_EQ(run(args), 0);
        for (const char* f : {"weights.csv", "gaps.csv", "placebos.csv", "placebo_gaps.csv", "loo.csv"}) {
            const auto text = slurp(out / f);
            auto [it, inserted] = first.try_emplace(f, text);
            if (!inserted) {
                EXPECT_EQ(it->second, text) << f << " with " << workers << " workers";
            }
        }
        fs::remove_all(out);
    }
}
