#pragma once

// Command-line pipeline: load -> screen -> fit -> effects -> placebos ->
// robustness, writing CSV data files and report.json into --out.
// Exit status: 0 success, 1 data or validation error, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scm/config.hpp"
#include "scm/csv.hpp"
#include "scm/effects.hpp"
#include "scm/error.hpp"
#include "scm/inference.hpp"
#include "scm/panel.hpp"
#include "scm/report.hpp"
#include "scm/robustness.hpp"
#include "scm/solver.hpp"
#include "scm/study.hpp"
#include "scm/version.hpp"

namespace scm::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class UsageError : public Error {
public:
    using Error::Error;
};

enum class LooMode { Top, All, None };

struct Options {
    std::string data;
    std::string format = "wide";
    std::string region_column = "RegionName";
    std::optional<std::pair<std::string, std::string>> row_filter;
    StudySpec spec;
    bool placebos = true;
    double placebo_filter_multiplier = 2.0;
    LooMode loo = LooMode::Top;
    double loo_threshold = 0.05;
    std::vector<double> alpha_sweep{0.003, 0.005, 0.01};
    bool sweep_placebos = false;
    SolverOptions solver;
    std::size_t workers = 1;
    std::string out = "scm_out";
};

namespace detail {

inline std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto comma = s.find(',', start);
        if (comma == std::string_view::npos) comma = s.size();
        auto item = scm::detail::trim(s.substr(start, comma - start));
        if (!item.empty()) out.emplace_back(item);
        start = comma + 1;
    }
    return out;
}

inline double to_double(const std::string& key, const std::string& v) {
    double d = 0;
    if (!csv::parse_double(v, d) && v != "inf") throw UsageError("--" + key + ": not a number: '" + v + "'");
    return v == "inf" ? std::numeric_limits<double>::infinity() : d;
}

inline long to_long(const std::string& key, const std::string& v) {
    long n = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
    if (ec != std::errc{} || p != v.data() + v.size()) throw UsageError("--" + key + ": not an integer: '" + v + "'");
    return n;
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw UsageError("--" + key + ": not a boolean: '" + v + "'");
}

inline Period to_period(const std::string& key, const std::string& v) {
    auto p = try_parse_period(v);
    if (!p) throw UsageError("--" + key + ": expected YYYY-MM, got '" + v + "'");
    return *p;
}

inline std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return hex.str();
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline json number(double v) {
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

inline json rational_json(std::int64_t k, std::int64_t J, const Rational& p) {
    return {{"k", k}, {"J", J}, {"p", p.str()}, {"p_value", p.render(4)}};
}

inline json inference_json(const PlaceboSet& ps, std::ostream& err, const char* label) {
    json j;
    j["placebos_total"] = ps.entries.size();
    j["placebos_usable"] = ps.usable();
    try {
        const auto g = p_value_gap(ps);
        j["gap"] = rational_json(g.k, g.J, g.p);
    } catch (const InferenceError& e) {
        err << "warning: " << label << " gap test unavailable: " << e.what() << '\n';
        j["gap"] = {{"error", e.what()}};
    }
    try {
        const auto r = p_value_ratio(ps);
        j["ratio"] = rational_json(r.k, r.J, r.p);
        j["ratio"]["rank"] = r.rank;
        j["ratio"]["excluded_zero_pre_rmspe"] = r.excluded_zero_pre;
    } catch (const InferenceError& e) {
        err << "warning: " << label << " ratio test unavailable: " << e.what() << '\n';
        j["ratio"] = {{"error", e.what()}};
    }
    return j;
}

template <class Writer>
void write_file(const fs::path& path, Writer&& w) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open '" + path.string() + "' for writing");
    w(os);
    if (!os) throw Error("failed writing '" + path.string() + "'");
}

} // namespace detail

/// Parses flags (and the optional --config file; flags win). Throws UsageError.
/// Returns nullopt when help was requested.
[[nodiscard]] inline std::optional<Options> parse_options(const std::vector<std::string>& args, std::ostream& out) {
    CLI::App app{"Synthetic control estimation with placebo inference", "scm"};
    app.set_version_flag("--version", std::string(version));

    std::map<std::string, std::string> raw;
    std::map<std::string, CLI::Option*> opts;
    auto add = [&](const std::string& key, const std::string& flag, const std::string& help) {
        opts[key] = app.add_option(flag, raw[key], help);
        return opts[key];
    };
    add("data", "--data", "Input panel CSV");
    add("format", "--format", "Input layout: wide (default) or long");
    add("region_column", "--region-column", "Region label column of a wide CSV (default RegionName)");
    add("row_filter", "--row-filter", "Keep only rows where COLUMN=VALUE (wide layout)");
    add("treated", "--treated", "Treated unit label");
    add("intervention", "--intervention", "Last pre-treatment month, YYYY-MM");
    add("pre_start", "--pre-start", "First pre-treatment month, YYYY-MM");
    add("post_end", "--post-end", "Last post-treatment month, YYYY-MM");
    add("alpha", "--alpha", "Per-month decay rate of the pre-period loss weights (default 0.005)");
    add("min_pre_correlation", "--min-pre-correlation", "Drop donors whose pre-window correlation is below this");
    add("donors", "--donors", "Comma-separated candidate donor pool (default: all other units)");
    add("placebo_filter_multiplier", "--placebo-filter-multiplier",
        "Keep placebos with pre-RMSPE <= this multiple of the treated unit's (default 2)");
    add("loo", "--loo", "Leave-one-out targets: top, all, none (default top)");
    add("loo_threshold", "--loo-threshold", "Weight above which --loo all refits (default 0.05)");
    add("alpha_sweep", "--alpha-sweep", "Comma-separated decay rates, or none (default 0.003,0.005,0.01)");
    add("tolerance", "--tolerance", "Relative objective decrease that stops the solver (default 1e-12)");
    add("max_iterations", "--max-iterations", "Solver iteration cap (default 100000)");
    add("workers", "--workers", "Threads for placebo and leave-one-out fits (default 1)");
    add("out", "--out", "Output directory (default scm_out)");
    add("config", "--config", "Flat key = value file; command-line flags take precedence");

    bool placebos = true, allow_incomplete = false, sweep_placebos = false;
    auto* placebo_flag = app.add_flag("--placebos,!--no-placebos", placebos, "Run placebo-in-space inference");
    auto* incomplete_flag =
        app.add_flag("--allow-incomplete", allow_incomplete, "Keep donors with interior gaps (interpolated)");
    auto* sweep_flag = app.add_flag("--sweep-placebos", sweep_placebos, "Re-run placebos for every swept alpha");

    std::vector<std::string> argv_store{"scm"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_store) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return std::nullopt;
    } catch (const CLI::CallForVersion&) {
        out << version << '\n';
        return std::nullopt;
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    std::map<std::string, std::string> values;
    for (auto& [k, o] : opts)
        if (o->count() > 0) values[k] = raw[k];
    if (values.count("config")) {
        std::ifstream in(values["config"]);
        if (!in) throw UsageError("cannot read config file '" + values["config"] + "'");
        KeyValues kv;
        try {
            kv = parse_key_values(in);
        } catch (const ParseError& e) {
            throw UsageError(e.what());
        }
        for (auto& [k, v] : kv) {
            if (k == "placebos") {
                if (placebo_flag->count() == 0) placebos = detail::to_bool(k, v);
            } else if (k == "allow_incomplete" || k == "require_complete") {
                if (incomplete_flag->count() == 0)
                    allow_incomplete = detail::to_bool(k, v) == (k == "allow_incomplete");
            } else if (k == "sweep_placebos") {
                if (sweep_flag->count() == 0) sweep_placebos = detail::to_bool(k, v);
            } else if (opts.count(k) && k != "config") {
                values.try_emplace(k, v);
            } else {
                throw UsageError("unknown config key '" + k + "'");
            }
        }
    }

    auto need = [&](const std::string& key) -> const std::string& {
        auto it = values.find(key);
        if (it == values.end()) throw UsageError("missing required option --" + key);
        return it->second;
    };
    auto get = [&](const std::string& key) -> const std::string* {
        auto it = values.find(key);
        return it == values.end() ? nullptr : &it->second;
    };

    Options o;
    o.data = need("data");
    o.spec.treated = need("treated");
    o.spec.intervention = detail::to_period("intervention", need("intervention"));
    o.spec.pre_start = detail::to_period("pre_start", need("pre_start"));
    o.spec.post_end = detail::to_period("post_end", need("post_end"));
    if (auto v = get("format")) {
        if (*v != "wide" && *v != "long") throw UsageError("--format must be wide or long");
        o.format = *v;
    }
    if (auto v = get("region_column")) o.region_column = *v;
    if (auto v = get("row_filter")) {
        auto eq = v->find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--row-filter expects COLUMN=VALUE");
        o.row_filter = std::pair{v->substr(0, eq), v->substr(eq + 1)};
    }
    if (auto v = get("alpha")) o.spec.alpha = detail::to_double("alpha", *v);
    if (auto v = get("min_pre_correlation"))
        o.spec.donor_screen.min_pre_correlation = detail::to_double("min-pre-correlation", *v);
    if (auto v = get("donors")) o.spec.donors = detail::split_list(*v);
    o.spec.donor_screen.require_complete = !allow_incomplete;
    o.placebos = placebos;
    if (auto v = get("placebo_filter_multiplier")) {
        o.placebo_filter_multiplier = detail::to_double("placebo-filter-multiplier", *v);
        if (!(o.placebo_filter_multiplier > 0)) throw UsageError("--placebo-filter-multiplier must be positive");
    }
    if (auto v = get("loo")) {
        if (*v == "top") o.loo = LooMode::Top;
        else if (*v == "all") o.loo = LooMode::All;
        else if (*v == "none") o.loo = LooMode::None;
        else throw UsageError("--loo must be top, all or none");
    }
    if (auto v = get("loo_threshold")) o.loo_threshold = detail::to_double("loo-threshold", *v);
    if (auto v = get("alpha_sweep")) {
        o.alpha_sweep.clear();
        if (*v != "none")
            for (const auto& item : detail::split_list(*v)) {
                const double a = detail::to_double("alpha-sweep", item);
                if (!(a >= 0)) throw UsageError("--alpha-sweep values must be >= 0");
                o.alpha_sweep.push_back(a);
            }
    }
    o.sweep_placebos = sweep_placebos;
    if (auto v = get("tolerance")) o.solver.tolerance = detail::to_double("tolerance", *v);
    if (auto v = get("max_iterations")) {
        const long n = detail::to_long("max-iterations", *v);
        if (n < 0 || n > std::numeric_limits<int>::max()) throw UsageError("--max-iterations out of range");
        o.solver.max_iterations = static_cast<int>(n);
    }
    if (auto v = get("workers")) {
        const long n = detail::to_long("workers", *v);
        if (n < 1) throw UsageError("--workers must be >= 1");
        o.workers = static_cast<std::size_t>(n);
    }
    if (auto v = get("out")) o.out = *v;
    if (!(o.spec.alpha >= 0)) throw UsageError("--alpha must be >= 0");
    if (o.solver.tolerance < 0) throw UsageError("--tolerance must be >= 0");
    return o;
}

/// Runs the full pipeline for parsed options. Throws scm::Error on data problems.
inline void execute(const Options& o, std::ostream& out, std::ostream& err) {
    std::ifstream in(o.data, std::ios::binary);
    if (!in) throw Error("cannot read data file '" + o.data + "'");
    Panel panel;
    if (o.format == "long") {
        panel = load_panel_long(in);
    } else {
        WideLayout layout;
        layout.region_column = o.region_column;
        layout.row_filter = o.row_filter;
        panel = load_panel(in, layout);
    }

    const StudyData study = build_study(panel, o.spec);
    for (const auto& x : study.excluded) err << "note: donor '" << x.label << "' excluded: " << x.reason << '\n';
    const TimeWeights tw = time_weights(study, o.spec.alpha);
    const FitResult fr = fit(study, tw, o.solver);
    if (!fr.converged) err << "warning: solver hit the iteration cap before converging\n";
    const EffectSeries effect = gaps(study, fr.weights);

    const fs::path dir(o.out);
    fs::create_directories(dir);
    detail::write_file(dir / "weights.csv", [&](auto& os) { write_weights_csv(os, study.donor_labels, fr.weights); });
    detail::write_file(dir / "gaps.csv", [&](auto& os) { write_gaps_csv(os, study, effect); });
    detail::write_file(dir / "trajectory.csv", [&](auto& os) { write_trajectory_csv(os, study, effect); });

    json report;
    report["tool"] = {{"name", "scm"}, {"version", std::string(version)}};
    report["provenance"] = {{"input", o.data},
                            {"sha256", detail::sha256_file(o.data)},
                            {"generated_at", detail::utc_timestamp()}};
    report["spec"] = {{"treated", o.spec.treated},
                      {"pre_start", o.spec.pre_start.str()},
                      {"intervention", o.spec.intervention.str()},
                      {"post_end", o.spec.post_end.str()},
                      {"alpha", o.spec.alpha},
                      {"require_complete", o.spec.donor_screen.require_complete},
                      {"min_pre_correlation", o.spec.donor_screen.min_pre_correlation
                                                  ? json(*o.spec.donor_screen.min_pre_correlation)
                                                  : json(nullptr)},
                      {"tolerance", o.solver.tolerance},
                      {"max_iterations", o.solver.max_iterations}};

    json excluded = json::array();
    for (const auto& x : study.excluded) excluded.push_back({{"unit", x.label}, {"reason", x.reason}});
    report["study"] = {{"donors", study.num_donors()},
                       {"pre_periods", study.num_pre()},
                       {"post_periods", study.num_post()},
                       {"excluded", excluded},
                       {"interpolated", study.interpolated}};
    report["fit"] = {{"objective", fr.objective}, {"iterations", fr.iterations}, {"converged", fr.converged}};

    const WeightTable table = weight_table(study.donor_labels, fr.weights);
    json rows = json::array();
    for (const auto& r : table.rows) rows.push_back({{"unit", r.label}, {"weight_pct", WeightTable::percent(r.hundredths)}});
    if (table.has_others)
        rows.push_back({{"unit", "Others (" + std::to_string(table.others_nonzero) + " with non-zero weights)"},
                        {"weight_pct", WeightTable::percent(table.others.hundredths)}});
    report["weights"] = rows;

    json gap_rows = json::array();
    for (std::size_t t = 0; t < study.num_post(); ++t) {
        const double g = effect.gaps_post(static_cast<Eigen::Index>(t));
        gap_rows.push_back({{"period", study.periods_post[t].str()}, {"gap", g}, {"gap_dollars", round_dollars(g)}});
    }
    report["effects"] = {{"att", effect.att},
                         {"att_dollars", round_dollars(effect.att)},
                         {"gaps_post", gap_rows},
                         {"rmspe_pre", effect.rmspe_pre},
                         {"rmspe_pre_relative", detail::number(effect.rmspe_pre_relative)},
                         {"rmspe_pre_relative_pct", csv::format_fixed(100.0 * effect.rmspe_pre_relative, 2)},
                         {"rmspe_post", effect.rmspe_post},
                         {"rmspe_ratio", detail::number(effect.rmspe_ratio)},
                         {"ratio_defined", effect.ratio_defined}};

    out << "treated " << study.treated << ", " << study.num_donors() << " donors, " << study.num_pre() << " pre / "
        << study.num_post() << " post months\n";
    out << "ATT " << round_dollars(effect.att) << ", pre-RMSPE " << csv::format_fixed(100.0 * effect.rmspe_pre_relative, 2)
        << "% of mean level, RMSPE ratio " << csv::format_fixed(effect.rmspe_ratio, 2) << '\n';

    if (o.placebos) {
        const PlaceboSet ps = run_placebos(study, o.spec.alpha, o.solver, o.workers);
        const PlaceboSet filtered = filter_placebos(ps, o.placebo_filter_multiplier);
        detail::write_file(dir / "placebos.csv", [&](auto& os) { write_placebos_csv(os, ps); });
        detail::write_file(dir / "placebo_gaps.csv", [&](auto& os) { write_placebo_gaps_csv(os, ps); });
        detail::write_file(dir / "placebo_gaps_filtered.csv", [&](auto& os) { write_placebo_gaps_csv(os, filtered); });
        if (ps.treated_entry.ratio_defined)
            detail::write_file(dir / "ratio_ranking.csv", [&](auto& os) { write_ratio_ranking_csv(os, ps); });
        else
            err << "warning: treated pre-RMSPE is zero; ratio_ranking.csv not written\n";
        report["inference"] = detail::inference_json(ps, err, "placebo");
        report["inference"]["filtered"] = detail::inference_json(filtered, err, "filtered placebo");
        report["inference"]["filtered"]["multiplier"] = detail::number(o.placebo_filter_multiplier);
        const auto& inf = report["inference"];
        if (inf["gap"].contains("p_value"))
            out << "gap test p = " << inf["gap"]["p"].get<std::string>() << " = "
                << inf["gap"]["p_value"].get<std::string>() << '\n';
        if (inf["ratio"].contains("p_value"))
            out << "ratio test p = " << inf["ratio"]["p"].get<std::string>() << " = "
                << inf["ratio"]["p_value"].get<std::string>() << ", rank " << inf["ratio"]["rank"].get<int>() << '\n';
    } else {
        err << "note: placebos disabled; placebo gap paths not written\n";
    }

    json robustness;
    if (o.loo != LooMode::None) {
        const auto targets = o.loo == LooMode::Top ? LooTargets::top() : LooTargets::above(o.loo_threshold);
        const auto loo = leave_one_out(study, o.spec.alpha, targets, o.solver, o.workers);
        detail::write_file(dir / "loo.csv", [&](auto& os) { write_loo_csv(os, loo); });
        json arr = json::array();
        for (const auto& r : loo)
            arr.push_back({{"excluded", r.excluded},
                           {"baseline_weight", r.baseline_weight},
                           {"infeasible", r.infeasible},
                           {"att", r.infeasible ? json(nullptr) : json(r.att)},
                           {"att_change_pct", r.att_change_pct ? json(*r.att_change_pct) : json(nullptr)}});
        robustness["leave_one_out"] = arr;
    }
    if (!o.alpha_sweep.empty()) {
        const auto rows_sweep = alpha_sweep(study, o.alpha_sweep, o.solver, o.sweep_placebos && o.placebos, o.workers);
        detail::write_file(dir / "alpha_sweep.csv", [&](auto& os) { write_alpha_sweep_csv(os, rows_sweep); });
        json arr = json::array();
        for (const auto& r : rows_sweep)
            arr.push_back({{"alpha", r.alpha},
                           {"att", r.att},
                           {"rmspe_pre", r.rmspe_pre},
                           {"p_ratio", r.p_ratio ? json(r.p_ratio->render(4)) : json(nullptr)}});
        robustness["alpha_sweep"] = arr;
    }
    report["robustness"] = robustness.is_null() ? json::object() : robustness;

    detail::write_file(dir / "report.json", [&](auto& os) { os << report.dump(2) << '\n'; });
    out << "wrote results to " << dir.string() << '\n';
}

/// Entry point shared by the executable and the tests.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::optional<Options> opts;
    try {
        opts = parse_options(args, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\nrun with --help for usage\n";
        return 2;
    }
    if (!opts) return 0;
    try {
        execute(*opts, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

} // namespace scm::cli
