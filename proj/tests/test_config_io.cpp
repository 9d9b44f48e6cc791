#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "pensim/commands.hpp"
#include "pensim/config.hpp"
#include "pensim/errors.hpp"
#include "pensim/mortality.hpp"

using namespace pensim;
namespace fs = std::filesystem;

namespace {

// Three assets, thirty members, six scenarios: builds and runs in
// milliseconds so the command-level cases stay cheap.
std::string config_text(const std::string& plan) {
    std::string text = R"json({
  "schema_version": 1,
  "plan": "%PLAN%",
  "universe": {
    "assets": [
      {"name": "bonds", "region": "domestic", "group": "fixed_income", "mean_return": 0.030, "vol": 0.045},
      {"name": "equity", "region": "domestic", "group": "equities", "mean_return": 0.065, "vol": 0.160},
      {"name": "commod", "region": "foreign", "group": "alternatives", "mean_return": 0.048, "vol": 0.170}
    ],
    "correlations": [
      [1.00, 0.20, 0.00],
      [0.20, 1.00, 0.10],
      [0.00, 0.10, 1.00]
    ]
  },
  "menu": {
    "fi_risk_aversions": [32.0, 8.0],
    "full_risk_aversions": [16.0, 4.0]
  },
  "curve_model": {
    "r0": 0.028, "kappa": 0.25, "theta": 0.032, "sigma": 0.008,
    "term_premium_max": 0.008, "term_premium_scale": 8.0
  },
  "demographics": {
    "base_year": 2025, "size": 30, "seed": 5,
    "age_min": 25, "age_max": 75,
    "sex_probs": [0.5, 0.5],
    "income_probs": [0.25, 0.25, 0.25, 0.25],
    "education_probs": [0.3, 0.3, 0.25, 0.15],
    "region_probs": [0.25, 0.25, 0.25, 0.25]
  },
  "plan_rules": {
    "min_working_age": 18, "mean_years_to_work": 4,
    "min_retiring_age": 60, "mean_years_to_retire": 5,
    "contribution_pct": 10, "baseline_payout_pct": 80,
    "max_payout_deviation_pct": 10, "pension_base_window": 20,
    "payout_change_cap_pct": 2
  },
  "mortality": { "gompertz": {"a": 1e-4, "b": 0.085, "age_max": 120} },
  "simulation": {
    "years": 4, "liability_horizon": 8, "scenarios": 6,
    "fee": 0.004, "initial_ratio": 1.5, "seed": 11,
    "inner_paths": 2, "max_abort_fraction": 0.25,
    "out_of_sample_seed": 77
  },
  "bins": { "edges": [0.8, 1.2] },
  "tuning": { "max_sweeps": 8, "min_improvement": 1e-12 }
})json";
    text.replace(text.find("%PLAN%"), 6, plan);
    return text;
}

template <typename Fn>
std::string thrown(Fn&& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

bool contains(const std::string& hay, const std::string& needle) {
    return hay.find(needle) != std::string::npos;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() /
               ("pensim_" + tag + "_" + std::to_string(static_cast<long>(::getpid())));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream os(p);
    REQUIRE(bool(os));
    os << text;
}

std::string read_text(const fs::path& p) {
    std::ifstream is(p);
    REQUIRE(bool(is));
    std::ostringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

std::vector<int> iota_ids(int n) {
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
}

}  // namespace

TEST_CASE("config errors name the offending section") {
    CHECK(contains(thrown([] { parse_config("{", {}); }), "config:"));
    CHECK(contains(thrown([] { parse_config("[]", {}); }), "object"));
    CHECK(contains(thrown([] { parse_config(R"({"schema_version":1,"plan":"A"})", {}); }),
                   "universe"));

    std::string no_corr = R"({"schema_version":1,"plan":"A","universe":{"assets":[
        {"name":"b","region":"domestic","group":"fixed_income","mean_return":0.03,"vol":0.05}]}})";
    CHECK(contains(thrown([&] { parse_config(no_corr, {}); }), "correlations"));

    std::string base = config_text("A");
    auto mutated = [&](const std::string& from, const std::string& to) {
        std::string t = base;
        auto pos = t.find(from);
        REQUIRE(pos != std::string::npos);
        t.replace(pos, from.size(), to);
        return t;
    };
    CHECK(contains(thrown([&] { parse_config(mutated("\"schema_version\": 1", "\"schema_version\": 2"), {}); }),
                   "schema_version 2"));
    CHECK(contains(thrown([&] { parse_config(mutated("\"plan\": \"A\"", "\"plan\": \"E\""), {}); }),
                   "plan must be"));
    CHECK(contains(thrown([&] { parse_config(mutated("\"region\": \"foreign\"", "\"region\": \"martian\""), {}); }),
                   "region"));
    CHECK(contains(thrown([&] { parse_config(mutated("[1.00, 0.20, 0.00]", "[1.00, 0.20]"), {}); }),
                   "n x n"));

    std::string bad_betas = mutated("\"mortality\"",
                                    "\"income_model\": {\"betas\": [1.0, 2.0, 3.0]}, \"mortality\"");
    CHECK(contains(thrown([&] { parse_config(bad_betas, {}); }), "betas"));
    std::string bad_cox = mutated("\"gompertz\"", "\"cox_coefficients\": [0.1], \"gompertz\"");
    CHECK(contains(thrown([&] { parse_config(bad_cox, {}); }), "cox_coefficients"));

    CHECK(contains(thrown([] { load_config("/nonexistent/config.json", {}); }), "cannot open"));
}

TEST_CASE("config text may carry comment lines") {
    std::string text = config_text("A");
    text.insert(1, "\n  // experiment notes\n");
    ExperimentConfig cfg = parse_config(text, {});
    CHECK(cfg.plan == "A");
}

TEST_CASE("overrides rewrite nested keys, bare words become strings") {
    std::string text = config_text("A");
    ExperimentConfig cfg = parse_config(
        text, {"simulation.scenarios=9", "plan=B", "mortality.gompertz.b=0.09",
               "tuning.max_sweeps=3", "objective.payout.priority=0.5"});
    CHECK(cfg.sim.scenarios == 9);
    CHECK(cfg.plan == "B");
    CHECK(cfg.gompertz_b == doctest::Approx(0.09).epsilon(1e-15));
    CHECK(cfg.tuning.max_sweeps == 3);
    CHECK(cfg.objective.payout.priority == doctest::Approx(0.5).epsilon(1e-15));

    ExperimentConfig quoted = parse_config(text, {"plan=\"C\""});
    CHECK(quoted.plan == "C");

    ExperimentConfig arr = parse_config(text, {"grids.target_ratios=[\"none\",0.9]"});
    REQUIRE(arr.grid_targets.size() == 2);
    CHECK(!arr.grid_targets[0].has_value());
    CHECK(arr.grid_targets[1].value() == doctest::Approx(0.9).epsilon(1e-15));

    CHECK(contains(thrown([&] { parse_config(text, {"noequalsign"}); }), "not of the form"));
    CHECK(contains(thrown([&] { parse_config(text, {"=7"}); }), "not of the form"));
    CHECK(contains(thrown([&] { parse_config(text, {"a..b=1"}); }), "empty path segment"));
}

TEST_CASE("resolved snapshot reparses to the identical document") {
    std::string snap1, snap2;
    ExperimentConfig cfg1 = parse_config(config_text("A"), {"simulation.scenarios=9"}, &snap1);
    ExperimentConfig cfg2 = parse_config(snap1, {}, &snap2);
    CHECK(snap1 == snap2);
    CHECK(cfg1.sim.scenarios == 9);
    CHECK(cfg2.sim.scenarios == 9);
    CHECK(cfg2.plan == cfg1.plan);
}

TEST_CASE("plan presets expand the action grids") {
    BuiltExperiment a = build_experiment(parse_config(config_text("A"), {}));
    CHECK(a.grids.portfolio_ids == std::vector<int>{0});
    CHECK(a.grids.payout_levels == std::vector<double>{100.0});
    REQUIRE(a.grids.target_ratios.size() == 5);
    CHECK(!a.grids.target_ratios.front().has_value());
    CHECK(a.grids.target_ratios.back().value() == doctest::Approx(1.2).epsilon(1e-15));

    BuiltExperiment b = build_experiment(parse_config(config_text("B"), {}));
    CHECK(b.grids.portfolio_ids == std::vector<int>{0});
    REQUIRE(b.grids.payout_levels.size() == 21);
    CHECK(b.grids.payout_levels.front() == doctest::Approx(90.0).epsilon(1e-15));
    CHECK(b.grids.payout_levels.back() == doctest::Approx(110.0).epsilon(1e-15));
    for (std::size_t i = 1; i < b.grids.payout_levels.size(); ++i)
        CHECK(b.grids.payout_levels[i] - b.grids.payout_levels[i - 1] ==
              doctest::Approx(1.0).epsilon(1e-12));

    BuiltExperiment c = build_experiment(parse_config(config_text("C"), {}));
    CHECK(c.grids.portfolio_ids == iota_ids(c.fi_menu_count));
    CHECK(c.grids.payout_levels.size() == 21);

    BuiltExperiment d = build_experiment(parse_config(config_text("D"), {}));
    CHECK(d.grids.portfolio_ids == iota_ids(static_cast<int>(d.ctx.menu.size())));
    CHECK(d.ctx.menu.size() > static_cast<std::size_t>(d.fi_menu_count));

    BuiltExperiment pick = build_experiment(
        parse_config(config_text("custom"), {"grids.portfolio_ids=[1,0]"}));
    CHECK(pick.grids.portfolio_ids == std::vector<int>({1, 0}));

    BuiltExperiment all = build_experiment(parse_config(config_text("custom"), {}));
    CHECK(all.grids.portfolio_ids == iota_ids(static_cast<int>(all.ctx.menu.size())));

    BuiltExperiment own = build_experiment(
        parse_config(config_text("B"), {"grids.payout_levels=[95,100,105]"}));
    CHECK(own.grids.payout_levels == std::vector<double>({95.0, 100.0, 105.0}));

    BuiltExperiment tr = build_experiment(
        parse_config(config_text("A"), {"grids.target_ratios=[1.0]"}));
    REQUIRE(tr.grids.target_ratios.size() == 2);
    CHECK(!tr.grids.target_ratios.front().has_value());
    CHECK(tr.grids.target_ratios.back().value() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("menu places fixed-income entries first") {
    BuiltExperiment b = build_experiment(parse_config(config_text("D"), {}));
    REQUIRE(b.fi_menu_count >= 1);
    REQUIRE(b.ctx.menu.size() > static_cast<std::size_t>(b.fi_menu_count));
    for (std::size_t i = 0; i < b.ctx.menu.size(); ++i)
        CHECK(b.ctx.menu[i].id == static_cast<int>(i));

    // assets 1 and 2 are the equity and the alternative; the pinned groups
    // hold up to the solver's residual gate, not bitwise
    for (int i = 0; i < b.fi_menu_count; ++i) {
        CHECK(std::abs(b.ctx.menu[i].weights[1]) < 1e-7);
        CHECK(std::abs(b.ctx.menu[i].weights[2]) < 1e-7);
    }
    // the menu is keyed by risk aversion, so one feasible fixed-income asset
    // still yields one entry per aversion value
    CHECK(b.fi_menu_count == 2);

    // diversified entries never duplicate a fixed-income one
    for (int i = 0; i < b.fi_menu_count; ++i)
        for (std::size_t j = b.fi_menu_count; j < b.ctx.menu.size(); ++j)
            CHECK((b.ctx.menu[i].weights - b.ctx.menu[j].weights).lpNorm<Eigen::Infinity>() >=
                  1e-9);

    CHECK(contains(thrown([] {
              build_experiment(parse_config(config_text("A"), {"menu.static_portfolio=99"}));
          }),
          "static_portfolio"));

    CHECK(contains(thrown([] {
              build_experiment(parse_config(config_text("A"), {"demographics.size=0"}));
          }),
          "size"));
}

TEST_CASE("validate prints the plan summary and exits zero") {
    TempDir tmp("validate");
    fs::path cfg_path = tmp.path / "cfg.json";
    write_text(cfg_path, config_text("D"));

    BuiltExperiment b = build_experiment(load_config(cfg_path.string(), {}));
    std::ostringstream expect;
    expect << "config OK: plan D, " << b.ctx.menu.size() << " menu portfolios ("
           << b.fi_menu_count << " fixed-income only), " << b.ctx.base_population.members.size()
           << " members, " << b.initial_table.rows.size() << " ratio bins\n";

    RunOptions opts;
    opts.config_path = cfg_path.string();
    std::ostringstream out, err;
    CHECK(cmd_validate(opts, out, err) == 0);
    CHECK(out.str() == expect.str());
    CHECK(err.str().empty());

    RunOptions missing;
    missing.config_path = (tmp.path / "nope.json").string();
    std::ostringstream out2, err2;
    CHECK(cmd_validate(missing, out2, err2) == 1);
    CHECK(contains(err2.str(), "validate:"));
    CHECK(contains(err2.str(), "cannot open"));

    RunOptions bad = opts;
    bad.overrides = {"schema_version=2"};
    std::ostringstream out3, err3;
    CHECK(cmd_validate(bad, out3, err3) == 1);
    CHECK(contains(err3.str(), "schema_version 2"));

    RunOptions none;
    std::ostringstream out4, err4;
    CHECK(cmd_validate(none, out4, err4) == 1);
    CHECK(contains(err4.str(), "config file is required"));
}

TEST_CASE("simulate writes a complete artifact directory") {
    TempDir tmp("simulate");
    fs::path cfg_path = tmp.path / "cfg.json";
    write_text(cfg_path, config_text("A"));

    RunOptions opts;
    opts.config_path = cfg_path.string();
    opts.out_dir = (tmp.path / "run1").string();
    std::ostringstream out, err;
    REQUIRE(cmd_simulate(opts, out, err) == 0);
    INFO(err.str());
    CHECK(err.str().empty());
    CHECK(contains(out.str(), "artifacts in"));

    fs::path dir = tmp.path / "run1";
    for (const char* name :
         {"config.json", "metrics.txt", "trajectories.txt", "policy_table.txt", "version.txt"})
        CHECK(fs::exists(dir / name));

    std::string version = read_text(dir / "version.txt");
    CHECK(version.rfind("# pensim artifact v1\n", 0) == 0);
    CHECK(contains(version, "tool pensim 0.1.0"));
    CHECK(contains(version, "schema 1"));
    CHECK(contains(version, "command simulate"));
    CHECK(contains(version, "plan A"));
    CHECK(contains(version, "seed 11"));

    std::ifstream ms(dir / "metrics.txt");
    MetricsReport m = load_metrics(ms);
    CHECK(m.n_scenarios + m.aborted_scenarios == 6);
    CHECK(m.mean_payout == doctest::Approx(100.0).epsilon(1e-12));  // plan A fixes the payout

    CHECK(read_text(dir / "trajectories.txt").rfind("# pensim trajectories v1\n", 0) == 0);

    std::ifstream ts(dir / "policy_table.txt");
    PolicyTable table = load_policy_table(ts);
    CHECK(table.rows.size() == 3);
    for (const PolicyRow& row : table.rows) {
        CHECK(row.portfolio_id == 0);
        CHECK(row.payout_level == doctest::Approx(100.0).epsilon(1e-15));
    }

    // the stored snapshot is itself a valid config
    ExperimentConfig snap = parse_config(read_text(dir / "config.json"), {});
    CHECK(snap.plan == "A");
    CHECK(snap.sim.seed == 11);

    // byte-identical artifacts on a re-run, also with more workers
    RunOptions again = opts;
    again.out_dir = (tmp.path / "run2").string();
    std::ostringstream out2, err2;
    REQUIRE(cmd_simulate(again, out2, err2) == 0);
    CHECK(read_text(dir / "metrics.txt") == read_text(tmp.path / "run2" / "metrics.txt"));
    CHECK(read_text(dir / "trajectories.txt") ==
          read_text(tmp.path / "run2" / "trajectories.txt"));

    RunOptions par = opts;
    par.out_dir = (tmp.path / "run4").string();
    par.workers = 4;
    std::ostringstream out4, err4;
    REQUIRE(cmd_simulate(par, out4, err4) == 0);
    CHECK(read_text(dir / "metrics.txt") == read_text(tmp.path / "run4" / "metrics.txt"));
    CHECK(read_text(dir / "trajectories.txt") ==
          read_text(tmp.path / "run4" / "trajectories.txt"));
}

TEST_CASE("simulate evaluates a table given on the command line") {
    TempDir tmp("simtable");
    fs::path cfg_path = tmp.path / "cfg.json";
    write_text(cfg_path, config_text("A"));

    BuiltExperiment b = build_experiment(load_config(cfg_path.string(), {}));
    PolicyTable handed = b.initial_table;
    for (PolicyRow& row : handed.rows) row.payout_level = 104.0;
    {
        std::ofstream os(tmp.path / "table.txt");
        save_policy_table(os, handed, nullptr);
    }

    RunOptions opts;
    opts.config_path = cfg_path.string();
    opts.table_path = (tmp.path / "table.txt").string();
    opts.out_dir = (tmp.path / "run").string();
    std::ostringstream out, err;
    REQUIRE(cmd_simulate(opts, out, err) == 0);

    std::ifstream ts(tmp.path / "run" / "policy_table.txt");
    PolicyTable stored = load_policy_table(ts);
    for (const PolicyRow& row : stored.rows)
        CHECK(row.payout_level == doctest::Approx(104.0).epsilon(1e-15));
}

TEST_CASE("simulate separates load failures from run failures") {
    TempDir tmp("simfail");
    fs::path cfg_path = tmp.path / "cfg.json";
    write_text(cfg_path, config_text("A"));

    RunOptions no_cfg;
    no_cfg.out_dir = (tmp.path / "x").string();
    std::ostringstream out1, err1;
    CHECK(cmd_simulate(no_cfg, out1, err1) == 1);
    CHECK(contains(err1.str(), "config file is required"));

    RunOptions no_out;
    no_out.config_path = cfg_path.string();
    std::ostringstream out2, err2;
    CHECK(cmd_simulate(no_out, out2, err2) == 1);
    CHECK(contains(err2.str(), "output directory"));

    RunOptions bad_table;
    bad_table.config_path = cfg_path.string();
    bad_table.table_path = (tmp.path / "missing_table.txt").string();
    bad_table.out_dir = (tmp.path / "x").string();
    std::ostringstream out3, err3;
    CHECK(cmd_simulate(bad_table, out3, err3) == 1);
    CHECK(contains(err3.str(), "cannot open policy table"));

    // an output path through a regular file fails in the run stage
    write_text(tmp.path / "blocker", "plain file\n");
    RunOptions blocked;
    blocked.config_path = cfg_path.string();
    blocked.out_dir = (tmp.path / "blocker" / "sub").string();
    std::ostringstream out4, err4;
    CHECK(cmd_simulate(blocked, out4, err4) == 2);
    CHECK(contains(err4.str(), "simulate:"));
}

TEST_CASE("tune writes tuning artifacts and honors warm starts") {
    TempDir tmp("tune");
    fs::path cfg_path = tmp.path / "cfg.json";
    write_text(cfg_path, config_text("custom"));

    RunOptions opts;
    opts.config_path = cfg_path.string();
    opts.overrides = {"grids.portfolio_ids=[0]", "grids.payout_levels=[98,100,102]",
                      "grids.target_ratios=[\"none\"]"};
    opts.out_dir = (tmp.path / "run").string();
    std::ostringstream out, err;
    REQUIRE(cmd_tune(opts, out, err) == 0);
    INFO(err.str());
    CHECK(err.str().empty());
    CHECK(contains(out.str(), "tune: h="));
    CHECK(contains(out.str(), "learned breach threshold:"));
    CHECK(contains(out.str(), "in-sample:"));
    CHECK(contains(out.str(), "out-of-sample:"));

    fs::path dir = tmp.path / "run";
    for (const char* name : {"config.json", "policy_table.txt", "metrics_insample.txt",
                             "metrics.txt", "trajectories.txt", "tuning_log.txt", "version.txt"})
        CHECK(fs::exists(dir / name));

    std::string version = read_text(dir / "version.txt");
    CHECK(contains(version, "command tune"));

    std::string log = read_text(dir / "tuning_log.txt");
    CHECK(log.rfind("# pensim tuning-log v1\n", 0) == 0);
    CHECK(contains(log, "final_h "));
    CHECK(contains(log, "one_optimal 1"));

    std::ifstream ms(dir / "metrics_insample.txt");
    MetricsReport insample = load_metrics(ms);
    CHECK(insample.n_scenarios + insample.aborted_scenarios == 6);
    std::ifstream os_(dir / "metrics.txt");
    MetricsReport oos = load_metrics(os_);
    CHECK(oos.n_scenarios + oos.aborted_scenarios == 6);

    // warm start from the table the first run produced
    RunOptions warm = opts;
    warm.table_path = (dir / "policy_table.txt").string();
    warm.out_dir = (tmp.path / "warm").string();
    std::ostringstream out2, err2;
    REQUIRE(cmd_tune(warm, out2, err2) == 0);

    // a table over different ratio bins is rejected before the run stage
    PolicyTable other;
    other.bins.edges = {0.5};
    other.rows.assign(2, PolicyRow{0, 100.0, std::nullopt});
    {
        std::ofstream ts(tmp.path / "other.txt");
        save_policy_table(ts, other, nullptr);
    }
    RunOptions mismatch = opts;
    mismatch.table_path = (tmp.path / "other.txt").string();
    mismatch.out_dir = (tmp.path / "warm2").string();
    std::ostringstream out3, err3;
    CHECK(cmd_tune(mismatch, out3, err3) == 1);
    CHECK(contains(err3.str(), "different ratio bins"));
}

TEST_CASE("fit-mortality writes a loadable model document") {
    TempDir tmp("fit");

    CoxModel truth;
    truth.coefficients = Vec::Constant(1, 0.7);
    truth.baseline = BaselineHazard::gompertz();
    std::vector<SurvivalRecord> records =
        sample_survival_records(truth, 2000, 40, 60, 0.01, 7);
    {
        std::ofstream rs(tmp.path / "records.txt");
        save_survival_records(rs, records);
    }
    {
        std::ofstream ls(tmp.path / "table.txt");
        truth.baseline.save(ls);
    }
    std::vector<IncomeObservation> incomes =
        sample_income_records(IncomeModel::defaults(), 300, 25, 64, 0.0, 3);
    {
        std::ofstream is(tmp.path / "incomes.txt");
        save_income_records(is, incomes);
    }

    FitOptions opts;
    opts.records_path = (tmp.path / "records.txt").string();
    opts.life_table_path = (tmp.path / "table.txt").string();
    opts.out_path = (tmp.path / "model.txt").string();
    std::ostringstream out, err;
    REQUIRE(cmd_fit_mortality(opts, out, err) == 0);
    INFO(err.str());
    CHECK(err.str().empty());
    CHECK(contains(out.str(), "model written to"));

    {
        std::ifstream ms(tmp.path / "model.txt");
        MortalityModelFile model = load_mortality_model(ms);
        REQUIRE(model.cox.size() == 1);
        CHECK(model.cox[0] == doctest::Approx(0.7).epsilon(0.3));
        CHECK(!model.has_betas);
    }

    FitOptions with_incomes = opts;
    with_incomes.income_records_path = (tmp.path / "incomes.txt").string();
    with_incomes.out_path = (tmp.path / "model2.txt").string();
    std::ostringstream out2, err2;
    REQUIRE(cmd_fit_mortality(with_incomes, out2, err2) == 0);
    {
        std::ifstream ms(tmp.path / "model2.txt");
        MortalityModelFile model = load_mortality_model(ms);
        REQUIRE(model.has_betas);
        IncomeModel def = IncomeModel::defaults();
        for (int q = 0; q < 4; ++q)
            CHECK(model.incomes.betas[q] == doctest::Approx(def.betas[q]).epsilon(1e-9));
    }

    FitOptions missing;
    std::ostringstream out3, err3;
    CHECK(cmd_fit_mortality(missing, out3, err3) == 1);
    CHECK(contains(err3.str(), "fit-mortality needs"));

    FitOptions bad = opts;
    bad.records_path = (tmp.path / "nope.txt").string();
    std::ostringstream out4, err4;
    CHECK(cmd_fit_mortality(bad, out4, err4) == 1);
    CHECK(contains(err4.str(), "cannot open records"));

    // unwritable output path fails in the run stage
    write_text(tmp.path / "blocker", "plain file\n");
    FitOptions blocked = opts;
    blocked.out_path = (tmp.path / "blocker" / "model.txt").string();
    std::ostringstream out5, err5;
    CHECK(cmd_fit_mortality(blocked, out5, err5) == 2);
    CHECK(contains(err5.str(), "cannot write"));
}

TEST_CASE("report compares artifact directories") {
    TempDir tmp("report");
    fs::path cfg_path = tmp.path / "cfg.json";
    write_text(cfg_path, config_text("A"));

    RunOptions sim;
    sim.config_path = cfg_path.string();
    sim.out_dir = (tmp.path / "runA").string();
    std::ostringstream so1, se1;
    REQUIRE(cmd_simulate(sim, so1, se1) == 0);

    RunOptions sim2 = sim;
    sim2.overrides = {"simulation.seed=999"};
    sim2.out_dir = (tmp.path / "runB").string();
    std::ostringstream so2, se2;
    REQUIRE(cmd_simulate(sim2, so2, se2) == 0);

    ReportOptions ropts;
    ropts.artifact_dirs = {(tmp.path / "runA").string(), (tmp.path / "runB").string()};
    ropts.out_dir = (tmp.path / "cmp").string();
    std::ostringstream out, err;
    REQUIRE(cmd_report(ropts, out, err) == 0);
    INFO(err.str());
    CHECK(err.str().empty());
    CHECK(contains(out.str(), "report written to"));

    std::string cmp = read_text(tmp.path / "cmp" / "comparison.txt");
    CHECK(cmp.rfind("# pensim comparison v1\n", 0) == 0);
    CHECK(contains(cmp, "metric runA runB"));
    for (const char* row : {"mean_payout", "breach_prob_1y", "breach_prob_horizon",
                            "ex_post_breach_value_pct", "mean_payout_change",
                            "mean_terminal_ratio", "learned_breach_threshold"})
        CHECK(contains(cmp, row));

    for (const char* name : {"bands_runA.txt", "bands_runB.txt"}) {
        std::string bands = read_text(tmp.path / "cmp" / name);
        CHECK(bands.rfind("# pensim bands v1\n", 0) == 0);
        CHECK(contains(bands, "year p5 p25 p50 p75 p95"));
    }

    ReportOptions empty;
    empty.out_dir = (tmp.path / "cmp2").string();
    std::ostringstream out2, err2;
    CHECK(cmd_report(empty, out2, err2) == 1);
    CHECK(contains(err2.str(), "artifact directories"));

    fs::create_directories(tmp.path / "notart");
    ReportOptions bad;
    bad.artifact_dirs = {(tmp.path / "notart").string()};
    bad.out_dir = (tmp.path / "cmp3").string();
    std::ostringstream out3, err3;
    CHECK(cmd_report(bad, out3, err3) == 1);
    CHECK(contains(err3.str(), "not an artifact directory"));
}
