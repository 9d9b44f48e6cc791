#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "pensim/errors.hpp"
#include "pensim/tuning.hpp"

using namespace pensim;

namespace {

MetricSpec band(double low, double high, double priority = 1.0) {
    MetricSpec s;
    s.low = low;
    s.high = high;
    s.priority = priority;
    return s;
}

ObjectiveSpec default_objective() {
    ObjectiveSpec spec;
    spec.call_prob = band(0.001, 0.02, 1.0);
    spec.payout = band(100.0, 110.0, 0.02);
    spec.payout_change = band(0.0, 1.0, 0.1);
    return spec;
}

EvalContext small_context(int scenarios = 20) {
    EvalContext ctx;
    std::vector<AssetClass> assets{{"dom_fi", Region::domestic, AssetGroup::fixed_income},
                                   {"dom_eq", Region::domestic, AssetGroup::equities},
                                   {"for_alt", Region::foreign, AssetGroup::alternatives}};
    Vec mean{{0.03, 0.07, 0.05}};
    Mat corr{{1.0, 0.2, 0.1}, {0.2, 1.0, 0.3}, {0.1, 0.3, 1.0}};
    Vec vol{{0.05, 0.18, 0.12}};
    Mat cov = vol.asDiagonal() * corr * vol.asDiagonal();
    ctx.universe = AssetUniverse(assets, mean, cov);
    PortfolioConstraints con;
    con.per_asset_cap = 0.8;
    ctx.menu = build_portfolio_menu(ctx.universe, con, {20.0, 5.0});
    ctx.mortality.coefficients = Vec::Zero(9);
    ctx.mortality.baseline = BaselineHazard::gompertz();
    ctx.base_population = synthesize_population(40, ctx.demographics, ctx.rules, ctx.mortality,
                                                ctx.incomes, 3);
    ctx.sim.years = 5;
    ctx.sim.liability_horizon = 5;
    ctx.sim.scenarios = scenarios;
    ctx.sim.inner_paths = 4;
    ctx.sim.seed = 77;
    return ctx;
}

PolicyTable two_bin_table(double payout0, double payout1) {
    PolicyTable t;
    t.bins.edges = {1.0};
    t.rows = {PolicyRow{0, payout0, std::nullopt}, PolicyRow{0, payout1, std::nullopt}};
    return t;
}

}  // namespace

TEST_CASE("band penalty hand values") {
    MetricSpec s = band(0.0, 1.0, 1.0);
    CHECK(eta(0.0, s) == 0.0);
    CHECK(eta(1.0, s) == 0.0);
    CHECK(eta(0.5, s) == doctest::Approx(-0.25).epsilon(1e-15));
    CHECK(eta(2.0, band(0.0, 1.0, 2.0)) == doctest::Approx(10.0).epsilon(1e-15));
    CHECK(eta(-1.0, band(0.0, 1.0, 2.0)) == doctest::Approx(10.0).epsilon(1e-15));
    // degenerate band collapses to zero penalty at its point
    CHECK(eta(0.5, band(0.5, 0.5, 3.0)) == 0.0);

    CHECK_THROWS_AS(band(1.0, 0.0).validate("x"), ConfigError);
    CHECK_THROWS_AS(band(0.0, 1.0, -1.0).validate("x"), ConfigError);
}

TEST_CASE("band penalty is continuous and zero at both edges") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        double low = 4.0 * u(gen) - 2.0;
        MetricSpec s = band(low, low + 2.0 * u(gen) + 1e-6, 0.25 + 4.0 * u(gen));
        CHECK(eta(s.low, s) == 0.0);
        CHECK(eta(s.high, s) == 0.0);
        double m = s.midpoint();
        const double epsx = 1e-9;
        for (double edge : {s.low, m, s.high}) {
            double jump = std::abs(eta(edge + epsx, s) - eta(edge - epsx, s));
            // a continuous kink changes by at most the steeper slope over 2 eps
            CHECK(jump <= 2.0 * epsx * s.priority * s.outer_slope() + 1e-12);
        }
        CHECK(eta(m, s) <= eta(m + 0.1 * (s.high - m), s));
        CHECK(eta(m, s) <= eta(m - 0.1 * (m - s.low), s));
    }
}

TEST_CASE("outside slope is exactly ten times the inside slope") {
    // Band edges on a 2^-20 lattice with power-of-two priorities make every
    // product in the penalty exact, so difference quotients recover the
    // slopes without rounding.
    std::mt19937_64 gen(8);
    const double ulp20 = std::ldexp(1.0, -20);
    for (int trial = 0; trial < 100; ++trial) {
        double low = static_cast<double>(gen() % 1000000) * ulp20;
        int width = 6 + 2 * static_cast<int>(gen() % 1000);  // even lattice count
        double high = low + width * ulp20;
        double priority = std::ldexp(1.0, static_cast<int>(gen() % 7) - 3);
        MetricSpec s = band(low, high, priority);
        CHECK(s.outer_slope() == 10.0 * s.inner_slope());

        double x1 = low - (1 + static_cast<int>(gen() % 500)) * ulp20;
        double x2 = x1 - (1 + static_cast<int>(gen() % 500)) * ulp20;
        double slope_out = (eta(x2, s) - eta(x1, s)) / (x2 - x1);

        int half = width / 2;
        int a = 1 + static_cast<int>(gen() % (half - 2));
        int b = a + 1 + static_cast<int>(gen() % (half - a - 1 > 0 ? half - a - 1 : 1));
        double y1 = low + std::min(a, half - 1) * ulp20;
        double y2 = low + std::min(b, half - 1) * ulp20;
        if (y1 == y2) continue;
        double slope_in = (eta(y2, s) - eta(y1, s)) / (y2 - y1);

        CHECK(slope_out / slope_in == 10.0);
        CHECK(slope_out == -priority * s.outer_slope());
        CHECK(slope_in == -priority * s.inner_slope());
    }
}

TEST_CASE("objective adds the three band penalties") {
    ObjectiveSpec spec = default_objective();
    MetricsReport m;
    m.cash_call_prob = 0.005;
    m.mean_payout = 103.0;
    m.mean_payout_change = 1.7;
    double expect = eta(0.005, spec.call_prob) + eta(103.0, spec.payout) +
                    eta(1.7, spec.payout_change);
    CHECK(objective(m, spec) == expect);

    // doubling power-of-two priorities doubles the objective exactly
    ObjectiveSpec twice = spec;
    twice.call_prob.priority *= 2.0;
    twice.payout.priority *= 2.0;
    twice.payout_change.priority *= 2.0;
    CHECK(objective(m, twice) == 2.0 * objective(m, spec));
}

TEST_CASE("grid validation enforces menu and plan bounds") {
    PlanRules rules;
    ActionGrids g;
    g.portfolio_ids = {0, 1};
    g.payout_levels = {96.0, 100.0, 104.0};
    g.target_ratios = {std::nullopt, 1.0};
    CHECK_NOTHROW(g.validate(2, rules));
    CHECK_THROWS_AS(g.validate(1, rules), ConfigError);

    ActionGrids bad = g;
    bad.payout_levels = {80.0};
    CHECK_THROWS_AS(bad.validate(2, rules), ConfigError);
    bad = g;
    bad.target_ratios = {std::optional<double>(-0.2)};
    CHECK_THROWS_AS(bad.validate(2, rules), ConfigError);
    bad = g;
    bad.portfolio_ids.clear();
    CHECK_THROWS_AS(bad.validate(2, rules), ConfigError);
}

TEST_CASE("coordinate descent matches exhaustive search on a two-cell problem") {
    EvalContext ctx = small_context();
    ScenarioSet set = build_scenario_set(ctx, ctx.sim.seed);
    ObjectiveSpec spec = default_objective();
    ActionGrids grids;
    grids.portfolio_ids = {0};
    grids.payout_levels = {96.0, 100.0, 104.0};
    grids.target_ratios = {std::nullopt};

    double best = 1e300;
    for (double p0 : grids.payout_levels) {
        for (double p1 : grids.payout_levels) {
            PolicyTable t = two_bin_table(p0, p1);
            double h = objective(evaluate_policy(t, ctx, set, false).metrics, spec);
            best = std::min(best, h);
        }
    }

    TuneResult res = tune(two_bin_table(100.0, 100.0), ctx, set, spec, grids);
    CHECK(res.final_h == doctest::Approx(best).epsilon(1e-12));
    CHECK(res.one_optimal);
    CHECK(objective(res.final_metrics, spec) == res.final_h);

    OneOptimalityCheck check = verify_one_optimality(res.table, ctx, set, spec, grids);
    CHECK(check.one_optimal);
    CHECK(check.h_current == res.final_h);
}

TEST_CASE("accepted moves strictly descend and rerunning is a fixed point") {
    EvalContext ctx = small_context();
    ScenarioSet set = build_scenario_set(ctx, ctx.sim.seed);
    ObjectiveSpec spec = default_objective();
    ActionGrids grids;
    grids.portfolio_ids = {0, 1};
    grids.payout_levels = {92.0, 96.0, 100.0, 104.0, 108.0};
    grids.target_ratios = {std::nullopt, 0.8, 1.2};

    PolicyTable initial;
    initial.bins = RatioBins::defaults();
    initial.rows.assign(initial.bins.count(), PolicyRow{0, 100.0, std::nullopt});

    TuneResult res = tune(initial, ctx, set, spec, grids);
    double prev_h = 0;
    for (size_t i = 0; i < res.moves.size(); ++i) {
        const TuneMove& mv = res.moves[i];
        CHECK(mv.h_after <= mv.h_before - 1e-12);
        if (i > 0) CHECK(mv.h_before == prev_h);
        prev_h = mv.h_after;
    }
    if (!res.moves.empty()) CHECK(res.final_h == res.moves.back().h_after);
    CHECK(res.sweeps <= 50);

    // a second pass from the tuned table changes nothing
    TuneResult again = tune(res.table, ctx, set, spec, grids);
    CHECK(again.moves.empty());
    CHECK(again.one_optimal);
    CHECK(again.final_h == res.final_h);

    // determinism: identical rerun gives identical moves
    TuneResult rerun = tune(initial, ctx, set, spec, grids);
    REQUIRE(rerun.moves.size() == res.moves.size());
    for (size_t i = 0; i < res.moves.size(); ++i) {
        CHECK(rerun.moves[i].bin == res.moves[i].bin);
        CHECK(rerun.moves[i].column == res.moves[i].column);
        CHECK(rerun.moves[i].value == res.moves[i].value);
        CHECK(rerun.moves[i].h_after == res.moves[i].h_after);
    }

    // tuner-reported one-optimality agrees with the exhaustive re-check
    if (res.one_optimal) {
        OneOptimalityCheck check = verify_one_optimality(res.table, ctx, set, spec, grids);
        CHECK(check.one_optimal);
    }
}

TEST_CASE("perturbing a tuned table is detected with a repairing move") {
    EvalContext ctx = small_context();
    ScenarioSet set = build_scenario_set(ctx, ctx.sim.seed);
    ObjectiveSpec spec = default_objective();
    ActionGrids grids;
    grids.portfolio_ids = {0, 1};
    grids.payout_levels = {96.0, 100.0, 104.0};
    grids.target_ratios = {std::nullopt};

    PolicyTable initial;
    initial.bins = RatioBins::defaults();
    initial.rows.assign(initial.bins.count(), PolicyRow{0, 100.0, std::nullopt});
    TuneResult res = tune(initial, ctx, set, spec, grids);
    REQUIRE(res.one_optimal);

    // push one visited cell off its tuned value
    PolicyTable bent = res.table;
    int bin = res.moves.empty() ? 6 : res.moves.back().bin;
    bent.rows[bin].payout_level = bent.rows[bin].payout_level == 96.0 ? 104.0 : 96.0;

    OneOptimalityCheck check = verify_one_optimality(bent, ctx, set, spec, grids);
    if (!check.one_optimal) {
        CHECK(check.h_deviation < check.h_current - 1e-12);
        CHECK(check.bin >= 0);
        CHECK(check.column >= 0);
        CHECK(check.candidate >= 0);
    } else {
        // the perturbed table must then itself be a fixed point
        TuneResult re = tune(bent, ctx, set, spec, grids);
        CHECK(re.moves.empty());
    }
}

TEST_CASE("singleton grids terminate immediately as vacuously optimal") {
    EvalContext ctx = small_context(4);
    ScenarioSet set = build_scenario_set(ctx, ctx.sim.seed);
    ObjectiveSpec spec = default_objective();
    ActionGrids grids;
    grids.portfolio_ids = {0};
    grids.payout_levels = {100.0};
    grids.target_ratios = {std::nullopt};

    PolicyTable initial;
    initial.bins = RatioBins::defaults();
    initial.rows.assign(initial.bins.count(), PolicyRow{0, 100.0, std::nullopt});
    TuneResult res = tune(initial, ctx, set, spec, grids);
    CHECK(res.one_optimal);
    CHECK(res.moves.empty());
    CHECK(res.sweeps == 1);
    CHECK(res.evaluations == 1);  // only the initial table was evaluated
    CHECK(res.failed_evaluations == 0);
}

TEST_CASE("failing candidates count as failures and never win") {
    EvalContext ctx;
    std::vector<AssetClass> assets{{"good", Region::domestic, AssetGroup::fixed_income},
                                   {"sink", Region::domestic, AssetGroup::equities}};
    ctx.universe = AssetUniverse(assets, Vec{{0.05, -1.0}}, Mat::Zero(2, 2));
    PortfolioSpec good, sink;
    good.id = 0;
    good.weights = Vec{{1.0, 0.0}};
    sink.id = 1;
    sink.weights = Vec{{0.0, 1.0}};
    ctx.menu = {good, sink};
    ctx.sim.years = 1;
    ctx.sim.scenarios = 2;
    ctx.sim.fee = 0.0;

    ScenarioSet set;
    set.seed = 1;
    set.initial_assets = 50.0;
    set.years = 1;
    set.data.resize(2);
    // one scenario per bin so each poisoned candidate aborts somewhere
    double liab[2] = {100.0, 1000.0};
    for (int s = 0; s < 2; ++s) {
        set.data[s].portfolio_returns = Mat::Zero(1, 2);
        set.data[s].years.assign(2, ScenarioYear{});
        set.data[s].years[0].liabilities = liab[s];
        set.data[s].years[0].liabilities_next = liab[s];
        set.data[s].years[1].liabilities = liab[s];
    }

    PolicyTable initial;
    initial.bins.edges = {0.3};
    initial.rows = {PolicyRow{0, 100.0, 1.0}, PolicyRow{0, 100.0, 1.0}};

    ObjectiveSpec spec = default_objective();
    ActionGrids grids;
    grids.portfolio_ids = {0, 1};  // the sink portfolio always divides by zero
    grids.payout_levels = {100.0};
    grids.target_ratios = {std::optional<double>(1.0)};

    TuneResult res = tune(initial, ctx, set, spec, grids);
    CHECK(res.failed_evaluations == 2);  // one poisoned candidate per bin
    CHECK(res.one_optimal);
    CHECK(res.table.rows[0].portfolio_id == 0);
    CHECK(res.table.rows[1].portfolio_id == 0);

    // the poisoned move is also skipped by the optimality check
    OneOptimalityCheck check = verify_one_optimality(res.table, ctx, set, spec, grids);
    CHECK(check.one_optimal);
}

TEST_CASE("sweep cap stops the search even when moves remain") {
    EvalContext ctx = small_context();
    ScenarioSet set = build_scenario_set(ctx, ctx.sim.seed);
    ObjectiveSpec spec = default_objective();
    ActionGrids grids;
    grids.portfolio_ids = {0, 1};
    grids.payout_levels = {92.0, 96.0, 100.0, 104.0, 108.0};
    grids.target_ratios = {std::nullopt, 0.8, 1.2};

    PolicyTable initial;
    initial.bins = RatioBins::defaults();
    initial.rows.assign(initial.bins.count(), PolicyRow{0, 100.0, std::nullopt});
    TuneOptions opts;
    opts.max_sweeps = 1;
    TuneResult res = tune(initial, ctx, set, spec, grids, opts);
    CHECK(res.sweeps == 1);

    TuneOptions bad;
    bad.max_sweeps = 0;
    CHECK_THROWS_AS(tune(initial, ctx, set, spec, grids, bad), ConfigError);
}
