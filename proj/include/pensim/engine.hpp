#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "pensim/policy.hpp"

namespace pensim {

struct SimulationConfig {
    int years = 30;              // plan years simulated per scenario
    int liability_horizon = 30;  // projection length T
    int scenarios = 1000;
    double fee = 0.005;          // fraction of assets per year
    double initial_ratio = 1.6;  // assets over liabilities at the start
    std::uint64_t seed = 1;
    int inner_paths = 200;       // per liability projection
    double max_abort_fraction = 0.0;

    void validate() const;
};

// Everything a policy evaluation needs besides the policy itself.
struct EvalContext {
    AssetUniverse universe;
    std::vector<PortfolioSpec> menu;
    PlanRules rules;
    CoxModel mortality;
    IncomeModel incomes;
    CurveModelParams curve;
    DemographicConfig demographics;
    SimulationConfig sim;
    Population base_population;
};

// Per scenario-year quantities that do not depend on the policy: the
// population trajectory's cashflow decomposition and the liability
// projections computed along it.
struct ScenarioYear {
    double contributions = 0;    // inflow at the year's population state
    double baseline_payout = 0;  // benefit outflow at payout level 100
    int living_retirees = 0;
    double liabilities = 0;       // total from the year's projection
    double liabilities_next = 0;  // shifted estimate feeding the cash rule
};

struct ScenarioData {
    Mat portfolio_returns;            // years x menu entries
    std::vector<ScenarioYear> years;  // sim years + 1 (terminal entry)
};

// Joint sampled trajectories of returns, curves and life paths, reusable
// across policy evaluations (common random numbers).
struct ScenarioSet {
    std::uint64_t seed = 0;
    double initial_assets = 0;  // initial ratio times the year-0 liabilities
    int years = 0;
    std::vector<ReturnScenario> market;
    std::vector<ScenarioData> data;
};

// Deterministic in (ctx, seed); the worker count only affects wall time.
ScenarioSet build_scenario_set(const EvalContext& ctx, std::uint64_t seed, int workers = 1);

struct PlanState {
    int year = 0;
    double assets = 0;
    Population population;
    double previous_payout = 100;
};

// v' = (1 + r) * (v + net cashflow + injection) * (1 - fee)
double fund_update(double assets, double realized_return, double net_cashflow, double injection,
                   double fee);

// One plan year: fund arithmetic, then the population advances into the
// next year.  The effective payout (clamped around the previous level)
// becomes the new previous level.
PlanState step(PlanState state, const PolicyRow& actions, double realized_return,
               double realized_liability, double injection, double fee, const PlanRules& rules,
               const CoxModel& model, const IncomeModel& incomes, PathRng& rng);

struct MetricsReport {
    double cash_call_prob = 0;        // fraction of scenario-years with a call
    double mean_payout = 100;         // over years with a living retiree
    double mean_payout_change = 0;    // mean |yearly payout move|, same years
    double breach_prob_1y = 0;        // same event as cash_call_prob
    double breach_prob_horizon = 0;   // fraction of scenarios with any call
    double ex_post_breach_value_pct = 0;  // mean injected cash over initial assets, percent
    double mean_terminal_ratio = 0;
    long scenario_years = 0;
    int n_scenarios = 0;
    int aborted_scenarios = 0;
};

struct TrajectoryRow {
    int scenario = 0;
    int year = 0;
    double assets = 0;
    double ratio = 0;
    int portfolio_id = 0;
    double payout = 0;
    double external_cash = 0;
    double realized_return = 0;
    double net_cashflow = 0;
};

struct TrajectoryLog {
    int scenarios = 0;
    int years = 0;
    std::vector<TrajectoryRow> rows;
    std::vector<int> aborted;  // scenarios cut short by a division-by-zero abort
};

struct EvalResult {
    MetricsReport metrics;
    TrajectoryLog log;
};

// Monte Carlo policy evaluation on a prebuilt scenario set.  Bitwise
// deterministic for fixed inputs.  Throws EvaluationFailure when the
// aborted-scenario fraction exceeds the configured limit.
EvalResult evaluate_policy(const PolicyTable& table, const EvalContext& ctx,
                           const ScenarioSet& set, bool with_log = true);

// Convenience: builds the scenario set at ctx.sim.seed first.
EvalResult evaluate_policy(const PolicyTable& table, const EvalContext& ctx, int workers = 1,
                           bool with_log = true);

// target ratio times the projected liabilities of `pop` at `year`.
double initial_assets(const Population& pop, const PlanRules& rules, const CoxModel& model,
                      const IncomeModel& incomes, int year, int horizon, int inner_paths,
                      const Vec& yields, double target_ratio, std::uint64_t seed);

void save_metrics(std::ostream& os, const MetricsReport& m);
MetricsReport load_metrics(std::istream& is);
void save_trajectories(std::ostream& os, const TrajectoryLog& log);

// Runs f(0..n-1) on `workers` threads; any exception is rethrown once all
// workers finished.  Output slots keyed by index keep results independent
// of scheduling.
void parallel_for(int n, int workers, const std::function<void(int)>& f);

}  // namespace pensim
