#include "pensim/engine.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>

#include "pensim/errors.hpp"

namespace pensim {

namespace {

constexpr std::uint64_t kProjectionSalt = 0x70726f6aULL;  // per (scenario, year) streams

std::uint64_t projection_seed(std::uint64_t seed, int scenario, int year) {
    // Year 0 happens before any scenario-specific draw, so every scenario
    // shares one stream there and starts from the same assets.
    if (year == 0) return mix_seed(mix_seed(seed, kProjectionSalt), 0x79303030ULL);
    return mix_seed(mix_seed(mix_seed(seed, kProjectionSalt), static_cast<std::uint64_t>(scenario)),
                    static_cast<std::uint64_t>(year));
}

ScenarioYear population_stats(const Population& pop, const PlanRules& rules) {
    ScenarioYear y;
    for (const Individual& ind : pop.members) {
        if (ind.state == LifeState::working) {
            y.contributions += 0.01 * rules.contribution_pct * ind.current_income;
        } else if (ind.state == LifeState::retired) {
            y.baseline_payout += 0.01 * rules.baseline_payout_pct * ind.pension_base;
            y.living_retirees += 1;
        }
    }
    return y;
}

struct ScenarioStats {
    long call_years = 0;
    bool any_call = false;
    double injected = 0;
    double payout_sum = 0;
    long payout_years = 0;
    double change_sum = 0;
    long change_years = 0;
    double terminal_ratio = 0;
    long years_run = 0;
    bool aborted = false;
};

}  // namespace

void SimulationConfig::validate() const {
    if (years < 1) throw ConfigError("simulation: years must be at least 1");
    if (liability_horizon < 0) throw ConfigError("simulation: liability_horizon must be >= 0");
    if (scenarios < 1) throw ConfigError("simulation: scenarios must be at least 1");
    if (!(fee >= 0.0 && fee < 1.0)) throw ConfigError("simulation: fee must lie in [0, 1)");
    if (!(initial_ratio >= 0.0)) throw ConfigError("simulation: initial_ratio must be >= 0");
    if (inner_paths < 1) throw ConfigError("simulation: inner_paths must be at least 1");
    if (!(max_abort_fraction >= 0.0 && max_abort_fraction <= 1.0))
        throw ConfigError("simulation: max_abort_fraction must lie in [0, 1]");
}

void parallel_for(int n, int workers, const std::function<void(int)>& f) {
    if (n <= 0) return;
    if (workers <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&]() {
        while (true) {
            int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    int count = std::min(workers, n);
    std::vector<std::thread> pool;
    pool.reserve(count);
    for (int i = 0; i < count; ++i) pool.emplace_back(run);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

double fund_update(double assets, double realized_return, double net_cashflow, double injection,
                   double fee) {
    return (1.0 + realized_return) * (assets + net_cashflow + injection) * (1.0 - fee);
}

double initial_assets(const Population& pop, const PlanRules& rules, const CoxModel& model,
                      const IncomeModel& incomes, int year, int horizon, int inner_paths,
                      const Vec& yields, double target_ratio, std::uint64_t seed) {
    if (!(target_ratio >= 0.0)) throw ConfigError("initial_assets: target_ratio must be >= 0");
    LiabilityProjection proj = project_liabilities(pop, rules, model, incomes, year, horizon,
                                                   inner_paths, yields, seed);
    if (!(proj.total > 0.0))
        throw NonpositiveInitialLiabilities("initial assets: projected liabilities are not positive");
    return target_ratio * proj.total;
}

ScenarioSet build_scenario_set(const EvalContext& ctx, std::uint64_t seed, int workers) {
    ctx.sim.validate();
    ctx.rules.validate();
    if (ctx.menu.empty()) throw ConfigError("scenario set: portfolio menu is empty");

    const int T_sim = ctx.sim.years;
    const int T = ctx.sim.liability_horizon;
    const int S = ctx.sim.scenarios;
    const int base_year = ctx.demographics.base_year;

    ScenarioSet set;
    set.seed = seed;
    set.years = T_sim;
    set.market = generate_return_scenarios(ctx.universe, ctx.curve, T_sim, std::max(T, 1), S, seed);

    // Death probabilities depend only on (member, year), so one table serves
    // the outer paths and every projection.
    MortalitySchedule schedule = build_mortality_schedule(
        ctx.base_population, ctx.mortality, base_year + 1, base_year + T_sim + T + 1);

    // Year 0 is common to all scenarios.
    Vec yields0 = set.market[0].yield_curves.row(0).transpose();
    LiabilityProjection proj0 =
        project_liabilities(ctx.base_population, ctx.rules, ctx.mortality, ctx.incomes, base_year,
                            T, ctx.sim.inner_paths, yields0, projection_seed(seed, 0, 0), &schedule);
    if (!(proj0.total > 0.0))
        throw NonpositiveInitialLiabilities("scenario set: initial projected liabilities are not positive");
    set.initial_assets = ctx.sim.initial_ratio * proj0.total;

    ScenarioYear year0 = population_stats(ctx.base_population, ctx.rules);
    year0.liabilities = proj0.total;
    year0.liabilities_next = proj0.total_shifted();

    const int n_portfolios = static_cast<int>(ctx.menu.size());
    set.data.assign(S, ScenarioData{});

    parallel_for(S, workers, [&](int s) {
        ScenarioData& d = set.data[s];
        d.years.assign(T_sim + 1, ScenarioYear{});
        d.years[0] = year0;
        d.portfolio_returns.resize(T_sim, n_portfolios);
        for (int t = 0; t < T_sim; ++t)
            for (int p = 0; p < n_portfolios; ++p)
                d.portfolio_returns(t, p) = set.market[s].returns.row(t).dot(ctx.menu[p].weights);

        Population pop = ctx.base_population;
        PathRng life(make_stream(seed, stream::life, static_cast<std::uint64_t>(s)));
        for (int t = 1; t <= T_sim; ++t) {
            step_population(pop, ctx.rules, ctx.mortality, ctx.incomes, base_year + t, life,
                            &schedule);
            ScenarioYear y = population_stats(pop, ctx.rules);
            Vec yields = set.market[s].yield_curves.row(t).transpose();
            LiabilityProjection proj = project_liabilities(
                pop, ctx.rules, ctx.mortality, ctx.incomes, base_year + t, T, ctx.sim.inner_paths,
                yields, projection_seed(seed, s, t), &schedule);
            y.liabilities = proj.total;
            y.liabilities_next = proj.total_shifted();
            d.years[t] = y;
        }
    });
    return set;
}

PlanState step(PlanState state, const PolicyRow& actions, double realized_return,
               double realized_liability, double injection, double fee, const PlanRules& rules,
               const CoxModel& model, const IncomeModel& incomes, PathRng& rng) {
    state.assets = fund_update(state.assets, realized_return, realized_liability, injection, fee);
    state.previous_payout = clamp_payout(actions.payout_level, state.previous_payout, rules);
    state.year += 1;
    step_population(state.population, rules, model, incomes, state.year, rng);
    return state;
}

EvalResult evaluate_policy(const PolicyTable& table, const EvalContext& ctx,
                           const ScenarioSet& set, bool with_log) {
    table.validate(static_cast<int>(ctx.menu.size()), ctx.rules);
    const int S = static_cast<int>(set.data.size());
    const int T_sim = set.years;
    const double fee = ctx.sim.fee;
    const double v0 = set.initial_assets;

    // Expected one-year portfolio returns enter the cash-injection rule.
    std::vector<double> expected_return(ctx.menu.size());
    for (std::size_t p = 0; p < ctx.menu.size(); ++p)
        expected_return[p] = ctx.menu[p].weights.dot(ctx.universe.mean_returns);

    std::vector<ScenarioStats> stats(S);
    TrajectoryLog log;
    if (with_log) {
        log.scenarios = S;
        log.years = T_sim;
        log.rows.reserve(static_cast<std::size_t>(S) * T_sim);
    }

    for (int s = 0; s < S; ++s) {
        const ScenarioData& d = set.data[s];
        ScenarioStats& st = stats[s];
        double v = v0;
        double prev = 100.0;
        for (int t = 0; t < T_sim; ++t) {
            const ScenarioYear& y = d.years[t];
            double rho = extended_ratio(v, y.liabilities);
            const PolicyRow& row = table.rows[table.bins.bin_of(rho)];
            double payout = clamp_payout(row.payout_level, prev, ctx.rules);
            double cashflow = y.contributions - 0.01 * payout * y.baseline_payout;
            double injection = 0.0;
            if (row.target_ratio) {
                try {
                    injection = external_cash_amount(v, cashflow, expected_return[row.portfolio_id],
                                                     fee, *row.target_ratio, y.liabilities_next);
                } catch (const DivisionByZero&) {
                    st.aborted = true;
                    break;
                }
            }
            double r = d.portfolio_returns(t, row.portfolio_id);
            if (with_log) {
                TrajectoryRow out;
                out.scenario = s;
                out.year = t;
                out.assets = v;
                out.ratio = rho;
                out.portfolio_id = row.portfolio_id;
                out.payout = payout;
                out.external_cash = injection;
                out.realized_return = r;
                out.net_cashflow = cashflow;
                log.rows.push_back(out);
            }
            if (injection > 0.0) {
                st.call_years += 1;
                st.any_call = true;
                st.injected += injection;
            }
            if (y.living_retirees > 0) {
                st.payout_sum += payout;
                st.payout_years += 1;
                if (t >= 1) {
                    st.change_sum += std::abs(payout - prev);
                    st.change_years += 1;
                }
            }
            v = fund_update(v, r, cashflow, injection, fee);
            prev = payout;
            st.years_run += 1;
        }
        if (!st.aborted) st.terminal_ratio = extended_ratio(v, d.years[T_sim].liabilities);
        else if (with_log) log.aborted.push_back(s);
    }

    MetricsReport m;
    m.n_scenarios = S;
    long call_years = 0, payout_years = 0, change_years = 0;
    double payout_sum = 0, change_sum = 0, injected_over_v0 = 0, terminal_sum = 0;
    int with_call = 0;
    for (const ScenarioStats& st : stats) {
        if (st.aborted) {
            m.aborted_scenarios += 1;
            continue;
        }
        m.scenario_years += st.years_run;
        call_years += st.call_years;
        payout_sum += st.payout_sum;
        payout_years += st.payout_years;
        change_sum += st.change_sum;
        change_years += st.change_years;
        injected_over_v0 += st.injected / v0;
        terminal_sum += st.terminal_ratio;
        if (st.any_call) with_call += 1;
    }
    int kept = S - m.aborted_scenarios;
    double abort_fraction = static_cast<double>(m.aborted_scenarios) / S;
    if (kept == 0 || abort_fraction > ctx.sim.max_abort_fraction) {
        std::ostringstream msg;
        msg << "evaluation: " << m.aborted_scenarios << " of " << S
            << " scenarios aborted on division by zero (limit fraction "
            << ctx.sim.max_abort_fraction << ")";
        throw EvaluationFailure(msg.str());
    }
    m.cash_call_prob = static_cast<double>(call_years) / static_cast<double>(m.scenario_years);
    m.breach_prob_1y = m.cash_call_prob;
    m.breach_prob_horizon = static_cast<double>(with_call) / kept;
    m.mean_payout = payout_years > 0 ? payout_sum / static_cast<double>(payout_years) : 100.0;
    m.mean_payout_change = change_years > 0 ? change_sum / static_cast<double>(change_years) : 0.0;
    m.ex_post_breach_value_pct = 100.0 * injected_over_v0 / kept;
    m.mean_terminal_ratio = terminal_sum / kept;

    EvalResult result;
    result.metrics = m;
    result.log = std::move(log);
    return result;
}

EvalResult evaluate_policy(const PolicyTable& table, const EvalContext& ctx, int workers,
                           bool with_log) {
    ScenarioSet set = build_scenario_set(ctx, ctx.sim.seed, workers);
    return evaluate_policy(table, ctx, set, with_log);
}

void save_metrics(std::ostream& os, const MetricsReport& m) {
    os.precision(17);
    os << "# pensim metrics v1\n";
    os << "cash_call_prob " << m.cash_call_prob << "\n";
    os << "mean_payout " << m.mean_payout << "\n";
    os << "mean_payout_change " << m.mean_payout_change << "\n";
    os << "breach_prob_1y " << m.breach_prob_1y << "\n";
    os << "breach_prob_horizon " << m.breach_prob_horizon << "\n";
    os << "ex_post_breach_value_pct " << m.ex_post_breach_value_pct << "\n";
    os << "mean_terminal_ratio " << m.mean_terminal_ratio << "\n";
    os << "scenario_years " << m.scenario_years << "\n";
    os << "scenarios " << m.n_scenarios << "\n";
    os << "aborted_scenarios " << m.aborted_scenarios << "\n";
}

MetricsReport load_metrics(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "# pensim metrics v1")
        throw FormatError("metrics: missing schema line '# pensim metrics v1'");
    MetricsReport m;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        double value = 0;
        if (!(ls >> value)) throw FormatError("metrics: bad row '" + line + "'");
        if (key == "cash_call_prob") m.cash_call_prob = value;
        else if (key == "mean_payout") m.mean_payout = value;
        else if (key == "mean_payout_change") m.mean_payout_change = value;
        else if (key == "breach_prob_1y") m.breach_prob_1y = value;
        else if (key == "breach_prob_horizon") m.breach_prob_horizon = value;
        else if (key == "ex_post_breach_value_pct") m.ex_post_breach_value_pct = value;
        else if (key == "mean_terminal_ratio") m.mean_terminal_ratio = value;
        else if (key == "scenario_years") m.scenario_years = static_cast<long>(value);
        else if (key == "scenarios") m.n_scenarios = static_cast<int>(value);
        else if (key == "aborted_scenarios") m.aborted_scenarios = static_cast<int>(value);
        else throw FormatError("metrics: unknown key '" + key + "'");
    }
    return m;
}

void save_trajectories(std::ostream& os, const TrajectoryLog& log) {
    os.precision(17);
    os << "# pensim trajectories v1\n";
    os << "# scenarios " << log.scenarios << " years " << log.years << "\n";
    for (int s : log.aborted) os << "# aborted " << s << "\n";
    os << "scenario year assets ratio portfolio payout external_cash realized_return net_cashflow\n";
    for (const TrajectoryRow& r : log.rows) {
        os << r.scenario << " " << r.year << " " << r.assets << " " << r.ratio << " "
           << r.portfolio_id << " " << r.payout << " " << r.external_cash << " "
           << r.realized_return << " " << r.net_cashflow << "\n";
    }
}

}  // namespace pensim
