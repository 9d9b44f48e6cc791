#include "pensim/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pensim/errors.hpp"

namespace pensim {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ConfigError("config: " + where + ": " + what);
}

const json& need(const json& j, const char* key, const char* section) {
    auto it = j.find(key);
    if (it == j.end()) fail(section, std::string("missing key '") + key + "'");
    return *it;
}

template <typename T>
void read_into(const json& j, const char* key, T& out, const char* section) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception& e) {
        fail(section, std::string("bad value for '") + key + "': " + e.what());
    }
}

Interval read_interval(const json& j, const char* key, Interval fallback, const char* section) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_array() || it->size() != 2)
        fail(section, std::string("'") + key + "' must be [lo, hi]");
    return Interval{(*it)[0].get<double>(), (*it)[1].get<double>()};
}

AssetUniverse read_universe(const json& root) {
    if (!root.contains("universe")) fail("universe", "section is required");
    const json& u = root.at("universe");
    const json& assets = need(u, "assets", "universe");
    if (!assets.is_array() || assets.empty()) fail("universe", "'assets' must be a non-empty array");
    const int n = static_cast<int>(assets.size());

    std::vector<AssetClass> classes;
    Vec mean(n), vol(n);
    for (int i = 0; i < n; ++i) {
        const json& a = assets[i];
        AssetClass c;
        c.name = need(a, "name", "universe.assets").get<std::string>();
        std::string region = need(a, "region", "universe.assets").get<std::string>();
        if (region == "domestic") c.region = Region::domestic;
        else if (region == "foreign") c.region = Region::foreign;
        else fail("universe.assets", "region must be 'domestic' or 'foreign', got '" + region + "'");
        std::string group = need(a, "group", "universe.assets").get<std::string>();
        if (group == "fixed_income") c.group = AssetGroup::fixed_income;
        else if (group == "equities") c.group = AssetGroup::equities;
        else if (group == "alternatives") c.group = AssetGroup::alternatives;
        else fail("universe.assets", "group must be fixed_income/equities/alternatives");
        mean[i] = need(a, "mean_return", "universe.assets").get<double>();
        vol[i] = need(a, "vol", "universe.assets").get<double>();
        if (!(vol[i] >= 0)) fail("universe.assets", "vol must be >= 0 for " + c.name);
        classes.push_back(std::move(c));
    }

    const json& corr = need(u, "correlations", "universe");
    if (!corr.is_array() || static_cast<int>(corr.size()) != n)
        fail("universe", "'correlations' must be an n x n matrix");
    Mat cov(n, n);
    for (int i = 0; i < n; ++i) {
        if (!corr[i].is_array() || static_cast<int>(corr[i].size()) != n)
            fail("universe", "'correlations' must be an n x n matrix");
        for (int j = 0; j < n; ++j) cov(i, j) = corr[i][j].get<double>() * vol[i] * vol[j];
    }
    return AssetUniverse(std::move(classes), std::move(mean), std::move(cov));
}

PortfolioConstraints read_constraints(const json& root) {
    PortfolioConstraints con;
    con.region_bounds = {Interval{0, 1}, Interval{0, 1}};
    con.group_bounds = {Interval{0, 1}, Interval{0, 1}, Interval{0, 1}};
    if (!root.contains("constraints")) return con;
    const json& c = root.at("constraints");
    read_into(c, "per_asset_cap", con.per_asset_cap, "constraints");
    con.region_bounds[0] = read_interval(c, "domestic", con.region_bounds[0], "constraints");
    con.region_bounds[1] = read_interval(c, "foreign", con.region_bounds[1], "constraints");
    con.group_bounds[0] = read_interval(c, "fixed_income", con.group_bounds[0], "constraints");
    con.group_bounds[1] = read_interval(c, "equities", con.group_bounds[1], "constraints");
    con.group_bounds[2] = read_interval(c, "alternatives", con.group_bounds[2], "constraints");
    return con;
}

void read_objective_band(const json& j, const char* key, MetricSpec& out) {
    if (!j.contains(key)) return;
    const json& b = j.at(key);
    read_into(b, "low", out.low, "objective");
    read_into(b, "high", out.high, "objective");
    read_into(b, "priority", out.priority, "objective");
}

void apply_override(json& root, const std::string& entry) {
    auto eq = entry.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("config: override '" + entry + "' is not of the form a.b=value");
    std::string path = entry.substr(0, eq);
    std::string value = entry.substr(eq + 1);

    json* node = &root;
    std::size_t start = 0;
    while (true) {
        auto dot = path.find('.', start);
        std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty())
            throw ConfigError("config: override '" + entry + "' has an empty path segment");
        if (dot == std::string::npos) {
            json parsed = json::parse(value, nullptr, false);
            (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides,
                              std::string* resolved) {
    json root;
    try {
        root = json::parse(text, nullptr, true, true);  // allow comments
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config: document root must be an object");
    for (const auto& entry : overrides) apply_override(root, entry);
    if (resolved) *resolved = root.dump(2) + "\n";

    ExperimentConfig cfg;
    try {
        read_into(root, "schema_version", cfg.schema_version, "root");
        if (cfg.schema_version != 1)
            fail("root", "schema_version " + std::to_string(cfg.schema_version) +
                             " is not supported (expected 1)");
        read_into(root, "plan", cfg.plan, "root");
        if (cfg.plan != "A" && cfg.plan != "B" && cfg.plan != "C" && cfg.plan != "D" &&
            cfg.plan != "custom")
            fail("root", "plan must be A, B, C, D or custom");

        cfg.universe = read_universe(root);
        cfg.constraints = read_constraints(root);

        cfg.fi_risk_aversions = {32.0, 8.0};
        cfg.full_risk_aversions = {16.0, 8.0, 4.0, 2.0};
        if (root.contains("menu")) {
            const json& m = root.at("menu");
            read_into(m, "fi_risk_aversions", cfg.fi_risk_aversions, "menu");
            read_into(m, "full_risk_aversions", cfg.full_risk_aversions, "menu");
            read_into(m, "static_portfolio", cfg.static_portfolio, "menu");
        }

        if (root.contains("curve_model")) {
            const json& c = root.at("curve_model");
            read_into(c, "r0", cfg.curve.r0, "curve_model");
            read_into(c, "kappa", cfg.curve.kappa, "curve_model");
            read_into(c, "theta", cfg.curve.theta, "curve_model");
            read_into(c, "sigma", cfg.curve.sigma, "curve_model");
            read_into(c, "term_premium_max", cfg.curve.term_premium_max, "curve_model");
            read_into(c, "term_premium_scale", cfg.curve.term_premium_scale, "curve_model");
        }

        if (root.contains("demographics")) {
            const json& d = root.at("demographics");
            read_into(d, "base_year", cfg.demographics.base_year, "demographics");
            read_into(d, "age_min", cfg.demographics.age_min, "demographics");
            read_into(d, "age_max", cfg.demographics.age_max, "demographics");
            read_into(d, "sex_probs", cfg.demographics.sex_probs, "demographics");
            read_into(d, "income_probs", cfg.demographics.income_probs, "demographics");
            read_into(d, "education_probs", cfg.demographics.education_probs, "demographics");
            read_into(d, "region_probs", cfg.demographics.region_probs, "demographics");
            read_into(d, "size", cfg.population_size, "demographics");
            read_into(d, "seed", cfg.population_seed, "demographics");
        }

        if (root.contains("plan_rules")) {
            const json& p = root.at("plan_rules");
            read_into(p, "min_working_age", cfg.rules.min_working_age, "plan_rules");
            read_into(p, "mean_years_to_work", cfg.rules.mean_years_to_work, "plan_rules");
            read_into(p, "min_retiring_age", cfg.rules.min_retiring_age, "plan_rules");
            read_into(p, "mean_years_to_retire", cfg.rules.mean_years_to_retire, "plan_rules");
            read_into(p, "contribution_pct", cfg.rules.contribution_pct, "plan_rules");
            read_into(p, "baseline_payout_pct", cfg.rules.baseline_payout_pct, "plan_rules");
            read_into(p, "max_payout_deviation_pct", cfg.rules.max_payout_deviation_pct,
                      "plan_rules");
            read_into(p, "pension_base_window", cfg.rules.pension_base_window, "plan_rules");
            read_into(p, "payout_change_cap_pct", cfg.rules.payout_change_cap_pct, "plan_rules");
        }

        if (root.contains("income_model")) {
            const json& m = root.at("income_model");
            std::vector<double> betas(cfg.incomes.betas.begin(), cfg.incomes.betas.end());
            read_into(m, "betas", betas, "income_model");
            if (betas.size() != 4) fail("income_model", "betas needs exactly 4 values");
            std::copy(betas.begin(), betas.end(), cfg.incomes.betas.begin());
        }

        cfg.cox_coefficients = Vec::Zero(CovariateVector::dim);
        if (root.contains("mortality")) {
            const json& m = root.at("mortality");
            read_into(m, "life_table", cfg.life_table_path, "mortality");
            if (m.contains("gompertz")) {
                const json& g = m.at("gompertz");
                read_into(g, "a", cfg.gompertz_a, "mortality.gompertz");
                read_into(g, "b", cfg.gompertz_b, "mortality.gompertz");
                read_into(g, "age_max", cfg.hazard_age_max, "mortality.gompertz");
            }
            if (m.contains("cox_coefficients")) {
                std::vector<double> cc = m.at("cox_coefficients").get<std::vector<double>>();
                if (static_cast<int>(cc.size()) != CovariateVector::dim)
                    fail("mortality", "cox_coefficients needs " +
                                          std::to_string(CovariateVector::dim) + " values");
                for (int j = 0; j < CovariateVector::dim; ++j) cfg.cox_coefficients[j] = cc[j];
            }
        }

        if (root.contains("simulation")) {
            const json& s = root.at("simulation");
            read_into(s, "years", cfg.sim.years, "simulation");
            read_into(s, "liability_horizon", cfg.sim.liability_horizon, "simulation");
            read_into(s, "scenarios", cfg.sim.scenarios, "simulation");
            read_into(s, "fee", cfg.sim.fee, "simulation");
            read_into(s, "initial_ratio", cfg.sim.initial_ratio, "simulation");
            read_into(s, "seed", cfg.sim.seed, "simulation");
            read_into(s, "inner_paths", cfg.sim.inner_paths, "simulation");
            read_into(s, "max_abort_fraction", cfg.sim.max_abort_fraction, "simulation");
            read_into(s, "out_of_sample_seed", cfg.out_of_sample_seed, "simulation");
        }

        cfg.bins = RatioBins::defaults();
        if (root.contains("bins")) read_into(root.at("bins"), "edges", cfg.bins.edges, "bins");

        cfg.objective.call_prob = MetricSpec{0.001, 0.02, 1.0};
        cfg.objective.payout = MetricSpec{100.0, 110.0, 0.02};
        cfg.objective.payout_change = MetricSpec{0.0, 1.0, 0.1};
        if (root.contains("objective")) {
            const json& o = root.at("objective");
            read_objective_band(o, "call_prob", cfg.objective.call_prob);
            read_objective_band(o, "payout", cfg.objective.payout);
            read_objective_band(o, "payout_change", cfg.objective.payout_change);
        }

        cfg.grid_targets = {std::nullopt, 0.6, 0.8, 1.0, 1.2};
        if (root.contains("grids")) {
            const json& g = root.at("grids");
            read_into(g, "payout_levels", cfg.grid_payouts, "grids");
            read_into(g, "portfolio_ids", cfg.grid_portfolios, "grids");
            if (g.contains("target_ratios")) {
                cfg.grid_targets.clear();
                for (const json& t : g.at("target_ratios")) {
                    if (t.is_string() && t.get<std::string>() == "none")
                        cfg.grid_targets.push_back(std::nullopt);
                    else if (t.is_number())
                        cfg.grid_targets.push_back(t.get<double>());
                    else
                        fail("grids", "target_ratios entries must be numbers or \"none\"");
                }
            }
        }

        if (root.contains("tuning")) {
            const json& t = root.at("tuning");
            read_into(t, "max_sweeps", cfg.tuning.max_sweeps, "tuning");
            read_into(t, "min_improvement", cfg.tuning.min_improvement, "tuning");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                             std::string* resolved) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_config(buf.str(), overrides, resolved);
}

BuiltExperiment build_experiment(const ExperimentConfig& cfg) {
    cfg.constraints.validate_shape();
    cfg.rules.validate();
    cfg.demographics.validate();
    cfg.sim.validate();
    cfg.bins.validate();
    cfg.objective.validate();
    if (cfg.population_size < 1) throw ConfigError("demographics: size must be at least 1");

    BuiltExperiment b;
    b.ctx.universe = cfg.universe;
    b.ctx.rules = cfg.rules;
    b.ctx.incomes = cfg.incomes;
    b.ctx.curve = cfg.curve;
    b.ctx.demographics = cfg.demographics;
    b.ctx.sim = cfg.sim;
    b.bins = cfg.bins;
    b.objective = cfg.objective;
    b.tuning = cfg.tuning;
    b.out_of_sample_seed = cfg.out_of_sample_seed;

    // Menu: fixed-income-only entries first, then whole-universe entries.
    // Stable ids let plan presets pick subsets.
    PortfolioConstraints fi_only = cfg.constraints;
    fi_only.group_bounds[static_cast<int>(AssetGroup::equities)] = Interval{0, 0};
    fi_only.group_bounds[static_cast<int>(AssetGroup::alternatives)] = Interval{0, 0};
    std::vector<PortfolioSpec> fi_menu =
        build_portfolio_menu(cfg.universe, fi_only, cfg.fi_risk_aversions);
    std::vector<PortfolioSpec> full_menu =
        build_portfolio_menu(cfg.universe, cfg.constraints, cfg.full_risk_aversions);
    b.fi_menu_count = static_cast<int>(fi_menu.size());
    b.ctx.menu = std::move(fi_menu);
    for (auto& spec : full_menu) {
        bool duplicate = false;
        for (const auto& have : b.ctx.menu)
            if ((have.weights - spec.weights).lpNorm<Eigen::Infinity>() < 1e-9) {
                duplicate = true;
                break;
            }
        if (!duplicate) b.ctx.menu.push_back(std::move(spec));
    }
    for (std::size_t i = 0; i < b.ctx.menu.size(); ++i) b.ctx.menu[i].id = static_cast<int>(i);

    const int menu_size = static_cast<int>(b.ctx.menu.size());
    if (cfg.static_portfolio < 0 || cfg.static_portfolio >= menu_size)
        throw ConfigError("menu: static_portfolio " + std::to_string(cfg.static_portfolio) +
                          " outside the menu of " + std::to_string(menu_size));

    // Hazard model.
    BaselineHazard baseline;
    if (!cfg.life_table_path.empty()) {
        std::ifstream is(cfg.life_table_path);
        if (!is) throw ConfigError("mortality: cannot open life table '" + cfg.life_table_path +
                                   "'");
        baseline = BaselineHazard::load(is);
    } else {
        baseline = BaselineHazard::gompertz(cfg.gompertz_a, cfg.gompertz_b, cfg.hazard_age_max);
    }
    b.ctx.mortality = CoxModel{cfg.cox_coefficients, std::move(baseline)};

    b.ctx.base_population = synthesize_population(cfg.population_size, cfg.demographics, cfg.rules,
                                                  b.ctx.mortality, cfg.incomes,
                                                  cfg.population_seed);

    // Plan presets: A fixes portfolio and payout, B frees the payout, C opens
    // the fixed-income menu, D the whole menu.  The call-target column stays
    // free everywhere; its grid always includes "no call".
    std::vector<double> payouts = cfg.grid_payouts;
    if (payouts.empty())
        for (double q = cfg.rules.payout_min(); q <= cfg.rules.payout_max() + 1e-9; q += 1.0)
            payouts.push_back(q);
    b.grids.target_ratios = cfg.grid_targets;
    bool has_none = false;
    for (const auto& t : b.grids.target_ratios)
        if (!t) has_none = true;
    if (!has_none) b.grids.target_ratios.insert(b.grids.target_ratios.begin(), std::nullopt);

    if (cfg.plan == "A") {
        b.grids.portfolio_ids = {cfg.static_portfolio};
        b.grids.payout_levels = {100.0};
    } else if (cfg.plan == "B") {
        b.grids.portfolio_ids = {cfg.static_portfolio};
        b.grids.payout_levels = payouts;
    } else if (cfg.plan == "C") {
        for (int i = 0; i < b.fi_menu_count; ++i) b.grids.portfolio_ids.push_back(i);
        b.grids.payout_levels = payouts;
    } else if (cfg.plan == "D") {
        for (int i = 0; i < menu_size; ++i) b.grids.portfolio_ids.push_back(i);
        b.grids.payout_levels = payouts;
    } else {
        b.grids.portfolio_ids = cfg.grid_portfolios;
        if (b.grids.portfolio_ids.empty())
            for (int i = 0; i < menu_size; ++i) b.grids.portfolio_ids.push_back(i);
        b.grids.payout_levels = payouts;
    }
    b.grids.validate(menu_size, cfg.rules);

    b.initial_table.bins = cfg.bins;
    PolicyRow row;
    row.portfolio_id = b.grids.portfolio_ids.front();
    row.payout_level = 100.0;
    b.initial_table.rows.assign(cfg.bins.count(), row);
    b.initial_table.validate(menu_size, cfg.rules);
    return b;
}

}  // namespace pensim
