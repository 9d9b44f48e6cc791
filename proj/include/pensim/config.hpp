#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pensim/tuning.hpp"

namespace pensim {

// One experiment = one config document.  Sections map onto the domain
// structs; a "plan" preset derives the action grids from the portfolio
// menu (see build_experiment).
struct ExperimentConfig {
    int schema_version = 1;
    std::string plan = "custom";  // "A", "B", "C", "D" or "custom"

    AssetUniverse universe;
    PortfolioConstraints constraints;
    std::vector<double> fi_risk_aversions;    // menu entries without equities/alternatives
    std::vector<double> full_risk_aversions;  // menu entries over the whole universe
    int static_portfolio = 0;  // menu id used when the portfolio column is fixed

    CurveModelParams curve;

    DemographicConfig demographics;
    int population_size = 500;
    std::uint64_t population_seed = 99;

    PlanRules rules;
    IncomeModel incomes;

    std::string life_table_path;  // empty: Gompertz baseline from the parameters below
    double gompertz_a = 1e-4;
    double gompertz_b = 0.085;
    int hazard_age_max = 120;
    Vec cox_coefficients;  // CovariateVector::dim entries; defaults to zero

    SimulationConfig sim;
    std::uint64_t out_of_sample_seed = 20001;

    RatioBins bins;
    ObjectiveSpec objective;

    std::vector<double> grid_payouts;                  // empty: 1% steps across the bounds
    std::vector<std::optional<double>> grid_targets;   // holds at least "none" after parse
    std::vector<int> grid_portfolios;                  // plan "custom" only

    TuneOptions tuning;
};

// Parses a config document, after applying "section.key=value" overrides
// (values read as JSON, bare words as strings).  `resolved` receives the
// post-override document used for artifact snapshots.
ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides,
                              std::string* resolved = nullptr);
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                             std::string* resolved = nullptr);

struct BuiltExperiment {
    EvalContext ctx;
    int fi_menu_count = 0;  // menu ids below this hold no equities or alternatives
    RatioBins bins;
    ObjectiveSpec objective;
    ActionGrids grids;          // after the plan preset
    PolicyTable initial_table;  // first grid portfolio, payout 100, no call target
    TuneOptions tuning;
    std::uint64_t out_of_sample_seed = 0;
};

// Builds every runtime object: solves the two-part portfolio menu (the
// fixed-income-only entries come first), loads or constructs the hazard
// table, synthesizes the base population and expands the plan preset into
// concrete grids.
BuiltExperiment build_experiment(const ExperimentConfig& cfg);

}  // namespace pensim
