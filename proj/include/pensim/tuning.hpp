#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pensim/engine.hpp"

namespace pensim {

// A soft target band [low, high] for one metric.  Inside the band the
// penalty is negative (a reward), smallest at the midpoint; outside it
// grows ten times faster than inside.
struct MetricSpec {
    double low = 0;
    double high = 0;
    double priority = 1;

    double midpoint() const { return 0.5 * (low + high); }
    double inner_slope() const { return 0.5 * (high - low); }
    double outer_slope() const { return 10.0 * inner_slope(); }
    void validate(const char* name) const;
};

// Piecewise-linear band penalty.  Continuous, zero at both band edges,
// minimal at the midpoint.
double eta(double x, const MetricSpec& spec);

struct ObjectiveSpec {
    MetricSpec call_prob;      // applied to cash_call_prob
    MetricSpec payout;         // applied to mean_payout
    MetricSpec payout_change;  // applied to mean_payout_change

    void validate() const;
};

double objective(const MetricsReport& metrics, const ObjectiveSpec& spec);

// Candidate values per policy-table column.
struct ActionGrids {
    std::vector<int> portfolio_ids;
    std::vector<double> payout_levels;
    std::vector<std::optional<double>> target_ratios;

    void validate(int menu_size, const PlanRules& rules) const;
};

struct TuneOptions {
    int max_sweeps = 50;
    double min_improvement = 1e-12;
    int workers = 1;
};

struct TuneMove {
    int sweep = 0;
    int bin = 0;
    int column = 0;  // 0 portfolio, 1 payout, 2 target
    std::string value;  // accepted cell value, e.g. "portfolio=3" or "target=none"
    double h_before = 0;
    double h_after = 0;
};

struct TuneResult {
    PolicyTable table;
    double final_h = 0;
    MetricsReport final_metrics;
    int sweeps = 0;
    long evaluations = 0;
    long failed_evaluations = 0;
    bool one_optimal = false;
    std::vector<TuneMove> moves;
};

// Coordinate descent over table cells on a fixed scenario set.  Bins are
// visited from the highest ratio band down; within a bin the portfolio,
// then the payout level, then the call target are revisited.  A move is
// taken only when it beats the incumbent objective by more than
// min_improvement; the search stops once every cell has been rejected in
// turn (one round of no changes) or after max_sweeps full sweeps.
TuneResult tune(const PolicyTable& initial, const EvalContext& ctx, const ScenarioSet& set,
                const ObjectiveSpec& spec, const ActionGrids& grids, const TuneOptions& opts = {});

struct OneOptimalityCheck {
    bool one_optimal = true;
    double h_current = 0;
    // Worst single-cell deviation found, meaningful when one_optimal is false.
    int bin = -1;
    int column = -1;
    int candidate = -1;
    double h_deviation = 0;
};

// Re-tests every single-cell grid move; one_optimal iff none improves the
// objective by more than tol.
OneOptimalityCheck verify_one_optimality(const PolicyTable& table, const EvalContext& ctx,
                                         const ScenarioSet& set, const ObjectiveSpec& spec,
                                         const ActionGrids& grids, double tol = 1e-12);

}  // namespace pensim
