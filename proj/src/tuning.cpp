#include "pensim/tuning.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "pensim/errors.hpp"

namespace pensim {

void MetricSpec::validate(const char* name) const {
    if (!(high >= low))
        throw ConfigError(std::string("objective: ") + name + " band needs high >= low");
    if (!(priority >= 0.0))
        throw ConfigError(std::string("objective: ") + name + " priority must be >= 0");
}

double eta(double x, const MetricSpec& spec) {
    // Left-associated products keep the slopes exactly priority*inner and
    // priority*outer, which the calibration checks rely on.
    const double mid = spec.midpoint();
    const double inner = spec.inner_slope();
    const double outer = spec.outer_slope();
    if (x < spec.low) return spec.priority * outer * (spec.low - x);
    if (x < mid) return spec.priority * inner * (spec.low - x);
    if (x < spec.high) return spec.priority * inner * (x - spec.high);
    return spec.priority * outer * (x - spec.high);
}

void ObjectiveSpec::validate() const {
    call_prob.validate("call_prob");
    payout.validate("payout");
    payout_change.validate("payout_change");
}

double objective(const MetricsReport& metrics, const ObjectiveSpec& spec) {
    return eta(metrics.cash_call_prob, spec.call_prob) + eta(metrics.mean_payout, spec.payout) +
           eta(metrics.mean_payout_change, spec.payout_change);
}

void ActionGrids::validate(int menu_size, const PlanRules& rules) const {
    if (portfolio_ids.empty()) throw ConfigError("grids: portfolio_ids is empty");
    for (int id : portfolio_ids)
        if (id < 0 || id >= menu_size)
            throw ConfigError("grids: portfolio id " + std::to_string(id) +
                              " outside the menu of " + std::to_string(menu_size));
    if (payout_levels.empty()) throw ConfigError("grids: payout_levels is empty");
    for (double q : payout_levels)
        if (q < rules.payout_min() || q > rules.payout_max())
            throw ConfigError("grids: payout level " + std::to_string(q) +
                              " outside the plan's deviation bounds");
    if (target_ratios.empty()) throw ConfigError("grids: target_ratios is empty");
    for (const auto& t : target_ratios)
        if (t && !(*t > 0.0)) throw ConfigError("grids: call targets must be positive");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct CellView {
    // Applies candidate k of the grid column to a row; returns false when
    // the candidate equals the current value (nothing to evaluate).
    static int size(const ActionGrids& g, int column) {
        switch (column) {
            case 0: return static_cast<int>(g.portfolio_ids.size());
            case 1: return static_cast<int>(g.payout_levels.size());
            default: return static_cast<int>(g.target_ratios.size());
        }
    }
    static bool apply(PolicyRow& row, const ActionGrids& g, int column, int k) {
        if (column == 0) {
            if (row.portfolio_id == g.portfolio_ids[k]) return false;
            row.portfolio_id = g.portfolio_ids[k];
        } else if (column == 1) {
            if (row.payout_level == g.payout_levels[k]) return false;
            row.payout_level = g.payout_levels[k];
        } else {
            if (row.target_ratio == g.target_ratios[k]) return false;
            row.target_ratio = g.target_ratios[k];
        }
        return true;
    }
    static std::string describe(const ActionGrids& g, int column, int k) {
        std::ostringstream os;
        os.precision(17);
        if (column == 0) os << "portfolio=" << g.portfolio_ids[k];
        else if (column == 1) os << "payout=" << g.payout_levels[k];
        else if (g.target_ratios[k]) os << "target=" << *g.target_ratios[k];
        else os << "target=none";
        return os.str();
    }
};

}  // namespace

TuneResult tune(const PolicyTable& initial, const EvalContext& ctx, const ScenarioSet& set,
                const ObjectiveSpec& spec, const ActionGrids& grids, const TuneOptions& opts) {
    spec.validate();
    grids.validate(static_cast<int>(ctx.menu.size()), ctx.rules);
    initial.validate(static_cast<int>(ctx.menu.size()), ctx.rules);
    if (opts.max_sweeps < 1) throw ConfigError("tune: max_sweeps must be at least 1");

    TuneResult res;
    res.table = initial;
    res.final_metrics = evaluate_policy(res.table, ctx, set, false).metrics;
    res.final_h = objective(res.final_metrics, spec);
    res.evaluations = 1;

    const int n_bins = res.table.bins.count();
    const int n_cells = n_bins * 3;
    int stalled = 0;

    auto try_cell = [&](int sweep, int bin, int column) {
        const int n = CellView::size(grids, column);
        std::vector<double> h(n, kInf);
        std::vector<char> usable(n, 0);
        std::vector<PolicyRow> rows(n);
        for (int k = 0; k < n; ++k) {
            rows[k] = res.table.rows[bin];
            usable[k] = CellView::apply(rows[k], grids, column, k) ? 1 : 0;
        }
        parallel_for(n, opts.workers, [&](int k) {
            if (!usable[k]) return;
            PolicyTable candidate = res.table;
            candidate.rows[bin] = rows[k];
            try {
                h[k] = objective(evaluate_policy(candidate, ctx, set, false).metrics, spec);
            } catch (const EvaluationFailure&) {
                h[k] = kInf;
                usable[k] = 2;  // evaluated but unusable
            }
        });
        int best = -1;
        double best_h = res.final_h - opts.min_improvement;
        for (int k = 0; k < n; ++k) {
            if (!usable[k]) continue;
            res.evaluations += 1;
            if (usable[k] == 2) res.failed_evaluations += 1;
            if (h[k] < best_h) {
                best_h = h[k];
                best = k;
            }
        }
        if (best < 0) {
            stalled += 1;
            return;
        }
        TuneMove move;
        move.sweep = sweep;
        move.bin = bin;
        move.column = column;
        move.value = CellView::describe(grids, column, best);
        move.h_before = res.final_h;
        move.h_after = h[best];
        res.moves.push_back(move);
        res.table.rows[bin] = rows[best];
        res.final_h = h[best];
        stalled = 0;
    };

    for (int sweep = 0; sweep < opts.max_sweeps && stalled < n_cells; ++sweep) {
        res.sweeps = sweep + 1;
        for (int bin = n_bins - 1; bin >= 0 && stalled < n_cells; --bin)
            for (int column = 0; column < 3 && stalled < n_cells; ++column)
                try_cell(sweep, bin, column);
    }
    res.one_optimal = stalled >= n_cells;
    res.final_metrics = evaluate_policy(res.table, ctx, set, false).metrics;
    return res;
}

OneOptimalityCheck verify_one_optimality(const PolicyTable& table, const EvalContext& ctx,
                                         const ScenarioSet& set, const ObjectiveSpec& spec,
                                         const ActionGrids& grids, double tol) {
    OneOptimalityCheck out;
    out.h_current = objective(evaluate_policy(table, ctx, set, false).metrics, spec);
    double worst = out.h_current;
    for (int bin = 0; bin < table.bins.count(); ++bin) {
        for (int column = 0; column < 3; ++column) {
            for (int k = 0; k < CellView::size(grids, column); ++k) {
                PolicyTable candidate = table;
                if (!CellView::apply(candidate.rows[bin], grids, column, k)) continue;
                double h;
                try {
                    h = objective(evaluate_policy(candidate, ctx, set, false).metrics, spec);
                } catch (const EvaluationFailure&) {
                    continue;
                }
                if (h < out.h_current - tol && h < worst) {
                    worst = h;
                    out.one_optimal = false;
                    out.bin = bin;
                    out.column = column;
                    out.candidate = k;
                    out.h_deviation = h;
                }
            }
        }
    }
    return out;
}

}  // namespace pensim
