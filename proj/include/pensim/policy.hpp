#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "pensim/market.hpp"
#include "pensim/population.hpp"

namespace pensim {

// Half-open funded-ratio intervals [lo, hi).  k ascending positive edges
// define k+1 bins; ratios at or above the last edge land in the top bin,
// ratio zero lands in the bottom bin.
struct RatioBins {
    std::vector<double> edges;

    static RatioBins defaults();  // 0.2, 0.4, ..., 2.2
    int count() const { return static_cast<int>(edges.size()) + 1; }
    int bin_of(double ratio) const;
    double lower_edge(int bin) const;  // 0 for the bottom bin
    double upper_edge(int bin) const;  // +inf for the top bin
    void validate() const;
};

// One action triple per ratio bin.  `target_ratio` empty means no external
// cash is requested in that bin.
struct PolicyRow {
    int portfolio_id = 0;
    double payout_level = 100;
    std::optional<double> target_ratio;
};

struct PolicyTable {
    RatioBins bins;
    std::vector<PolicyRow> rows;  // rows[i] serves bin i

    void validate(int menu_size, const PlanRules& rules) const;
};

// What the policy sees at decision time.
struct Observation {
    double assets = 0;                  // v_t
    double contributions = 0;           // current-year contribution inflow
    double baseline_payout = 0;         // current-year benefit outflow at level 100
    LiabilityProjection projection;     // computed for the current population
    Vec expected_returns;               // per asset class
    double fee = 0;

    double baseline_cashflow() const { return contributions - baseline_payout; }
    double cashflow_at(double payout_level) const {
        return contributions - (payout_level / 100.0) * baseline_payout;
    }
};

// Assets over liabilities, extended to the edge cases: +inf when solvent
// with nonpositive liabilities, 0 when assets are negative.
double extended_ratio(double assets, double liabilities);

const PolicyRow& lookup_actions(const PolicyTable& table, double ratio);

// Requested payout clamped to the year-over-year change cap around the
// previous level and to the plan's deviation bounds.
double clamp_payout(double requested, double previous, const PlanRules& rules);

// Cash injection that moves next year's expected ratio to `target_ratio`,
// floored at zero; zero when no target is set.  Throws DivisionByZero when
// (1 - fee) * (1 + expected portfolio return) is nonpositive.
double external_cash_amount(double assets, double cashflow_at_payout,
                            double expected_portfolio_return, double fee, double target_ratio,
                            double liabilities_next);

double external_cash(const Observation& obs, const PortfolioSpec& portfolio, double payout_level,
                     std::optional<double> target_ratio, double fee);

// Upper edge of the highest bin that requests external cash; 0 when no bin
// does.  This is the ratio level below which the plan calls for support.
double learned_breach_threshold(const PolicyTable& table);

// Text round trip; values survive bit-exactly.  The volatility column is
// informational and filled from `menu` when given.
void save_policy_table(std::ostream& os, const PolicyTable& table,
                       const std::vector<PortfolioSpec>* menu = nullptr);
PolicyTable load_policy_table(std::istream& is);

}  // namespace pensim
