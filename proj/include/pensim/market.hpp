#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pensim/qp.hpp"

namespace pensim {

enum class Region { domestic = 0, foreign = 1 };
enum class AssetGroup { fixed_income = 0, equities = 1, alternatives = 2 };

const char* to_string(Region r);
const char* to_string(AssetGroup g);

struct AssetClass {
    std::string name;
    Region region = Region::domestic;
    AssetGroup group = AssetGroup::fixed_income;
};

// Mean vector and covariance of one-year simple returns.  The covariance is
// checked for symmetry and positive semidefiniteness on construction.
struct AssetUniverse {
    std::vector<AssetClass> assets;
    Vec mean_returns;
    Mat covariance;

    AssetUniverse() = default;
    AssetUniverse(std::vector<AssetClass> assets_, Vec mean, Mat cov);

    int size() const { return static_cast<int>(assets.size()); }
    Vec region_indicator(Region r) const;
    Vec group_indicator(AssetGroup g) const;
};

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

// Long-only allocation constraints: a per-asset weight cap plus interval
// bounds on the weight sums of the two region buckets and the three asset
// groups.  Feasibility against a universe is established by a phase-one
// solve; construct with `checked` to run it eagerly.
struct PortfolioConstraints {
    double per_asset_cap = 1.0;
    std::array<Interval, 2> region_bounds{Interval{0, 1}, Interval{0, 1}};
    std::array<Interval, 3> group_bounds{Interval{0, 1}, Interval{0, 1}, Interval{0, 1}};

    static PortfolioConstraints checked(const AssetUniverse& u, double cap,
                                        std::array<Interval, 2> region,
                                        std::array<Interval, 3> group);
    void validate_shape() const;  // interval sanity, cap in (0,1]
};

struct KktReport {
    double stationarity = 0;
    double primal = 0;
    double dual = 0;
    double complementarity = 0;
    double max_residual() const;
};

struct PortfolioSpec {
    int id = -1;
    double risk_aversion = 0;
    Vec weights;
    double realized_vol = 0;      // sqrt(w'Cw)
    double expected_return = 0;   // w'mean
    bool degenerate = false;      // covariance was only PSD; maximizer may not be unique
    KktReport kkt;
    std::vector<std::string> binding;  // names of active cap/group bounds
};

// Mean-variance weights: maximize w'mean - (mu/2) w'Cw over the constraint
// set.  Throws InfeasibleConstraints / NonPSDCovariance.
PortfolioSpec solve_markowitz(const AssetUniverse& u, const PortfolioConstraints& con,
                              double risk_aversion);

// Returns a feasible point for the constraint set (phase-one solve).
Vec feasible_weights(const AssetUniverse& u, const PortfolioConstraints& con);

// One entry per risk-aversion value, sorted by realized vol ascending with
// ids equal to the final positions.  Values must be positive; duplicates
// are removed.
std::vector<PortfolioSpec> build_portfolio_menu(const AssetUniverse& u,
                                                const PortfolioConstraints& con,
                                                std::vector<double> risk_aversions);

// One-factor mean-reverting short rate; zero-coupon yields from the model's
// closed form plus a maturity-dependent premium that saturates at
// `term_premium_max` with e-folding length `term_premium_scale` years.
struct CurveModelParams {
    double r0 = 0.03;
    double kappa = 0.25;
    double theta = 0.035;
    double sigma = 0.01;
    double term_premium_max = 0.008;
    double term_premium_scale = 8.0;
};

// Joint draw of asset returns and yield curves for one scenario.
//   returns(t, i)      simple return of asset i during year t, t = 0..T_sim-1
//   yield_curves(t, k) annualized zero rate at year t for maturity k+1,
//                      t = 0..T_sim (one extra row for the terminal year)
struct ReturnScenario {
    Mat returns;
    Mat yield_curves;
};

// Moment-matched lognormal returns: sample mean/covariance of the simple
// returns converge to the universe's mean vector and covariance.  Pure
// function of (inputs, seed); scenario i is independent of how many other
// scenarios are generated.
std::vector<ReturnScenario> generate_return_scenarios(const AssetUniverse& u,
                                                      const CurveModelParams& curve,
                                                      int horizon_years, int curve_maturities,
                                                      int n_scenarios, std::uint64_t seed);

// gamma_tau = (1 + y_tau)^-tau for tau = 0..T (gamma_0 = 1).  `yields` must
// supply maturities 1..T.
Vec discount_factors(const Vec& yields, int horizon);

// Columnar text dump: one row per (scenario, year, asset).
void export_scenarios(std::ostream& os, const std::vector<ReturnScenario>& scenarios,
                      const AssetUniverse& u);

}  // namespace pensim
