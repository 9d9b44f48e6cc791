#include "pensim/market.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "pensim/errors.hpp"
#include "pensim/rng.hpp"

namespace pensim {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}
}  // namespace

const char* to_string(Region r) {
    return r == Region::domestic ? "domestic" : "foreign";
}

const char* to_string(AssetGroup g) {
    switch (g) {
        case AssetGroup::fixed_income: return "fixed_income";
        case AssetGroup::equities: return "equities";
        default: return "alternatives";
    }
}

AssetUniverse::AssetUniverse(std::vector<AssetClass> assets_, Vec mean, Mat cov)
    : assets(std::move(assets_)), mean_returns(std::move(mean)), covariance(std::move(cov)) {
    const int n = size();
    if (n == 0) throw Error("universe: no assets");
    if (mean_returns.size() != n || covariance.rows() != n || covariance.cols() != n)
        throw Error("universe: dimension mismatch between assets, means and covariance");
    double scale = std::max(1e-12, covariance.cwiseAbs().maxCoeff());
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
        throw NonPSDCovariance("universe: covariance is not symmetric");
    covariance = 0.5 * (covariance + covariance.transpose().eval());
    Eigen::SelfAdjointEigenSolver<Mat> eig(covariance);
    double lmax = eig.eigenvalues().maxCoeff();
    double lmin = eig.eigenvalues().minCoeff();
    if (lmin < -1e-10 * std::max(lmax, 1e-300))
        throw NonPSDCovariance("universe: covariance has eigenvalue " + fmt(lmin));
}

Vec AssetUniverse::region_indicator(Region r) const {
    Vec v = Vec::Zero(size());
    for (int i = 0; i < size(); ++i)
        if (assets[i].region == r) v[i] = 1.0;
    return v;
}

Vec AssetUniverse::group_indicator(AssetGroup g) const {
    Vec v = Vec::Zero(size());
    for (int i = 0; i < size(); ++i)
        if (assets[i].group == g) v[i] = 1.0;
    return v;
}

void PortfolioConstraints::validate_shape() const {
    if (!(per_asset_cap > 0.0 && per_asset_cap <= 1.0))
        throw InfeasibleConstraints("constraints: per-asset cap must lie in (0, 1]");
    auto check = [](const Interval& iv, const char* name) {
        if (!(iv.lo >= 0.0 && iv.lo <= iv.hi && iv.hi <= 1.0))
            throw InfeasibleConstraints(std::string("constraints: bad interval for ") + name);
    };
    check(region_bounds[0], "domestic");
    check(region_bounds[1], "foreign");
    check(group_bounds[0], "fixed_income");
    check(group_bounds[1], "equities");
    check(group_bounds[2], "alternatives");
}

PortfolioConstraints PortfolioConstraints::checked(const AssetUniverse& u, double cap,
                                                  std::array<Interval, 2> region,
                                                  std::array<Interval, 3> group) {
    PortfolioConstraints con;
    con.per_asset_cap = cap;
    con.region_bounds = region;
    con.group_bounds = group;
    con.validate_shape();
    feasible_weights(u, con);  // throws InfeasibleConstraints if the set is empty
    return con;
}

double KktReport::max_residual() const {
    return std::max(std::max(stationarity, primal), std::max(dual, complementarity));
}

namespace {

struct GroupRow {
    std::string name;
    Vec a;
    Interval bounds;
};

std::vector<GroupRow> group_rows(const AssetUniverse& u, const PortfolioConstraints& con) {
    std::vector<GroupRow> rows;
    rows.push_back({"domestic", u.region_indicator(Region::domestic), con.region_bounds[0]});
    rows.push_back({"foreign", u.region_indicator(Region::foreign), con.region_bounds[1]});
    rows.push_back({"fixed_income", u.group_indicator(AssetGroup::fixed_income), con.group_bounds[0]});
    rows.push_back({"equities", u.group_indicator(AssetGroup::equities), con.group_bounds[1]});
    rows.push_back({"alternatives", u.group_indicator(AssetGroup::alternatives), con.group_bounds[2]});
    return rows;
}

Vec greedy_cap_fill(int n, double cap) {
    Vec w = Vec::Zero(n);
    double remaining = 1.0;
    for (int i = 0; i < n && remaining > 0; ++i) {
        w[i] = std::min(cap, remaining);
        remaining -= w[i];
    }
    if (remaining > 1e-12)
        throw InfeasibleConstraints("constraints: per-asset cap times asset count is below 1");
    return w;
}

}  // namespace

Vec feasible_weights(const AssetUniverse& u, const PortfolioConstraints& con) {
    con.validate_shape();
    const int n = u.size();
    auto groups = group_rows(u, con);
    const int ng = static_cast<int>(groups.size());

    // Variables [w; s]: minimize the squared slack needed to put every group
    // sum inside its interval, holding the capped simplex exactly.
    QpProblem p;
    p.Q = Mat::Zero(n + ng, n + ng);
    p.Q.topLeftCorner(n, n) = 1e-8 * Mat::Identity(n, n);
    p.Q.bottomRightCorner(ng, ng) = Mat::Identity(ng, ng);
    p.c = Vec::Zero(n + ng);
    p.Aeq = Mat::Zero(1, n + ng);
    p.Aeq.leftCols(n) = Mat::Ones(1, n);
    p.beq = Vec::Ones(1);
    p.Ain = Mat::Zero(n + ng, n + ng);
    p.lo = Vec::Zero(n + ng);
    p.hi = Vec::Zero(n + ng);
    for (int i = 0; i < n; ++i) {
        p.Ain(i, i) = 1.0;
        p.lo[i] = 0.0;
        p.hi[i] = con.per_asset_cap;
    }
    for (int g = 0; g < ng; ++g) {
        p.Ain.block(n + g, 0, 1, n) = groups[g].a.transpose();
        p.Ain(n + g, n + g) = 1.0;
        p.lo[n + g] = groups[g].bounds.lo;
        p.hi[n + g] = groups[g].bounds.hi;
    }

    Vec x0 = Vec::Zero(n + ng);
    x0.head(n) = greedy_cap_fill(n, con.per_asset_cap);
    for (int g = 0; g < ng; ++g) {
        double mid = 0.5 * (groups[g].bounds.lo + groups[g].bounds.hi);
        x0[n + g] = mid - groups[g].a.dot(x0.head(n));
    }

    QpSolution sol = solve_qp(p, x0);
    Vec w = sol.x.head(n);
    std::string bad;
    for (const auto& g : groups) {
        double s = g.a.dot(w);
        double d = std::max(g.bounds.lo - s, s - g.bounds.hi);
        if (d > 1e-7) bad += (bad.empty() ? "" : ", ") + g.name + " off by " + fmt(d);
    }
    if (!bad.empty())
        throw InfeasibleConstraints("constraints: no weight vector satisfies group bounds (" + bad + ")");
    return w;
}

PortfolioSpec solve_markowitz(const AssetUniverse& u, const PortfolioConstraints& con,
                              double risk_aversion) {
    if (!(risk_aversion > 0)) throw Error("markowitz: risk aversion must be positive");
    const int n = u.size();
    Vec x0 = feasible_weights(u, con);
    auto groups = group_rows(u, con);

    Eigen::SelfAdjointEigenSolver<Mat> eig(u.covariance);
    double lmax = std::max(eig.eigenvalues().maxCoeff(), 0.0);
    double lmin = eig.eigenvalues().minCoeff();
    bool degenerate = lmin <= 1e-12 * std::max(lmax, 1e-300);
    Mat C = u.covariance;
    if (degenerate) {
        double ridge = 1e-10 * C.trace() / n;
        if (ridge <= 0) ridge = 1e-10;
        C += ridge * Mat::Identity(n, n);
    }

    QpProblem p;
    p.Q = risk_aversion * C;
    p.c = -u.mean_returns;

    std::vector<int> eq_groups, in_groups;
    for (int g = 0; g < static_cast<int>(groups.size()); ++g)
        (groups[g].bounds.lo == groups[g].bounds.hi ? eq_groups : in_groups).push_back(g);

    p.Aeq = Mat::Zero(1 + static_cast<int>(eq_groups.size()), n);
    p.beq = Vec::Zero(p.Aeq.rows());
    p.Aeq.row(0) = Mat::Ones(1, n);
    p.beq[0] = 1.0;
    for (int k = 0; k < static_cast<int>(eq_groups.size()); ++k) {
        p.Aeq.row(1 + k) = groups[eq_groups[k]].a.transpose();
        p.beq[1 + k] = groups[eq_groups[k]].bounds.lo;
    }

    p.Ain = Mat::Zero(n + static_cast<int>(in_groups.size()), n);
    p.lo = Vec::Zero(p.Ain.rows());
    p.hi = Vec::Zero(p.Ain.rows());
    for (int i = 0; i < n; ++i) {
        p.Ain(i, i) = 1.0;
        p.lo[i] = 0.0;
        p.hi[i] = con.per_asset_cap;
    }
    for (int k = 0; k < static_cast<int>(in_groups.size()); ++k) {
        p.Ain.row(n + k) = groups[in_groups[k]].a.transpose();
        p.lo[n + k] = groups[in_groups[k]].bounds.lo;
        p.hi[n + k] = groups[in_groups[k]].bounds.hi;
    }

    QpSolution sol = solve_qp(p, x0);

    PortfolioSpec spec;
    spec.risk_aversion = risk_aversion;
    spec.weights = sol.x;
    spec.realized_vol = std::sqrt(std::max(0.0, sol.x.dot(u.covariance * sol.x)));
    spec.expected_return = sol.x.dot(u.mean_returns);
    spec.degenerate = degenerate;
    spec.kkt.stationarity = sol.stationarity;
    spec.kkt.primal = sol.primal;
    spec.kkt.dual = sol.dual;
    spec.kkt.complementarity = sol.complementarity;
    for (int i = 0; i < n; ++i)
        if (sol.active_side[i] > 0) spec.binding.push_back("cap:" + u.assets[i].name);
    for (int k = 0; k < static_cast<int>(in_groups.size()); ++k) {
        if (sol.active_side[n + k] > 0) spec.binding.push_back(groups[in_groups[k]].name + ":hi");
        if (sol.active_side[n + k] < 0) spec.binding.push_back(groups[in_groups[k]].name + ":lo");
    }
    for (int g : eq_groups) spec.binding.push_back(groups[g].name + ":eq");

    if (spec.kkt.max_residual() > 1e-6)
        throw Error("markowitz: optimality residual " + fmt(spec.kkt.max_residual()));
    return spec;
}

std::vector<PortfolioSpec> build_portfolio_menu(const AssetUniverse& u,
                                                const PortfolioConstraints& con,
                                                std::vector<double> risk_aversions) {
    for (double mu : risk_aversions)
        if (!(mu > 0)) throw Error("menu: risk aversion values must be positive");
    std::sort(risk_aversions.begin(), risk_aversions.end(), std::greater<>());
    risk_aversions.erase(std::unique(risk_aversions.begin(), risk_aversions.end()),
                         risk_aversions.end());
    if (risk_aversions.empty()) throw Error("menu: no risk aversion values");

    std::vector<PortfolioSpec> menu;
    for (double mu : risk_aversions) menu.push_back(solve_markowitz(u, con, mu));
    std::stable_sort(menu.begin(), menu.end(),
                     [](const PortfolioSpec& a, const PortfolioSpec& b) {
                         return a.realized_vol < b.realized_vol;
                     });
    for (int i = 0; i < static_cast<int>(menu.size()); ++i) menu[i].id = i;
    return menu;
}

namespace {

// Gaussian moments (m, S) such that exp(N(m, S)) - 1 has the universe's
// mean and covariance of simple returns.
void lognormal_match(const AssetUniverse& u, Vec& m, Mat& factor) {
    const int n = u.size();
    Vec one_plus = u.mean_returns.array() + 1.0;
    for (int i = 0; i < n; ++i)
        if (!(one_plus[i] > 0))
            throw Error("scenarios: mean return at or below -100% cannot be matched");
    Mat S(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double arg = 1.0 + u.covariance(i, j) / (one_plus[i] * one_plus[j]);
            if (!(arg > 0))
                throw Error("scenarios: covariance too negative for lognormal matching");
            S(i, j) = std::log(arg);
        }
    }
    S = 0.5 * (S + S.transpose().eval());
    Eigen::SelfAdjointEigenSolver<Mat> eig(S);
    double lmax = std::max(eig.eigenvalues().maxCoeff(), 0.0);
    if (eig.eigenvalues().minCoeff() < -1e-6 * std::max(lmax, 1e-300))
        throw Error("scenarios: log-moment matrix is not positive semidefinite");
    Vec sqrts = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    factor = eig.eigenvectors() * sqrts.asDiagonal();
    m = one_plus.array().log() - 0.5 * S.diagonal().array();
}

double vasicek_zero_rate(double r, double tau, const CurveModelParams& cp) {
    double b = (1.0 - std::exp(-cp.kappa * tau)) / cp.kappa;
    double a = (cp.theta - cp.sigma * cp.sigma / (2.0 * cp.kappa * cp.kappa)) * (b - tau) -
               cp.sigma * cp.sigma * b * b / (4.0 * cp.kappa);
    double ycc = (b * r - a) / tau;
    double premium = cp.term_premium_max * (1.0 - std::exp(-tau / cp.term_premium_scale));
    return std::expm1(ycc) + premium;
}

}  // namespace

std::vector<ReturnScenario> generate_return_scenarios(const AssetUniverse& u,
                                                      const CurveModelParams& cp,
                                                      int horizon_years, int curve_maturities,
                                                      int n_scenarios, std::uint64_t seed) {
    if (horizon_years < 1) throw Error("scenarios: horizon must be at least one year");
    if (curve_maturities < 1) throw Error("scenarios: need at least one curve maturity");
    if (!(cp.kappa > 1e-6)) throw Error("scenarios: mean reversion speed must exceed 1e-6");
    const int n = u.size();
    Vec m;
    Mat factor;
    lognormal_match(u, m, factor);

    double decay = std::exp(-cp.kappa);
    double shock_sd = cp.sigma * std::sqrt((1.0 - decay * decay) / (2.0 * cp.kappa));

    std::vector<ReturnScenario> out(n_scenarios);
    for (int s = 0; s < n_scenarios; ++s) {
        auto gen = make_stream(seed, stream::market, static_cast<std::uint64_t>(s));
        std::normal_distribution<double> normal(0.0, 1.0);
        ReturnScenario& sc = out[s];
        sc.returns.resize(horizon_years, n);
        sc.yield_curves.resize(horizon_years + 1, curve_maturities);
        double r = cp.r0;
        for (int k = 0; k < curve_maturities; ++k)
            sc.yield_curves(0, k) = vasicek_zero_rate(r, k + 1.0, cp);
        for (int t = 0; t < horizon_years; ++t) {
            Vec xi(n);
            for (int i = 0; i < n; ++i) xi[i] = normal(gen);
            sc.returns.row(t) = ((m + factor * xi).array().exp() - 1.0).transpose();
            double eps = normal(gen);
            r = cp.theta + (r - cp.theta) * decay + shock_sd * eps;
            for (int k = 0; k < curve_maturities; ++k)
                sc.yield_curves(t + 1, k) = vasicek_zero_rate(r, k + 1.0, cp);
        }
    }
    return out;
}

Vec discount_factors(const Vec& yields, int horizon) {
    if (horizon < 0) throw Error("discount: horizon must be nonnegative");
    if (yields.size() < horizon)
        throw Error("discount: curve supplies fewer maturities than the horizon");
    Vec g(horizon + 1);
    g[0] = 1.0;
    for (int tau = 1; tau <= horizon; ++tau) {
        double y = yields[tau - 1];
        if (!(y > -1.0)) throw Error("discount: yield at or below -100%");
        g[tau] = std::pow(1.0 + y, -static_cast<double>(tau));
    }
    return g;
}

void export_scenarios(std::ostream& os, const std::vector<ReturnScenario>& scenarios,
                      const AssetUniverse& u) {
    os << "# pensim scenarios v1\n";
    os << "scenario\tyear\tasset\treturn\n";
    os.precision(17);
    for (int s = 0; s < static_cast<int>(scenarios.size()); ++s) {
        const Mat& r = scenarios[s].returns;
        for (int t = 0; t < r.rows(); ++t)
            for (int i = 0; i < r.cols(); ++i)
                os << s << '\t' << t << '\t' << u.assets[i].name << '\t' << r(t, i) << '\n';
    }
}

}  // namespace pensim
