#include "pensim/policy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "pensim/errors.hpp"

namespace pensim {

namespace {
constexpr const char* kTableSchema = "# pensim policy-table v1";
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

RatioBins RatioBins::defaults() {
    RatioBins b;
    for (int i = 1; i <= 11; ++i) b.edges.push_back(0.2 * i);
    return b;
}

void RatioBins::validate() const {
    if (edges.empty()) throw Error("bins: need at least one edge");
    if (!(edges.front() > 0)) throw Error("bins: edges must be positive");
    for (size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1])) throw Error("bins: edges must be strictly increasing");
}

int RatioBins::bin_of(double ratio) const {
    // upper_bound gives the first edge strictly above `ratio`, which makes
    // the intervals half-open from below; +inf falls past every edge.
    auto it = std::upper_bound(edges.begin(), edges.end(), ratio);
    return static_cast<int>(it - edges.begin());
}

double RatioBins::lower_edge(int bin) const { return bin == 0 ? 0.0 : edges[bin - 1]; }

double RatioBins::upper_edge(int bin) const {
    return bin == static_cast<int>(edges.size()) ? kInf : edges[bin];
}

void PolicyTable::validate(int menu_size, const PlanRules& rules) const {
    bins.validate();
    if (static_cast<int>(rows.size()) != bins.count())
        throw Error("policy: need exactly one row per ratio bin");
    for (const auto& r : rows) {
        if (r.portfolio_id < 0 || r.portfolio_id >= menu_size)
            throw Error("policy: portfolio id " + std::to_string(r.portfolio_id) +
                        " outside the menu");
        if (r.payout_level < rules.payout_min() || r.payout_level > rules.payout_max())
            throw PayoutOutOfRange("policy: payout level " + std::to_string(r.payout_level) +
                                   " outside the plan bounds");
        if (r.target_ratio && !(*r.target_ratio > 0))
            throw Error("policy: target ratios must be positive");
    }
}

double extended_ratio(double assets, double liabilities) {
    if (assets < 0) return 0.0;
    if (liabilities <= 0) return kInf;
    return assets / liabilities;
}

const PolicyRow& lookup_actions(const PolicyTable& table, double ratio) {
    return table.rows[table.bins.bin_of(ratio)];
}

double clamp_payout(double requested, double previous, const PlanRules& rules) {
    double lo = std::max(rules.payout_min(), previous - rules.payout_change_cap_pct);
    double hi = std::min(rules.payout_max(), previous + rules.payout_change_cap_pct);
    return std::clamp(requested, lo, hi);
}

double external_cash_amount(double assets, double cashflow_at_payout,
                            double expected_portfolio_return, double fee, double target_ratio,
                            double liabilities_next) {
    double denom = (1.0 - fee) * (1.0 + expected_portfolio_return);
    if (!(denom > 0))
        throw DivisionByZero("external cash: nonpositive expected growth factor " +
                             std::to_string(denom));
    double need = target_ratio * liabilities_next / denom - (assets + cashflow_at_payout);
    return std::max(need, 0.0);
}

double external_cash(const Observation& obs, const PortfolioSpec& portfolio, double payout_level,
                     std::optional<double> target_ratio, double fee) {
    if (!target_ratio) return 0.0;
    double wbar = portfolio.weights.dot(obs.expected_returns);
    return external_cash_amount(obs.assets, obs.cashflow_at(payout_level), wbar, fee,
                                *target_ratio, obs.projection.total_shifted());
}

double learned_breach_threshold(const PolicyTable& table) {
    for (int b = table.bins.count() - 1; b >= 0; --b)
        if (table.rows[b].target_ratio) return table.bins.upper_edge(b);
    return 0.0;
}

void save_policy_table(std::ostream& os, const PolicyTable& table,
                       const std::vector<PortfolioSpec>* menu) {
    os << kTableSchema << "\n";
    os << "bin_lo\tbin_hi\tportfolio_id\tportfolio_vol\tpayout\ttarget\n";
    os.precision(17);
    for (int b = 0; b < table.bins.count(); ++b) {
        const PolicyRow& r = table.rows[b];
        os << table.bins.lower_edge(b) << '\t' << table.bins.upper_edge(b) << '\t'
           << r.portfolio_id << '\t';
        if (menu && r.portfolio_id >= 0 && r.portfolio_id < static_cast<int>(menu->size()))
            os << (*menu)[r.portfolio_id].realized_vol;
        else
            os << '-';
        os << '\t' << r.payout_level << '\t';
        if (r.target_ratio)
            os << *r.target_ratio;
        else
            os << '-';
        os << '\n';
    }
}

PolicyTable load_policy_table(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kTableSchema)
        throw FormatError(std::string("policy table: expected schema line \"") + kTableSchema +
                          "\", got \"" + line + "\"");
    if (!std::getline(is, line) || line.rfind("bin_lo", 0) != 0)
        throw FormatError("policy table: missing column header");

    PolicyTable table;
    int lineno = 2;
    std::vector<double> his;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        double lo;
        std::string hi_s, vol_s, payout_s, target_s;
        PolicyRow r;
        if (!(row >> lo >> hi_s >> r.portfolio_id >> vol_s >> payout_s >> target_s))
            throw FormatError("policy table: malformed row at line " + std::to_string(lineno));
        r.payout_level = std::stod(payout_s);
        if (target_s != "-") r.target_ratio = std::stod(target_s);
        his.push_back(hi_s == "inf" ? kInf : std::stod(hi_s));
        table.rows.push_back(r);
    }
    if (table.rows.empty()) throw FormatError("policy table: no rows");
    if (!std::isinf(his.back()))
        throw FormatError("policy table: last bin must be unbounded");
    for (size_t i = 0; i + 1 < his.size(); ++i) table.bins.edges.push_back(his[i]);
    table.bins.validate();
    return table;
}

}  // namespace pensim
