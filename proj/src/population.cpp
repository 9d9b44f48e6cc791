#include "pensim/population.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "pensim/errors.hpp"

namespace pensim {

namespace {
constexpr const char* kSnapshotSchema = "# pensim population v1";

double rr_of(const Individual& ind, const CoxModel& model) {
    if (ind.relative_risk > 0) return ind.relative_risk;
    return model.relative_risk(
        CovariateVector::from_categories(ind.income_bin, ind.education, ind.region));
}

double death_prob_rr(const BaselineHazard& baseline, Sex sex, int cohort, int age, double rr) {
    if (age >= baseline.age_max()) return 1.0;
    if (age < baseline.age_min()) return 0.0;
    return 1.0 - std::exp(-baseline.rate(sex, cohort, age) * rr);
}

int pick(const double* probs, int n, double u) {
    double acc = 0;
    for (int i = 0; i < n - 1; ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return n - 1;
}

// Work/retire transitions and the income refresh for one year, after the
// death draw has been resolved by the caller.
void advance_alive(Individual& m, const PlanRules& rules, const IncomeModel& incomes, int age,
                   PathRng& rng) {
    if (m.state == LifeState::not_working && age > rules.min_working_age) {
        if (rng.uniform() < 1.0 / rules.mean_years_to_work) m.state = LifeState::working;
    } else if (m.state == LifeState::working && age > rules.min_retiring_age) {
        if (rng.uniform() < 1.0 / rules.mean_years_to_retire) {
            m.state = LifeState::retired;
            m.pension_base = pension_base_at_retirement(age, rules, m.income_bin, incomes);
        }
    }
    m.current_income = income_at_age(age, m.income_bin, incomes);
}

}  // namespace

const char* to_string(LifeState s) {
    switch (s) {
        case LifeState::not_working: return "not_working";
        case LifeState::working: return "working";
        case LifeState::retired: return "retired";
        default: return "dead";
    }
}

LifeState life_state_from_string(const std::string& s) {
    if (s == "not_working") return LifeState::not_working;
    if (s == "working") return LifeState::working;
    if (s == "retired") return LifeState::retired;
    if (s == "dead") return LifeState::dead;
    throw FormatError("population: unknown life state \"" + s + "\"");
}

void PlanRules::validate() const {
    if (min_working_age >= min_retiring_age)
        throw Error("rules: min working age must be below min retiring age");
    if (!(mean_years_to_work >= 1 && mean_years_to_retire >= 1))
        throw Error("rules: mean transition times must be at least one year");
    if (!(contribution_pct > 0 && contribution_pct <= 100))
        throw Error("rules: contribution must be in (0, 100] percent");
    if (!(baseline_payout_pct > 0 && baseline_payout_pct <= 100))
        throw Error("rules: baseline payout must be in (0, 100] percent");
    if (!(max_payout_deviation_pct >= 0 && max_payout_deviation_pct < 100))
        throw Error("rules: payout deviation must be in [0, 100) percent");
    if (pension_base_window < 1) throw Error("rules: pension base window must be positive");
    if (!(payout_change_cap_pct >= 0)) throw Error("rules: payout change cap must be nonnegative");
}

int Population::living_retirees() const {
    int n = 0;
    for (const auto& m : members)
        if (m.state == LifeState::retired) ++n;
    return n;
}

int Population::alive() const {
    int n = 0;
    for (const auto& m : members)
        if (m.state != LifeState::dead) ++n;
    return n;
}

void DemographicConfig::validate() const {
    if (age_min < 0 || age_max < age_min) throw Error("demographics: bad age range");
    auto check = [](const double* p, int n, const char* name) {
        double sum = 0;
        for (int i = 0; i < n; ++i) {
            if (p[i] < 0) throw Error(std::string("demographics: negative probability in ") + name);
            sum += p[i];
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw Error(std::string("demographics: ") + name + " must sum to 1");
    };
    check(sex_probs.data(), 2, "sex_probs");
    check(income_probs.data(), 4, "income_probs");
    check(education_probs.data(), 4, "education_probs");
    check(region_probs.data(), 4, "region_probs");
}

double pension_base_at_retirement(int retirement_age, const PlanRules& rules, int income_bin,
                                  const IncomeModel& incomes) {
    int first = std::max(0, retirement_age - rules.pension_base_window);
    double sum = 0;
    int count = 0;
    for (int a = first; a < retirement_age; ++a) {
        sum += income_at_age(a, income_bin, incomes);
        ++count;
    }
    if (count == 0) return 0;
    return sum / count;
}

Population synthesize_population(int size, const DemographicConfig& demo, const PlanRules& rules,
                                 const CoxModel& model, const IncomeModel& incomes,
                                 std::uint64_t seed) {
    if (size < 1) throw Error("population: size must be positive");
    demo.validate();
    rules.validate();

    Population pop;
    pop.closed_after_year = demo.base_year;
    pop.members.reserve(size);
    for (int i = 0; i < size; ++i) {
        PathRng rng(make_stream(seed, stream::synthesis, static_cast<std::uint64_t>(i)));
        Individual m;
        m.sex = pick(demo.sex_probs.data(), 2, rng.uniform()) == 0 ? Sex::female : Sex::male;
        int span = demo.age_max - demo.age_min + 1;
        int age = demo.age_min + std::min(span - 1, static_cast<int>(rng.uniform() * span));
        m.birth_year = demo.base_year - age;
        m.income_bin = pick(demo.income_probs.data(), 4, rng.uniform());
        m.education = pick(demo.education_probs.data(), 4, rng.uniform());
        m.region = pick(demo.region_probs.data(), 4, rng.uniform());
        m.relative_risk = rr_of(m, model);

        for (int y = m.birth_year + 1; y <= demo.base_year; ++y)
            advance_alive(m, rules, incomes, y - m.birth_year, rng);
        m.current_income = income_at_age(age, m.income_bin, incomes);
        pop.members.push_back(std::move(m));
    }
    return pop;
}

Individual step_individual(Individual ind, const PlanRules& rules, const CoxModel& model,
                           const IncomeModel& incomes, int year, PathRng& rng) {
    if (ind.state == LifeState::dead) return ind;
    int age = ind.age(year);
    double p = death_prob_rr(model.baseline, ind.sex, ind.birth_year, age, rr_of(ind, model));
    if (rng.uniform() < p) {
        ind.state = LifeState::dead;
        return ind;
    }
    advance_alive(ind, rules, incomes, age, rng);
    return ind;
}

MortalitySchedule build_mortality_schedule(const Population& pop, const CoxModel& model,
                                           int first_year, int last_year) {
    if (last_year < first_year) throw Error("mortality schedule: empty year range");
    MortalitySchedule sched;
    sched.first_year = first_year;
    sched.probs.resize(pop.members.size(), last_year - first_year + 1);
    for (int i = 0; i < static_cast<int>(pop.members.size()); ++i) {
        const Individual& m = pop.members[i];
        double rr = rr_of(m, model);
        for (int y = first_year; y <= last_year; ++y)
            sched.probs(i, y - first_year) =
                death_prob_rr(model.baseline, m.sex, m.birth_year, y - m.birth_year, rr);
    }
    return sched;
}

void step_population(Population& pop, const PlanRules& rules, const CoxModel& model,
                     const IncomeModel& incomes, int year, PathRng& rng,
                     const MortalitySchedule* schedule) {
    for (int i = 0; i < static_cast<int>(pop.members.size()); ++i) {
        Individual& m = pop.members[i];
        if (m.state == LifeState::dead) continue;
        double p = schedule ? schedule->at(i, year)
                            : death_prob_rr(model.baseline, m.sex, m.birth_year, m.age(year),
                                            rr_of(m, model));
        if (rng.uniform() < p) {
            m.state = LifeState::dead;
            continue;
        }
        advance_alive(m, rules, incomes, m.age(year), rng);
    }
}

double individual_cashflow(const Individual& ind, const PlanRules& rules, double payout_level) {
    if (payout_level < rules.payout_min() - 1e-12 || payout_level > rules.payout_max() + 1e-12)
        throw PayoutOutOfRange("cashflow: payout level " + std::to_string(payout_level) +
                               " outside [" + std::to_string(rules.payout_min()) + ", " +
                               std::to_string(rules.payout_max()) + "]");
    switch (ind.state) {
        case LifeState::working:
            return 0.01 * rules.contribution_pct * ind.current_income;
        case LifeState::retired:
            return -(payout_level / 100.0) * (0.01 * rules.baseline_payout_pct * ind.pension_base);
        default:
            return 0.0;
    }
}

double aggregate_liability(const Population& pop, const PlanRules& rules, double payout_level) {
    double sum = 0;
    for (const auto& m : pop.members) sum += individual_cashflow(m, rules, payout_level);
    return sum;
}

double LiabilityProjection::total_shifted() const {
    const int T = static_cast<int>(expected_net_outflow.size()) - 1;
    if (T <= 0) return total;
    double acc = 0;
    for (int tau = 1; tau <= T; ++tau) acc += discount[tau] * expected_net_outflow[tau];
    double g_next = std::pow(discount[T], (T + 1.0) / T);  // flat-yield extrapolation
    return acc + g_next * expected_net_outflow[T];
}

LiabilityProjection project_liabilities(const Population& pop, const PlanRules& rules,
                                        const CoxModel& model, const IncomeModel& incomes,
                                        int current_year, int horizon, int n_inner_paths,
                                        const Vec& yields, std::uint64_t seed,
                                        const MortalitySchedule* schedule) {
    if (horizon < 0) throw Error("projection: horizon must be nonnegative");
    if (horizon > 0 && n_inner_paths < 1) throw Error("projection: need at least one inner path");
    rules.validate();

    LiabilityProjection proj;
    proj.base_year = current_year;
    proj.discount = discount_factors(yields, horizon);
    proj.expected_net_outflow = Vec::Zero(horizon + 1);
    proj.expected_net_outflow[0] = -aggregate_liability(pop, rules, 100.0);

    MortalitySchedule local;
    if (horizon > 0 && !schedule) {
        local = build_mortality_schedule(pop, model, current_year + 1, current_year + horizon);
        schedule = &local;
    }

    const int n_members = static_cast<int>(pop.members.size());
    std::vector<double> sums(horizon + 1, 0.0);
    std::vector<LifeState> state(n_members);
    std::vector<double> pension(n_members);
    const double contrib = 0.01 * rules.contribution_pct;
    const double payout = 0.01 * rules.baseline_payout_pct;

    for (int path = 0; path < n_inner_paths; ++path) {
        PathRng rng(make_stream(seed, stream::projection, path / 2), path % 2 == 1);
        for (int i = 0; i < n_members; ++i) {
            state[i] = pop.members[i].state;
            pension[i] = pop.members[i].pension_base;
        }
        for (int tau = 1; tau <= horizon; ++tau) {
            int year = current_year + tau;
            double cash = 0;
            for (int i = 0; i < n_members; ++i) {
                if (state[i] == LifeState::dead) continue;
                const Individual& m = pop.members[i];
                if (rng.uniform() < schedule->at(i, year)) {
                    state[i] = LifeState::dead;
                    continue;
                }
                int age = year - m.birth_year;
                if (state[i] == LifeState::not_working && age > rules.min_working_age) {
                    if (rng.uniform() < 1.0 / rules.mean_years_to_work)
                        state[i] = LifeState::working;
                } else if (state[i] == LifeState::working && age > rules.min_retiring_age) {
                    if (rng.uniform() < 1.0 / rules.mean_years_to_retire) {
                        state[i] = LifeState::retired;
                        pension[i] = pension_base_at_retirement(age, rules, m.income_bin, incomes);
                    }
                }
                if (state[i] == LifeState::working)
                    cash += contrib * income_at_age(age, m.income_bin, incomes);
                else if (state[i] == LifeState::retired)
                    cash -= payout * pension[i];
            }
            sums[tau] += cash;
        }
    }
    for (int tau = 1; tau <= horizon; ++tau)
        proj.expected_net_outflow[tau] = -sums[tau] / n_inner_paths;

    proj.total = 0;
    for (int tau = 0; tau <= horizon; ++tau)
        proj.total += proj.discount[tau] * proj.expected_net_outflow[tau];
    return proj;
}

void save_population(std::ostream& os, const Population& pop) {
    os << kSnapshotSchema << "\n";
    os << "id\tbirth_year\tsex\tincome_bin\teducation\tregion\tstate\n";
    for (int i = 0; i < static_cast<int>(pop.members.size()); ++i) {
        const Individual& m = pop.members[i];
        os << i << '\t' << m.birth_year << '\t' << (m.sex == Sex::female ? 'F' : 'M') << '\t'
           << m.income_bin << '\t' << m.education << '\t' << m.region << '\t'
           << to_string(m.state) << '\n';
    }
}

Population load_population(std::istream& is, const CoxModel& model, const IncomeModel& incomes,
                           const PlanRules& rules, int current_year) {
    std::string line;
    if (!std::getline(is, line) || line != kSnapshotSchema)
        throw FormatError(std::string("population: expected schema line \"") + kSnapshotSchema +
                          "\"");
    if (!std::getline(is, line) || line.rfind("id", 0) != 0)
        throw FormatError("population: missing column header");
    Population pop;
    pop.closed_after_year = current_year;
    int lineno = 2;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        int id;
        Individual m;
        std::string sex_s, state_s;
        if (!(row >> id >> m.birth_year >> sex_s >> m.income_bin >> m.education >> m.region >>
              state_s))
            throw FormatError("population: malformed row at line " + std::to_string(lineno));
        m.sex = sex_s == "F" ? Sex::female : Sex::male;
        m.state = life_state_from_string(state_s);
        int age = m.age(current_year);
        m.current_income = income_at_age(age, m.income_bin, incomes);
        if (m.state == LifeState::retired)
            m.pension_base = pension_base_at_retirement(age, rules, m.income_bin, incomes);
        m.relative_risk = rr_of(m, model);
        pop.members.push_back(std::move(m));
    }
    return pop;
}

}  // namespace pensim
