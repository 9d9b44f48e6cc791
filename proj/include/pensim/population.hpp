#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "pensim/market.hpp"
#include "pensim/mortality.hpp"
#include "pensim/rng.hpp"

namespace pensim {

enum class LifeState { not_working = 0, working = 1, retired = 2, dead = 3 };

const char* to_string(LifeState s);
LifeState life_state_from_string(const std::string& s);

struct Individual {
    int birth_year = 0;
    Sex sex = Sex::female;
    int income_bin = 0;   // quartile 0..3
    int education = 0;    // 0..3
    int region = 0;       // 0..3
    LifeState state = LifeState::not_working;
    double current_income = 0;   // currency/yr, from the age profile
    double pension_base = 0;     // set at retirement
    double relative_risk = 0;    // cached exp(theta'X); 0 means not yet cached

    int age(int year) const { return year - birth_year; }
};

struct PlanRules {
    int min_working_age = 18;
    double mean_years_to_work = 4;    // transition probability 1/this per year
    int min_retiring_age = 60;
    double mean_years_to_retire = 5;
    double contribution_pct = 10;       // of income while working
    double baseline_payout_pct = 80;    // of pension base while retired
    double max_payout_deviation_pct = 10;  // payout level stays in 100 +- this
    int pension_base_window = 20;          // years of income averaged at retirement
    double payout_change_cap_pct = 100;    // |payout(t) - payout(t-1)| cap

    double payout_min() const { return 100.0 - max_payout_deviation_pct; }
    double payout_max() const { return 100.0 + max_payout_deviation_pct; }
    void validate() const;
};

struct Population {
    std::vector<Individual> members;
    int closed_after_year = 0;  // no entrants join after this year

    int living_retirees() const;
    int alive() const;
};

struct DemographicConfig {
    int base_year = 2025;
    int age_min = 5;
    int age_max = 85;
    std::array<double, 2> sex_probs{0.5, 0.5};
    std::array<double, 4> income_probs{0.25, 0.25, 0.25, 0.25};
    std::array<double, 4> education_probs{0.25, 0.25, 0.25, 0.25};
    std::array<double, 4> region_probs{0.25, 0.25, 0.25, 0.25};

    void validate() const;
};

// Draws attributes from the configured marginals, then replays the
// work/retire transitions from birth to the base year (no deaths; everyone
// sampled is alive at the base year) so states, incomes and pension bases
// are mutually consistent.  Pure function of (inputs, seed).
Population synthesize_population(int size, const DemographicConfig& demo, const PlanRules& rules,
                                 const CoxModel& model, const IncomeModel& incomes,
                                 std::uint64_t seed);

// Average profile income over the `window` years before retiring at
// `retirement_age`.
double pension_base_at_retirement(int retirement_age, const PlanRules& rules, int income_bin,
                                  const IncomeModel& incomes);

// Resolves one year for one member: death first, then at most one state
// transition (work entry above min_working_age, retirement above
// min_retiring_age), then the income update.  The year-t cashflow therefore
// reflects the year-t state.
Individual step_individual(Individual ind, const PlanRules& rules, const CoxModel& model,
                           const IncomeModel& incomes, int year, PathRng& rng);

// Death probabilities by (member, year), precomputed so scenario and
// projection loops avoid hazard-table lookups.  Probabilities are identical
// to what step_individual would use.
struct MortalitySchedule {
    int first_year = 0;
    Mat probs;  // members x years, year index = year - first_year

    double at(int member, int year) const { return probs(member, year - first_year); }
    int last_year() const { return first_year + static_cast<int>(probs.cols()) - 1; }
};

MortalitySchedule build_mortality_schedule(const Population& pop, const CoxModel& model,
                                           int first_year, int last_year);

// In-place advance of every member, in member order, drawing from `rng`.
// Uses `schedule` when given, otherwise queries the model directly.
void step_population(Population& pop, const PlanRules& rules, const CoxModel& model,
                     const IncomeModel& incomes, int year, PathRng& rng,
                     const MortalitySchedule* schedule = nullptr);

// Net plan cashflow sign convention: contributions positive, benefit
// payments negative.  `payout_level` is a percentage of the baseline
// benefit and must stay within the plan's deviation bounds.
double individual_cashflow(const Individual& ind, const PlanRules& rules, double payout_level);
double aggregate_liability(const Population& pop, const PlanRules& rules, double payout_level);

struct LiabilityProjection {
    int base_year = 0;
    Vec expected_net_outflow;  // index tau = 0..T, baseline payout level
    Vec discount;              // gamma_tau, same length
    double total = 0;          // sum of discounted outflows

    // Estimate of next year's total from this projection: drops tau = 0,
    // reuses the same discounts and extends the last outflow one more year.
    double total_shifted() const;
};

// Monte Carlo projection of expected net outflows at the baseline payout
// level over `horizon` years.  Inner paths are antithetic pairs; tau = 0 is
// the current population's deterministic cashflow.  Pure in (inputs, seed).
LiabilityProjection project_liabilities(const Population& pop, const PlanRules& rules,
                                        const CoxModel& model, const IncomeModel& incomes,
                                        int current_year, int horizon, int n_inner_paths,
                                        const Vec& yields, std::uint64_t seed,
                                        const MortalitySchedule* schedule = nullptr);

// Snapshot rows (id, birth_year, sex, income_bin, education, region, state).
// Loading reconstructs incomes from the age profile and pension bases from
// the averaging window ending at the load year.
void save_population(std::ostream& os, const Population& pop);
Population load_population(std::istream& is, const CoxModel& model, const IncomeModel& incomes,
                           const PlanRules& rules, int current_year);

}  // namespace pensim
