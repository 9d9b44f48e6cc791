#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pensim/qp.hpp"  // Mat/Vec aliases

namespace pensim {

enum class Sex { female = 0, male = 1 };

// Annual baseline hazard rates by (sex, birth-cohort year, age).  The hazard
// is piecewise constant over each year of age; cumulative hazards integrate
// that step function.  Lookups clamp the cohort year to the nearest tabulated
// cohort and throw AgeOutOfRange outside the age span.
class BaselineHazard {
  public:
    BaselineHazard() = default;

    // lambda(age) = a * exp(b * age), identical for both sexes and all cohorts.
    static BaselineHazard gompertz(double a = 1e-4, double b = 0.085, int age_max = 120);

    // Flat rate, mostly for tests.
    static BaselineHazard flat(double rate, int age_max = 120);

    // Text rows "sex cohort age hazard" after a schema line.
    static BaselineHazard load(std::istream& is);
    void save(std::ostream& os) const;

    double rate(Sex sex, int cohort_year, double age) const;
    // Integral of the hazard from t0 to t (ages in years, fractional allowed).
    double cumulative(Sex sex, int cohort_year, double t0, double t) const;

    int age_min() const { return age_min_; }
    int age_max() const { return age_max_; }
    bool empty() const { return table_.empty(); }

  private:
    // hazards per integer age in [age_min_, age_max_], keyed by (sex, cohort)
    std::map<std::pair<int, int>, std::vector<double>> table_;
    int age_min_ = 0;
    int age_max_ = -1;

    const std::vector<double>& row(Sex sex, int cohort_year) const;
};

// Indicator covariates: income quartile, education level and census region,
// each with four levels, first level as reference.  Nine slots total.
struct CovariateVector {
    Vec x;
    static constexpr int dim = 9;
    static CovariateVector from_categories(int income_q, int education, int region);
};

struct CoxModel {
    Vec coefficients;  // log relative risks
    BaselineHazard baseline;

    double relative_risk(const CovariateVector& cv) const;
};

// lambda(t) * exp(theta'X)
double hazard(const CoxModel& model, Sex sex, int cohort_year, double t,
              const CovariateVector& x);

// P(alive at t | alive at t0) = exp(-(Lambda(t) - Lambda(t0)) * exp(theta'X))
double survival(const CoxModel& model, Sex sex, int cohort_year, double t,
                const CovariateVector& x, double t0);

// 1 - survival(age+1)/survival(age); returns 1 at the table's last age.
double annual_death_prob(const CoxModel& model, Sex sex, int cohort_year, int age,
                         const CovariateVector& x);

struct SurvivalRecord {
    double entry_age = 0;     // age when tracking starts
    double exit_age = 0;      // age at death or censoring
    bool death = false;       // 1 death, 0 censored
    Sex sex = Sex::female;
    int cohort_year = 0;
    CovariateVector x;
};

struct CoxFitInfo {
    int iterations = 0;
    double gradient_norm = 0;
    double objective = 0;
};

// Negative log likelihood (up to a theta-free constant) with optional
// analytic gradient and Hessian, exposed for cross-checks.
double cox_objective(const Vec& theta, const std::vector<SurvivalRecord>& records,
                     const BaselineHazard& baseline, Vec* grad = nullptr, Mat* hess = nullptr);

// Damped-Newton maximum likelihood fit.  Stops when the gradient max-norm is
// at or below 1e-8.  Throws NonIdentifiable when a coefficient has no death
// among its carriers, or when the iterates diverge.
CoxModel fit_cox(const std::vector<SurvivalRecord>& records, const BaselineHazard& baseline,
                 CoxFitInfo* info = nullptr);

// Deterministic age-income profile: level 25*beta below age 25, age*beta
// between 25 and 45, flat 45*beta above.  One beta per income quartile.
struct IncomeModel {
    std::array<double, 4> betas{322.0, 748.0, 1394.0, 2880.0};
    static IncomeModel defaults() { return IncomeModel{}; }
};

double income_at_age(double age, int income_bin, const IncomeModel& model);

struct IncomeObservation {
    double age = 0;
    int income_bin = 0;
    double income = 0;
};

// Per-quartile least squares of income against the age multiplier.
IncomeModel fit_income_betas(const std::vector<IncomeObservation>& obs);

// Synthetic survival histories under `model`, for fit validation: integer
// entry ages uniform over [entry_age_min, entry_age_max], covariates iid
// uniform on [0,1] with the model's coefficient count, death times inverted
// from the cumulative hazard, exponential censoring at `censor_rate` per
// year (0 disables censoring).  Pure in (inputs, seed).
std::vector<SurvivalRecord> sample_survival_records(const CoxModel& model, int n,
                                                    int entry_age_min, int entry_age_max,
                                                    double censor_rate, std::uint64_t seed);

// Profile incomes with multiplicative normal noise, for fit validation.
std::vector<IncomeObservation> sample_income_records(const IncomeModel& model, int n, int age_min,
                                                     int age_max, double noise_sigma,
                                                     std::uint64_t seed);

void save_survival_records(std::ostream& os, const std::vector<SurvivalRecord>& records);
std::vector<SurvivalRecord> load_survival_records(std::istream& is);
void save_income_records(std::ostream& os, const std::vector<IncomeObservation>& obs);
std::vector<IncomeObservation> load_income_records(std::istream& is);

struct MortalityModelFile {
    Vec cox;
    bool has_betas = false;
    IncomeModel incomes;
};

// Fitted-model document: the coefficient vector plus, when fitted, the four
// income slopes; `provenance` lands in a comment line.
void save_mortality_model(std::ostream& os, const Vec& cox, const IncomeModel* incomes,
                          const std::string& provenance);
MortalityModelFile load_mortality_model(std::istream& is);

}  // namespace pensim
