#include "pensim/mortality.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "pensim/errors.hpp"
#include "pensim/rng.hpp"

namespace pensim {

namespace {
constexpr const char* kLifeTableSchema = "# pensim life-table v1";
constexpr double kDivergenceBound = 30.0;
}  // namespace

BaselineHazard BaselineHazard::gompertz(double a, double b, int age_max) {
    if (!(a >= 0) || age_max < 1) throw Error("gompertz: bad parameters");
    BaselineHazard h;
    h.age_min_ = 0;
    h.age_max_ = age_max;
    std::vector<double> rates(age_max + 1);
    for (int age = 0; age <= age_max; ++age) rates[age] = a * std::exp(b * age);
    h.table_[{0, 0}] = rates;
    h.table_[{1, 0}] = rates;
    return h;
}

BaselineHazard BaselineHazard::flat(double rate, int age_max) {
    if (!(rate >= 0) || age_max < 1) throw Error("flat hazard: bad parameters");
    BaselineHazard h;
    h.age_min_ = 0;
    h.age_max_ = age_max;
    std::vector<double> rates(age_max + 1, rate);
    h.table_[{0, 0}] = rates;
    h.table_[{1, 0}] = rates;
    return h;
}

BaselineHazard BaselineHazard::load(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kLifeTableSchema)
        throw FormatError(std::string("life table: expected schema line \"") + kLifeTableSchema +
                          "\", got \"" + line + "\"");
    if (!std::getline(is, line) || line.rfind("sex", 0) != 0)
        throw FormatError("life table: missing column header");

    struct Key {
        int sex, cohort;
    };
    std::map<std::pair<int, int>, std::map<int, double>> raw;
    int lineno = 2;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        std::string sex_s;
        int cohort, age;
        double hz;
        if (!(row >> sex_s >> cohort >> age >> hz))
            throw FormatError("life table: malformed row at line " + std::to_string(lineno));
        int sex = sex_s == "F" ? 0 : sex_s == "M" ? 1 : -1;
        if (sex < 0) throw FormatError("life table: sex must be F or M at line " + std::to_string(lineno));
        if (hz < 0) throw FormatError("life table: negative hazard at line " + std::to_string(lineno));
        raw[{sex, cohort}][age] = hz;
    }
    if (raw.empty()) throw FormatError("life table: no rows");

    BaselineHazard h;
    h.age_min_ = raw.begin()->second.begin()->first;
    h.age_max_ = raw.begin()->second.rbegin()->first;
    for (const auto& [key, ages] : raw) {
        if (ages.begin()->first != h.age_min_ || ages.rbegin()->first != h.age_max_ ||
            static_cast<int>(ages.size()) != h.age_max_ - h.age_min_ + 1)
            throw FormatError("life table: cohort " + std::to_string(key.second) +
                              " does not cover the common age span without gaps");
        std::vector<double> rates;
        rates.reserve(ages.size());
        for (const auto& [age, hz] : ages) rates.push_back(hz);
        h.table_[key] = std::move(rates);
    }
    return h;
}

void BaselineHazard::save(std::ostream& os) const {
    os << kLifeTableSchema << "\n";
    os << "sex\tcohort\tage\thazard\n";
    os.precision(17);
    for (const auto& [key, rates] : table_) {
        for (int age = age_min_; age <= age_max_; ++age)
            os << (key.first == 0 ? 'F' : 'M') << '\t' << key.second << '\t' << age << '\t'
               << rates[age - age_min_] << '\n';
    }
}

const std::vector<double>& BaselineHazard::row(Sex sex, int cohort_year) const {
    if (table_.empty()) throw Error("baseline hazard: empty table");
    const int s = static_cast<int>(sex);
    // Exact cohort, else the nearest tabulated cohort for this sex.
    auto it = table_.find({s, cohort_year});
    if (it != table_.end()) return it->second;
    const std::vector<double>* best = nullptr;
    int best_dist = std::numeric_limits<int>::max();
    for (const auto& [key, rates] : table_) {
        if (key.first != s) continue;
        int d = std::abs(key.second - cohort_year);
        if (d < best_dist) {
            best_dist = d;
            best = &rates;
        }
    }
    if (!best) throw Error("baseline hazard: no rows for this sex");
    return *best;
}

double BaselineHazard::rate(Sex sex, int cohort_year, double age) const {
    if (!(age >= age_min_ && age < age_max_ + 1.0))
        throw AgeOutOfRange("baseline hazard: age " + std::to_string(age) + " outside [" +
                            std::to_string(age_min_) + ", " + std::to_string(age_max_ + 1) + ")");
    const auto& rates = row(sex, cohort_year);
    int k = static_cast<int>(std::floor(age));
    return rates[std::min(k, age_max_) - age_min_];
}

double BaselineHazard::cumulative(Sex sex, int cohort_year, double t0, double t) const {
    if (!(t >= t0)) throw Error("baseline hazard: cumulative needs t >= t0");
    if (!(t0 >= age_min_ && t <= age_max_ + 1.0))
        throw AgeOutOfRange("baseline hazard: [" + std::to_string(t0) + ", " + std::to_string(t) +
                            "] outside the tabulated age span");
    const auto& rates = row(sex, cohort_year);
    auto cum_from_min = [&](double x) {
        int k = static_cast<int>(std::floor(x));
        double acc = 0;
        for (int age = age_min_; age < std::min(k, age_max_ + 1); ++age)
            acc += rates[age - age_min_];
        double frac = x - k;
        if (frac > 0 && k <= age_max_) acc += frac * rates[k - age_min_];
        return acc;
    };
    return cum_from_min(t) - cum_from_min(t0);
}

CovariateVector CovariateVector::from_categories(int income_q, int education, int region) {
    auto check = [](int v, const char* name) {
        if (v < 0 || v > 3)
            throw Error(std::string("covariates: ") + name + " level must be in 0..3");
    };
    check(income_q, "income quartile");
    check(education, "education");
    check(region, "region");
    CovariateVector cv;
    cv.x = Vec::Zero(dim);
    if (income_q > 0) cv.x[income_q - 1] = 1.0;
    if (education > 0) cv.x[3 + education - 1] = 1.0;
    if (region > 0) cv.x[6 + region - 1] = 1.0;
    return cv;
}

double CoxModel::relative_risk(const CovariateVector& cv) const {
    if (cv.x.size() != coefficients.size())
        throw Error("cox: covariate dimension does not match the fitted coefficients");
    return std::exp(coefficients.dot(cv.x));
}

double hazard(const CoxModel& model, Sex sex, int cohort_year, double t,
              const CovariateVector& x) {
    return model.baseline.rate(sex, cohort_year, t) * model.relative_risk(x);
}

double survival(const CoxModel& model, Sex sex, int cohort_year, double t,
                const CovariateVector& x, double t0) {
    double cum = model.baseline.cumulative(sex, cohort_year, t0, t);
    return std::exp(-cum * model.relative_risk(x));
}

double annual_death_prob(const CoxModel& model, Sex sex, int cohort_year, int age,
                         const CovariateVector& x) {
    if (age >= model.baseline.age_max()) return 1.0;
    double cum = model.baseline.cumulative(sex, cohort_year, age, age + 1.0);
    return 1.0 - std::exp(-cum * model.relative_risk(x));
}

double cox_objective(const Vec& theta, const std::vector<SurvivalRecord>& records,
                     const BaselineHazard& baseline, Vec* grad, Mat* hess) {
    const int d = static_cast<int>(theta.size());
    double f = 0;
    if (grad) *grad = Vec::Zero(d);
    if (hess) *hess = Mat::Zero(d, d);
    for (const auto& r : records) {
        double cum = baseline.cumulative(r.sex, r.cohort_year, r.entry_age, r.exit_age);
        double lin = theta.dot(r.x.x);
        double e = std::exp(lin);
        double del = r.death ? 1.0 : 0.0;
        f += cum * e - del * lin;
        if (grad) *grad += (cum * e - del) * r.x.x;
        if (hess) *hess += (cum * e) * (r.x.x * r.x.x.transpose());
    }
    return f;
}

CoxModel fit_cox(const std::vector<SurvivalRecord>& records, const BaselineHazard& baseline,
                 CoxFitInfo* info) {
    if (records.empty()) throw Error("cox fit: no records");
    const int d = static_cast<int>(records[0].x.x.size());
    for (const auto& r : records) {
        if (static_cast<int>(r.x.x.size()) != d)
            throw Error("cox fit: inconsistent covariate dimensions");
        if (!(r.exit_age >= r.entry_age))
            throw Error("cox fit: exit age before entry age");
    }

    // A coefficient whose carriers include no death cannot have a finite
    // maximizer: the likelihood improves without bound as it goes to -inf.
    std::vector<int> dead_ends;
    for (int j = 0; j < d; ++j) {
        bool death_carrier = false;
        for (const auto& r : records)
            if (r.death && r.x.x[j] != 0) {
                death_carrier = true;
                break;
            }
        if (!death_carrier) dead_ends.push_back(j);
    }
    if (!dead_ends.empty())
        throw NonIdentifiable("cox fit: no observed deaths for some coefficients", dead_ends);

    Vec theta = Vec::Zero(d);
    Vec g(d);
    Mat h(d, d);
    double f = cox_objective(theta, records, baseline, &g, &h);
    int iter = 0;
    for (; iter < 200; ++iter) {
        if (g.lpNorm<Eigen::Infinity>() <= 1e-8) break;
        Vec dir;
        Eigen::LDLT<Mat> ldlt(h);
        if (ldlt.info() == Eigen::Success) dir = ldlt.solve(-g);
        if (dir.size() != d || !dir.allFinite() || g.dot(dir) >= 0) dir = -g;

        double slope = g.dot(dir);
        double alpha = 1.0;
        double f_new = 0;
        bool moved = false;
        // Near the optimum the predicted decrease drops below the rounding
        // noise of f (a sum over all records), so the sufficient-decrease
        // test needs a noise allowance or the last Newton steps never pass.
        double noise = 16.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f));
        while (alpha >= 1e-14) {
            Vec cand = theta + alpha * dir;
            f_new = cox_objective(cand, records, baseline);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * alpha * slope + noise) {
                theta = cand;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!moved) break;

        if (theta.lpNorm<Eigen::Infinity>() > kDivergenceBound) {
            std::vector<int> big;
            for (int j = 0; j < d; ++j)
                if (std::abs(theta[j]) > kDivergenceBound * 0.9) big.push_back(j);
            throw NonIdentifiable("cox fit: coefficients diverging", big);
        }
        f = cox_objective(theta, records, baseline, &g, &h);
    }
    if (g.lpNorm<Eigen::Infinity>() > 1e-8)
        throw Error("cox fit: did not reach the gradient tolerance");

    if (info) {
        info->iterations = iter;
        info->gradient_norm = g.lpNorm<Eigen::Infinity>();
        info->objective = f;
    }
    CoxModel model;
    model.coefficients = theta;
    model.baseline = baseline;
    return model;
}

double income_at_age(double age, int income_bin, const IncomeModel& model) {
    if (income_bin < 0 || income_bin > 3)
        throw UnknownBin("income: bin " + std::to_string(income_bin) + " is not in 0..3");
    double mult = age < 25.0 ? 25.0 : age > 45.0 ? 45.0 : age;
    return model.betas[income_bin] * mult;
}

IncomeModel fit_income_betas(const std::vector<IncomeObservation>& obs) {
    std::array<double, 4> gy{}, gg{};
    std::array<int, 4> count{};
    for (const auto& o : obs) {
        if (o.income_bin < 0 || o.income_bin > 3)
            throw UnknownBin("income fit: bin " + std::to_string(o.income_bin) + " is not in 0..3");
        double g = o.age < 25.0 ? 25.0 : o.age > 45.0 ? 45.0 : o.age;
        gy[o.income_bin] += g * o.income;
        gg[o.income_bin] += g * g;
        ++count[o.income_bin];
    }
    IncomeModel m;
    for (int b = 0; b < 4; ++b) {
        if (count[b] == 0)
            throw EmptyBin("income fit: bin " + std::to_string(b) + " has no observations");
        m.betas[b] = gy[b] / gg[b];
    }
    return m;
}

std::vector<SurvivalRecord> sample_survival_records(const CoxModel& model, int n,
                                                    int entry_age_min, int entry_age_max,
                                                    double censor_rate, std::uint64_t seed) {
    const BaselineHazard& base = model.baseline;
    if (base.empty()) throw Error("record sampling: baseline table is empty");
    if (entry_age_min < base.age_min() || entry_age_max > base.age_max() ||
        entry_age_min > entry_age_max)
        throw AgeOutOfRange("record sampling: entry ages outside the baseline table");
    if (!(censor_rate >= 0)) throw Error("record sampling: censor_rate must be >= 0");

    const int d = static_cast<int>(model.coefficients.size());
    const double last = base.age_max() + 1.0;
    std::vector<SurvivalRecord> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        auto gen = make_stream(seed, stream::records, static_cast<std::uint64_t>(i));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        SurvivalRecord r;
        r.sex = unif(gen) < 0.5 ? Sex::female : Sex::male;
        r.cohort_year = 0;
        r.entry_age = entry_age_min +
                      static_cast<int>(unif(gen) * (entry_age_max - entry_age_min + 1));
        r.x.x = Vec(d);
        for (int j = 0; j < d; ++j) r.x.x[j] = unif(gen);
        double rr = d > 0 ? std::exp(model.coefficients.dot(r.x.x)) : 1.0;

        // Invert the cumulative hazard year by year; whoever outlives the
        // table is censored at its end.
        double target = -std::log1p(-unif(gen)) / rr;
        bool table_end = true;
        double death_age = last;
        double cum = 0;
        for (double a = r.entry_age; a < last; a += 1.0) {
            double lam = base.rate(r.sex, r.cohort_year, a);
            if (cum + lam >= target) {
                death_age = lam > 0 ? a + (target - cum) / lam : a + 1.0;
                table_end = false;
                break;
            }
            cum += lam;
        }
        double censor_age = last;
        if (censor_rate > 0)
            censor_age = r.entry_age - std::log1p(-unif(gen)) / censor_rate;
        if (censor_age < death_age || table_end) {
            r.exit_age = std::min(censor_age, last);
            r.death = false;
        } else {
            r.exit_age = death_age;
            r.death = true;
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<IncomeObservation> sample_income_records(const IncomeModel& model, int n, int age_min,
                                                     int age_max, double noise_sigma,
                                                     std::uint64_t seed) {
    if (age_min > age_max || age_min < 0) throw Error("income sampling: bad age range");
    std::vector<IncomeObservation> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        auto gen = make_stream(seed, stream::records, static_cast<std::uint64_t>(i), 1);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::normal_distribution<double> normal(0.0, 1.0);
        IncomeObservation o;
        o.age = age_min + static_cast<int>(unif(gen) * (age_max - age_min + 1));
        o.income_bin = static_cast<int>(unif(gen) * 4.0);
        if (o.income_bin > 3) o.income_bin = 3;
        o.income = income_at_age(o.age, o.income_bin, model) * (1.0 + noise_sigma * normal(gen));
        out.push_back(o);
    }
    return out;
}

namespace {
constexpr const char* kSurvivalSchema = "# pensim survival-records v1";
constexpr const char* kIncomeSchema = "# pensim income-records v1";
constexpr const char* kModelSchema = "# pensim mortality-model v1";
}  // namespace

void save_survival_records(std::ostream& os, const std::vector<SurvivalRecord>& records) {
    os.precision(17);
    os << kSurvivalSchema << "\n";
    int d = records.empty() ? 0 : static_cast<int>(records.front().x.x.size());
    os << "dim " << d << "\n";
    for (const auto& r : records) {
        os << r.entry_age << " " << r.exit_age << " " << (r.death ? 1 : 0) << " "
           << (r.sex == Sex::female ? 'F' : 'M') << " " << r.cohort_year;
        for (int j = 0; j < r.x.x.size(); ++j) os << " " << r.x.x[j];
        os << "\n";
    }
}

std::vector<SurvivalRecord> load_survival_records(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kSurvivalSchema)
        throw FormatError("survival records: missing schema line '" +
                          std::string(kSurvivalSchema) + "'");
    int d = -1;
    std::vector<SurvivalRecord> out;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        if (d < 0) {
            std::string key;
            if (!(ls >> key >> d) || key != "dim" || d < 0)
                throw FormatError("survival records: expected 'dim <n>' after the schema line");
            continue;
        }
        SurvivalRecord r;
        int death = 0;
        char sex = 0;
        if (!(ls >> r.entry_age >> r.exit_age >> death >> sex >> r.cohort_year))
            throw FormatError("survival records: bad row '" + line + "'");
        if (sex != 'F' && sex != 'M')
            throw FormatError("survival records: sex must be F or M in '" + line + "'");
        r.death = death != 0;
        r.sex = sex == 'F' ? Sex::female : Sex::male;
        r.x.x = Vec(d);
        for (int j = 0; j < d; ++j)
            if (!(ls >> r.x.x[j]))
                throw FormatError("survival records: expected " + std::to_string(d) +
                                  " covariates in '" + line + "'");
        out.push_back(std::move(r));
    }
    if (d < 0) throw FormatError("survival records: empty file");
    return out;
}

void save_income_records(std::ostream& os, const std::vector<IncomeObservation>& obs) {
    os.precision(17);
    os << kIncomeSchema << "\n";
    for (const auto& o : obs) os << o.age << " " << o.income_bin << " " << o.income << "\n";
}

std::vector<IncomeObservation> load_income_records(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kIncomeSchema)
        throw FormatError("income records: missing schema line '" + std::string(kIncomeSchema) +
                          "'");
    std::vector<IncomeObservation> out;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        IncomeObservation o;
        if (!(ls >> o.age >> o.income_bin >> o.income))
            throw FormatError("income records: bad row '" + line + "'");
        out.push_back(o);
    }
    return out;
}

void save_mortality_model(std::ostream& os, const Vec& cox, const IncomeModel* incomes,
                          const std::string& provenance) {
    os.precision(17);
    os << kModelSchema << "\n";
    if (!provenance.empty()) os << "# " << provenance << "\n";
    os << "cox " << cox.size();
    for (int j = 0; j < cox.size(); ++j) os << " " << cox[j];
    os << "\n";
    if (incomes) {
        os << "betas";
        for (double b : incomes->betas) os << " " << b;
        os << "\n";
    }
}

MortalityModelFile load_mortality_model(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kModelSchema)
        throw FormatError("mortality model: missing schema line '" + std::string(kModelSchema) +
                          "'");
    MortalityModelFile out;
    bool have_cox = false;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "cox") {
            int d = 0;
            if (!(ls >> d) || d < 0) throw FormatError("mortality model: bad cox row");
            out.cox = Vec(d);
            for (int j = 0; j < d; ++j)
                if (!(ls >> out.cox[j])) throw FormatError("mortality model: bad cox row");
            have_cox = true;
        } else if (key == "betas") {
            for (int b = 0; b < 4; ++b)
                if (!(ls >> out.incomes.betas[b]))
                    throw FormatError("mortality model: betas row needs 4 values");
            out.has_betas = true;
        } else {
            throw FormatError("mortality model: unknown key '" + key + "'");
        }
    }
    if (!have_cox) throw FormatError("mortality model: missing cox row");
    return out;
}

}  // namespace pensim
