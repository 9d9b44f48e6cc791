#include "pensim/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "pensim/config.hpp"
#include "pensim/errors.hpp"

namespace pensim {

namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "0.1.0";
constexpr const char* kArtifactSchema = "# pensim artifact v1";

struct LoadedRun {
    ExperimentConfig cfg;
    std::string snapshot;
    BuiltExperiment built;
    PolicyTable table;
};

LoadedRun load_run(const RunOptions& opts, bool table_is_warm_start) {
    if (opts.config_path.empty()) throw ConfigError("a config file is required (-c)");
    LoadedRun run;
    run.cfg = load_config(opts.config_path, opts.overrides, &run.snapshot);
    run.built = build_experiment(run.cfg);
    run.table = run.built.initial_table;
    if (!opts.table_path.empty()) {
        std::ifstream is(opts.table_path);
        if (!is) throw ConfigError("cannot open policy table '" + opts.table_path + "'");
        run.table = load_policy_table(is);
        run.table.validate(static_cast<int>(run.built.ctx.menu.size()), run.built.ctx.rules);
        if (table_is_warm_start &&
            run.table.bins.edges != run.built.initial_table.bins.edges)
            throw ConfigError("policy table '" + opts.table_path +
                              "' uses different ratio bins than the config");
    }
    return run;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& fill) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write '" + path.string() + "'");
    fill(os);
    if (!os) throw Error("write failed for '" + path.string() + "'");
}

void write_version(const fs::path& dir, const char* command, const ExperimentConfig& cfg) {
    write_file(dir / "version.txt", [&](std::ostream& os) {
        os << kArtifactSchema << "\n";
        os << "tool pensim " << kToolVersion << "\n";
        os << "schema " << cfg.schema_version << "\n";
        os << "command " << command << "\n";
        os << "plan " << cfg.plan << "\n";
        os << "seed " << cfg.sim.seed << "\n";
    });
}

fs::path need_out_dir(const RunOptions& opts) {
    if (opts.out_dir.empty()) throw ConfigError("an output directory is required (-o)");
    return fs::path(opts.out_dir);
}

int guard(std::ostream& err, const char* what, const std::function<int()>& body) {
    // The command bodies throw; this maps the failure stage to the exit code.
    try {
        return body();
    } catch (const Error& e) {
        err << what << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << what << ": " << e.what() << "\n";
        return 2;
    }
}

void print_metrics_summary(std::ostream& out, const char* label, const MetricsReport& m) {
    out << label << ": cash_call_prob=" << m.cash_call_prob << " mean_payout=" << m.mean_payout
        << " mean_payout_change=" << m.mean_payout_change
        << " breach_horizon=" << m.breach_prob_horizon
        << " terminal_ratio=" << m.mean_terminal_ratio << "\n";
}

}  // namespace

int cmd_validate(const RunOptions& opts, std::ostream& out, std::ostream& err) {
    try {
        LoadedRun run = load_run(opts, false);
        out << "config OK: plan " << run.cfg.plan << ", " << run.built.ctx.menu.size()
            << " menu portfolios (" << run.built.fi_menu_count << " fixed-income only), "
            << run.built.ctx.base_population.members.size() << " members, "
            << run.built.initial_table.rows.size() << " ratio bins\n";
        return 0;
    } catch (const std::exception& e) {
        err << "validate: " << e.what() << "\n";
        return 1;
    }
}

int cmd_simulate(const RunOptions& opts, std::ostream& out, std::ostream& err) {
    LoadedRun run;
    fs::path dir;
    try {
        run = load_run(opts, false);
        dir = need_out_dir(opts);
    } catch (const std::exception& e) {
        err << "simulate: " << e.what() << "\n";
        return 1;
    }
    return guard(err, "simulate", [&]() {
        ScenarioSet set = build_scenario_set(run.built.ctx, run.built.ctx.sim.seed, opts.workers);
        EvalResult result = evaluate_policy(run.table, run.built.ctx, set, true);

        fs::create_directories(dir);
        write_file(dir / "config.json", [&](std::ostream& os) { os << run.snapshot; });
        write_file(dir / "metrics.txt",
                   [&](std::ostream& os) { save_metrics(os, result.metrics); });
        write_file(dir / "trajectories.txt",
                   [&](std::ostream& os) { save_trajectories(os, result.log); });
        write_file(dir / "policy_table.txt",
                   [&](std::ostream& os) { save_policy_table(os, run.table, &run.built.ctx.menu); });
        write_version(dir, "simulate", run.cfg);

        print_metrics_summary(out, "simulate", result.metrics);
        out << "artifacts in " << dir.string() << "\n";
        return 0;
    });
}

int cmd_tune(const RunOptions& opts, std::ostream& out, std::ostream& err) {
    LoadedRun run;
    fs::path dir;
    try {
        run = load_run(opts, true);
        dir = need_out_dir(opts);
    } catch (const std::exception& e) {
        err << "tune: " << e.what() << "\n";
        return 1;
    }
    return guard(err, "tune", [&]() {
        const EvalContext& ctx = run.built.ctx;
        ScenarioSet tuning_set = build_scenario_set(ctx, ctx.sim.seed, opts.workers);
        TuneOptions topts = run.built.tuning;
        topts.workers = opts.workers;
        TuneResult tr =
            tune(run.table, ctx, tuning_set, run.built.objective, run.built.grids, topts);

        ScenarioSet oos_set = build_scenario_set(ctx, run.built.out_of_sample_seed, opts.workers);
        EvalResult oos = evaluate_policy(tr.table, ctx, oos_set, true);

        fs::create_directories(dir);
        write_file(dir / "config.json", [&](std::ostream& os) { os << run.snapshot; });
        write_file(dir / "policy_table.txt",
                   [&](std::ostream& os) { save_policy_table(os, tr.table, &ctx.menu); });
        write_file(dir / "metrics_insample.txt",
                   [&](std::ostream& os) { save_metrics(os, tr.final_metrics); });
        write_file(dir / "metrics.txt", [&](std::ostream& os) { save_metrics(os, oos.metrics); });
        write_file(dir / "trajectories.txt",
                   [&](std::ostream& os) { save_trajectories(os, oos.log); });
        write_file(dir / "tuning_log.txt", [&](std::ostream& os) {
            os.precision(17);
            os << "# pensim tuning-log v1\n";
            for (const TuneMove& m : tr.moves)
                os << "move " << m.sweep << " " << m.bin << " " << m.column << " " << m.value
                   << " " << m.h_before << " " << m.h_after << "\n";
            os << "final_h " << tr.final_h << "\n";
            os << "sweeps " << tr.sweeps << "\n";
            os << "evaluations " << tr.evaluations << "\n";
            os << "failed_evaluations " << tr.failed_evaluations << "\n";
            os << "one_optimal " << (tr.one_optimal ? 1 : 0) << "\n";
        });
        write_version(dir, "tune", run.cfg);

        out.precision(10);
        out << "tune: h=" << tr.final_h << " moves=" << tr.moves.size()
            << " sweeps=" << tr.sweeps << " evaluations=" << tr.evaluations
            << " one_optimal=" << (tr.one_optimal ? "yes" : "no") << "\n";
        out << "learned breach threshold: " << learned_breach_threshold(tr.table) << "\n";
        print_metrics_summary(out, "in-sample", tr.final_metrics);
        print_metrics_summary(out, "out-of-sample", oos.metrics);
        out << "artifacts in " << dir.string() << "\n";
        return 0;
    });
}

int cmd_fit_mortality(const FitOptions& opts, std::ostream& out, std::ostream& err) {
    std::vector<SurvivalRecord> records;
    BaselineHazard baseline;
    std::vector<IncomeObservation> income_obs;
    try {
        if (opts.records_path.empty() || opts.life_table_path.empty() || opts.out_path.empty())
            throw ConfigError("fit-mortality needs --records, --life-table and -o");
        std::ifstream rs(opts.records_path);
        if (!rs) throw ConfigError("cannot open records '" + opts.records_path + "'");
        records = load_survival_records(rs);
        std::ifstream ls(opts.life_table_path);
        if (!ls) throw ConfigError("cannot open life table '" + opts.life_table_path + "'");
        baseline = BaselineHazard::load(ls);
        if (!opts.income_records_path.empty()) {
            std::ifstream is(opts.income_records_path);
            if (!is) throw ConfigError("cannot open income records '" + opts.income_records_path +
                                       "'");
            income_obs = load_income_records(is);
        }
    } catch (const std::exception& e) {
        err << "fit-mortality: " << e.what() << "\n";
        return 1;
    }
    return guard(err, "fit-mortality", [&]() {
        CoxFitInfo info;
        CoxModel model = fit_cox(records, baseline, &info);
        IncomeModel incomes;
        bool have_betas = false;
        if (!income_obs.empty()) {
            incomes = fit_income_betas(income_obs);
            have_betas = true;
        }
        std::string provenance = "fitted from records=" + opts.records_path +
                                 " life_table=" + opts.life_table_path;
        if (have_betas) provenance += " income_records=" + opts.income_records_path;
        write_file(opts.out_path, [&](std::ostream& os) {
            save_mortality_model(os, model.coefficients, have_betas ? &incomes : nullptr,
                                 provenance);
        });
        out << "fit-mortality: " << records.size() << " records, " << info.iterations
            << " iterations, gradient " << info.gradient_norm << "\n";
        out << "coefficients:";
        out.precision(6);
        for (int j = 0; j < model.coefficients.size(); ++j) out << " " << model.coefficients[j];
        out << "\n";
        if (have_betas) {
            out << "betas:";
            for (double b : incomes.betas) out << " " << b;
            out << "\n";
        }
        out << "model written to " << opts.out_path << "\n";
        return 0;
    });
}

namespace {

struct Artifact {
    std::string name;
    MetricsReport metrics;
    PolicyTable table;
    std::vector<std::vector<double>> ratios_by_year;
};

double nearest_rank(std::vector<double>& values, double pct) {
    std::sort(values.begin(), values.end());
    int n = static_cast<int>(values.size());
    int idx = static_cast<int>(std::ceil(pct / 100.0 * n)) - 1;
    if (idx < 0) idx = 0;
    if (idx >= n) idx = n - 1;
    return values[idx];
}

Artifact load_artifact(const fs::path& dir, std::string* schema) {
    Artifact a;
    a.name = dir.filename().string();
    if (a.name.empty()) a.name = dir.parent_path().filename().string();

    std::ifstream vs(dir / "version.txt");
    std::string line;
    if (!vs || !std::getline(vs, line) || line != kArtifactSchema)
        throw ConfigError("'" + dir.string() + "' is not an artifact directory (version.txt)");
    std::string found_schema;
    while (std::getline(vs, line)) {
        std::istringstream ls(line);
        std::string key, value;
        if (ls >> key >> value && key == "schema") found_schema = value;
    }
    if (found_schema.empty())
        throw ConfigError("'" + dir.string() + "': version.txt lacks a schema entry");
    if (schema->empty()) *schema = found_schema;
    else if (*schema != found_schema)
        throw ConfigError("artifacts mix schema versions " + *schema + " and " + found_schema);

    std::ifstream ms(dir / "metrics.txt");
    if (!ms) throw ConfigError("'" + dir.string() + "': missing metrics.txt");
    a.metrics = load_metrics(ms);

    std::ifstream ts(dir / "policy_table.txt");
    if (!ts) throw ConfigError("'" + dir.string() + "': missing policy_table.txt");
    a.table = load_policy_table(ts);

    std::ifstream js(dir / "trajectories.txt");
    if (!js) throw ConfigError("'" + dir.string() + "': missing trajectories.txt");
    if (!std::getline(js, line) || line != "# pensim trajectories v1")
        throw ConfigError("'" + dir.string() + "': trajectories.txt has the wrong schema line");
    while (std::getline(js, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line.compare(0, 8, "scenario") == 0) continue;  // column header
        std::istringstream ls(line);
        int scenario = 0, year = 0;
        double assets = 0, ratio = 0;
        if (!(ls >> scenario >> year >> assets >> ratio))
            throw FormatError("'" + dir.string() + "': bad trajectory row '" + line + "'");
        if (year >= static_cast<int>(a.ratios_by_year.size()))
            a.ratios_by_year.resize(year + 1);
        a.ratios_by_year[year].push_back(ratio);
    }
    return a;
}

}  // namespace

int cmd_report(const ReportOptions& opts, std::ostream& out, std::ostream& err) {
    std::vector<Artifact> artifacts;
    fs::path dir;
    try {
        if (opts.artifact_dirs.empty()) throw ConfigError("report needs artifact directories");
        if (opts.out_dir.empty()) throw ConfigError("an output directory is required (-o)");
        dir = fs::path(opts.out_dir);
        std::string schema;
        for (const auto& d : opts.artifact_dirs)
            artifacts.push_back(load_artifact(fs::path(d), &schema));
    } catch (const std::exception& e) {
        err << "report: " << e.what() << "\n";
        return 1;
    }
    return guard(err, "report", [&]() {
        fs::create_directories(dir);
        auto emit_table = [&](std::ostream& os) {
            os.precision(17);
            os << "# pensim comparison v1\n";
            os << "metric";
            for (const auto& a : artifacts) os << " " << a.name;
            os << "\n";
            auto row = [&](const char* label, const std::function<double(const Artifact&)>& f) {
                os << label;
                for (const auto& a : artifacts) os << " " << f(a);
                os << "\n";
            };
            row("mean_payout", [](const Artifact& a) { return a.metrics.mean_payout; });
            row("breach_prob_1y", [](const Artifact& a) { return a.metrics.breach_prob_1y; });
            row("breach_prob_horizon",
                [](const Artifact& a) { return a.metrics.breach_prob_horizon; });
            row("ex_post_breach_value_pct",
                [](const Artifact& a) { return a.metrics.ex_post_breach_value_pct; });
            row("mean_payout_change",
                [](const Artifact& a) { return a.metrics.mean_payout_change; });
            row("mean_terminal_ratio",
                [](const Artifact& a) { return a.metrics.mean_terminal_ratio; });
            row("learned_breach_threshold",
                [](const Artifact& a) { return learned_breach_threshold(a.table); });
        };
        write_file(dir / "comparison.txt", emit_table);

        for (const auto& a : artifacts) {
            write_file(dir / ("bands_" + a.name + ".txt"), [&](std::ostream& os) {
                os.precision(17);
                os << "# pensim bands v1\n";
                os << "year p5 p25 p50 p75 p95\n";
                for (std::size_t y = 0; y < a.ratios_by_year.size(); ++y) {
                    std::vector<double> v = a.ratios_by_year[y];
                    if (v.empty()) continue;
                    os << y;
                    for (double p : {5.0, 25.0, 50.0, 75.0, 95.0})
                        os << " " << nearest_rank(v, p);
                    os << "\n";
                }
            });
        }

        std::ostringstream table;
        emit_table(table);
        out << table.str();
        out << "report written to " << dir.string() << "\n";
        return 0;
    });
}

}  // namespace pensim
