#include <iostream>

#include "CLI11.hpp"
#include "pensim/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"pensim: pension plan simulation and policy tuning"};
    app.require_subcommand(1);

    pensim::RunOptions run;
    pensim::FitOptions fit;
    pensim::ReportOptions report;

    auto add_run_options = [&](CLI::App* cmd, bool with_out) {
        cmd->add_option("-c,--config", run.config_path, "experiment config (JSON)")->required();
        cmd->add_option("--set", run.overrides, "override, e.g. --set simulation.seed=7");
        if (with_out) cmd->add_option("-o,--out", run.out_dir, "artifact directory")->required();
        cmd->add_option("--workers", run.workers, "worker threads")->check(CLI::PositiveNumber);
    };

    CLI::App* validate = app.add_subcommand("validate", "parse and validate a config");
    add_run_options(validate, false);

    CLI::App* simulate = app.add_subcommand("simulate", "evaluate a policy table");
    add_run_options(simulate, true);
    simulate->add_option("--table", run.table_path, "policy table to evaluate");

    CLI::App* tune = app.add_subcommand("tune", "tune a policy table, then evaluate out of sample");
    add_run_options(tune, true);
    tune->add_option("--initial-table", run.table_path, "warm-start policy table");

    CLI::App* fitcmd = app.add_subcommand("fit-mortality", "fit hazard coefficients and income slopes");
    fitcmd->add_option("--records", fit.records_path, "survival records")->required();
    fitcmd->add_option("--life-table", fit.life_table_path, "baseline hazard table")->required();
    fitcmd->add_option("--income-records", fit.income_records_path, "income observations");
    fitcmd->add_option("-o,--out", fit.out_path, "model output file")->required();

    CLI::App* reportcmd = app.add_subcommand("report", "compare run artifacts");
    reportcmd->add_option("dirs", report.artifact_dirs, "artifact directories")->required();
    reportcmd->add_option("-o,--out", report.out_dir, "report output directory")->required();

    CLI11_PARSE(app, argc, argv);

    if (validate->parsed()) return pensim::cmd_validate(run, std::cout, std::cerr);
    if (simulate->parsed()) return pensim::cmd_simulate(run, std::cout, std::cerr);
    if (tune->parsed()) return pensim::cmd_tune(run, std::cout, std::cerr);
    if (fitcmd->parsed()) return pensim::cmd_fit_mortality(fit, std::cout, std::cerr);
    if (reportcmd->parsed()) return pensim::cmd_report(report, std::cout, std::cerr);
    return 2;
}
