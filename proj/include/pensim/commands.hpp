#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pensim {

struct RunOptions {
    std::string config_path;
    std::vector<std::string> overrides;  // "section.key=value"
    std::string out_dir;
    std::string table_path;  // simulate: table to evaluate; tune: warm start
    int workers = 1;
};

struct FitOptions {
    std::string records_path;
    std::string life_table_path;
    std::string income_records_path;  // optional
    std::string out_path;
};

struct ReportOptions {
    std::vector<std::string> artifact_dirs;
    std::string out_dir;
};

// Subcommand bodies, kept out of main() so tests can call them.  Exit
// codes: 0 success, 1 invalid config or input files, 2 failure while
// running or writing artifacts.
int cmd_validate(const RunOptions& opts, std::ostream& out, std::ostream& err);
int cmd_simulate(const RunOptions& opts, std::ostream& out, std::ostream& err);
int cmd_tune(const RunOptions& opts, std::ostream& out, std::ostream& err);
int cmd_fit_mortality(const FitOptions& opts, std::ostream& out, std::ostream& err);
int cmd_report(const ReportOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace pensim
