#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ncmech/charges.hpp"

namespace ncmech::cli {

struct InlineSpec {
    int n = 1;
    std::string lagrangian;
    std::string potential;
    std::map<std::string, double> params;
};

struct FitRequest {
    std::string series; // q1[i], v1[i], ..., qminus[i], vminus[i], qminus_envelope, J_norm
    double windowBegin = 0.0;
    double windowEnd = 0.0;
};

struct ScenarioConfig {
    std::string name = "scenario";
    std::optional<std::string> modelName;
    std::map<std::string, double> modelParams;
    std::optional<InlineSpec> inlineSpec;

    double t0 = 0.0;
    std::vector<double> q1, v1, q2, v2; // cartesian initial data
    bool cartesianInitial = false;
    std::vector<double> qplus, vplus, qminus, vminus;
    bool lightconeInitial = false;
    bool physicalLimit = false;

    std::string method = "dopri45";
    double relTol = 1e-10;
    double absTol = 1e-12;
    double tEnd = 20.0;
    double sampleDt = 0.01;

    std::vector<std::string> charges; // empty = full builtin set
    std::optional<FitRequest> fit;
    std::uint64_t seed = 0;
};

/// Parses a scenario JSON file (see README for the schema). Throws
/// ConfigError on any validation problem.
ScenarioConfig load_config(const std::string& path);
ScenarioConfig parse_config_text(const std::string& text);

struct RunArtifacts {
    std::string trajectoryCsv;
    std::string ledgerCsv;
    std::string summaryJson;
};

/// Runs one scenario and writes <name>_trajectory.csv, <name>_ledger.csv and
/// <name>_summary.json under outDir. Returns 0 on success, 2 on config
/// errors, 3 on integration failure.
int cmd_run(const ScenarioConfig& config, const std::string& outDir, std::ostream& log,
            RunArtifacts* artifacts = nullptr);

/// Runs the named verification suite (all, brackets, ledger, oracles,
/// parser); prints one PASS/FAIL line per check plus informational FLAG
/// lines. Returns 0 iff every check passes.
int cmd_verify(const std::string& suite, std::uint64_t seed, double bracketTol, std::ostream& out);

/// Cartesian sweep over numeric model parameters. The grid JSON maps
/// parameter names to value lists. One run per grid point; rows are
/// aggregated into sweep.csv in grid-index order. Returns 0 if at least one
/// run succeeded and the configuration was valid.
int cmd_sweep(const ScenarioConfig& base, const std::string& gridPath, const std::string& outDir,
              int jobs, std::ostream& log);

int cmd_list_models(std::ostream& out);

/// Environment override NCMECH_SEED, when set, replaces the config seed.
std::uint64_t effective_seed(std::uint64_t configSeed);

} // namespace ncmech::cli
