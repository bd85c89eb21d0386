#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mec/learning.hpp"
#include "mec/policies.hpp"
#include "mec/sim.hpp"

namespace mec::cli {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kCsvSchemaVersion = 1;

// Process exit statuses.
enum ExitStatus : int {
    kExitOk = 0,
    kExitInternal = 1,
    kExitConfig = 2,
    kExitSolver = 3,
    kExitAssertion = 4,
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class LearnMode { estimators, sgd, joint };

struct LearnSettings {
    LearnMode mode = LearnMode::joint;
    long frames = 10000;         // estimator frames (estimators / joint)
    long sgd_iterations = 2000;  // SGD steps, one per arrival (sgd / joint)
    double initial_p_r = 1e-9;
    SgdConfig sgd;
    long log_every = 1;  // learning.csv row every this many frames
};

struct BoundCheckSettings {
    double confidence_z = 2.576;
    // |W_hat_baseline - W| <= analytic_tolerance * W + z * CI
    double analytic_tolerance = 0.03;
};

struct ExperimentConfig {
    SimConfig sim;  // sim.params is the base model
    int workers = 1;
    std::string out_dir = ".";

    std::vector<PolicySpec> policies;
    std::vector<double> arrival_probs;     // empty: model.arrival_prob
    std::vector<double> task_size_scales;  // empty: {1}
    std::vector<double> p_rs;              // empty: model.receive_power_w

    // Initial edge queues for value and bound-check; default one empty state.
    std::vector<std::vector<InitialDevice>> states;

    LearnSettings learn;
    BoundCheckSettings bound;

    nlohmann::json resolved;  // config after overrides; hashed into the outputs
    std::string hash;
};

// Dotted-path override: "model.arrival_prob=0.3", "sweep.policies=[\"baseline\"]".
// The value is read as JSON when it parses, else as a string.
void apply_override(nlohmann::json& config, const std::string& assignment);

// Validates the document (unknown keys rejected) and builds the config.
// Throws ConfigError.
ExperimentConfig parse_config(const nlohmann::json& document);
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides);

// 64-bit FNV-1a over the compact dump of the resolved config, as 16 hex digits.
std::string config_hash(const nlohmann::json& resolved);

// Segment range scaled by `scale`, rounded, kept >= 1.
ModelParams scaled_task_size(ModelParams params, double scale);

// ---- CSV ----
inline const std::vector<std::string> kMetricsColumns = {
    "policy",       "arrival_prob",    "p_r", "seed_base", "episodes", "discounted_cost_mean", "discounted_cost_ci",
    "per_device_cost", "edge_ratio", "task_size_scale", "per_device_cost_ci", "departed_devices"};
inline const std::vector<std::string> kPmfColumns = {"policy", "arrival_prob", "kind", "bin",
                                                     "mass",   "p_r",          "task_size_scale"};
inline const std::vector<std::string> kLearningColumns = {"t", "n", "P_hat", "varpi_hat", "cbar_hat"};
inline const std::vector<std::string> kSgdColumns = {"n", "p_r", "gradient"};
inline const std::vector<std::string> kBoundColumns = {
    "state",        "devices",          "W_hat_baseline",    "W_hat_baseline_ci", "W_hat_improved",
    "W_hat_improved_ci", "analytic_W_baseline", "paired_diff", "paired_CI", "ordering_ok", "analytic_ok"};

std::string format_number(double value);

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}
    void add_meta(const std::string& key, const std::string& value) { meta_.emplace_back(key, value); }
    // Cells already formatted; the count must match the header.
    void add_row(std::vector<std::string> cells);
    std::size_t rows() const { return rows_.size(); }
    void write(std::ostream& out) const;

private:
    std::vector<std::string> columns_;
    std::vector<std::pair<std::string, std::string>> meta_;
    std::vector<std::vector<std::string>> rows_;
};

// ---- commands ----
// Each returns the single JSON object printed on stdout; files are written
// into config.out_dir only after every run has finished.
struct CommandResult {
    nlohmann::json report;
    std::map<std::string, CsvTable> files;  // file name -> table
    int status = kExitOk;
};

CommandResult cmd_simulate(const ExperimentConfig& config);
CommandResult cmd_value(const ExperimentConfig& config);
CommandResult cmd_learn(const ExperimentConfig& config);
CommandResult cmd_bound_check(const ExperimentConfig& config);

// Writes all files (via temporaries renamed into place).
void write_outputs(const CommandResult& result, const std::string& out_dir);

// Full invocation: runs the command, writes the outputs, prints the JSON
// record to `out`, and returns the exit status. Errors become a JSON error
// record and a distinct status, with no files written.
int run_command(const std::string& command, const std::string& config_path, const std::vector<std::string>& overrides,
                std::optional<std::uint64_t> seed, std::optional<int> workers, std::optional<std::string> out_dir,
                std::ostream& out);

}  // namespace mec::cli
