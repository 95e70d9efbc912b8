#pragma once

#include "ratelab/error_lab.hpp"

#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ratelab {

// exit code 2
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    std::string name;
    std::string experiment;
    Family family = Family::wave;
    std::string scheme = "backward_euler";
    double scheme_b = 1.0;
    double gamma = 0.25;
    double beta = 0.7;
    int J_ref = 1024;
    double T = 0.75;  // T = 1 is resonant for every wave mode
    int k_lo = 4, k_hi = 10;
    int h_lo = 2, h_hi = 6;
    int k_pinned = 20;
    int h_pinned = 8;
    int k_offset = 2;
    std::string sweep = "k";
    std::string functional = "sine";
    double psi_scale = 1.0;  // psi_j = psi_scale on the selected component
    std::string component = "first_component";
    std::string x0 = "auto";  // zero, stationary_sine, smooth; auto picks per experiment
    double alpha = 1.0;
    std::string sample_mode = "sup";
    long n_paths = 0;
    int mc_levels = 0;  // MC closure on the coarsest levels only (0 = all)
    std::uint64_t seed = 20240607;
    std::string output;
    std::string fit = "plain";
    double tolerance = -1;
    double expected = -1;
    int threads = 0;
    std::string pass_on = "rate";  // or "mc_closure"
};

// the documented key set; anything else is rejected
const std::vector<std::string>& config_keys();

ExperimentConfig parse_config(const nlohmann::json& j);

// sup of the admissible beta range for the power family q_j = lambda_j^-gamma
double beta_star(Family f, double gamma);

// throws ConfigError citing the trace sum when beta is not admissible
void check_admissible(const ExperimentConfig& cfg);

struct CsvRow {
    std::string experiment, family, scheme;
    double gamma = 0, beta = 0;
    int J = 0;
    double h = 0, k = 0;
    long n_paths = 0;
    std::uint64_t seed = 0;
    std::string error_kind;
    double error_value = 0, std_error = 0;
};

struct ExperimentResult {
    std::vector<CsvRow> rows;
    nlohmann::json summary;
    bool pass = false;
};

std::string theorem_for(const ExperimentConfig& cfg);
std::vector<std::string> experiment_kinds();

ExperimentResult run_experiment(const ExperimentConfig& cfg);

std::string format_double(double v);
std::string csv_text(const std::vector<CsvRow>& rows);
// temp file + rename
void write_atomic(const std::string& path, const std::string& content);

// run a config file and write <output>.csv / <output>.json; returns exit code
int run_config_file(const std::string& path, std::string* message = nullptr);

// the default acceptance suite
std::vector<nlohmann::json> verify_all_configs(std::uint64_t seed);

}  // namespace ratelab
