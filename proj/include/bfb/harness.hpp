#pragma once

#include "bfb/sim.hpp"

#include <optional>
#include <string>

namespace bfb {

// Exit-code contract: 0 success, 2 config error, 3 data error, 4 numeric.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EnetConfig {
  int alpha_count{11};
  int lambda_count{100};
  int permutations{1000};
};

struct StreamConfig {
  std::string host{"127.0.0.1"};
  int port{7801};
};

struct ExperimentConfig {
  std::uint64_t seed{1};
  GroupCounts groups{};
  int sessions{2};
  SimParams params{};
  EnetConfig enet{};
  std::optional<PlantedSpec> planted{};
  StreamConfig stream{};
  std::string output_dir{"out"};
};

// Strict JSON config: unknown keys are rejected, parse errors carry the
// file and line.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& source_name);
std::string config_hash(const ExperimentConfig& config);  // fnv1a64 of canonical JSON

SimConfig to_sim_config(const ExperimentConfig& config, int jobs);

// Writes windows.csv, metrics.csv, subjects.csv and manifest.json.
void simulate_to_dir(const ExperimentConfig& config, const std::string& out_dir, int jobs);

// Reads a simulated dataset and writes model reports, the FDR-corrected
// test table and plot-data files into out_dir. Never mutates the dataset.
void analyze_dir(const std::string& data_dir, const std::string& out_dir, int jobs);

// 1001-row table: x, F_neg(x), F_pos(x), identity.
std::string bias_plot_table(double k);

}  // namespace bfb
