#ifndef ECOTRAJ_IO_HPP
#define ECOTRAJ_IO_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ecotraj/inference.hpp"
#include "ecotraj/prediction.hpp"
#include "ecotraj/trajectory.hpp"

namespace ecotraj {

inline constexpr const char* kToolVersion = "0.1.0";

// Flat key-value configuration, `section.key = value` per line, `#`
// comments. Typed getters throw config errors naming the key.
class Config {
 public:
  Config() = default;
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

// FNV-1a digest of the canonical "key=value\n" serialization.
std::string config_hash(const Config& config);
// FNV-1a digest of a file's bytes, hex-encoded.
std::string file_digest(const std::string& path);

// Per-column standardization recorded at ingestion (non-intercept columns).
struct Standardization {
  std::vector<std::string> columns;
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;

  CovariateTransform as_transform() const {
    return mean.size() ? CovariateTransform{mean, sd} : CovariateTransform{};
  }
};

// A loaded, validated dataset: ordered category labels, the assembled
// design (intercepts added, covariates standardized), observations as
// 1-based state indices, and the raw tables for lossless round-trips.
struct Dataset {
  int schema_version = 1;
  std::vector<std::string> categories;
  StudyDesign design;
  std::vector<StateObservation> observations;
  Standardization landscape_transform;
  Standardization climate_transform;

  // Raw tables as read (or as simulated), before intercept/standardization.
  std::vector<std::string> landscape_columns;  // without plot/subplot ids
  Eigen::MatrixXd landscape_raw;               // one row per (plot[,subplot]) as stored
  bool landscape_plot_level = false;
  // Named column transforms applied at ingestion, e.g. {"aspect", "beers"}.
  std::map<std::string, std::string> landscape_column_transforms;
  std::vector<std::string> climate_columns;
  std::vector<int> climate_plot_ids, climate_years;
  Eigen::MatrixXd climate_raw;
  bool covariates_standardized_on_disk = false;
  int lattice_rings = -1;                       // -1: explicit adjacency
  std::vector<std::pair<int, int>> adjacency_edges;

  int n_states() const { return static_cast<int>(categories.size()); }
  int state_index(const std::string& label) const;  // 1-based, data error if unknown

  // Start-year observations ordered by site index, for conditional prediction.
  std::vector<int> start_states_by_site() const;
};

// Load from a dataset.json path or a directory containing one.
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& dataset, const std::string& out_dir);

// Beers' transform of an aspect azimuth in degrees, cos(45 - aspect) + 1.
double beers_aspect(double aspect_degrees);

// Build a Dataset around a simulated design + observations (category
// labels supplied or generated; covariates marked as already standardized).
Dataset dataset_from_simulation(StudyDesign design, std::vector<StateObservation> observations,
                                std::vector<std::string> categories);

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string command;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::map<std::string, std::string> input_digests;
  std::map<std::string, long long> dimensions;
  std::map<std::string, double> timings_ms;
};

void write_manifest(const RunManifest& manifest, const std::string& path);
RunManifest read_manifest(const std::string& path);

// Posterior sample artifacts: params CSV (one row per retained draw),
// latent-summary CSV, and the manifest with dimensions.
void write_samples_csv(const PosteriorSamples& samples, const std::string& path);
void write_latent_csv(const PosteriorSamples& samples, const StudyDesign& design,
                      const std::string& path);
PosteriorSamples read_samples(const std::string& samples_csv, const std::string& latent_csv,
                              const RunManifest& manifest);

void write_truth_json(const TrajectoryParams& params, const std::string& path);
TrajectoryParams read_truth_json(const std::string& path);

// Transition-matrix bundle: square CSV, long-format CSV for plotting, and
// a JSON echo with intervals, denominators and the scenario description.
void write_transition_csv(const TransitionMatrix& tm, const std::vector<std::string>& labels,
                          const std::string& path);
void write_transition_long_csv(const TransitionMatrix& tm, const std::vector<std::string>& labels,
                               const std::string& path);
void write_transition_json(const PredictiveResult& result, const std::vector<std::string>& labels,
                           const ClimateScenario* scenario, const std::string& path);

void write_diagnostics_csv(const std::vector<ParamSummary>& summaries, const std::string& path);

// Parse "a b; c d"-style matrix literals (rows ';', entries ',' or space).
Eigen::MatrixXd parse_matrix(const std::string& text);

// Scenario from a config file (scenario.* keys, optional per-year path CSV).
ClimateScenario scenario_from_config(const Config& config, const std::string& base_dir);

}  // namespace ecotraj

#endif  // ECOTRAJ_IO_HPP
