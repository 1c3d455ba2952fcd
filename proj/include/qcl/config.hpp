#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcl/classical.hpp"
#include "qcl/potential.hpp"
#include "qcl/quantum.hpp"
#include "qcl/wigner.hpp"

namespace qcl {

using json = nlohmann::json;

// Resolution as a function of eps: the smallest power of two per axis with
// h <= eps pi / (3 p_max), never below min_points. A fixed point count
// overrides the rule.
struct GridRule {
  std::vector<double> extent;  // box [-L/2, L/2) per axis
  int min_points = 32;
  std::optional<int> points;
  std::optional<double> p_max;
  std::vector<double> stagger;  // empty: layout default

  Grid grid_for(int dim, double eps, double p_max_auto) const;
};

struct LatticeRule {
  int counts = 3;
  // Empty vectors are filled from the classical trajectory's bounding box.
  std::vector<double> x_center, x_half, p_center, p_half;
};

struct DictionaryRule {
  std::optional<LatticeRule> lattice;
  int trajectory_count = 0;  // probes at equally spaced times along the DeltaLimit path
  std::vector<double> sx, sp;  // empty: packet spreads at the largest eps
  std::vector<TestFunction> probes;  // explicit extra probes
  bool exclude_nonsmooth = true;

  bool empty() const { return !lattice && trajectory_count == 0 && probes.empty(); }
};

struct ClassicalRule {
  SamplingMode mode = SamplingMode::kDeltaLimit;
  int n = 1;
  std::uint64_t seed = 1;
  double dt = 1e-3;
  double eta = 0.05;
};

struct ExperimentConfig {
  std::string name = "experiment";
  PotentialSpec potential;
  PacketSpec packet;
  std::vector<double> eps;
  double final_time = 0.0;
  std::vector<double> snapshots;
  double dt_coefficient = kDefaultTimestepCoefficient;
  GridRule grid;
  DictionaryRule dictionary;
  ClassicalRule classical;
  std::vector<double> deltas, radii;
  bool remainder = false;
  double boundary_threshold = 1e-6;
  std::filesystem::path output;
  bool write_fields = false;
  int threads = 1;
  std::uint64_t seed = 1;
  json extras = json::object();

  // Canonical form of the input (defaults not expanded); hashed for provenance.
  json source;

  int dim() const { return potential.dim(); }
  std::string hash() const;
};

// Throws ConfigError naming the offending key path.
ExperimentConfig parse_config(const json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
// Applies command-line overrides to the parsed config and its source.
void override_seed(ExperimentConfig& cfg, std::uint64_t seed);

// A sweep additionally needs a non-empty dictionary.
void require_sweepable(const ExperimentConfig& cfg);

json potential_to_json(const PotentialSpec& spec);
PotentialSpec potential_from_json(const json& j, const std::string& path = "potential");
json packet_to_json(const PacketSpec& spec);
json probe_to_json(const TestFunction& phi);
std::uint64_t potential_hash(const PotentialSpec& spec);

std::string hex64(std::uint64_t v);

}  // namespace qcl
