#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qcl/config.hpp"
#include "qcl/estimates.hpp"

namespace qcl {

inline constexpr const char* kVersion = "0.1.0";

// Resolved per-eps plan: grid from the grid rule, split-operator step and the
// number of steps between consecutive snapshots.
struct CellPlan {
  double eps = 0.0;
  Grid grid;
  double p_max = 0.0;
  double dt = 0.0;
  std::vector<long> steps;  // steps[k] leads from snapshot k-1 (or t = 0) to snapshot k
  std::size_t memory_bytes = 0;
};

// Largest |p_i| + 3 sigma_p(eps) along the DeltaLimit path on [0, T].
double reachable_momentum(const ExperimentConfig& cfg, double eps);
CellPlan plan_cell(const ExperimentConfig& cfg, double eps);
std::vector<CellPlan> plan_sweep(const ExperimentConfig& cfg);
std::string describe_plan(const CellPlan& plan);

// Phase-space points of the DeltaLimit path at the given times.
void delta_path(const ExperimentConfig& cfg, const std::vector<double>& times,
                std::vector<std::vector<double>>& xs, std::vector<std::vector<double>>& ps);

struct Probe {
  TestFunction phi;
  double a_norm = 0.0;
  bool in_scope = true;
};
// Lattice, trajectory and explicit probes, in that order, with scope flags.
std::vector<Probe> build_dictionary(const ExperimentConfig& cfg);

struct QuantumRun {
  CellPlan plan;
  std::vector<WaveFunction> snapshots;
  bool complete = true;
  std::string abort_kind, abort_reason;
};
// Propagates the packet through all snapshot times; stops at the first
// BoundaryContamination. Writes fields under field_dir when given.
QuantumRun run_quantum(const ExperimentConfig& cfg, double eps,
                       const std::optional<std::filesystem::path>& field_dir = std::nullopt);

Ensemble classical_initial(const ExperimentConfig& cfg, double eps);
// Snapshots of the classical reference; SingularApproach events are recorded.
std::vector<Ensemble> run_classical(const ExperimentConfig& cfg, double eps);

struct SnapshotCell {
  double t = 0.0;
  double norm = 0.0, energy = 0.0, boundary_mass = 0.0;
  double weak_distance = 0.0;
  std::vector<double> quantum, classical;
  std::vector<double> remainder;  // empty unless requested; 0 for out-of-scope probes
  bool operator==(const SnapshotCell&) const = default;
};

struct EpsCell {
  double eps = 0.0;
  std::vector<int> points;
  double dt = 0.0;
  bool complete = true;
  std::string abort_kind, abort_reason;
  double aborted_weight = 0.0;
  std::vector<SnapshotCell> snapshots;
  std::string estimates_file;
  bool estimates_pass = true;
  bool operator==(const EpsCell&) const = default;
};

struct ProbeRecord {
  std::string id;
  double a_norm = 0.0;
  bool in_scope = true;
  json spec;
  bool operator==(const ProbeRecord&) const = default;
};

struct RateFit {
  double t = 0.0;
  bool ok = false;
  double slope = 0.0, intercept = 0.0, residual = 0.0;
  std::vector<double> used_eps, excluded_eps;
  std::string reason;
  bool operator==(const RateFit&) const = default;
};

struct SweepResult {
  std::string name;
  std::string config_hash;
  std::string version = kVersion;
  json config;
  std::vector<ProbeRecord> probes;
  std::vector<double> times;
  std::vector<EpsCell> cells;
  std::vector<RateFit> rates;
  bool partial = false;
  bool operator==(const SweepResult&) const = default;
};

struct SweepRun {
  SweepResult result;
  std::vector<std::optional<EstimateReport>> reports;  // per eps
};

// max over in-scope probes of |quantum - classical| / ||phi||_A.
double weak_distance(const std::vector<double>& quantum, const std::vector<double>& classical,
                     const std::vector<Probe>& dictionary);

// Least squares on (log eps, log D). DegenerateFit if fewer than three points,
// or if some distance is <= 1e-9 (the excluded eps are listed in the message).
RateFit rate_fit(const std::vector<double>& eps, const std::vector<double>& distances);

// Runs every eps cell (in parallel over cells when threads > 1). Per-cell
// failures are recorded and the sweep continues.
SweepRun run_sweep(const ExperimentConfig& cfg, int threads = 1);

}  // namespace qcl
