#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "qcl/convergence.hpp"

namespace qcl {

inline constexpr int kSchemaVersion = 1;

json to_json(const SweepResult& r);
SweepResult sweep_from_json(const json& j);
json to_json(const EstimateReport& r);

// results.json carries {schema_version, checksum, result}; the checksum is
// FNV-1a over the serialized result so truncation and edits are caught.
void save_results(const std::filesystem::path& dir, const SweepResult& r);
// SchemaVersionMismatch for another version, CorruptFile for anything unreadable.
SweepResult load_results(const std::filesystem::path& file);

// pairings.csv: eps,t,probe_id,quantum,classical,a_norm,in_scope,remainder
void write_pairings_csv(const std::filesystem::path& file, const SweepResult& r);
// distances.csv: eps,t,weak_distance,norm,energy,boundary_mass
void write_distances_csv(const std::filesystem::path& file, const SweepResult& r);
// rates.csv: t,ok,slope,intercept,residual,reason
void write_rates_csv(const std::filesystem::path& file, const SweepResult& r);

// <dir>/<stem>.json plus <stem>_mass.csv and <stem>_tail.csv ladders.
void save_report(const std::filesystem::path& dir, const std::string& stem, const EstimateReport& r);

// Everything that varies between identical runs (wall time, date, command
// line) lives here and nowhere else.
void write_manifest(const std::filesystem::path& dir, const std::vector<std::string>& argv,
                    const std::string& config_hash, const json& timing);

// Writes results, CSVs and per-eps estimate reports of a sweep.
void save_sweep(const std::filesystem::path& dir, const SweepRun& run);

// ConfigInvalid when the stored config hash differs from cfg.hash().
void verify_config(const SweepResult& r, const ExperimentConfig& cfg);

}  // namespace qcl
