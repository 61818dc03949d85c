#pragma once

#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "fleet/admm.hpp"
#include "fleet/datagen.hpp"
#include "fleet/tuning.hpp"
#include "fleet/types.hpp"

namespace fleet {

using Json = nlohmann::json;

/// FNV-1a 64 over the canonical JSON dump, hex encoded.
std::string config_hash(const GenConfig& config);

Json gen_config_to_json(const GenConfig& config);
GenConfig gen_config_from_json(const Json& j);
GenConfig load_gen_config(const std::string& path);

/// Fleet container file: "FLTD0001" magic, little-endian u64 header length,
/// JSON header (dims, per-system omegas, seed, config hash, truth), then per
/// system the row-major Omega x m regressor block and the Omega measurements
/// as little-endian f64. Round-trips bit exactly.
void write_fleet(const FleetDataset& fleet, const std::string& path,
                 const GenConfig* config = nullptr);
FleetDataset read_fleet(const std::string& path);

/// One CSV per system (system_<tag>.csv: y, phi_1..phi_m).
void export_fleet_csv(const FleetDataset& fleet, const std::string& directory);

Json solution_to_json(const Solution& sol);
void write_solution_report(const Solution& sol, const std::string& path);

/// CSV of (system, deviation) rows for bar plots.
void write_deviation_csv(const Solution& sol, const std::string& path);

void write_tuning_table_csv(const std::vector<BicRow>& table, const std::string& path);
void write_admm_trace_csv(const std::vector<AdmmTraceRow>& trace, const std::string& path);

/// Minimal hand-rolled SVG bar chart of per-system deviations.
void write_deviation_svg(const Solution& sol, const std::string& title, const std::string& path);

std::string read_text_file(const std::string& path);

}  // namespace fleet
