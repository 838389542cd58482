#pragma once

#include <string>

#include "isacxt/model.hpp"

namespace isacxt::scenario_io {

using model::Scenario;

/// Parses a scenario file (JSON, nested sections). Unknown keys anywhere in
/// the document are errors. Angles are given in degrees and converted.
Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& json_text);

std::string scenario_to_json(const Scenario& sc);

/// Regenerates channels and the SINR target table from the scenario's own
/// user model and seed (used after sweep edits to geometry or user count).
void rebuild_channels(Scenario& sc);

/// Re-solves sigma_alpha^2 so the scenario hits the requested sensing SNR.
void set_sensing_snr_db(Scenario& sc, double snr_db);

void set_uniform_sinr_target_db(Scenario& sc, double sinr_db);

/// Desk-scale default configuration: 2x2 transmit, 4x4 receive, N = L = 16,
/// K = 2, grid (3, 2, 2), sensing SNR 30 dB.
Scenario default_desk_scenario(std::uint64_t seed = 42);

/// Full-scale configuration (smoke runs only).
Scenario default_full_scenario(std::uint64_t seed = 42);

}  // namespace isacxt::scenario_io
