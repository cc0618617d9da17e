#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mpslam/engine.hpp"
#include "mpslam/metrics.hpp"
#include "mpslam/synth.hpp"

namespace mpslam {

/// Scenario plus filter configuration, as stored in a scenario JSON file.
struct ScenarioFile {
    Scenario scenario;
    SlamConfig config;
};

/// Parse a scenario JSON document. Errors name the offending field.
ScenarioFile parse_scenario_json(const std::string& text);

/// Load a scenario file from disk. Throws std::runtime_error naming the path
/// when it cannot be read, std::invalid_argument on malformed content.
ScenarioFile load_scenario_file(const std::filesystem::path& path);

std::string scenario_to_json(const ScenarioFile& sf);

/// Apply one "dotted.key=value" override to a JSON document in text form.
std::string apply_override(const std::string& json_text, const std::string& key_value);

/// Measurement CSV: header step,dist_m,aod_rad,aoa_rad,amp; one row per
/// measurement. scans[s] holds the measurements of step s+1.
std::string measurements_to_csv(const std::vector<std::vector<Measurement>>& scans);
std::vector<std::vector<Measurement>> parse_measurements_csv(const std::string& text,
                                                             double u_de);
std::vector<std::vector<Measurement>> load_measurements_csv(const std::filesystem::path& path,
                                                            double u_de);

struct TraceRow {
    int step = 0;
    int run = 0;
    double est_x = 0, est_y = 0, est_vx = 0, est_vy = 0, est_orient = 0;
    double true_x = 0, true_y = 0, true_orient = 0;
};

std::string trace_to_csv(const std::vector<TraceRow>& rows);
std::vector<TraceRow> parse_trace_csv(const std::string& text);

struct MapRow {
    int step = 0;
    int run = 0;
    int feat_id = 0;
    double x = 0, y = 0, p_exist = 0, p_va = 0, p_ps = 0;
};

std::string map_to_csv(const std::vector<MapRow>& rows);
std::vector<MapRow> parse_map_csv(const std::string& text);

/// Write a file atomically (temp file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace mpslam
