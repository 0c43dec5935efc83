#pragma once

#include "chaosflow/chaostats.hpp"

#include <filesystem>
#include <string>

namespace chaosflow {

// Versioned JSON schema; doubles use shortest-round-trip formatting so a
// save/load cycle preserves every value bit-exactly.
std::string report_to_json(const ChaosReport& report);
ChaosReport report_from_json(const std::string& text);

void save_report(const ChaosReport& report, const std::filesystem::path& path);
ChaosReport load_report(const std::filesystem::path& path);

std::string comparison_to_json(const ComparisonTable& table);

// Plot-ready CSV diagnostics: acf_<tag>.csv, hist_<tag>.csv,
// corrdim_<tag>.csv, lyap_<tag>.csv, lambda_<tag>.csv.
void write_report_csvs(const ChaosReport& report, const std::filesystem::path& dir,
                       const std::string& tag);

} // namespace chaosflow
