#pragma once

#include "coda/cli/config.hpp"

#include <nlohmann/json.hpp>
#include <set>
#include <string>
#include <vector>

namespace coda::cli {

inline constexpr int kSchemaVersion = 1;

/// Stage names in execution order.
const std::vector<std::string>& pipeline_stages();

/// Run the requested stages plus their dependencies, writing per-stage CSV
/// (and SVG when enabled) under config.output_dir and a consolidated
/// report.json. A stage failure writes error.json, keeps earlier outputs,
/// and rethrows the stage's exception.
nlohmann::ordered_json run_pipeline(const AnalysisConfig& config,
                                    const std::set<std::string>& stages);

} // namespace coda::cli
