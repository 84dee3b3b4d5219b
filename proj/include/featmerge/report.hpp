#pragma once

// JSON and CSV renderings of results, plus config parsing. These are the
// shapes returned through the C API and written by the command-line tool.

#include <string>

#include "featmerge/connectivity.hpp"
#include "featmerge/ifm.hpp"
#include "featmerge/matching.hpp"
#include "featmerge/toytrain.hpp"
#include "json.hpp"

namespace featmerge {

IfmConfig ifm_config_from_json(const nlohmann::json& j, IfmConfig base = {});
nlohmann::json to_json(const IfmConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json to_json(const TrainConfig& config);

nlohmann::json to_json(const MergeablePosition& pos);
nlohmann::json to_json(const MergeRecord& record);
nlohmann::json to_json(const ComplexityProfile& profile);
nlohmann::json to_json(const GridResult& grid);
nlohmann::json to_json(const InterpolationCurve& curve);
nlohmann::json to_json(const IterationTiming& timing, bool with_samples = false);
nlohmann::json describe(const Network& net);

/// Off-diagonal statistics plus the full matrix as rows.
nlohmann::json to_json(const DistanceMatrix& dist);

std::string distance_csv(const DistanceMatrix& dist);
std::string profile_csv(const ComplexityProfile& profile);
std::string grid_csv(const GridResult& grid);
std::string curve_csv(const InterpolationCurve& curve);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace featmerge
