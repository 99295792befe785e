#pragma once

#include "votemarl/model.hpp"

#include <filesystem>
#include <json.hpp>

namespace votemarl {

/**
 * Model file layout:
 *   {"n_states", "n_actions", "n_agents",
 *    "transitions": [i][a][j], "rewards": [m][i][a][j]}
 * Parsing runs the full AmdpModel validation; any violation is a ValidationError.
 */
nlohmann::json model_to_json(const AmdpModel& model);
AmdpModel model_from_json(const nlohmann::json& doc);

AmdpModel load_model(const std::filesystem::path& path);
void save_model(const AmdpModel& model, const std::filesystem::path& path);

nlohmann::json policy_to_json(const StochasticPolicy& pi);
StochasticPolicy policy_from_json(const nlohmann::json& doc);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const nlohmann::json& doc, const std::filesystem::path& path);

} // namespace votemarl
