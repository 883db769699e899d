#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace flaute {

inline constexpr std::string_view kVersion = "0.1.0";

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

/// Hash of the canonical (sorted-key, compact) dump of a resolved config.
std::string config_hash(const nlohmann::json& config);

/// Command names in CLI order.
const std::vector<std::string>& command_names();

/// Every key a command understands, with its default. Paths without a
/// sensible default are null and must be supplied.
nlohmann::json default_config(std::string_view command);

/// defaults <- file <- overrides, rejecting unknown keys (InvalidArgument).
nlohmann::json resolve_config(std::string_view command, const nlohmann::json& file, const nlohmann::json& overrides);

/// Runs one command on a resolved config. Returns the provenance record, which
/// is also written next to the outputs (embedded for `report`). Warnings for
/// skipped optional products are appended to `warnings`.
nlohmann::json run_command(std::string_view command, const nlohmann::json& config,
                           std::vector<std::string>* warnings = nullptr);

nlohmann::json cmd_synth(const nlohmann::json& config, std::vector<std::string>& warnings);
nlohmann::json cmd_ingest(const nlohmann::json& config, std::vector<std::string>& warnings);
nlohmann::json cmd_cf(const nlohmann::json& config, std::vector<std::string>& warnings);
nlohmann::json cmd_detect(const nlohmann::json& config, std::vector<std::string>& warnings);
nlohmann::json cmd_biascorrect(const nlohmann::json& config, std::vector<std::string>& warnings);
nlohmann::json cmd_train(const nlohmann::json& config, std::vector<std::string>& warnings);
nlohmann::json cmd_downscale(const nlohmann::json& config, std::vector<std::string>& warnings);
nlohmann::json cmd_riskmap(const nlohmann::json& config, std::vector<std::string>& warnings);
nlohmann::json cmd_report(const nlohmann::json& config, std::vector<std::string>& warnings);

}  // namespace flaute
