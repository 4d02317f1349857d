#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace fjm {

/// Default run configuration; its keys are the only keys a config file may
/// use.
nlohmann::json default_config();

/// Merges a config file object into the defaults. Throws Usage on unknown
/// keys or mistyped values.
nlohmann::json merge_config(const nlohmann::json& base, const nlohmann::json& overrides);

/// Hash of the settings that determine results (threads and out excluded).
std::string config_hash(const nlohmann::json& config);

/// Gamma mask for a named structure: full, shared-only, specific-only,
/// covariates-only.
std::vector<int> gamma_mask_by_name(const std::string& name, int P, int L0, int L1, int J);

/// Entry point of the `fjm` executable; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace fjm
