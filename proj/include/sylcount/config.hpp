#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

namespace sylcount {

// Layered configuration: every overlay may only name keys that already exist
// in the base. Objects merge recursively; other values are replaced after a
// type check (null slots accept numbers; integers are accepted for reals).
// Throws UsageError naming the offending key path.
void merge_config(nlohmann::json& base, const nlohmann::json& overlay,
                  const std::string& source);

void merge_config_file(nlohmann::json& base, const std::filesystem::path& path);

// "a.b.c=value". The value is parsed as JSON and falls back to a plain
// string when it does not parse.
void apply_override(nlohmann::json& base, const std::string& assignment);

}  // namespace sylcount
