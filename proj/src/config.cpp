#include "sylcount/config.hpp"

#include <fstream>

#include "sylcount/error.hpp"

namespace sylcount {

namespace {

using nlohmann::json;

bool compatible(const json& slot, const json& value) {
  if (slot.is_null()) return value.is_null() || value.is_number();
  if (slot.is_number_float()) return value.is_number();
  if (slot.is_number_integer()) return value.is_number_integer();
  if (slot.is_number()) return value.is_number();
  return slot.type() == value.type() || (value.is_null() && !slot.is_object());
}

const char* type_name(const json& j) { return j.is_null() ? "null" : j.type_name(); }

void merge_at(json& base, const json& overlay, const std::string& prefix,
              const std::string& source) {
  if (!overlay.is_object())
    throw UsageError(source + ": expected an object at '" + (prefix.empty() ? "<root>" : prefix) +
                     "'");
  for (const auto& [key, value] : overlay.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw UsageError(source + ": unknown configuration key '" + path + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_at(slot, value, path, source);
    } else if (!compatible(slot, value)) {
      throw UsageError(source + ": key '" + path + "' expects " + type_name(slot) + ", got " +
                       type_name(value));
    } else if (slot.is_number_float() && value.is_number()) {
      slot = value.get<double>();
    } else {
      slot = value;
    }
  }
}

}  // namespace

void merge_config(json& base, const json& overlay, const std::string& source) {
  merge_at(base, overlay, "", source);
}

void merge_config_file(json& base, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open configuration file '" + path.string() + "'");
  json overlay;
  try {
    overlay = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("configuration file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  merge_config(base, overlay, path.string());
}

void apply_override(json& base, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw UsageError("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json overlay = value;
  std::size_t end = key.size();
  while (true) {
    if (end == 0) throw UsageError("override key '" + key + "' has an empty component");
    const auto dot = key.rfind('.', end - 1);
    const std::size_t begin = dot == std::string::npos ? 0 : dot + 1;
    const std::string part = key.substr(begin, end - begin);
    if (part.empty()) throw UsageError("override key '" + key + "' has an empty component");
    overlay = json{{part, overlay}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  merge_config(base, overlay, "--set " + key);
}

}  // namespace sylcount
