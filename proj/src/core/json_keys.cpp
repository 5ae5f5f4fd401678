#include "dr2s/core/json_keys.hpp"

#include <algorithm>

#include "dr2s/core/error.hpp"

namespace dr2s {

void require_known_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                        const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw ConfigError(what + ": unknown key '" + k + "'");
    }
  }
}

}  // namespace dr2s
