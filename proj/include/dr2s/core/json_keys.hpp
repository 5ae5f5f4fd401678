#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace dr2s {

/// ConfigError naming the first key of `j` outside `allowed`, prefixed by
/// `what`. Also rejects a non-object.
void require_known_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                        const std::string& what);

}  // namespace dr2s
