#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <fmt/core.h>
#include <json.hpp>

#include "saelab/errors.hpp"

namespace saelab::detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                                std::string_view where) {
    if (!j.is_object()) throw ConfigError(fmt::format("{}: expected a JSON object", where));
    for (const auto& item : j.items()) {
        bool known = false;
        for (auto a : allowed) known = known || item.key() == a;
        if (!known) throw ConfigError(fmt::format("{}: unknown key '{}'", where, item.key()));
    }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, std::string_view where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(fmt::format("{}.{}: wrong type ({})", where, key, j.at(key).dump()));
    }
}

}  // namespace saelab::detail
