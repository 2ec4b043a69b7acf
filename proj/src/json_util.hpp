#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "pulsesense/error.hpp"

namespace pulsesense::detail {

/// Rejects keys of `block` outside `allowed`; `where` names the block in messages.
inline void require_known_keys(const nlohmann::json& block, std::initializer_list<std::string_view> allowed,
                               std::string_view where) {
  if (!block.is_object()) throw Error(ErrorCode::ConfigInvalid, std::string(where) + " must be a JSON object");
  for (const auto& item : block.items()) {
    bool known = false;
    for (auto key : allowed) known = known || item.key() == key;
    if (!known) throw Error(ErrorCode::ConfigUnknownKey, std::string(where) + "." + item.key());
  }
}

template <typename T>
T get_or(const nlohmann::json& block, std::string_view key, T fallback, std::string_view where) {
  const auto it = block.find(std::string(key));
  if (it == block.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::ConfigInvalid, std::string(where) + "." + std::string(key) + " has the wrong type");
  }
}

}  // namespace pulsesense::detail
