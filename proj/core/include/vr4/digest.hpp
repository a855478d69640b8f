#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace vr4 {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

// SHA-256 of the compact dump; nlohmann::json keeps object keys sorted, so
// equal documents hash equally regardless of insertion order.
std::string json_digest(const nlohmann::json& j);

} // namespace vr4
