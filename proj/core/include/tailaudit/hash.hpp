#pragma once

#include <string>
#include <string_view>

namespace tailaudit {

/// SHA-256 hex digest; used for content-addressed config hashes.
std::string sha256_hex(std::string_view data);

}  // namespace tailaudit
