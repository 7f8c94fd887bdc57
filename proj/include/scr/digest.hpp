#pragma once

#include <string>
#include <string_view>

namespace scr {

// SHA-256 hex digest. Used for augmentation cache keys, run-manifest input
// digests and byte-identity checks in tests.
std::string sha256_hex(std::string_view data);

// Digest of a whole file. Throws std::runtime_error when the file cannot be
// read.
std::string sha256_hex_file(const std::string& path);

}  // namespace scr
