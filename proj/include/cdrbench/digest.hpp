// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

namespace cdrbench::digest {

// SHA-256 hex digest of a byte string.
std::string sha256_hex(std::string_view data);

// SHA-256 hex digest of a file's contents. Throws std::runtime_error if the
// file cannot be read.
std::string sha256_file_hex(const std::string& path);

}  // namespace cdrbench::digest
