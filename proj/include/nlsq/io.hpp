#pragma once

#include <string>
#include <string_view>

namespace nlsq {

// write to a sibling temp file, then rename over the target
void atomic_write(const std::string& path, std::string_view bytes);

std::string sha256_hex(std::string_view bytes);

}  // namespace nlsq
