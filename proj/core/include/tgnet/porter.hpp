#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tgnet {

// Porter (1980) suffix stripping, steps 1a to 5b. Tokens that are not purely
// lowercase a-z, and words of one or two letters, come back unchanged.
std::string porter_stem(std::string_view word);

std::vector<std::string> stem_tokens(std::span<const std::string> tokens);

}  // namespace tgnet
