#pragma once

#include <string_view>
#include <unordered_set>

namespace tgnet {

inline constexpr std::string_view kStopwordListVersion = "tgnet-en-1";

// Fixed English function-word list used by the TitleRelated statistic.
const std::unordered_set<std::string_view>& default_stopwords();

bool is_stopword(std::string_view token);

}  // namespace tgnet
