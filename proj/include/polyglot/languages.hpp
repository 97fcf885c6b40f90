#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace polyglot {

/// True for a registered lowercase ISO 639-1 code ("en", "ar", ...).
bool is_known_language(std::string_view code);

/// English display name used in prompt templates ("German" for "de").
std::optional<std::string_view> language_name(std::string_view code);

/// Like language_name but throws ValidationError for unknown codes.
std::string_view require_language_name(std::string_view code);

}  // namespace polyglot
