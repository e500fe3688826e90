#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "synforge/ast.hpp"

namespace synforge {

// Bundled surface languages: a Python-like mini language and an IFTTT-style
// recipe language. Each comes with a renderer and its inverse parser.
enum class Language { minipy, flowdsl };

std::optional<Language> language_from_name(std::string_view name);
std::string_view language_name(Language lang);

// Deterministic surface code for a complete tree. Throws AstError on an
// incomplete tree or a node type foreign to the language.
std::string render(const AstNode& ast, Language lang);

// Parses surface code into a tree (rule ids unresolved). Throws DataError with
// a line/column position on malformed input.
AstNode parse_code(std::string_view code, Language lang);

// How the tokens of a variable terminal are split and joined. Identifiers and
// numbers split on camel case and join verbatim; string literals split on
// whitespace and join with single spaces.
std::vector<std::string> split_terminal_value(std::string_view value, std::string_view terminal_type);
std::string join_terminal_tokens(const std::vector<std::string>& tokens, std::string_view terminal_type);

// `_STR:<n>_` placeholder token, see canonicalize().
bool is_placeholder(std::string_view token);

}  // namespace synforge
