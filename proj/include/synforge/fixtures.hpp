#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "synforge/ast.hpp"
#include "synforge/data.hpp"
#include "synforge/grammar.hpp"

namespace synforge {

// Templated description/code pairs in the MiniPy language.
std::vector<RawExample> generate_minipy(std::uint64_t seed, std::size_t n);

// Recipes over the channels and functions declared in a FlowDSL grammar.
std::vector<RawExample> generate_flowdsl(const Grammar& flow, std::uint64_t seed, std::size_t n);

// Every target uses an identifier that occurs exactly once in the whole set,
// always spelled out in the description.
std::vector<RawExample> generate_oov_copy(std::uint64_t seed, std::size_t n);

// A grammar with one unary chain of length three under the root, plus trees
// that each use that chain exactly once.
std::string chain_grammar_text();
std::vector<AstNode> generate_chain_trees(const Grammar& g, std::uint64_t seed, std::size_t n);

// First `n` examples of `pool` (in order) such that every gold token of each is
// producible under the vocabulary built from the chosen subset itself.
std::vector<RawExample> select_producible(const std::vector<RawExample>& pool, const Grammar& g,
                                          Language lang, std::size_t n, int d_source, int d_terminal);

// Writes the whole fixture tree under `dir` (which must already hold the
// bundled grammar files) and returns the manifest that was written.
nlohmann::ordered_json write_fixtures(const std::filesystem::path& dir, std::uint64_t seed);

}  // namespace synforge
