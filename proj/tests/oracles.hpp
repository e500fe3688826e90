// Reference implementations used to cross-check the library in tests. Each is
// written from the definitions rather than by calling the library's version.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "synforge/ast.hpp"
#include "synforge/grammar.hpp"
#include "synforge/model.hpp"
#include "synforge/transition.hpp"

namespace oracle {

// BLEU-4: clipped n-gram precisions, geometric mean with equal weights,
// brevity penalty exp(1 - r/c) when c < r, (m+1)/(c+1) for a zero match count
// at n > 1. Returns 0 for an empty hypothesis or no unigram overlap.
double bleu4(const std::vector<std::string>& hyp, const std::vector<std::string>& ref);

// Line-wise comparison ignoring trailing whitespace and trailing blank lines.
bool same_code(const std::string& a, const std::string& b);

// Structural validity of a complete tree, checked against the production table:
// rule heads, field labels and types, op constructors, closed non-empty
// terminals. Returns a description of the first problem.
std::optional<std::string> tree_problem(const synforge::AstNode& n, const synforge::Grammar& g);

// Central finite differences over every scalar of every parameter; returns the
// largest |a - n| / max(|a|, |n|, 1e-6) and fills the per-group maxima.
double max_relative_error(synforge::Model& model, const std::vector<std::string>& source,
                          const std::vector<synforge::Action>& actions, double step,
                          std::vector<std::pair<std::string, double>>* per_group = nullptr);

// Toy grammar for exhaustive search: root -> a:X b:Y, X in {P, Q, wrap:Y},
// Y -> val:v with 1-2 tokens from {a, b, c}. Vocabulary {a, b}; input [a, c].
std::string toy_grammar_text();
// Every complete bound action sequence of the toy grammar (168 trees).
std::vector<std::vector<synforge::Action>> toy_derivations(const synforge::Grammar& g, const synforge::Vocab& v);

}  // namespace oracle
