#pragma once

#include <span>
#include <vector>

#include "synforge/ast.hpp"
#include "synforge/grammar.hpp"
#include "synforge/transition.hpp"

namespace synforge {

// Adds a closure production for every maximal chain of >= 2 unary productions
// that occurs at least `k` times in `corpus` (oracle action sequences, closure
// actions are expanded first). Existing productions are kept; ids of the new
// closures follow first occurrence in the corpus.
Grammar unary_closure(const Grammar& g, std::span<const std::vector<Action>> corpus, int k);

// Maximal unary chains of one action sequence, as production-id lists.
std::vector<std::vector<int>> unary_chains(const Grammar& g, std::span<const Action> actions);

struct GrammarStats {
  std::size_t productions = 0;
  std::size_t node_types = 0;
  std::size_t terminal_vocab = 0;
  std::size_t examples = 0;
  double avg_actions = 0.0;
  double avg_nodes = 0.0;
};

// Table-style statistics; every tree must oracle under g.
GrammarStats grammar_stats(const Grammar& g, std::span<const AstNode> corpus);

}  // namespace synforge
