#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synforge/ast.hpp"

namespace synforge {

enum class NodeKind { nonterminal, variable, op };

struct NodeType {
  std::string name;
  NodeKind kind = NodeKind::nonterminal;
};

struct Field {
  std::string label;
  int type = -1;

  bool operator==(const Field&) const = default;
};

// A production `head -> fields...`. Zero-field productions may carry an
// operation-terminal constructor (`op`), which is how closed sets such as
// arithmetic operators are chosen by ApplyRule. A closure production collapses
// a chain of unary productions into one action; its single field is the last
// chain member's field.
struct Production {
  int id = -1;
  int head = -1;
  std::vector<Field> fields;
  int op = -1;
  bool is_closure = false;
  std::vector<int> closure_chain;
};

// Immutable once built; safe to share between decoders and trainers.
class Grammar {
 public:
  int add_type(std::string name, NodeKind kind);
  int add_production(int head, std::vector<Field> fields, int op = -1);
  // Appends a closure over `chain` (ids of unary productions, length >= 2).
  int add_closure(std::vector<int> chain);
  void set_root(int type);

  const std::vector<NodeType>& types() const { return types_; }
  const std::vector<Production>& productions() const { return productions_; }
  const NodeType& type(int id) const { return types_.at(id); }
  const Production& production(int id) const { return productions_.at(id); }
  std::span<const int> productions_for(int head) const;
  int root() const { return root_; }

  std::optional<int> find_type(std::string_view name) const;
  int type_id(std::string_view name) const;
  bool is_variable(int type) const { return types_.at(type).kind == NodeKind::variable; }

  // Non-closure production matching head/op/fields exactly.
  std::optional<int> find_production(int head, int op, std::span<const Field> fields) const;
  std::optional<int> find_closure(std::span<const int> chain) const;

  std::size_t closure_count() const;
  std::size_t base_production_count() const { return productions_.size() - closure_count(); }

  // Canonical grammar-file text; load_grammar(to_text()) reproduces the grammar.
  std::string to_text() const;
  std::string hash() const;

 private:
  std::vector<NodeType> types_;
  std::vector<Production> productions_;
  std::map<std::string, int, std::less<>> type_index_;
  std::vector<std::vector<int>> by_head_;
  int root_ = -1;
};

// Grammar file: `type <name> [terminal|variable|op]`, `rule <Head> -> <label>:<Type> ...`,
// `rule <Head> -> <OpType>` for constructor leaves, `closure <id> <id> ...`,
// and an optional `root <name>` (defaults to the first declared type).
Grammar load_grammar(std::string_view text);
Grammar load_grammar_file(const std::string& path);

// Derives the production set from a corpus, deduplicated in first-seen order.
// Node kinds follow usage: token-bearing nodes are variable terminals, `op`
// tags become operation-terminal types.
Grammar induce_grammar(std::span<const AstNode> asts, std::string_view root_type);

// Fills in the rule id of every nonterminal. Throws GrammarError when a node
// has no matching production.
AstNode resolve_rules(const AstNode& ast, const Grammar& g);

// Describes the first AstNode invariant the tree violates under g, if any.
// With `require_complete`, unexpanded nonterminals and unclosed terminals count.
std::optional<std::string> ast_violation(const AstNode& ast, const Grammar& g,
                                         bool require_complete = true);

}  // namespace synforge
