#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "synforge/ast.hpp"
#include "synforge/grammar.hpp"

namespace synforge {

// Reserved rows of the terminal vocabulary (W_G).
inline constexpr int kCloseTokenId = 0;
inline constexpr int kUnknownTokenId = 1;
inline constexpr int kFirstWordId = 2;
inline constexpr const char* kCloseToken = "</n>";
inline constexpr const char* kUnknownToken = "<unk>";

// Hard cap on tokens per variable terminal while decoding.
inline constexpr int kMaxTerminalTokens = 32;

enum class ActionKind { rule, vocab, copy, close };

struct Action {
  ActionKind kind = ActionKind::rule;
  // Production id, terminal word id, or input position. -1 marks a GenToken
  // produced by the grammar-only oracle before it is bound to a vocabulary.
  int arg = -1;
  // Surface token appended by vocab/copy actions.
  std::string token;
  // Every input position holding `token`; gold actions sum over these routes.
  std::vector<int> copy_positions;

  static Action apply_rule(int production) { return {ActionKind::rule, production, {}, {}}; }
  static Action gen_vocab(int word, std::string token) {
    return {ActionKind::vocab, word, std::move(token), {}};
  }
  static Action gen_copy(int position, std::string token) {
    return {ActionKind::copy, position, std::move(token), {}};
  }
  static Action close() { return {ActionKind::close, kCloseTokenId, {}, {}}; }

  bool is_gen_token() const { return kind != ActionKind::rule; }

  friend bool operator==(const Action& a, const Action& b) {
    return a.kind == b.kind && a.arg == b.arg && a.token == b.token;
  }
};

std::string_view kind_name(ActionKind kind);

// Partial AST plus the frontier cursor and per-step parent bookkeeping.
// Steps are numbered from 1; the root exists at step 0. Copies are independent,
// so beam search can branch a state by value.
class DerivationState {
 public:
  struct Node {
    int type = -1;
    std::string label;
    int parent = -1;
    std::vector<int> children;
    std::vector<std::string> tokens;
    int rule = -1;
    bool complete = false;
    int created_at = 0;
  };

  explicit DerivationState(const Grammar& g);

  bool is_complete() const { return pending_.empty(); }
  // Node index of n_{f_t}: first unexpanded nonterminal or unclosed terminal in
  // depth-first, left-to-right order.
  std::optional<int> frontier() const;
  int frontier_type() const;
  // Step that created the frontier node, i.e. p_{t+1} for the next action.
  int frontier_parent_step() const;
  std::size_t frontier_token_count() const;

  int t() const { return static_cast<int>(history_.size()); }
  // p_t for an applied action t in [1, t()].
  int parent_step(int t) const { return parent_steps_.at(static_cast<std::size_t>(t - 1)); }
  const std::vector<int>& parent_steps() const { return parent_steps_; }
  const std::vector<Action>& history() const { return history_; }
  const std::vector<Node>& nodes() const { return nodes_; }

  // Throws TransitionError if the action is not applicable at the frontier.
  void apply(const Action& action, const Grammar& g);

  AstNode to_ast(const Grammar& g) const;

 private:
  int add_node(int type, std::string label, int parent, int step);
  void expand(int node, int production, const Grammar& g, int step);

  std::vector<Node> nodes_;
  std::vector<int> pending_;  // top is the frontier
  std::vector<int> parent_steps_;
  std::vector<Action> history_;
};

DerivationState initial_state(const Grammar& g);

// Legal next actions. `vocab_size` counts every W_G row (including the reserved
// close and unknown rows); GenVocab covers ids >= kFirstWordId. GenClose is only
// legal on a non-empty terminal, and is the only choice once a terminal holds
// `max_terminal_tokens` tokens.
std::vector<Action> legal_actions(const DerivationState& state, const Grammar& g, int vocab_size,
                                  int input_length, int max_terminal_tokens = kMaxTerminalTokens);

DerivationState apply_action(const DerivationState& state, const Action& action, const Grammar& g);

// Pre-order action sequence deriving `ast`. Closure rules are preferred when
// they match (longest first). GenToken steps come out unbound (arg = -1).
std::vector<Action> oracle_actions(const AstNode& ast, const Grammar& g);

// Applies `actions` from the initial state; throws if the result is incomplete.
AstNode replay(std::span<const Action> actions, const Grammar& g);

// Whitespace and lower->upper camel-case boundaries.
std::vector<std::string> tokenize_terminal(std::string_view value);

// JSON-lines records {"t","kind","arg","parent"} (+ "token" for GenToken).
nlohmann::json action_record(const Action& a, int t, int parent);
std::string actions_to_jsonl(std::span<const Action> actions, std::span<const int> parents);

}  // namespace synforge
