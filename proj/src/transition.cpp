#include "synforge/transition.hpp"

#include <cctype>
#include <sstream>

#include "synforge/error.hpp"

namespace synforge {

std::string_view kind_name(ActionKind kind) {
  switch (kind) {
    case ActionKind::rule: return "rule";
    case ActionKind::vocab: return "vocab";
    case ActionKind::copy: return "copy";
    case ActionKind::close: return "close";
  }
  return "?";
}

DerivationState::DerivationState(const Grammar& g) {
  add_node(g.root(), "", -1, 0);
  pending_.push_back(0);
}

int DerivationState::add_node(int type, std::string label, int parent, int step) {
  Node n;
  n.type = type;
  n.label = std::move(label);
  n.parent = parent;
  n.created_at = step;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size()) - 1;
  if (parent >= 0) nodes_[parent].children.push_back(id);
  return id;
}

std::optional<int> DerivationState::frontier() const {
  if (pending_.empty()) return std::nullopt;
  return pending_.back();
}

int DerivationState::frontier_type() const {
  if (pending_.empty()) throw TransitionError("derivation is complete");
  return nodes_[pending_.back()].type;
}

int DerivationState::frontier_parent_step() const {
  if (pending_.empty()) throw TransitionError("derivation is complete");
  return nodes_[pending_.back()].created_at;
}

std::size_t DerivationState::frontier_token_count() const {
  if (pending_.empty()) return 0;
  return nodes_[pending_.back()].tokens.size();
}

void DerivationState::expand(int node, int production, const Grammar& g, int step) {
  const auto& p = g.production(production);
  auto grow = [&](int at, const Production& base) {
    nodes_[at].rule = base.id;
    nodes_[at].complete = true;
    for (const auto& f : base.fields) add_node(f.type, f.label, at, step);
  };
  if (p.is_closure) {
    int cur = node;
    for (int id : p.closure_chain) {
      grow(cur, g.production(id));
      cur = nodes_[cur].children.front();
    }
    pending_.push_back(cur);
    return;
  }
  grow(node, p);
  const auto& kids = nodes_[node].children;
  for (auto it = kids.rbegin(); it != kids.rend(); ++it) pending_.push_back(*it);
}

void DerivationState::apply(const Action& action, const Grammar& g) {
  if (pending_.empty()) throw TransitionError("illegal action: derivation is complete");
  int f = pending_.back();
  const int step = t() + 1;
  const NodeKind kind = g.type(nodes_[f].type).kind;
  const int creation = nodes_[f].created_at;
  switch (action.kind) {
    case ActionKind::rule: {
      if (kind != NodeKind::nonterminal) {
        throw TransitionError("illegal action: ApplyRule on terminal '" + g.type(nodes_[f].type).name + "'");
      }
      if (action.arg < 0 || action.arg >= static_cast<int>(g.productions().size())) {
        throw TransitionError("illegal action: unknown production " + std::to_string(action.arg));
      }
      if (g.production(action.arg).head != nodes_[f].type) {
        throw TransitionError("illegal action: production " + std::to_string(action.arg) +
                              " head mismatch at '" + g.type(nodes_[f].type).name + "'");
      }
      pending_.pop_back();
      expand(f, action.arg, g, step);
      break;
    }
    case ActionKind::vocab:
    case ActionKind::copy:
      if (kind != NodeKind::variable) {
        throw TransitionError("illegal action: GenToken on nonterminal '" + g.type(nodes_[f].type).name + "'");
      }
      if (action.token.empty()) throw TransitionError("illegal action: GenToken without a surface token");
      nodes_[f].tokens.push_back(action.token);
      break;
    case ActionKind::close:
      if (kind != NodeKind::variable) {
        throw TransitionError("illegal action: GenClose on nonterminal '" + g.type(nodes_[f].type).name + "'");
      }
      if (nodes_[f].tokens.empty()) throw TransitionError("illegal action: GenClose on empty terminal");
      nodes_[f].complete = true;
      pending_.pop_back();
      break;
  }
  parent_steps_.push_back(creation);
  history_.push_back(action);
}

AstNode DerivationState::to_ast(const Grammar& g) const {
  auto build = [&](auto&& self, int id) -> AstNode {
    const auto& n = nodes_[id];
    AstNode a;
    a.type = g.type(n.type).name;
    a.label = n.label;
    a.complete = n.complete;
    a.tokens = n.tokens;
    if (n.rule >= 0) {
      a.rule = n.rule;
      int op = g.production(n.rule).op;
      if (op >= 0) a.op = g.type(op).name;
    }
    for (int c : n.children) a.children.push_back(self(self, c));
    return a;
  };
  return build(build, 0);
}

DerivationState initial_state(const Grammar& g) { return DerivationState(g); }

std::vector<Action> legal_actions(const DerivationState& state, const Grammar& g, int vocab_size,
                                  int input_length, int max_terminal_tokens) {
  if (state.is_complete()) throw TransitionError("legal_actions on a complete derivation");
  std::vector<Action> out;
  int type = state.frontier_type();
  if (g.type(type).kind == NodeKind::nonterminal) {
    for (int id : g.productions_for(type)) out.push_back(Action::apply_rule(id));
    return out;
  }
  auto count = static_cast<int>(state.frontier_token_count());
  if (count > 0) out.push_back(Action::close());
  if (count >= max_terminal_tokens) return out;
  for (int w = kFirstWordId; w < vocab_size; ++w) out.push_back(Action::gen_vocab(w, {}));
  for (int i = 0; i < input_length; ++i) out.push_back(Action::gen_copy(i, {}));
  return out;
}

DerivationState apply_action(const DerivationState& state, const Action& action, const Grammar& g) {
  DerivationState next = state;
  next.apply(action, g);
  return next;
}

namespace {

bool chain_matches(const AstNode& n, const Production& closure) {
  const AstNode* cur = &n;
  const auto& chain = closure.closure_chain;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    if (!cur->rule || *cur->rule != chain[i]) return false;
    if (cur->children.size() != 1) return false;
    if (i + 1 < chain.size()) cur = &cur->children.front();
  }
  return true;
}

void emit(const AstNode& n, const Grammar& g, std::vector<Action>& out) {
  int type = g.type_id(n.type);
  if (g.is_variable(type)) {
    if (n.tokens.empty() || !n.complete) throw TransitionError("terminal '" + n.type + "' is not closed");
    for (const auto& tok : n.tokens) out.push_back(Action::gen_vocab(-1, tok));
    out.push_back(Action::close());
    return;
  }
  if (!n.complete || !n.rule) throw TransitionError("nonterminal '" + n.type + "' is not expanded");
  const Production* best = nullptr;
  for (int id : g.productions_for(type)) {
    const auto& p = g.production(id);
    if (!p.is_closure || !chain_matches(n, p)) continue;
    if (!best || p.closure_chain.size() > best->closure_chain.size()) best = &p;
  }
  if (best) {
    out.push_back(Action::apply_rule(best->id));
    const AstNode* cur = &n;
    for (std::size_t i = 0; i < best->closure_chain.size(); ++i) cur = &cur->children.front();
    emit(*cur, g, out);
    return;
  }
  out.push_back(Action::apply_rule(*n.rule));
  for (const auto& c : n.children) emit(c, g, out);
}

}  // namespace

std::vector<Action> oracle_actions(const AstNode& ast, const Grammar& g) {
  if (g.find_type(ast.type) != g.root()) {
    throw TransitionError("tree root '" + ast.type + "' does not match the grammar root '" +
                          g.type(g.root()).name + "'");
  }
  AstNode resolved = resolve_rules(ast, g);
  if (auto v = ast_violation(resolved, g)) throw TransitionError("tree not derivable: " + *v);
  std::vector<Action> out;
  emit(resolved, g, out);
  return out;
}

AstNode replay(std::span<const Action> actions, const Grammar& g) {
  DerivationState s(g);
  for (const auto& a : actions) s.apply(a, g);
  if (!s.is_complete()) throw TransitionError("action sequence leaves the derivation incomplete");
  return s.to_ast(g);
}

std::vector<std::string> tokenize_terminal(std::string_view value) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char c : value) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
      continue;
    }
    if (!cur.empty() && std::isupper(static_cast<unsigned char>(c)) &&
        std::islower(static_cast<unsigned char>(cur.back()))) {
      flush();
    }
    cur += c;
  }
  flush();
  return out;
}

nlohmann::json action_record(const Action& a, int t, int parent) {
  nlohmann::json j;
  j["t"] = t;
  j["kind"] = std::string(kind_name(a.kind));
  if (a.kind == ActionKind::close) {
    j["arg"] = nullptr;
  } else {
    j["arg"] = a.arg;
  }
  j["parent"] = parent;
  if (a.kind == ActionKind::vocab || a.kind == ActionKind::copy) j["token"] = a.token;
  return j;
}

std::string actions_to_jsonl(std::span<const Action> actions, std::span<const int> parents) {
  std::ostringstream out;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    out << action_record(actions[i], static_cast<int>(i) + 1, parents[i]).dump() << '\n';
  }
  return out.str();
}

}  // namespace synforge
