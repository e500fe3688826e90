#include <doctest.h>

#include "synforge/error.hpp"
#include "synforge/grammar.hpp"
#include "synforge/transition.hpp"

using namespace synforge;

namespace {

const char* kSmall =
    "type root\n"
    "type expr\n"
    "type Name\n"
    "type Add op\n"
    "type Sub op\n"
    "type operator\n"
    "type id variable\n"
    "rule root -> value:expr op:operator\n"
    "rule expr -> value:Name\n"
    "rule Name -> id:id\n"
    "rule operator -> Add\n"
    "rule operator -> Sub\n";

AstNode sample(const Grammar& g) {
  AstNode id;
  id.type = "id";
  id.label = "id";
  id.tokens = {"sorted", "List"};
  AstNode name;
  name.type = "Name";
  name.label = "value";
  name.children = {id};
  AstNode expr;
  expr.type = "expr";
  expr.label = "value";
  expr.children = {name};
  AstNode op;
  op.type = "operator";
  op.label = "op";
  op.op = "Sub";
  AstNode root;
  root.type = "root";
  root.children = {expr, op};
  return resolve_rules(root, g);
}

Action word(const std::string& w) {
  Action a = Action::gen_vocab(-1, w);
  return a;
}

}  // namespace

TEST_CASE("oracle is the pre-order derivation") {
  auto g = load_grammar(kSmall);
  auto acts = oracle_actions(sample(g), g);
  REQUIRE(acts.size() == 7);
  CHECK(acts[0] == Action::apply_rule(0));
  CHECK(acts[1] == Action::apply_rule(1));
  CHECK(acts[2] == Action::apply_rule(2));
  CHECK(acts[3].token == "sorted");
  CHECK(acts[3].arg == -1);
  CHECK(acts[4].token == "List");
  CHECK(acts[5].kind == ActionKind::close);
  CHECK(acts[6] == Action::apply_rule(4));
}

TEST_CASE("parent steps point at the creating action") {
  auto g = load_grammar(kSmall);
  auto acts = oracle_actions(sample(g), g);
  DerivationState s(g);
  CHECK(s.frontier_parent_step() == 0);
  for (const auto& a : acts) s.apply(a, g);
  CHECK(s.is_complete());
  CHECK(s.parent_steps() == std::vector<int>{0, 1, 2, 3, 3, 3, 1});
  CHECK(ast_equal(s.to_ast(g), sample(g)));
}

TEST_CASE("closure actions create the whole chain at once") {
  auto g = load_grammar(kSmall);
  int c = g.add_closure({1, 2});
  auto acts = oracle_actions(sample(g), g);
  REQUIRE(acts.size() == 6);
  CHECK(acts[1] == Action::apply_rule(c));
  DerivationState s(g);
  for (const auto& a : acts) s.apply(a, g);
  CHECK(s.parent_steps() == std::vector<int>{0, 1, 2, 2, 2, 1});
  CHECK(ast_equal(replay(acts, g), sample(g)));
}

TEST_CASE("illegal actions throw and leave the state usable") {
  auto g = load_grammar(kSmall);
  DerivationState s(g);
  CHECK_THROWS_AS(s.apply(Action::apply_rule(1), g), TransitionError);
  CHECK_THROWS_AS(s.apply(word("x"), g), TransitionError);
  CHECK_THROWS_AS(s.apply(Action::close(), g), TransitionError);
  CHECK_THROWS_AS(s.apply(Action::apply_rule(99), g), TransitionError);
  s.apply(Action::apply_rule(0), g);
  s.apply(Action::apply_rule(1), g);
  s.apply(Action::apply_rule(2), g);
  CHECK_THROWS_AS(s.apply(Action::close(), g), TransitionError);
  CHECK_THROWS_AS(s.apply(Action::apply_rule(3), g), TransitionError);
  CHECK_THROWS_AS(s.apply(Action::gen_vocab(2, ""), g), TransitionError);
  s.apply(word("x"), g);
  s.apply(Action::close(), g);
  s.apply(Action::apply_rule(3), g);
  CHECK(s.is_complete());
  CHECK_THROWS_AS(s.apply(Action::apply_rule(3), g), TransitionError);
  CHECK_THROWS_AS(legal_actions(s, g, 5, 2), TransitionError);
}

TEST_CASE("legal actions follow the frontier") {
  auto g = load_grammar(kSmall);
  DerivationState s(g);
  auto root = legal_actions(s, g, 5, 2);
  REQUIRE(root.size() == 1);
  s.apply(Action::apply_rule(0), g);
  s.apply(Action::apply_rule(1), g);
  s.apply(Action::apply_rule(2), g);
  // Fresh terminal: 3 vocabulary words (the reserved rows are skipped) and 2 copies.
  auto fresh = legal_actions(s, g, 5, 2);
  CHECK(fresh.size() == 5);
  for (const auto& a : fresh) CHECK(a.kind != ActionKind::close);
  s.apply(word("x"), g);
  auto open = legal_actions(s, g, 5, 2);
  CHECK(open.size() == 6);
  CHECK(open.front().kind == ActionKind::close);
  auto capped = legal_actions(s, g, 5, 2, 1);
  REQUIRE(capped.size() == 1);
  CHECK(capped.front().kind == ActionKind::close);
  s.apply(Action::close(), g);
  auto ops = legal_actions(s, g, 5, 2);
  CHECK(ops.size() == 2);
}

TEST_CASE("branching a state by value leaves the original untouched") {
  auto g = load_grammar(kSmall);
  auto s0 = initial_state(g);
  auto s1 = apply_action(s0, Action::apply_rule(0), g);
  CHECK(s0.t() == 0);
  CHECK(s1.t() == 1);
  CHECK(s0.frontier_type() == g.root());
  CHECK(s1.frontier_type() == g.type_id("expr"));
}

TEST_CASE("replay rejects incomplete sequences") {
  auto g = load_grammar(kSmall);
  std::vector<Action> part{Action::apply_rule(0)};
  CHECK_THROWS_AS(replay(part, g), TransitionError);
}

TEST_CASE("trees outside the grammar have no oracle") {
  auto g = load_grammar(kSmall);
  auto t = sample(g);
  t.children[0].children[0].children[0].tokens.clear();
  CHECK_THROWS_AS(oracle_actions(t, g), TransitionError);
  auto u = sample(g);
  u.type = "expr";
  CHECK_THROWS(oracle_actions(u, g));
}

TEST_CASE("terminal values split on spaces and camel case") {
  CHECK(tokenize_terminal("sortedList") == std::vector<std::string>{"sorted", "List"});
  CHECK(tokenize_terminal("a  b") == std::vector<std::string>{"a", "b"});
  CHECK(tokenize_terminal("x") == std::vector<std::string>{"x"});
}

TEST_CASE("action records") {
  auto g = load_grammar(kSmall);
  auto j = action_record(Action::gen_copy(3, "foo"), 4, 2);
  CHECK(j["t"] == 4);
  CHECK(j["kind"] == "copy");
  CHECK(j["arg"] == 3);
  CHECK(j["parent"] == 2);
  CHECK(j["token"] == "foo");
  auto c = action_record(Action::close(), 5, 2);
  CHECK(c["arg"].is_null());
  CHECK_FALSE(c.contains("token"));
  std::vector<Action> acts{Action::apply_rule(0)};
  std::vector<int> parents{0};
  CHECK(actions_to_jsonl(acts, parents) == "{\"arg\":0,\"kind\":\"rule\",\"parent\":0,\"t\":1}\n");
}
