#include <doctest.h>

#include <string>

#include "synforge/closure.hpp"
#include "synforge/error.hpp"
#include "synforge/grammar.hpp"
#include "synforge/util.hpp"

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

// 100 productions: root picks one of ten A_i, each A_i is either a unary
// production over a terminal or one of eight binary ones.
std::string wide_grammar() {
  std::string s = "type root\ntype tok variable\n";
  for (int i = 0; i < 10; ++i) s += "type A" + std::to_string(i) + "\n";
  for (int i = 0; i < 10; ++i) s += "rule root -> x:A" + std::to_string(i) + "\n";
  for (int i = 0; i < 10; ++i) s += "rule A" + std::to_string(i) + " -> v:tok\n";
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 8; ++j) s += "rule A" + std::to_string(i) + " -> l:tok r:A" + std::to_string(j) + "\n";
  }
  return s;
}

AstNode tok(std::string label, std::string v) {
  AstNode n;
  n.type = "tok";
  n.label = std::move(label);
  n.tokens = {std::move(v)};
  return n;
}

// root -> A_i -> tok, every chain used `per_chain` times.
std::vector<std::vector<Action>> wide_corpus(const Grammar& g, int per_chain) {
  std::vector<std::vector<Action>> out;
  for (int r = 0; r < per_chain; ++r) {
    for (int i = 0; i < 10; ++i) {
      AstNode a;
      a.type = "A" + std::to_string(i);
      a.label = "x";
      a.children.push_back(tok("v", "w" + std::to_string(r)));
      AstNode root;
      root.type = "root";
      root.children.push_back(a);
      out.push_back(oracle_actions(resolve_rules(root, g), g));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("grammar text parses into types and productions") {
  auto g = load_grammar(kSmall);
  CHECK(g.types().size() == 7);
  CHECK(g.productions().size() == 5);
  CHECK(g.type(g.root()).name == "root");
  CHECK(g.is_variable(g.type_id("id")));
  CHECK(g.productions_for(g.type_id("operator")).size() == 2);
  const auto& add = g.production(3);
  CHECK(add.fields.empty());
  CHECK(g.type(add.op).name == "Add");
}

TEST_CASE("canonical text reloads to the same grammar") {
  auto g = load_grammar(kSmall);
  auto again = load_grammar(g.to_text());
  CHECK(again.to_text() == g.to_text());
  CHECK(again.hash() == g.hash());
  CHECK(g.hash().size() == 16);
  CHECK(load_grammar(std::string(kSmall) + "rule expr -> value:id\n").hash() != g.hash());
}

TEST_CASE("bundled grammars load") {
  auto mp = load_grammar_file(std::string(SYNFORGE_DATA_DIR) + "/minipy.grammar");
  auto fl = load_grammar_file(std::string(SYNFORGE_DATA_DIR) + "/flowdsl.grammar");
  CHECK(mp.productions().size() > 40);
  CHECK(fl.productions().size() > 40);
  CHECK(mp.closure_count() == 0);
}

TEST_CASE("malformed grammars are rejected") {
  CHECK_THROWS_AS(load_grammar("type a\ntype a\n"), GrammarError);
  CHECK_THROWS_AS(load_grammar("type a\nrule a -> x:b\n"), GrammarError);
  CHECK_THROWS_AS(load_grammar("type a\ntype v variable\nrule v -> x:a\n"), GrammarError);
  CHECK_THROWS_AS(load_grammar("type a\ntype b\nrule a -> x:b x:b\n"), GrammarError);
  CHECK_THROWS_AS(load_grammar("type a\ntype b\nrule a -> b\n"), GrammarError);
  CHECK_THROWS_AS(load_grammar("type a\nbogus line\n"), GrammarError);
  CHECK_THROWS_AS(load_grammar(""), GrammarError);
  CHECK_THROWS_AS(load_grammar(std::string(kSmall) + "closure 0 1\n"), GrammarError);
}

TEST_CASE("closure over a connected unary chain") {
  auto g = load_grammar(kSmall);
  int c = g.add_closure({1, 2});
  const auto& p = g.production(c);
  CHECK(p.is_closure);
  CHECK(g.type(p.head).name == "expr");
  REQUIRE(p.fields.size() == 1);
  CHECK(g.type(p.fields[0].type).name == "id");
  CHECK(g.closure_count() == 1);
  CHECK(g.base_production_count() == 5);
  auto again = load_grammar(g.to_text());
  CHECK(again.hash() == g.hash());
  CHECK(again.find_closure(std::vector<int>{1, 2}) == c);
  CHECK_THROWS_AS(g.add_closure({2, 1}), GrammarError);
  CHECK_THROWS_AS(g.add_closure({1, 2}), GrammarError);
}

TEST_CASE("induced grammar covers the corpus") {
  AstNode name;
  name.type = "Name";
  name.label = "value";
  AstNode id;
  id.type = "id";
  id.label = "id";
  id.tokens = {"x"};
  name.children.push_back(id);
  AstNode expr;
  expr.type = "expr";
  expr.label = "value";
  expr.children.push_back(name);
  AstNode op;
  op.type = "operator";
  op.label = "op";
  op.op = "Sub";
  AstNode root;
  root.type = "root";
  root.children = {expr, op};

  std::vector<AstNode> corpus{root};
  auto g = induce_grammar(corpus, "root");
  CHECK(g.productions().size() == 4);
  CHECK(g.type(g.type_id("Sub")).kind == NodeKind::op);
  CHECK(g.is_variable(g.type_id("id")));
  auto resolved = resolve_rules(root, g);
  CHECK(!ast_violation(resolved, g));
  CHECK_THROWS_AS(induce_grammar(corpus, "expr"), GrammarError);
}

TEST_CASE("violations are described") {
  auto g = load_grammar(kSmall);
  AstNode root;
  root.type = "root";
  CHECK(ast_violation(root, g).has_value());
  root.type = "nope";
  CHECK(ast_violation(root, g).has_value());
}

TEST_CASE("frequent unary chains become closures") {
  auto g = load_grammar(wide_grammar());
  REQUIRE(g.productions().size() == 100);
  auto corpus = wide_corpus(g, 20);
  CHECK(unary_chains(g, corpus[0]).size() == 1);
  CHECK(unary_closure(g, corpus, 20).productions().size() == 110);
  CHECK(unary_closure(g, corpus, 21).productions().size() == 100);
}

TEST_CASE("rare chains leave a 100-production grammar unchanged at k = 30") {
  auto g = load_grammar(wide_grammar());
  auto corpus = wide_corpus(g, 29);
  auto closed = unary_closure(g, corpus, 30);
  CHECK(closed.productions().size() == 100);
  CHECK(closed.hash() == g.hash());
}

TEST_CASE("closure threshold must be positive") {
  auto g = load_grammar(kSmall);
  std::vector<std::vector<Action>> none;
  CHECK_THROWS_AS(unary_closure(g, none, 0), GrammarError);
}

TEST_CASE("fnv hash is stable") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}
