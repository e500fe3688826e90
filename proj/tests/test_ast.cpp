#include <doctest.h>

#include "synforge/ast.hpp"
#include "synforge/error.hpp"

using namespace synforge;

namespace {

AstNode leaf(std::string type, std::string label, std::vector<std::string> toks) {
  AstNode n;
  n.type = std::move(type);
  n.label = std::move(label);
  n.tokens = std::move(toks);
  return n;
}

AstNode sample() {
  AstNode root;
  root.type = "Call";
  root.rule = 30;
  AstNode fn;
  fn.type = "expr";
  fn.label = "func";
  fn.rule = 17;
  fn.children.push_back(leaf("str", "id", {"sorted"}));
  root.children.push_back(fn);
  root.children.push_back(leaf("string", "arg", {"a \"quoted\"", "line\nbreak", "tab\there", "back\\slash"}));
  AstNode op;
  op.type = "operator";
  op.label = "op";
  op.op = "Add";
  root.children.push_back(op);
  return root;
}

}  // namespace

TEST_CASE("serialize then deserialize is the identity") {
  auto t = sample();
  auto text = serialize(t);
  auto back = deserialize(text);
  CHECK(ast_equal(t, back));
  CHECK(serialize(back) == text);
}

TEST_CASE("incomplete nodes survive a round trip") {
  auto t = sample();
  t.children[1].complete = false;
  t.children[0].rule.reset();
  t.children[0].complete = false;
  t.children[0].children.clear();
  auto back = deserialize(serialize(t));
  CHECK(ast_equal(t, back));
  CHECK_FALSE(back.children[1].complete);
  CHECK_FALSE(back.children[0].complete);
}

TEST_CASE("equality notices every field") {
  auto a = sample();
  auto b = a;
  CHECK(ast_equal(a, b));
  b.children[1].tokens.back() = "other";
  CHECK_FALSE(ast_equal(a, b));
  b = a;
  b.rule = 31;
  CHECK_FALSE(ast_equal(a, b));
  b = a;
  b.children[2].op = "Sub";
  CHECK_FALSE(ast_equal(a, b));
  b = a;
  b.children[0].label = "value";
  CHECK_FALSE(ast_equal(a, b));
}

TEST_CASE("node count includes terminals") { CHECK(node_count(sample()) == 5); }

TEST_CASE("several trees back to back") {
  std::vector<AstNode> ts{sample(), leaf("str", "", {"x"})};
  auto back = deserialize_all(serialize_all(ts));
  REQUIRE(back.size() == 2);
  CHECK(ast_equal(back[0], ts[0]));
  CHECK(ast_equal(back[1], ts[1]));
}

TEST_CASE("malformed text is rejected") {
  CHECK_THROWS_AS(deserialize("(Call :value"), AstError);
  CHECK_THROWS_AS(deserialize("(Call) (Call)"), AstError);
  CHECK_THROWS_AS(deserialize("(str \"unterminated)"), AstError);
  CHECK_THROWS_AS(deserialize(""), AstError);
}
