#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace synforge {

// A typed tree node. Nonterminals carry children (and the production applied to
// them once known); variable terminals carry a token sequence.
//
// `op` names the operation-terminal constructor of a zero-field production
// (e.g. operator -> Add). `complete` is false for a nonterminal that has not
// been expanded yet or a variable terminal that has not been closed.
struct AstNode {
  std::string type;
  std::string label;
  std::optional<int> rule;
  std::string op;
  std::vector<AstNode> children;
  std::vector<std::string> tokens;
  bool complete = true;
};

// Structural equality over type, rule, op, label, children and tokens.
bool ast_equal(const AstNode& a, const AstNode& b);

std::size_t node_count(const AstNode& ast);

// Indented S-expression text, one node per line:
//   (Call :value @30
//     (expr :func @17
//       (Name :value @32
//         (str :id "sorted"))))
std::string serialize(const AstNode& ast);
AstNode deserialize(std::string_view text);
// Several trees back to back (corpus files).
std::vector<AstNode> deserialize_all(std::string_view text);
std::string serialize_all(const std::vector<AstNode>& asts);

}  // namespace synforge
