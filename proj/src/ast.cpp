#include "synforge/ast.hpp"

#include <cctype>
#include <string>

#include "synforge/error.hpp"

namespace synforge {

bool ast_equal(const AstNode& a, const AstNode& b) {
  if (a.type != b.type || a.label != b.label || a.rule != b.rule || a.op != b.op ||
      a.complete != b.complete || a.tokens != b.tokens ||
      a.children.size() != b.children.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (!ast_equal(a.children[i], b.children[i])) return false;
  }
  return true;
}

std::size_t node_count(const AstNode& ast) {
  std::size_t n = 1;
  for (const auto& c : ast.children) n += node_count(c);
  return n;
}

namespace {

void quote(std::string& out, std::string_view s) {
  out += '"';
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  out += '"';
}

void write_node(const AstNode& n, int depth, std::string& out) {
  out.append(static_cast<std::size_t>(depth) * 2, ' ');
  out += '(';
  out += n.type;
  if (!n.label.empty()) out += " :" + n.label;
  if (n.rule) out += " @" + std::to_string(*n.rule);
  if (!n.op.empty()) out += " =" + n.op;
  if (!n.complete) out += " ?";
  for (const auto& tok : n.tokens) {
    out += ' ';
    quote(out, tok);
  }
  for (const auto& c : n.children) {
    out += '\n';
    write_node(c, depth + 1, out);
  }
  out += ')';
}

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  bool at_end() {
    skip_ws();
    return pos_ >= text_.size();
  }

  AstNode node() {
    skip_ws();
    expect('(');
    AstNode n;
    n.type = symbol("node type");
    for (;;) {
      skip_ws();
      if (pos_ >= text_.size()) fail("unexpected end of input inside node '" + n.type + "'");
      char c = text_[pos_];
      if (c == ':') {
        ++pos_;
        n.label = symbol("label");
      } else if (c == '@') {
        ++pos_;
        n.rule = integer();
      } else if (c == '=') {
        ++pos_;
        n.op = symbol("constructor");
      } else if (c == '?') {
        ++pos_;
        n.complete = false;
      } else if (c == '"') {
        n.tokens.push_back(string());
      } else {
        break;
      }
    }
    for (;;) {
      skip_ws();
      if (pos_ >= text_.size()) fail("unexpected end of input inside node '" + n.type + "'");
      if (text_[pos_] == ')') {
        ++pos_;
        return n;
      }
      if (text_[pos_] != '(') fail(std::string("unexpected character '") + text_[pos_] + "'");
      n.children.push_back(node());
    }
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    int line = 1, col = 1;
    for (std::size_t i = 0; i < pos_ && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw AstError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + what);
  }

  void expect(char c) {
    if (pos_ >= text_.size()) fail(std::string("expected '") + c + "', found end of input");
    if (text_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  static bool symbol_char(char c) {
    return !std::isspace(static_cast<unsigned char>(c)) && c != '(' && c != ')' && c != '"';
  }

  std::string symbol(const char* what) {
    std::size_t start = pos_;
    while (pos_ < text_.size() && symbol_char(text_[pos_])) ++pos_;
    if (pos_ == start) fail(std::string("expected ") + what);
    return std::string(text_.substr(start, pos_ - start));
  }

  int integer() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ == start) fail("expected rule id");
    return std::stoi(std::string(text_.substr(start, pos_ - start)));
  }

  std::string string() {
    expect('"');
    std::string out;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      char c = text_[pos_++];
      if (c == '\\') {
        if (pos_ >= text_.size()) break;
        char e = text_[pos_++];
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          default: out += e;
        }
      } else {
        out += c;
      }
    }
    if (pos_ >= text_.size()) fail("unterminated token string");
    ++pos_;
    return out;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize(const AstNode& ast) {
  std::string out;
  write_node(ast, 0, out);
  out += '\n';
  return out;
}

AstNode deserialize(std::string_view text) {
  Reader r(text);
  AstNode n = r.node();
  if (!r.at_end()) throw AstError("trailing content after tree");
  return n;
}

std::vector<AstNode> deserialize_all(std::string_view text) {
  Reader r(text);
  std::vector<AstNode> out;
  while (!r.at_end()) out.push_back(r.node());
  return out;
}

std::string serialize_all(const std::vector<AstNode>& asts) {
  std::string out;
  for (const auto& a : asts) out += serialize(a);
  return out;
}

}  // namespace synforge
