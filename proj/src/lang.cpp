#include "synforge/lang.hpp"

#include <cctype>
#include <sstream>

#include "synforge/error.hpp"
#include "synforge/transition.hpp"
#include "synforge/util.hpp"

namespace synforge {

std::optional<Language> language_from_name(std::string_view name) {
  if (name == "minipy") return Language::minipy;
  if (name == "flowdsl") return Language::flowdsl;
  return std::nullopt;
}

std::string_view language_name(Language lang) {
  return lang == Language::minipy ? "minipy" : "flowdsl";
}

bool is_placeholder(std::string_view token) {
  if (token.size() < 7 || token.substr(0, 5) != "_STR:" || token.back() != '_') return false;
  auto digits = token.substr(5, token.size() - 6);
  if (digits.empty()) return false;
  for (char c : digits) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

std::vector<std::string> split_terminal_value(std::string_view value, std::string_view terminal_type) {
  if (terminal_type == "string") {
    std::vector<std::string> out;
    std::istringstream in{std::string(value)};
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
  }
  if (terminal_type == "number") return {std::string(value)};
  return tokenize_terminal(value);
}

std::string join_terminal_tokens(const std::vector<std::string>& tokens, std::string_view terminal_type) {
  std::string out;
  const bool spaced = terminal_type == "string";
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (spaced && i > 0) out += ' ';
    out += tokens[i];
  }
  return out;
}

namespace {

// ---------------------------------------------------------------------------
// Tree helpers shared by both languages

AstNode labeled(AstNode n, std::string label) {
  n.label = std::move(label);
  return n;
}

AstNode make(std::string type, std::vector<AstNode> children = {}) {
  AstNode n;
  n.type = std::move(type);
  n.children = std::move(children);
  return n;
}

AstNode terminal(std::string type, std::vector<std::string> tokens) {
  AstNode n;
  n.type = std::move(type);
  n.tokens = std::move(tokens);
  return n;
}

AstNode list_of(std::string type, std::vector<AstNode> items) {
  for (std::size_t i = 0; i < items.size(); ++i) items[i].label = "item" + std::to_string(i);
  return make(std::move(type), std::move(items));
}

void require_complete(const AstNode& n) {
  if (!n.complete) throw AstError("incomplete AST: unexpanded node '" + n.type + "'");
  for (const auto& c : n.children) require_complete(c);
}

[[noreturn]] void foreign(const AstNode& n, Language lang) {
  throw AstError("node type '" + n.type + "' is foreign to " + std::string(language_name(lang)));
}

const AstNode& child(const AstNode& n, std::string_view label, Language lang) {
  for (const auto& c : n.children) {
    if (c.label == label) return c;
  }
  throw AstError("node '" + n.type + "' lacks field '" + std::string(label) + "' for " +
                 std::string(language_name(lang)));
}

const AstNode& only_child(const AstNode& n, Language lang) {
  if (n.children.size() != 1) foreign(n, lang);
  return n.children.front();
}

// ---------------------------------------------------------------------------
// MiniPy rendering

constexpr int kLambdaPrec = 0;
constexpr int kAddPrec = 1;
constexpr int kMulPrec = 2;
constexpr int kAtomPrec = 3;

std::string quote_string(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'' || c == '\\') out += '\\';
    out += c;
  }
  out += '\'';
  return out;
}

class MiniPyRenderer {
 public:
  std::string program(const AstNode& root) {
    if (root.type != "root") foreign(root, Language::minipy);
    statement(only_child(root, kLang), 0);
    std::string out;
    for (std::size_t i = 0; i < lines_.size(); ++i) {
      if (i) out += '\n';
      out += lines_[i];
    }
    return out;
  }

 private:
  static constexpr Language kLang = Language::minipy;

  void emit(int indent, std::string text) {
    lines_.push_back(std::string(static_cast<std::size_t>(indent) * 4, ' ') + std::move(text));
  }

  void block(const AstNode& list, int indent) {
    if (list.type != "stmt*") foreign(list, kLang);
    if (list.children.empty()) {
      emit(indent, "pass");
      return;
    }
    for (const auto& s : list.children) {
      if (s.type != "stmt") foreign(s, kLang);
      statement(only_child(s, kLang), indent);
    }
  }

  void statement(const AstNode& s, int indent) {
    if (s.type == "Assign") {
      emit(indent, expr(child(s, "target", kLang), 0) + " = " + expr(child(s, "value", kLang), 0));
    } else if (s.type == "Expr") {
      emit(indent, expr(child(s, "value", kLang), 0));
    } else if (s.type == "If") {
      emit(indent, "if " + expr(child(s, "test", kLang), 0) + ":");
      block(child(s, "body", kLang), indent + 1);
      orelse(child(s, "orelse", kLang), indent);
    } else if (s.type == "For") {
      emit(indent, "for " + expr(child(s, "target", kLang), 0) + " in " + expr(child(s, "iter", kLang), 0) + ":");
      block(child(s, "body", kLang), indent + 1);
      orelse(child(s, "orelse", kLang), indent);
    } else {
      foreign(s, kLang);
    }
  }

  void orelse(const AstNode& list, int indent) {
    if (list.type != "stmt*") foreign(list, kLang);
    if (list.children.empty()) return;
    emit(indent, "else:");
    block(list, indent + 1);
  }

  static std::string identifier(const AstNode& t) {
    if (t.type != "str") foreign(t, kLang);
    return join_terminal_tokens(t.tokens, "str");
  }

  static int precedence(const AstNode& ctor) {
    if (ctor.type == "Lambda") return kLambdaPrec;
    if (ctor.type == "BinOp") {
      const auto& op = child(ctor, "op", kLang).op;
      return (op == "Add" || op == "Sub") ? kAddPrec : kMulPrec;
    }
    return kAtomPrec;
  }

  std::string expr(const AstNode& e, int min_prec) {
    if (e.type != "expr") foreign(e, kLang);
    const auto& c = only_child(e, kLang);
    std::string text = constructor(c);
    if (precedence(c) < min_prec) return "(" + text + ")";
    return text;
  }

  std::string constructor(const AstNode& c) {
    if (c.type == "Name") return identifier(child(c, "id", kLang));
    if (c.type == "Num") {
      const auto& n = child(c, "n", kLang);
      if (n.type != "number") foreign(n, kLang);
      return join_terminal_tokens(n.tokens, "number");
    }
    if (c.type == "Str") {
      const auto& s = child(c, "s", kLang);
      if (s.type != "string") foreign(s, kLang);
      if (s.tokens.size() == 1 && is_placeholder(s.tokens.front())) return s.tokens.front();
      return quote_string(join_terminal_tokens(s.tokens, "string"));
    }
    if (c.type == "Attribute") {
      return expr(child(c, "value", kLang), kAtomPrec) + "." + identifier(child(c, "attr", kLang));
    }
    if (c.type == "Call") {
      std::string out = expr(child(c, "func", kLang), kAtomPrec) + "(";
      bool first = true;
      const auto& args = child(c, "args", kLang);
      if (args.type != "expr*") foreign(args, kLang);
      for (const auto& a : args.children) {
        if (!first) out += ", ";
        out += expr(a, 0);
        first = false;
      }
      const auto& kws = child(c, "keywords", kLang);
      if (kws.type != "keyword*") foreign(kws, kLang);
      for (const auto& k : kws.children) {
        if (k.type != "keyword") foreign(k, kLang);
        if (!first) out += ", ";
        out += identifier(child(k, "arg", kLang)) + "=" + expr(child(k, "value", kLang), 0);
        first = false;
      }
      return out + ")";
    }
    if (c.type == "BinOp") {
      const auto& op = child(c, "op", kLang);
      if (op.type != "operator") foreign(op, kLang);
      static const std::pair<const char*, const char*> kOps[] = {
          {"Add", "+"}, {"Sub", "-"}, {"Mult", "*"}, {"Div", "/"}};
      const char* sym = nullptr;
      for (auto [name, s] : kOps) {
        if (op.op == name) sym = s;
      }
      if (!sym) throw AstError("unknown operator '" + op.op + "'");
      int p = precedence(c);
      return expr(child(c, "left", kLang), p) + " " + sym + " " + expr(child(c, "right", kLang), p + 1);
    }
    if (c.type == "Lambda") {
      const auto& params = child(c, "args", kLang);
      if (params.type != "str*") foreign(params, kLang);
      std::string out = "lambda";
      for (std::size_t i = 0; i < params.children.size(); ++i) {
        out += i ? ", " : " ";
        out += identifier(params.children[i]);
      }
      return out + ": " + expr(child(c, "body", kLang), 0);
    }
    foreign(c, kLang);
  }

  std::vector<std::string> lines_;
};

// ---------------------------------------------------------------------------
// MiniPy lexing and parsing

enum class Tok { name, number, string, placeholder, op, keyword, newline, indent, dedent, end };

struct Token {
  Tok kind;
  std::string text;
  int line;
  int col;
};

[[noreturn]] void parse_fail(int line, int col, const std::string& what) {
  throw DataError("parse error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                  ": " + what);
}

bool is_keyword(std::string_view w) {
  return w == "if" || w == "else" || w == "for" || w == "in" || w == "lambda" || w == "pass";
}

std::vector<Token> lex_minipy(std::string_view code) {
  std::vector<Token> out;
  std::vector<int> indents{0};
  auto lines = split_lines(code);
  int line_no = 0;
  for (const auto& line : lines) {
    ++line_no;
    if (trim(line).empty()) continue;
    int indent = 0;
    while (indent < static_cast<int>(line.size()) && line[indent] == ' ') ++indent;
    if (line[indent] == '\t') parse_fail(line_no, indent + 1, "tabs are not allowed in indentation");
    if (indent > indents.back()) {
      indents.push_back(indent);
      out.push_back({Tok::indent, "", line_no, 1});
    } else {
      while (indent < indents.back()) {
        indents.pop_back();
        out.push_back({Tok::dedent, "", line_no, 1});
      }
      if (indent != indents.back()) parse_fail(line_no, indent + 1, "inconsistent dedent");
    }
    std::size_t i = static_cast<std::size_t>(indent);
    while (i < line.size()) {
      char c = line[i];
      int col = static_cast<int>(i) + 1;
      if (c == ' ') {
        ++i;
        continue;
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t j = i;
        if (line.compare(i, 5, "_STR:") == 0) {
          j = i + 5;
          while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
          if (j > i + 5 && j < line.size() && line[j] == '_') {
            out.push_back({Tok::placeholder, line.substr(i, j + 1 - i), line_no, col});
            i = j + 1;
            continue;
          }
          j = i;
        }
        while (j < line.size() && (std::isalnum(static_cast<unsigned char>(line[j])) || line[j] == '_')) ++j;
        std::string w = line.substr(i, j - i);
        out.push_back({is_keyword(w) ? Tok::keyword : Tok::name, w, line_no, col});
        i = j;
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c))) {
        std::size_t j = i;
        while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
        if (j + 1 < line.size() && line[j] == '.' && std::isdigit(static_cast<unsigned char>(line[j + 1]))) {
          ++j;
          while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
        }
        out.push_back({Tok::number, line.substr(i, j - i), line_no, col});
        i = j;
        continue;
      }
      if (c == '\'' || c == '"') {
        std::string s;
        std::size_t j = i + 1;
        bool closed = false;
        while (j < line.size()) {
          char d = line[j++];
          if (d == '\\' && j < line.size()) {
            s += line[j++];
          } else if (d == c) {
            closed = true;
            break;
          } else {
            s += d;
          }
        }
        if (!closed) parse_fail(line_no, col, "unterminated string literal");
        out.push_back({Tok::string, s, line_no, col});
        i = j;
        continue;
      }
      if (std::string_view("(),:=.+-*/").find(c) != std::string_view::npos) {
        out.push_back({Tok::op, std::string(1, c), line_no, col});
        ++i;
        continue;
      }
      parse_fail(line_no, col, std::string("unexpected character '") + c + "'");
    }
    out.push_back({Tok::newline, "", line_no, static_cast<int>(line.size()) + 1});
  }
  while (indents.size() > 1) {
    indents.pop_back();
    out.push_back({Tok::dedent, "", line_no, 1});
  }
  out.push_back({Tok::end, "", line_no + 1, 1});
  return out;
}

class MiniPyParser {
 public:
  explicit MiniPyParser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  AstNode program() {
    if (peek().kind == Tok::end) fail("empty program");
    AstNode body = statement();
    if (peek().kind != Tok::end) fail("only one top-level statement is supported");
    return make("root", {labeled(std::move(body), "body")});
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token& next() { return toks_[std::min(pos_++, toks_.size() - 1)]; }

  [[noreturn]] void fail(const std::string& what) const { parse_fail(peek().line, peek().col, what); }

  bool at_op(std::string_view s) const { return peek().kind == Tok::op && peek().text == s; }
  bool at_keyword(std::string_view s) const { return peek().kind == Tok::keyword && peek().text == s; }

  void expect_op(std::string_view s) {
    if (!at_op(s)) fail("expected '" + std::string(s) + "'");
    ++pos_;
  }
  void expect_keyword(std::string_view s) {
    if (!at_keyword(s)) fail("expected '" + std::string(s) + "'");
    ++pos_;
  }
  void expect(Tok k, const char* what) {
    if (peek().kind != k) fail(std::string("expected ") + what);
    ++pos_;
  }

  AstNode statement() {
    if (at_keyword("if")) {
      ++pos_;
      AstNode test = expr();
      expect_op(":");
      expect(Tok::newline, "end of line");
      AstNode body = block();
      AstNode orelse = else_block();
      return make("If", {labeled(std::move(test), "test"), labeled(std::move(body), "body"),
                         labeled(std::move(orelse), "orelse")});
    }
    if (at_keyword("for")) {
      ++pos_;
      AstNode target = expr();
      expect_keyword("in");
      AstNode iter = expr();
      expect_op(":");
      expect(Tok::newline, "end of line");
      AstNode body = block();
      AstNode orelse = else_block();
      return make("For", {labeled(std::move(target), "target"), labeled(std::move(iter), "iter"),
                          labeled(std::move(body), "body"), labeled(std::move(orelse), "orelse")});
    }
    if (at_keyword("pass")) fail("'pass' is only allowed as the sole statement of a block");
    AstNode lhs = expr();
    if (at_op("=")) {
      ++pos_;
      AstNode rhs = expr();
      expect(Tok::newline, "end of line");
      return make("Assign", {labeled(std::move(lhs), "target"), labeled(std::move(rhs), "value")});
    }
    expect(Tok::newline, "end of line");
    return make("Expr", {labeled(std::move(lhs), "value")});
  }

  AstNode else_block() {
    if (!at_keyword("else")) return list_of("stmt*", {});
    ++pos_;
    expect_op(":");
    expect(Tok::newline, "end of line");
    return block();
  }

  AstNode block() {
    expect(Tok::indent, "an indented block");
    std::vector<AstNode> items;
    if (at_keyword("pass")) {
      ++pos_;
      expect(Tok::newline, "end of line");
      expect(Tok::dedent, "end of block after 'pass'");
      return list_of("stmt*", {});
    }
    while (peek().kind != Tok::dedent && peek().kind != Tok::end) {
      items.push_back(make("stmt", {labeled(statement(), "value")}));
    }
    expect(Tok::dedent, "end of block");
    return list_of("stmt*", std::move(items));
  }

  static AstNode wrap(AstNode ctor) { return make("expr", {labeled(std::move(ctor), "value")}); }

  AstNode identifier(const Token& t) { return terminal("str", split_terminal_value(t.text, "str")); }

  AstNode expr() {
    if (at_keyword("lambda")) {
      ++pos_;
      std::vector<AstNode> params;
      if (!at_op(":")) {
        for (;;) {
          if (peek().kind != Tok::name) fail("expected lambda parameter name");
          params.push_back(identifier(next()));
          if (!at_op(",")) break;
          ++pos_;
        }
      }
      expect_op(":");
      AstNode body = expr();
      return wrap(make("Lambda", {labeled(list_of("str*", std::move(params)), "args"),
                                  labeled(std::move(body), "body")}));
    }
    return arith();
  }

  AstNode binop(AstNode lhs, const std::string& sym, AstNode rhs) {
    static const std::pair<const char*, const char*> kOps[] = {
        {"+", "Add"}, {"-", "Sub"}, {"*", "Mult"}, {"/", "Div"}};
    AstNode op = make("operator");
    for (auto [s, name] : kOps) {
      if (sym == s) op.op = name;
    }
    return wrap(make("BinOp", {labeled(std::move(lhs), "left"), labeled(std::move(op), "op"),
                               labeled(std::move(rhs), "right")}));
  }

  AstNode arith() {
    AstNode lhs = term();
    while (at_op("+") || at_op("-")) {
      std::string sym = next().text;
      lhs = binop(std::move(lhs), sym, term());
    }
    return lhs;
  }

  AstNode term() {
    AstNode lhs = postfix();
    while (at_op("*") || at_op("/")) {
      std::string sym = next().text;
      lhs = binop(std::move(lhs), sym, postfix());
    }
    return lhs;
  }

  AstNode postfix() {
    AstNode e = atom();
    for (;;) {
      if (at_op(".")) {
        ++pos_;
        if (peek().kind != Tok::name) fail("expected attribute name");
        AstNode attr = identifier(next());
        e = wrap(make("Attribute", {labeled(std::move(e), "value"), labeled(std::move(attr), "attr")}));
      } else if (at_op("(")) {
        ++pos_;
        std::vector<AstNode> args, kws;
        while (!at_op(")")) {
          if (peek().kind == Tok::name && peek(1).kind == Tok::op && peek(1).text == "=") {
            AstNode arg = identifier(next());
            ++pos_;
            AstNode value = expr();
            kws.push_back(make("keyword", {labeled(std::move(arg), "arg"), labeled(std::move(value), "value")}));
          } else {
            if (!kws.empty()) fail("positional argument after keyword argument");
            args.push_back(expr());
          }
          if (!at_op(",")) break;
          ++pos_;
        }
        expect_op(")");
        e = wrap(make("Call", {labeled(std::move(e), "func"), labeled(list_of("expr*", std::move(args)), "args"),
                               labeled(list_of("keyword*", std::move(kws)), "keywords")}));
      } else {
        return e;
      }
    }
  }

  AstNode atom() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::name:
        ++pos_;
        return wrap(make("Name", {labeled(identifier(t), "id")}));
      case Tok::number:
        ++pos_;
        return wrap(make("Num", {labeled(terminal("number", {t.text}), "n")}));
      case Tok::string: {
        ++pos_;
        auto tokens = split_terminal_value(t.text, "string");
        if (tokens.empty()) parse_fail(t.line, t.col, "empty string literals are not supported");
        return wrap(make("Str", {labeled(terminal("string", std::move(tokens)), "s")}));
      }
      case Tok::placeholder:
        ++pos_;
        return wrap(make("Str", {labeled(terminal("string", {t.text}), "s")}));
      case Tok::op:
        if (t.text == "(") {
          ++pos_;
          AstNode inner = expr();
          expect_op(")");
          return inner;
        }
        break;
      default:
        break;
    }
    fail("expected an expression");
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// FlowDSL

std::string strip_suffix(const std::string& s, std::string_view suffix, const AstNode& n) {
  if (s.size() <= suffix.size() || s.compare(s.size() - suffix.size(), suffix.size(), suffix) != 0) {
    foreign(n, Language::flowdsl);
  }
  return s.substr(0, s.size() - suffix.size());
}

std::string render_flow(const AstNode& root) {
  constexpr auto kLang = Language::flowdsl;
  if (root.type != "root") foreign(root, kLang);
  auto clause = [&](std::string_view label, std::string_view type, std::string_view suffix) {
    const auto& slot = child(root, label, kLang);
    if (slot.type != type) foreign(slot, kLang);
    const auto& channel = only_child(slot, kLang);
    if (channel.op.empty() || !channel.children.empty()) foreign(channel, kLang);
    return strip_suffix(channel.type, suffix, channel) + "." + channel.op;
  };
  return "IF " + clause("if", "trigger", "_trigger") + " THEN " + clause("then", "action", "_action");
}

AstNode parse_flow(std::string_view code) {
  std::istringstream in{std::string(code)};
  std::vector<std::string> w;
  std::string s;
  while (in >> s) w.push_back(s);
  if (w.size() != 4 || w[0] != "IF" || w[2] != "THEN") {
    throw DataError("parse error at line 1, column 1: expected 'IF <Channel>.<Function> THEN <Channel>.<Function>'");
  }
  auto clause = [](const std::string& text, const std::string& slot, const std::string& suffix) {
    auto dot = text.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == text.size() ||
        text.find('.', dot + 1) != std::string::npos) {
      throw DataError("parse error: malformed channel reference '" + text + "'");
    }
    AstNode channel = make(text.substr(0, dot) + suffix);
    channel.op = text.substr(dot + 1);
    return make(slot, {labeled(std::move(channel), "channel")});
  };
  return make("root", {labeled(clause(w[1], "trigger", "_trigger"), "if"),
                       labeled(clause(w[3], "action", "_action"), "then")});
}

}  // namespace

std::string render(const AstNode& ast, Language lang) {
  require_complete(ast);
  if (lang == Language::flowdsl) return render_flow(ast);
  return MiniPyRenderer().program(ast);
}

AstNode parse_code(std::string_view code, Language lang) {
  if (lang == Language::flowdsl) return parse_flow(code);
  return MiniPyParser(lex_minipy(code)).program();
}

}  // namespace synforge
