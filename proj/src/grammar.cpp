#include "synforge/grammar.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "synforge/error.hpp"
#include "synforge/util.hpp"

namespace synforge {

int Grammar::add_type(std::string name, NodeKind kind) {
  if (name.empty()) throw GrammarError("empty node type name");
  if (type_index_.count(name)) throw GrammarError("duplicate node type '" + name + "'");
  int id = static_cast<int>(types_.size());
  type_index_.emplace(name, id);
  types_.push_back({std::move(name), kind});
  by_head_.emplace_back();
  if (root_ < 0) root_ = id;
  return id;
}

int Grammar::add_production(int head, std::vector<Field> fields, int op) {
  if (head < 0 || head >= static_cast<int>(types_.size())) throw GrammarError("unknown head type");
  const auto& h = types_[head];
  if (h.kind == NodeKind::variable) {
    throw GrammarError("variable terminal '" + h.name + "' used as production head");
  }
  if (h.kind == NodeKind::op) {
    throw GrammarError("operation terminal '" + h.name + "' used as production head");
  }
  std::set<std::string> labels;
  for (const auto& f : fields) {
    if (f.type < 0 || f.type >= static_cast<int>(types_.size())) {
      throw GrammarError("unknown node type in field '" + f.label + "'");
    }
    if (types_[f.type].kind == NodeKind::op) {
      throw GrammarError("operation terminal '" + types_[f.type].name + "' used as a field type");
    }
    if (f.label.empty()) throw GrammarError("empty field label");
    if (!labels.insert(f.label).second) {
      throw GrammarError("duplicate field label '" + f.label + "' in production of '" + h.name + "'");
    }
  }
  if (op >= 0) {
    if (op >= static_cast<int>(types_.size()) || types_[op].kind != NodeKind::op) {
      throw GrammarError("constructor of '" + h.name + "' is not an operation terminal");
    }
    if (!fields.empty()) throw GrammarError("constructor productions take no fields");
  }
  if (find_production(head, op, fields)) {
    throw GrammarError("duplicate production for '" + h.name + "'");
  }
  Production p;
  p.id = static_cast<int>(productions_.size());
  p.head = head;
  p.fields = std::move(fields);
  p.op = op;
  by_head_[head].push_back(p.id);
  productions_.push_back(std::move(p));
  return productions_.back().id;
}

int Grammar::add_closure(std::vector<int> chain) {
  if (chain.size() < 2) throw GrammarError("closure chain needs at least two productions");
  for (std::size_t i = 0; i < chain.size(); ++i) {
    if (chain[i] < 0 || chain[i] >= static_cast<int>(productions_.size())) {
      throw GrammarError("closure refers to unknown production " + std::to_string(chain[i]));
    }
    const auto& p = productions_[chain[i]];
    if (p.is_closure || p.fields.size() != 1) {
      throw GrammarError("closure member " + std::to_string(p.id) + " is not a unary production");
    }
    if (i > 0 && productions_[chain[i - 1]].fields[0].type != p.head) {
      throw GrammarError("closure chain is not connected at production " + std::to_string(p.id));
    }
  }
  if (find_closure(chain)) throw GrammarError("duplicate closure");
  Production p;
  p.id = static_cast<int>(productions_.size());
  p.head = productions_[chain.front()].head;
  p.fields = {productions_[chain.back()].fields[0]};
  p.is_closure = true;
  p.closure_chain = std::move(chain);
  by_head_[p.head].push_back(p.id);
  productions_.push_back(std::move(p));
  return productions_.back().id;
}

void Grammar::set_root(int type) {
  if (type < 0 || type >= static_cast<int>(types_.size())) throw GrammarError("unknown root type");
  if (types_[type].kind != NodeKind::nonterminal) throw GrammarError("root must be a nonterminal");
  root_ = type;
}

std::span<const int> Grammar::productions_for(int head) const {
  return by_head_.at(static_cast<std::size_t>(head));
}

std::optional<int> Grammar::find_type(std::string_view name) const {
  auto it = type_index_.find(name);
  if (it == type_index_.end()) return std::nullopt;
  return it->second;
}

int Grammar::type_id(std::string_view name) const {
  auto id = find_type(name);
  if (!id) throw GrammarError("unknown node type '" + std::string(name) + "'");
  return *id;
}

std::optional<int> Grammar::find_production(int head, int op, std::span<const Field> fields) const {
  if (head < 0 || head >= static_cast<int>(by_head_.size())) return std::nullopt;
  for (int id : by_head_[head]) {
    const auto& p = productions_[id];
    if (p.is_closure || p.op != op || p.fields.size() != fields.size()) continue;
    if (std::equal(p.fields.begin(), p.fields.end(), fields.begin())) return id;
  }
  return std::nullopt;
}

std::optional<int> Grammar::find_closure(std::span<const int> chain) const {
  for (const auto& p : productions_) {
    if (p.is_closure && std::equal(p.closure_chain.begin(), p.closure_chain.end(), chain.begin(),
                                   chain.end())) {
      return p.id;
    }
  }
  return std::nullopt;
}

std::size_t Grammar::closure_count() const {
  return static_cast<std::size_t>(std::count_if(productions_.begin(), productions_.end(),
                                                [](const Production& p) { return p.is_closure; }));
}

std::string Grammar::to_text() const {
  std::ostringstream out;
  for (const auto& t : types_) {
    out << "type " << t.name;
    if (t.kind == NodeKind::variable) out << " variable";
    if (t.kind == NodeKind::op) out << " op";
    out << '\n';
  }
  if (root_ > 0) out << "root " << types_[root_].name << '\n';
  for (const auto& p : productions_) {
    if (p.is_closure) {
      out << "closure";
      for (int id : p.closure_chain) out << ' ' << id;
      out << '\n';
      continue;
    }
    out << "rule " << types_[p.head].name << " ->";
    if (p.op >= 0) out << ' ' << types_[p.op].name;
    for (const auto& f : p.fields) out << ' ' << f.label << ':' << types_[f.type].name;
    out << '\n';
  }
  return out.str();
}

std::string Grammar::hash() const { return fnv1a_hex(to_text()); }

namespace {

std::vector<std::string> words(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

[[noreturn]] void line_error(std::size_t line, const std::string& what) {
  throw GrammarError("line " + std::to_string(line) + ": " + what);
}

}  // namespace

Grammar load_grammar(std::string_view text) {
  auto lines = split_lines(text);
  std::vector<std::pair<std::size_t, std::vector<std::string>>> decls;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view l = lines[i];
    if (auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
    auto w = words(l);
    if (!w.empty()) decls.emplace_back(i + 1, std::move(w));
  }

  Grammar g;
  std::string root_name;
  std::size_t root_line = 0;
  for (const auto& [ln, w] : decls) {
    if (w[0] == "type") {
      if (w.size() < 2 || w.size() > 3) line_error(ln, "parse error: expected 'type <name> [variable|op]'");
      NodeKind kind = NodeKind::nonterminal;
      if (w.size() == 3) {
        if (w[2] == "variable" || w[2] == "terminal") {
          kind = NodeKind::variable;
        } else if (w[2] == "op") {
          kind = NodeKind::op;
        } else {
          line_error(ln, "parse error: unknown node kind '" + w[2] + "'");
        }
      }
      try {
        g.add_type(w[1], kind);
      } catch (const GrammarError& e) {
        line_error(ln, e.what());
      }
    } else if (w[0] == "root") {
      if (w.size() != 2) line_error(ln, "parse error: expected 'root <name>'");
      root_name = w[1];
      root_line = ln;
    } else if (w[0] != "rule" && w[0] != "closure") {
      line_error(ln, "parse error: unknown directive '" + w[0] + "'");
    }
  }
  if (g.types().empty()) throw GrammarError("grammar declares no node types");
  if (!root_name.empty()) {
    auto id = g.find_type(root_name);
    if (!id) line_error(root_line, "unknown node type '" + root_name + "'");
    try {
      g.set_root(*id);
    } catch (const GrammarError& e) {
      line_error(root_line, e.what());
    }
  }

  auto lookup = [&](std::size_t ln, const std::string& name) {
    auto id = g.find_type(name);
    if (!id) line_error(ln, "unknown node type '" + name + "'");
    return *id;
  };

  for (const auto& [ln, w] : decls) {
    if (w[0] == "rule") {
      if (w.size() < 3 || w[2] != "->") line_error(ln, "parse error: expected 'rule <Head> -> ...'");
      int head = lookup(ln, w[1]);
      std::vector<Field> fields;
      int op = -1;
      for (std::size_t i = 3; i < w.size(); ++i) {
        auto colon = w[i].find(':');
        if (colon == std::string::npos) {
          int t = lookup(ln, w[i]);
          if (g.type(t).kind != NodeKind::op || w.size() != 4) {
            line_error(ln, "parse error: expected <label>:<Type>, got '" + w[i] + "'");
          }
          op = t;
          continue;
        }
        std::string label = w[i].substr(0, colon);
        if (label.empty()) line_error(ln, "parse error: empty field label");
        fields.push_back({label, lookup(ln, w[i].substr(colon + 1))});
      }
      try {
        g.add_production(head, std::move(fields), op);
      } catch (const GrammarError& e) {
        line_error(ln, e.what());
      }
    } else if (w[0] == "closure") {
      std::vector<int> chain;
      for (std::size_t i = 1; i < w.size(); ++i) {
        try {
          chain.push_back(std::stoi(w[i]));
        } catch (const std::exception&) {
          line_error(ln, "parse error: closure expects production ids");
        }
      }
      try {
        g.add_closure(std::move(chain));
      } catch (const GrammarError& e) {
        line_error(ln, e.what());
      }
    }
  }
  return g;
}

Grammar load_grammar_file(const std::string& path) { return load_grammar(read_file(path)); }

namespace {

enum class Usage { unknown, terminal, nonterminal };

void collect_usage(const AstNode& n, std::vector<std::string>& order,
                   std::map<std::string, Usage>& usage, std::vector<std::string>& ops) {
  Usage u = n.tokens.empty() ? Usage::nonterminal : Usage::terminal;
  if (!n.tokens.empty() && (!n.children.empty() || !n.op.empty())) {
    throw GrammarError("inconsistent node usage: '" + n.type + "' has both tokens and structure");
  }
  auto [it, inserted] = usage.emplace(n.type, u);
  if (inserted) {
    order.push_back(n.type);
  } else if (it->second != u) {
    throw GrammarError("inconsistent node usage: type '" + n.type +
                       "' used as both terminal and nonterminal");
  }
  if (!n.op.empty() && std::find(ops.begin(), ops.end(), n.op) == ops.end()) ops.push_back(n.op);
  for (const auto& c : n.children) collect_usage(c, order, usage, ops);
}

void collect_productions(const AstNode& n, Grammar& g) {
  int head = g.type_id(n.type);
  if (g.type(head).kind == NodeKind::nonterminal) {
    std::vector<Field> fields;
    for (const auto& c : n.children) fields.push_back({c.label, g.type_id(c.type)});
    int op = n.op.empty() ? -1 : g.type_id(n.op);
    if (!g.find_production(head, op, fields)) g.add_production(head, std::move(fields), op);
  }
  for (const auto& c : n.children) collect_productions(c, g);
}

}  // namespace

Grammar induce_grammar(std::span<const AstNode> asts, std::string_view root_type) {
  if (asts.empty()) throw GrammarError("empty corpus");
  std::vector<std::string> order;
  std::map<std::string, Usage> usage;
  std::vector<std::string> ops;
  for (const auto& a : asts) {
    if (a.type != root_type) {
      throw GrammarError("corpus tree rooted at '" + a.type + "', expected '" +
                         std::string(root_type) + "'");
    }
    collect_usage(a, order, usage, ops);
  }
  Grammar g;
  for (const auto& name : order) {
    g.add_type(name, usage[name] == Usage::terminal ? NodeKind::variable : NodeKind::nonterminal);
  }
  for (const auto& op : ops) {
    if (usage.count(op)) {
      throw GrammarError("inconsistent node usage: '" + op + "' is both a constructor and a node type");
    }
    g.add_type(op, NodeKind::op);
  }
  g.set_root(g.type_id(root_type));
  for (const auto& a : asts) collect_productions(a, g);
  return g;
}

AstNode resolve_rules(const AstNode& ast, const Grammar& g) {
  AstNode out = ast;
  int head = g.type_id(ast.type);
  if (g.type(head).kind == NodeKind::nonterminal && ast.complete) {
    std::vector<Field> fields;
    for (const auto& c : ast.children) fields.push_back({c.label, g.type_id(c.type)});
    int op = ast.op.empty() ? -1 : g.type_id(ast.op);
    auto id = g.find_production(head, op, fields);
    if (!id) throw GrammarError("no production for node '" + ast.type + "'");
    out.rule = *id;
  }
  for (std::size_t i = 0; i < ast.children.size(); ++i) {
    out.children[i] = resolve_rules(ast.children[i], g);
  }
  return out;
}

namespace {

std::optional<std::string> violation(const AstNode& n, const Grammar& g, bool require_complete,
                                     const std::string& path) {
  auto here = path.empty() ? n.type : path + "/" + n.type;
  auto tid = g.find_type(n.type);
  if (!tid) return here + ": unknown node type";
  const auto& t = g.type(*tid);
  switch (t.kind) {
    case NodeKind::op:
      return here + ": operation terminal used as a tree node";
    case NodeKind::variable:
      if (!n.children.empty()) return here + ": variable terminal with children";
      if (n.rule || !n.op.empty()) return here + ": variable terminal with a production";
      if (n.complete && n.tokens.empty()) return here + ": closed terminal with no tokens";
      if (!n.complete && require_complete) return here + ": unclosed terminal";
      return std::nullopt;
    case NodeKind::nonterminal:
      break;
  }
  if (!n.tokens.empty()) return here + ": nonterminal with tokens";
  if (!n.complete) {
    if (require_complete) return here + ": unexpanded nonterminal";
    if (!n.children.empty() || n.rule) return here + ": unexpanded nonterminal with content";
    return std::nullopt;
  }
  if (!n.rule) return here + ": nonterminal without an applied production";
  if (*n.rule < 0 || *n.rule >= static_cast<int>(g.productions().size())) {
    return here + ": rule id out of range";
  }
  const auto& p = g.production(*n.rule);
  if (p.is_closure) return here + ": closure production recorded on a node";
  if (p.head != *tid) return here + ": production head mismatch";
  std::string op = p.op >= 0 ? g.type(p.op).name : std::string();
  if (op != n.op) return here + ": constructor mismatch";
  if (p.fields.size() != n.children.size()) return here + ": child count mismatch";
  for (std::size_t i = 0; i < p.fields.size(); ++i) {
    const auto& c = n.children[i];
    if (c.label != p.fields[i].label) return here + ": child label mismatch at " + std::to_string(i);
    if (c.type != g.type(p.fields[i].type).name) {
      return here + ": child type mismatch at " + std::to_string(i);
    }
    if (auto v = violation(c, g, require_complete, here)) return v;
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> ast_violation(const AstNode& ast, const Grammar& g, bool require_complete) {
  return violation(ast, g, require_complete, "");
}

}  // namespace synforge
