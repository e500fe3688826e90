#include "synforge/fixtures.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <random>
#include <set>

#include "synforge/error.hpp"
#include "synforge/transition.hpp"
#include "synforge/util.hpp"

namespace synforge {

namespace {

// Index picks use the raw engine output so the corpora do not depend on the
// standard library's distribution implementations.
class Picker {
 public:
  explicit Picker(std::uint64_t seed) : rng_(seed) {}

  std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
  bool coin() { return (rng_() >> 11) & 1U; }

  template <typename T>
  const T& pick(const std::vector<T>& pool) {
    return pool[below(pool.size())];
  }

  // Picks from `pool` avoiding everything in `taken`.
  std::string fresh(const std::vector<std::string>& pool, std::initializer_list<std::string> taken) {
    for (;;) {
      const auto& w = pick(pool);
      if (std::find(taken.begin(), taken.end(), w) == taken.end()) return w;
    }
  }

 private:
  std::mt19937_64 rng_;
};

const std::vector<std::string> kVars = {
    "my_list", "items",  "data",    "result", "total",  "count",   "values", "name",   "text",
    "path",    "config", "user",    "node",   "value",  "key",     "index",  "size",   "output",
    "buffer",  "line",   "word",    "numbers", "record", "entry",  "row",    "column", "message",
    "request", "response", "token", "parent", "child",  "queue",   "stack",  "cache",  "options",
    "header",  "score",  "limit",   "width"};
const std::vector<std::string> kFuncs = {"sorted", "len", "print", "open", "range", "sum", "max",
                                         "min",    "list", "str",  "int",  "float", "reversed",
                                         "enumerate", "set", "abs"};
const std::vector<std::string> kMethods = {"append", "split", "join",  "lower", "strip",   "get",
                                           "update", "write", "read",  "extend", "pop",    "remove",
                                           "keys",   "format", "replace", "encode"};
const std::vector<std::string> kClasses = {"DataLoader", "HttpClient", "TextReader", "ConfigParser",
                                           "EventQueue"};
const std::vector<std::string> kNumbers = {"0", "1", "2", "3", "4", "5", "7", "8", "10", "12",
                                           "16", "20", "42", "100", "0.5", "3.5"};
const std::vector<std::string> kStrings = {"cache entry", "utf-8", "hello world", "r", "w",
                                           "default", "error message", ",", "a+", "done",
                                           "file not found", "id", "status code", "tmp dir"};
const std::vector<std::string> kKeywords = {"key", "default", "sep", "end", "reverse", "mode"};
const std::vector<std::string> kFields = {"name", "size", "value", "parent", "status", "count"};

struct Op {
  const char* words;
  const char* sym;
};
const std::vector<Op> kOps = {{"plus", "+"}, {"minus", "-"}, {"times", "*"}, {"divided by", "/"}};

using Template = std::function<RawExample(Picker&)>;

std::string squote(const std::string& s) { return "'" + s + "'"; }

std::vector<Template> minipy_templates() {
  std::vector<Template> t;
  t.push_back([](Picker& p) {
    auto x = p.pick(kVars);
    if (p.coin()) return RawExample{"", "sort " + x + " in reverse order", "sorted(" + x + ", reverse=True)"};
    auto y = p.fresh(kVars, {x});
    return RawExample{"", "sort " + x + " in reverse order and store it in " + y,
                      y + " = sorted(" + x + ", reverse=True)"};
  });
  t.push_back([](Picker& p) {
    auto f = p.pick(kFuncs), a = p.pick(kVars);
    return RawExample{"", "call the function " + f + " with argument " + a, f + "(" + a + ")"};
  });
  t.push_back([](Picker& p) {
    auto f = p.pick(kFuncs), a = p.pick(kVars), b = p.fresh(kVars, {a});
    return RawExample{"", "call " + f + " with arguments " + a + " and " + b, f + "(" + a + ", " + b + ")"};
  });
  t.push_back([](Picker& p) {
    auto x = p.pick(kVars), n = p.pick(kNumbers);
    if (p.coin()) return RawExample{"", "assign " + n + " to " + x, x + " = " + n};
    return RawExample{"", "set " + x + " to " + n + ".", x + " = " + n};
  });
  t.push_back([](Picker& p) {
    auto x = p.pick(kVars), s = p.pick(kStrings);
    return RawExample{"", x + " is a string " + squote(s), x + " = " + squote(s)};
  });
  t.push_back([](Picker& p) {
    auto o = p.pick(kVars), m = p.pick(kMethods), a = p.fresh(kVars, {o});
    return RawExample{"", "call the method " + o + "." + m + " with argument " + a, o + "." + m + "(" + a + ")"};
  });
  t.push_back([](Picker& p) {
    auto o = p.pick(kVars), m = p.pick(kMethods);
    return RawExample{"", "call the method " + o + "." + m, o + "." + m + "()"};
  });
  t.push_back([](Picker& p) {
    auto x = p.pick(kVars), f = p.pick(kFuncs), y = p.fresh(kVars, {x});
    return RawExample{"", "if " + x + " is true , call " + f + " with " + y, "if " + x + ":\n    " + f + "(" + y + ")"};
  });
  t.push_back([](Picker& p) {
    auto x = p.pick(kVars), y = p.fresh(kVars, {x});
    auto n = p.pick(kNumbers), m = p.pick(kNumbers);
    return RawExample{"", "if " + x + " , set " + y + " to " + n + " , otherwise set " + y + " to " + m,
                      "if " + x + ":\n    " + y + " = " + n + "\nelse:\n    " + y + " = " + m};
  });
  t.push_back([](Picker& p) {
    auto v = p.pick(kVars), xs = p.fresh(kVars, {v}), f = p.pick(kFuncs);
    return RawExample{"", "for every " + v + " in " + xs + " , call " + f + " with " + v,
                      "for " + v + " in " + xs + ":\n    " + f + "(" + v + ")"};
  });
  t.push_back([](Picker& p) {
    auto v = p.pick(kVars), acc = p.fresh(kVars, {v}), n = p.pick(kNumbers);
    if (n.find('.') != std::string::npos) n = "10";
    return RawExample{"", "for every " + v + " in range " + n + " , add " + v + " to " + acc,
                      "for " + v + " in range(" + n + "):\n    " + acc + " = " + acc + " + " + v};
  });
  t.push_back([](Picker& p) {
    auto x = p.pick(kVars), a = p.fresh(kVars, {x});
    auto b = p.coin() ? p.pick(kNumbers) : p.fresh(kVars, {x, a});
    const auto& op = p.pick(kOps);
    return RawExample{"", "set " + x + " to " + a + " " + op.words + " " + b,
                      x + " = " + a + " " + op.sym + " " + b};
  });
  t.push_back([](Picker& p) {
    auto x = p.pick(kVars), a = p.fresh(kVars, {x}), n = p.pick(kNumbers);
    const auto& op = p.pick(kOps);
    return RawExample{"", "define " + x + " as a lambda function with argument " + a + " that returns " + a +
                              " " + op.words + " " + n,
                      x + " = lambda " + a + ": " + a + " " + op.sym + " " + n};
  });
  t.push_back([](Picker& p) {
    auto a = p.pick(kVars), xs = p.fresh(kVars, {a});
    return RawExample{"", "append " + a + " to " + xs, xs + ".append(" + a + ")"};
  });
  t.push_back([](Picker& p) {
    auto f = p.pick(kFuncs), a = p.pick(kVars), k = p.pick(kKeywords), v = p.fresh(kVars, {a});
    return RawExample{"", "call " + f + " with " + a + " and " + k + " set to " + v,
                      f + "(" + a + ", " + k + "=" + v + ")"};
  });
  t.push_back([](Picker& p) {
    auto s = p.pick(kStrings), x = p.pick(kVars);
    return RawExample{"", "open the file " + squote(s) + " and assign the result to " + x,
                      x + " = open(" + squote(s) + ")"};
  });
  t.push_back([](Picker& p) {
    auto s = p.pick(kStrings), d = p.pick(kVars), x = p.fresh(kVars, {d});
    return RawExample{"", "get the value of key " + squote(s) + " from " + d + " and store it in " + x,
                      x + " = " + d + ".get(" + squote(s) + ")"};
  });
  t.push_back([](Picker& p) {
    auto x = p.pick(kVars);
    return RawExample{"", "print the length of " + x, "print(len(" + x + "))"};
  });
  t.push_back([](Picker& p) {
    auto c = p.pick(kClasses), a = p.pick(kVars), x = p.fresh(kVars, {a});
    return RawExample{"", "create a new " + c + " object from " + a + " and call it " + x,
                      x + " = " + c + "(" + a + ")"};
  });
  t.push_back([](Picker& p) {
    auto o = p.pick(kVars), f = p.pick(kFields), v = p.pick(kNumbers);
    return RawExample{"", "set " + o + "." + f + " to " + v, o + "." + f + " = " + v};
  });
  t.push_back([](Picker& p) {
    auto x = p.pick(kVars), s = p.pick(kStrings), y = p.fresh(kVars, {x});
    return RawExample{"", "split " + x + " by " + squote(s) + " and store the result in " + y,
                      y + " = " + x + ".split(" + squote(s) + ")"};
  });
  t.push_back([](Picker& p) {
    auto v = p.pick(kVars), xs = p.fresh(kVars, {v}), ys = p.fresh(kVars, {v, xs});
    return RawExample{"", "for every " + v + " in " + xs + " , if " + v + " , append " + v + " to " + ys,
                      "for " + v + " in " + xs + ":\n    if " + v + ":\n        " + ys + ".append(" + v + ")"};
  });
  return t;
}

std::vector<std::string> words_of(const std::string& camel) {
  std::vector<std::string> out;
  for (auto w : tokenize_terminal(camel)) {
    for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(std::move(w));
  }
  return out;
}

std::string phrase(const std::string& camel) {
  std::string out;
  for (const auto& w : words_of(camel)) out += (out.empty() ? "" : " ") + w;
  return out;
}

struct Channel {
  std::string name;
  std::vector<std::string> functions;
};

std::vector<Channel> channels(const Grammar& g, const std::string& slot, const std::string& suffix) {
  auto slot_id = g.find_type(slot);
  if (!slot_id) throw GrammarError("FlowDSL grammar lacks type '" + slot + "'");
  std::vector<Channel> out;
  for (int pid : g.productions_for(*slot_id)) {
    const auto& p = g.production(pid);
    if (p.is_closure || p.fields.size() != 1) continue;
    const auto& name = g.type(p.fields[0].type).name;
    if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
      throw GrammarError("FlowDSL channel type '" + name + "' lacks suffix '" + suffix + "'");
    }
    Channel c{name.substr(0, name.size() - suffix.size()), {}};
    for (int fid : g.productions_for(p.fields[0].type)) {
      if (g.production(fid).op >= 0) c.functions.push_back(g.type(g.production(fid).op).name);
    }
    if (!c.functions.empty()) out.push_back(std::move(c));
  }
  if (out.empty()) throw GrammarError("FlowDSL grammar declares no " + slot + " channels");
  return out;
}

const std::vector<std::string> kRareHeads = {"zeta", "quix", "blorf", "vex", "plim", "trog", "kexo", "snarv", "wub", "jolt",
                                             "frin", "gask", "mulp", "drax", "yomp"};
const std::vector<std::string> kRareTails = {"alpha", "node", "tally", "buf", "ident", "span"};

std::string id_for(const std::string& prefix, std::size_t i, std::size_t n) {
  std::string digits = std::to_string(i);
  std::size_t width = std::to_string(n > 0 ? n - 1 : 0).size();
  return prefix + std::string(width - std::min(width, digits.size()), '0') + digits;
}

}  // namespace

std::vector<RawExample> generate_minipy(std::uint64_t seed, std::size_t n) {
  auto templates = minipy_templates();
  Picker p(seed);
  std::vector<RawExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto ex = templates[i % templates.size()](p);
    ex.id = id_for("minipy-", i, n);
    out.push_back(std::move(ex));
  }
  // Template order is round-robin; shuffle so every split sees all templates.
  for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[p.below(i)]);
  return out;
}

std::vector<RawExample> generate_flowdsl(const Grammar& flow, std::uint64_t seed, std::size_t n) {
  auto triggers = channels(flow, "trigger", "_trigger");
  auto actions = channels(flow, "action", "_action");
  Picker p(seed);
  std::vector<RawExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& tc = p.pick(triggers);
    const auto& tf = p.pick(tc.functions);
    const auto& ac = p.pick(actions);
    const auto& af = p.pick(ac.functions);
    auto trig = phrase(tf) + " on " + phrase(tc.name);
    auto act = phrase(af) + " in " + phrase(ac.name);
    std::string nl;
    switch (p.below(3)) {
      case 0: nl = "if " + trig + " , then " + act; break;
      case 1: nl = "when " + trig + " " + act; break;
      default: nl = act + " whenever " + trig; break;
    }
    out.push_back({id_for("flowdsl-", i, n), nl,
                   "IF " + tc.name + "." + tf + " THEN " + ac.name + "." + af});
  }
  return out;
}

std::vector<RawExample> generate_oov_copy(std::uint64_t seed, std::size_t n) {
  Picker p(seed);
  std::vector<std::string> rare;
  for (const auto& h : kRareHeads) {
    for (const auto& t : kRareTails) rare.push_back(h + "_" + t);
  }
  if (n > rare.size()) throw DataError("OOV copy set larger than the rare-name pool");
  for (std::size_t i = rare.size(); i > 1; --i) std::swap(rare[i - 1], rare[p.below(i)]);
  std::vector<RawExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = rare[i];
    RawExample ex;
    switch (i % 4) {
      case 0: {
        auto f = p.pick(kFuncs);
        ex = {"", "call the function " + f + " with argument " + r, f + "(" + r + ")"};
        break;
      }
      case 1: {
        auto v = p.pick(kNumbers);
        ex = {"", "assign " + v + " to " + r, r + " = " + v};
        break;
      }
      case 2: {
        auto xs = p.pick(kVars);
        ex = {"", "append " + r + " to " + xs, xs + ".append(" + r + ")"};
        break;
      }
      default:
        ex = {"", "print the length of " + r, "print(len(" + r + "))"};
        break;
    }
    ex.id = id_for("oov-", i, n);
    out.push_back(std::move(ex));
  }
  return out;
}

std::string chain_grammar_text() {
  return "# One length-three unary chain (Wrap -> Mid -> Leaf -> tok) per tree.\n"
         "type root\n"
         "type Wrap\n"
         "type Mid\n"
         "type Leaf\n"
         "type Pair\n"
         "type tok variable\n"
         "rule root -> head:Wrap tail:Pair\n"
         "rule Wrap -> inner:Mid\n"
         "rule Mid -> inner:Leaf\n"
         "rule Leaf -> value:tok\n"
         "rule Pair -> first:tok second:tok\n";
}

std::vector<AstNode> generate_chain_trees(const Grammar& g, std::uint64_t seed, std::size_t n) {
  static const std::vector<std::string> kWords = {"alpha", "beta", "gamma", "delta", "eps", "zeta"};
  Picker p(seed);
  auto tokens = [&] {
    AstNode t;
    t.type = "tok";
    std::size_t k = 1 + p.below(3);
    for (std::size_t i = 0; i < k; ++i) t.tokens.push_back(p.pick(kWords));
    return t;
  };
  auto node = [](std::string type, std::string label, std::vector<AstNode> kids) {
    AstNode a;
    a.type = std::move(type);
    a.children = std::move(kids);
    a.label = std::move(label);
    return a;
  };
  std::vector<AstNode> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto v = tokens();
    v.label = "value";
    auto first = tokens();
    first.label = "first";
    auto second = tokens();
    second.label = "second";
    auto leaf = node("Leaf", "inner", {v});
    auto mid = node("Mid", "inner", {leaf});
    auto wrap = node("Wrap", "head", {mid});
    auto pair = node("Pair", "tail", {first, second});
    out.push_back(resolve_rules(node("root", "", {wrap, pair}), g));
  }
  return out;
}

std::vector<RawExample> select_producible(const std::vector<RawExample>& pool, const Grammar& g, Language lang,
                                          std::size_t n, int d_source, int d_terminal) {
  std::vector<Example> parsed;
  for (const auto& r : pool) parsed.push_back(make_example(r, g, lang));
  std::set<std::size_t> banned;
  for (;;) {
    std::vector<std::size_t> chosen;
    for (std::size_t i = 0; i < pool.size() && chosen.size() < n; ++i) {
      if (!banned.count(i)) chosen.push_back(i);
    }
    if (chosen.size() < n) throw DataError("not enough producible examples for the requested subset");
    std::vector<Example> subset;
    for (auto i : chosen) subset.push_back(parsed[i]);
    auto vocab = build_vocab(subset, d_source, d_terminal);
    bool stable = true;
    for (auto i : chosen) {
      if (!producible(parsed[i], vocab)) {
        banned.insert(i);
        stable = false;
      }
    }
    if (stable) {
      std::vector<RawExample> out;
      for (auto i : chosen) out.push_back(pool[i]);
      return out;
    }
  }
}

nlohmann::ordered_json write_fixtures(const std::filesystem::path& dir, std::uint64_t seed) {
  namespace fs = std::filesystem;
  auto minipy_g = load_grammar_file((dir / "minipy.grammar").string());
  auto flow_g = load_grammar_file((dir / "flowdsl.grammar").string());

  nlohmann::ordered_json manifest;
  manifest["seed"] = seed;
  manifest["grammars"]["minipy"] = {{"file", "minipy.grammar"},
                                    {"hash", minipy_g.hash()},
                                    {"productions", minipy_g.productions().size()},
                                    {"node_types", minipy_g.types().size()}};
  manifest["grammars"]["flowdsl"] = {{"file", "flowdsl.grammar"},
                                     {"hash", flow_g.hash()},
                                     {"productions", flow_g.productions().size()},
                                     {"node_types", flow_g.types().size()}};

  auto emit = [&](const std::string& rel, const std::vector<RawExample>& rows) {
    write_file(dir / rel, to_jsonl(rows));
    manifest["files"][rel] = {{"examples", rows.size()}, {"hash", fnv1a_hex(to_jsonl(rows))}};
  };
  auto split3 = [&](const std::string& lang, const std::vector<RawExample>& all, std::size_t train,
                    std::size_t dev) {
    emit(lang + "/train.jsonl", {all.begin(), all.begin() + static_cast<long>(train)});
    emit(lang + "/dev.jsonl", {all.begin() + static_cast<long>(train), all.begin() + static_cast<long>(train + dev)});
    emit(lang + "/test.jsonl", {all.begin() + static_cast<long>(train + dev), all.end()});
  };

  auto minipy = generate_minipy(seed, 200);
  split3("minipy", minipy, 160, 20);
  std::vector<RawExample> train(minipy.begin(), minipy.begin() + 160);
  emit("minipy/overfit30.jsonl", select_producible(train, minipy_g, Language::minipy, 30, 3, 3));

  split3("flowdsl", generate_flowdsl(flow_g, seed + 1, 100), 80, 10);
  emit("oov_copy.jsonl", generate_oov_copy(seed + 2, 20));

  Grammar chain_g = load_grammar(chain_grammar_text());
  write_file(dir / "chain/chain.grammar", chain_grammar_text());
  auto trees = generate_chain_trees(chain_g, seed + 3, 40);
  write_file(dir / "chain/trees.txt", serialize_all(trees));
  manifest["files"]["chain/trees.txt"] = {{"trees", trees.size()}, {"hash", fnv1a_hex(serialize_all(trees))}};
  manifest["grammars"]["chain"] = {{"file", "chain/chain.grammar"},
                                   {"hash", chain_g.hash()},
                                   {"productions", chain_g.productions().size()},
                                   {"node_types", chain_g.types().size()}};

  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace synforge
