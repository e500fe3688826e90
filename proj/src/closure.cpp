#include "synforge/closure.hpp"

#include <map>
#include <set>

#include "synforge/error.hpp"

namespace synforge {

namespace {

bool is_unary(const Production& p) { return !p.is_closure && p.fields.size() == 1; }

}  // namespace

std::vector<std::vector<int>> unary_chains(const Grammar& g, std::span<const Action> actions) {
  std::vector<int> rules;  // base productions, -1 for GenToken steps
  for (const auto& a : actions) {
    if (a.kind != ActionKind::rule) {
      rules.push_back(-1);
      continue;
    }
    const auto& p = g.production(a.arg);
    if (p.is_closure) {
      rules.insert(rules.end(), p.closure_chain.begin(), p.closure_chain.end());
    } else {
      rules.push_back(p.id);
    }
  }
  std::vector<std::vector<int>> chains;
  std::vector<int> run;
  auto flush = [&] {
    if (run.size() >= 2) chains.push_back(run);
    run.clear();
  };
  for (int id : rules) {
    if (id < 0 || !is_unary(g.production(id))) {
      flush();
      continue;
    }
    if (!run.empty()) {
      const auto& prev = g.production(run.back());
      if (prev.fields[0].type != g.production(id).head) flush();
    }
    run.push_back(id);
    // A unary production over a terminal ends the chain.
    if (g.type(g.production(id).fields[0].type).kind != NodeKind::nonterminal) flush();
  }
  flush();
  return chains;
}

Grammar unary_closure(const Grammar& g, std::span<const std::vector<Action>> corpus, int k) {
  if (k < 1) throw GrammarError("closure threshold k must be >= 1");
  std::map<std::vector<int>, int> counts;
  std::vector<std::vector<int>> order;
  for (const auto& seq : corpus) {
    for (auto& chain : unary_chains(g, seq)) {
      if (counts[chain]++ == 0) order.push_back(chain);
    }
  }
  Grammar out = g;
  for (const auto& chain : order) {
    if (counts[chain] >= k && !out.find_closure(chain)) out.add_closure(chain);
  }
  return out;
}

GrammarStats grammar_stats(const Grammar& g, std::span<const AstNode> corpus) {
  GrammarStats s;
  s.productions = g.productions().size();
  s.node_types = g.types().size();
  s.examples = corpus.size();
  std::set<std::string> vocab;
  std::size_t actions = 0, nodes = 0;
  auto gather = [&](auto&& self, const AstNode& n) -> void {
    for (const auto& t : n.tokens) vocab.insert(t);
    for (const auto& c : n.children) self(self, c);
  };
  for (const auto& a : corpus) {
    actions += oracle_actions(a, g).size();
    nodes += node_count(a);
    gather(gather, a);
  }
  s.terminal_vocab = vocab.size();
  if (!corpus.empty()) {
    s.avg_actions = static_cast<double>(actions) / static_cast<double>(corpus.size());
    s.avg_nodes = static_cast<double>(nodes) / static_cast<double>(corpus.size());
  }
  return s;
}

}  // namespace synforge
