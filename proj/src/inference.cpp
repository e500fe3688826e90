#include "synforge/inference.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "synforge/error.hpp"

namespace synforge {

using nn::Mat;
using nn::Vec;

double Hypothesis::ranking_score(bool length_normalize) const {
  if (!length_normalize || actions.empty()) return score;
  return score / static_cast<double>(actions.size());
}

std::pair<int, int> action_key(const Action& a) {
  switch (a.kind) {
    case ActionKind::rule: return {0, a.arg};
    case ActionKind::close: return {1, 0};
    case ActionKind::vocab: return {2, a.arg};
    case ActionKind::copy: return {3, a.arg};
  }
  return {4, 0};
}

namespace {

struct Scored {
  Action action;
  double logp;
};

// Candidate next actions for one hypothesis, with GenToken routes merged per
// surface token.
std::vector<Scored> expand(const Model& model, const StepOutput& out, int col, const DerivationState& state,
                           std::span<const std::string> source, const DecodeOptions& opts) {
  const Vocab& vocab = model.vocab();
  auto legal = legal_actions(state, model.grammar(), vocab.terminal_size(), static_cast<int>(source.size()),
                             opts.max_terminal_tokens);
  std::vector<Scored> res;
  std::map<std::string, std::vector<double>> routes;
  std::map<std::string, std::vector<int>> positions;
  for (const auto& a : legal) {
    switch (a.kind) {
      case ActionKind::rule:
        res.push_back({a, out.rule_logp(a.arg, col)});
        break;
      case ActionKind::close:
        res.push_back({a, out.sel_logp(0, col) + out.gen_logp(kCloseTokenId, col)});
        break;
      case ActionKind::vocab:
        routes[vocab.terminal_word(a.arg)].push_back(out.sel_logp(0, col) + out.gen_logp(a.arg, col));
        break;
      case ActionKind::copy: {
        const auto& tok = source[static_cast<std::size_t>(a.arg)];
        routes[tok].push_back(out.sel_logp(1, col) + out.ptr_logp(a.arg, col));
        positions[tok].push_back(a.arg);
        break;
      }
    }
  }
  for (auto& [tok, lps] : routes) {
    auto id = vocab.terminal_id(tok);
    auto pos = positions.find(tok);
    Action a = id && *id >= kFirstWordId ? Action::gen_vocab(*id, tok) : Action::gen_copy(pos->second.front(), tok);
    if (pos != positions.end()) a.copy_positions = pos->second;
    res.push_back({std::move(a), nn::logsumexp(lps)});
  }
  return res;
}

struct Candidate {
  int parent;
  Action action;
  double score;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  auto ka = action_key(a.action), kb = action_key(b.action);
  if (ka != kb) return ka < kb;
  return a.parent < b.parent;
}

// Decoder-side memory: s_t and the embedding of a_t for every applied step.
struct History {
  std::vector<Vec> s;
  std::vector<Vec> a;
};

struct Live {
  DerivationState state;
  std::vector<Action> actions;
  double score = 0.0;
  Vec h, c;
  std::vector<int> steps;  // index into History per applied action
};

StepInput batch_input(const Model& model, std::span<const Live> beam, const History& hist) {
  const auto B = static_cast<Eigen::Index>(beam.size());
  const int R = model.config().rnn_size, E = model.config().embed_size;
  StepInput in;
  in.prev_action.resize(E, B);
  in.parent = Mat::Zero(model.parent_size(), B);
  in.h.resize(R, B);
  in.c.resize(R, B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const Live& l = beam[static_cast<std::size_t>(j)];
    in.prev_action.col(j) = l.steps.empty() ? model.start_embedding() : hist.a[static_cast<std::size_t>(l.steps.back())];
    int p = l.state.frontier_parent_step();
    if (p > 0) {
      auto k = static_cast<std::size_t>(l.steps[static_cast<std::size_t>(p - 1)]);
      in.parent.block(0, j, R, 1) = hist.s[k];
      in.parent.block(R, j, E, 1) = hist.a[k];
    }
    in.frontier_type.push_back(l.state.frontier_type());
    in.h.col(j) = l.h;
    in.c.col(j) = l.c;
  }
  return in;
}

Live initial_live(const Model& model) {
  Live l{DerivationState(model.grammar()), {}, 0.0, Vec::Zero(model.config().rnn_size),
         Vec::Zero(model.config().rnn_size), {}};
  return l;
}

Live advance(const Model& model, const Live& from, const Candidate& cand, const StepOutput& out, History& hist) {
  Live l = from;
  l.state.apply(cand.action, model.grammar());
  l.actions.push_back(cand.action);
  l.score = cand.score;
  l.h = out.h.col(cand.parent);
  l.c = out.c.col(cand.parent);
  hist.s.push_back(l.h);
  hist.a.push_back(model.action_embedding(cand.action));
  l.steps.push_back(static_cast<int>(hist.s.size()) - 1);
  return l;
}

Hypothesis finish(const Model& model, const Live& l) {
  Hypothesis h;
  h.actions = l.actions;
  h.score = l.score;
  h.complete = l.state.is_complete();
  if (h.complete) h.ast = l.state.to_ast(model.grammar());
  return h;
}

void check(std::span<const std::string> source, const DecodeOptions& opts) {
  if (source.empty()) throw ModelError("empty input sentence");
  if (opts.beam_size < 1) throw ModelError("beam size must be >= 1");
  if (opts.max_steps < 1) throw ModelError("max steps must be >= 1");
  if (opts.max_terminal_tokens < 1) throw ModelError("max terminal tokens must be >= 1");
}

}  // namespace

DecodeResult beam_search(const Model& model, std::span<const std::string> source, const DecodeOptions& opts) {
  check(source, opts);
  const auto K = static_cast<std::size_t>(opts.beam_size);
  auto enc = model.encode(source);
  History hist;
  std::vector<Live> beam{initial_live(model)};
  std::vector<Live> finished;
  DecodeResult res;
  // Scores only fall as a hypothesis grows, so once K are finished the search
  // may stop as soon as no live hypothesis outscores the best finished one.
  auto settled = [&] {
    if (finished.size() < K) return false;
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& l : finished) top = std::max(top, l.score);
    for (const auto& l : beam) {
      if (l.score > top) return false;
    }
    return true;
  };
  while (!beam.empty() && !settled() && res.steps < opts.max_steps) {
    auto out = model.step(enc, batch_input(model, beam, hist));
    ++res.steps;
    std::vector<Candidate> cands;
    for (std::size_t j = 0; j < beam.size(); ++j) {
      for (auto& s : expand(model, out, static_cast<int>(j), beam[j].state, source, opts)) {
        cands.push_back({static_cast<int>(j), std::move(s.action), beam[j].score + s.logp});
      }
    }
    auto keep = std::min(K, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), better);
    std::vector<Live> next;
    for (std::size_t i = 0; i < keep; ++i) {
      Live l = advance(model, beam[static_cast<std::size_t>(cands[i].parent)], cands[i], out, hist);
      (l.state.is_complete() ? finished : next).push_back(std::move(l));
    }
    beam = std::move(next);
  }
  if (finished.empty()) {
    res.incomplete = true;
    if (!beam.empty()) res.hypotheses.push_back(finish(model, beam.front()));
    return res;
  }
  for (const auto& l : finished) res.hypotheses.push_back(finish(model, l));
  std::stable_sort(res.hypotheses.begin(), res.hypotheses.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    return a.ranking_score(opts.length_normalize) > b.ranking_score(opts.length_normalize);
  });
  if (res.hypotheses.size() > K) res.hypotheses.resize(K);
  return res;
}

DecodeResult greedy_decode(const Model& model, std::span<const std::string> source, const DecodeOptions& opts) {
  check(source, opts);
  auto enc = model.encode(source);
  History hist;
  Live cur = initial_live(model);
  DecodeResult res;
  while (!cur.state.is_complete() && res.steps < opts.max_steps) {
    auto out = model.step(enc, batch_input(model, std::span<const Live>(&cur, 1), hist));
    ++res.steps;
    std::optional<Candidate> best;
    for (auto& s : expand(model, out, 0, cur.state, source, opts)) {
      Candidate c{0, std::move(s.action), cur.score + s.logp};
      if (!best || better(c, *best)) best = std::move(c);
    }
    if (!best) break;
    cur = advance(model, cur, *best, out, hist);
  }
  res.incomplete = !cur.state.is_complete();
  res.hypotheses.push_back(finish(model, cur));
  return res;
}

Prediction predict(const Model& model, const Example& ex, Language lang, const DecodeOptions& opts) {
  Prediction p;
  p.result = beam_search(model, ex.source, opts);
  if (p.result.incomplete || p.result.hypotheses.empty()) return p;
  p.ast = p.result.hypotheses.front().ast;
  try {
    p.code = restore_placeholders(render(*p.ast, lang), ex.table);
    p.ok = true;
  } catch (const DataError&) {
    // A placeholder absent from this description: keep the raw rendering.
    p.code = render(*p.ast, lang);
  }
  return p;
}

nlohmann::ordered_json decode_record(const DecodeResult& r, const Grammar& g) {
  nlohmann::ordered_json j;
  j["incomplete"] = r.incomplete;
  j["steps"] = r.steps;
  auto hyps = nlohmann::ordered_json::array();
  for (const auto& h : r.hypotheses) {
    nlohmann::ordered_json hj;
    hj["score"] = h.score;
    hj["complete"] = h.complete;
    auto tr = trace_actions(g, h.actions);
    auto acts = nlohmann::json::array();
    for (std::size_t t = 0; t < h.actions.size(); ++t) {
      acts.push_back(action_record(h.actions[t], static_cast<int>(t) + 1, tr.parent_step[t]));
    }
    hj["actions"] = std::move(acts);
    if (h.ast) hj["ast"] = serialize(*h.ast);
    hyps.push_back(std::move(hj));
  }
  j["hypotheses"] = std::move(hyps);
  return j;
}

}  // namespace synforge
