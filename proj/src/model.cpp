#include "synforge/model.hpp"

#include <cmath>
#include <limits>

#include "synforge/error.hpp"

namespace synforge {

using nn::Mat;
using nn::Tape;
using nn::Vec;

nlohmann::ordered_json ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["embed_size"] = embed_size;
  j["node_embed_size"] = node_embed_size;
  j["rnn_size"] = rnn_size;
  j["encoder_size"] = encoder_size;
  j["scorer_size"] = scorer_size;
  j["dropout"] = dropout;
  j["masked_rule_softmax"] = masked_rule_softmax;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.embed_size = j.value("embed_size", c.embed_size);
  c.node_embed_size = j.value("node_embed_size", c.node_embed_size);
  c.rnn_size = j.value("rnn_size", c.rnn_size);
  c.encoder_size = j.value("encoder_size", c.encoder_size);
  c.scorer_size = j.value("scorer_size", c.scorer_size);
  c.dropout = j.value("dropout", c.dropout);
  c.masked_rule_softmax = j.value("masked_rule_softmax", c.masked_rule_softmax);
  return c;
}

Trace trace_actions(const Grammar& g, std::span<const Action> actions) {
  Trace tr;
  DerivationState s(g);
  for (const auto& a : actions) {
    tr.frontier_type.push_back(s.frontier_type());
    tr.parent_step.push_back(s.frontier_parent_step());
    s.apply(a, g);
  }
  return tr;
}

std::map<std::string, double> TokenDist::merged(const Vocab& vocab, std::span<const std::string> source) const {
  std::map<std::string, double> out;
  for (int w = 0; w < gen.size(); ++w) out[vocab.terminal_word(w)] += gen(w);
  for (std::size_t i = 0; i < source.size(); ++i) out[source[i]] += copy(static_cast<Eigen::Index>(i));
  return out;
}

Model::Model(Grammar g, Vocab v, ModelConfig cfg) : grammar_(std::move(g)), vocab_(std::move(v)), cfg_(cfg) {
  if (cfg_.embed_size < 1 || cfg_.node_embed_size < 1 || cfg_.rnn_size < 1 || cfg_.encoder_size < 1 ||
      cfg_.scorer_size < 1) {
    throw ModelError("model sizes must be >= 1");
  }
  if (cfg_.dropout < 0.0 || cfg_.dropout >= 1.0) throw ModelError("dropout must be in [0, 1)");
  const int E = cfg_.embed_size, N = cfg_.node_embed_size, R = cfg_.rnn_size, C = cfg_.encoder_size,
            S = cfg_.scorer_size;
  const int rules = static_cast<int>(grammar_.productions().size());
  const int types = static_cast<int>(grammar_.types().size());
  using nn::Init;
  auto& p = params_;
  id_.src_emb = p.add("src_emb", vocab_.source_size(), E, Init::glorot);
  id_.enc_f_w = p.add("enc_fwd_w", 4 * C, E + C, Init::recurrent);
  id_.enc_f_b = p.add("enc_fwd_b", 4 * C, 1, Init::zeros);
  id_.enc_b_w = p.add("enc_bwd_w", 4 * C, E + C, Init::recurrent);
  id_.enc_b_b = p.add("enc_bwd_b", 4 * C, 1, Init::zeros);
  id_.rule_emb = p.add("rule_emb", rules, E, Init::glorot);
  id_.token_emb = p.add("token_emb", vocab_.terminal_size(), E, Init::glorot);
  id_.node_emb = p.add("node_emb", types, N, Init::glorot);
  id_.start_emb = p.add("start_emb", E, 1, Init::glorot);
  id_.dec_w = p.add("dec_w", 4 * R, decoder_input_size() + R, Init::recurrent);
  id_.dec_b = p.add("dec_b", 4 * R, 1, Init::zeros);
  id_.att_wh = p.add("att_wh", S, 2 * C, Init::glorot);
  id_.att_wq = p.add("att_wq", S, R, Init::glorot);
  id_.att_b = p.add("att_b", S, 1, Init::zeros);
  id_.att_v = p.add("att_v", S, 1, Init::glorot);
  id_.rule_w = p.add("rule_w", E, R, Init::glorot);
  id_.rule_b = p.add("rule_b", E, 1, Init::zeros);
  id_.rule_bias = p.add("rule_bias", rules, 1, Init::zeros);
  id_.gen_w = p.add("gen_w", E, R + 2 * C, Init::glorot);
  id_.gen_b = p.add("gen_b", E, 1, Init::zeros);
  id_.gen_bias = p.add("gen_bias", vocab_.terminal_size(), 1, Init::zeros);
  id_.sel_w = p.add("sel_w", 2, R, Init::glorot);
  id_.sel_b = p.add("sel_b", 2, 1, Init::zeros);
  id_.ptr_wh = p.add("ptr_wh", S, 2 * C, Init::glorot);
  id_.ptr_wq = p.add("ptr_wq", S, R + 2 * C, Init::glorot);
  id_.ptr_b = p.add("ptr_b", S, 1, Init::zeros);
  id_.ptr_v = p.add("ptr_v", S, 1, Init::glorot);
}

int Model::decoder_input_size() const {
  // [a_{t-1} : c_t : p_t : n_{f_t}]
  return cfg_.embed_size + 2 * cfg_.encoder_size + parent_size() + cfg_.node_embed_size;
}

int Model::token_row(const Action& a) const {
  switch (a.kind) {
    case ActionKind::close:
      return kCloseTokenId;
    case ActionKind::vocab:
      if (a.arg < 0 || a.arg >= vocab_.terminal_size()) throw ModelError("terminal id out of range");
      return a.arg;
    case ActionKind::copy:
      return vocab_.terminal_id(a.token).value_or(kUnknownTokenId);
    case ActionKind::rule:
      break;
  }
  throw ModelError("not a GenToken action");
}

Vec Model::action_embedding(const Action& a) const {
  if (a.kind == ActionKind::rule) return params_[id_.rule_emb].value.row(a.arg).transpose();
  return params_[id_.token_emb].value.row(token_row(a)).transpose();
}

Vec Model::start_embedding() const { return params_[id_.start_emb].value.col(0); }

Vec Model::node_embedding(int type) const { return params_[id_.node_emb].value.row(type).transpose(); }

// ---------------------------------------------------------------------------
// Tape path

Tape::Var Model::nll(Tape& tape, std::span<const std::string> source, std::span<const Action> actions,
                     nn::Rng* dropout_rng) const {
  if (source.empty()) throw ModelError("empty input sentence");
  if (actions.empty()) throw ModelError("empty action sequence");
  const int C = cfg_.encoder_size, R = cfg_.rnn_size;
  const auto n = static_cast<int>(source.size());
  const bool drop = dropout_rng && cfg_.dropout > 0.0;

  // Encoder.
  std::vector<Tape::Var> emb;
  for (const auto& w : source) emb.push_back(tape.row(id_.src_emb, vocab_.source_id(w)));
  auto run = [&](int w, int b, bool reverse) {
    std::vector<Tape::Var> hs(static_cast<std::size_t>(n));
    Tape::Var h = tape.input(Mat::Zero(C, 1)), c = tape.input(Mat::Zero(C, 1));
    for (int k = 0; k < n; ++k) {
      int i = reverse ? n - 1 - k : k;
      auto hc = tape.lstm(w, b, emb[static_cast<std::size_t>(i)], h, c);
      h = tape.slice(hc, 0, C);
      c = tape.slice(hc, C, C);
      hs[static_cast<std::size_t>(i)] = h;
    }
    return hs;
  };
  auto fwd = run(id_.enc_f_w, id_.enc_f_b, false);
  auto bwd = run(id_.enc_b_w, id_.enc_b_b, true);
  std::vector<Tape::Var> cols;
  for (int i = 0; i < n; ++i) cols.push_back(tape.concat({fwd[static_cast<std::size_t>(i)], bwd[static_cast<std::size_t>(i)]}));
  auto H = tape.hcat(cols);
  auto att_keys = tape.matmul(id_.att_wh, H);
  auto ptr_keys = tape.matmul(id_.ptr_wh, H);
  auto att_v = tape.param(id_.att_v);
  auto ptr_v = tape.param(id_.ptr_v);

  auto tr = trace_actions(grammar_, actions);
  Mat in_mask;
  if (drop) in_mask = nn::dropout_mask(decoder_input_size(), 1, cfg_.dropout, *dropout_rng);

  std::vector<Tape::Var> s_hist(actions.size() + 1), a_hist(actions.size() + 1);
  Tape::Var h = tape.input(Mat::Zero(R, 1)), c = tape.input(Mat::Zero(R, 1));
  std::vector<Tape::Var> terms;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const Action& a = actions[t];
    Tape::Var prev = t == 0 ? tape.col(id_.start_emb, 0) : a_hist[t];
    auto q = tape.add_bias(tape.matmul(id_.att_wq, h), id_.att_b);
    auto alpha = tape.softmax(tape.transpose_product(tape.tanh(tape.add_col(att_keys, q)), att_v));
    auto ctx = tape.product(H, alpha);
    int p = tr.parent_step[t];
    Tape::Var parent = p == 0 ? tape.input(Mat::Zero(parent_size(), 1))
                              : tape.concat({s_hist[static_cast<std::size_t>(p)], a_hist[static_cast<std::size_t>(p)]});
    auto x = tape.concat({prev, ctx, parent, tape.row(id_.node_emb, tr.frontier_type[t])});
    if (drop) x = tape.mul_const(x, in_mask);
    auto hc = tape.lstm(id_.dec_w, id_.dec_b, x, h, c);
    h = tape.slice(hc, 0, R);
    c = tape.slice(hc, R, R);
    s_hist[t + 1] = h;
    Tape::Var out = h;
    if (drop) out = tape.mul_const(h, nn::dropout_mask(R, 1, cfg_.dropout, *dropout_rng));

    if (a.kind == ActionKind::rule) {
      auto g = tape.tanh(tape.add_bias(tape.matmul(id_.rule_w, out), id_.rule_b));
      auto scores = tape.add(tape.matmul(id_.rule_emb, g), tape.param(id_.rule_bias));
      if (cfg_.masked_rule_softmax) {
        std::vector<Tape::Var> legal;
        for (int r : grammar_.productions_for(tr.frontier_type[t])) legal.push_back(tape.pick(scores, r));
        terms.push_back(tape.add(tape.pick(scores, a.arg), tape.neg(tape.logsumexp(legal))));
      } else {
        terms.push_back(tape.pick(tape.log_softmax(scores), a.arg));
      }
      a_hist[t + 1] = tape.row(id_.rule_emb, a.arg);
      continue;
    }

    auto sc = tape.concat({out, ctx});
    auto sel = tape.log_softmax(tape.add_bias(tape.matmul(id_.sel_w, out), id_.sel_b));
    std::vector<Tape::Var> routes;
    const bool copy_only = a.kind == ActionKind::copy;
    if (!copy_only) {
      auto gh = tape.tanh(tape.add_bias(tape.matmul(id_.gen_w, sc), id_.gen_b));
      auto gen = tape.log_softmax(tape.add(tape.matmul(id_.token_emb, gh), tape.param(id_.gen_bias)));
      routes.push_back(tape.add(tape.pick(sel, 0), tape.pick(gen, token_row(a))));
    }
    std::vector<int> positions = a.copy_positions;
    if (copy_only && positions.empty()) positions.push_back(a.arg);
    if (a.kind != ActionKind::close && !positions.empty()) {
      auto pq = tape.add_bias(tape.matmul(id_.ptr_wq, sc), id_.ptr_b);
      auto ptr = tape.log_softmax(tape.transpose_product(tape.tanh(tape.add_col(ptr_keys, pq)), ptr_v));
      for (int i : positions) {
        if (i < 0 || i >= n) throw ModelError("copy position out of range");
        routes.push_back(tape.add(tape.pick(sel, 1), tape.pick(ptr, i)));
      }
    }
    terms.push_back(routes.size() == 1 ? routes.front() : tape.logsumexp(routes));
    a_hist[t + 1] = tape.row(id_.token_emb, token_row(a));
  }
  return tape.neg(tape.sum(terms));
}

std::vector<double> Model::step_log_probs(std::span<const std::string> source, std::span<const Action> actions) const {
  // Independent of nll(): runs the tape-free path one step at a time.
  auto enc = encode(source);
  auto tr = trace_actions(grammar_, actions);
  const int R = cfg_.rnn_size;
  StepInput in;
  in.h = Mat::Zero(R, 1);
  in.c = Mat::Zero(R, 1);
  std::vector<Vec> s_hist(actions.size() + 1), a_hist(actions.size() + 1);
  std::vector<double> out;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    in.prev_action = t == 0 ? Mat(start_embedding()) : Mat(a_hist[t]);
    int p = tr.parent_step[t];
    in.parent = Mat::Zero(parent_size(), 1);
    if (p > 0) {
      in.parent.topRows(R) = s_hist[static_cast<std::size_t>(p)];
      in.parent.bottomRows(cfg_.embed_size) = a_hist[static_cast<std::size_t>(p)];
    }
    in.frontier_type = {tr.frontier_type[t]};
    auto o = step(enc, in);
    out.push_back(action_log_prob(o, 0, actions[t], tr.frontier_type[t]));
    s_hist[t + 1] = o.h.col(0);
    a_hist[t + 1] = action_embedding(actions[t]);
    in.h = o.h;
    in.c = o.c;
  }
  return out;
}

double Model::sequence_log_prob(std::span<const std::string> source, std::span<const Action> actions) const {
  Tape tape(params_);
  auto v = nll(tape, source, actions);
  double lp = -tape.value(v)(0, 0);
  if (!std::isfinite(lp)) throw ModelError("gold action has zero probability");
  return lp;
}

// ---------------------------------------------------------------------------
// Tape-free path

EncodedInput Model::encode(std::span<const std::string> source) const {
  if (source.empty()) throw ModelError("empty input sentence");
  const int C = cfg_.encoder_size;
  const auto n = static_cast<Eigen::Index>(source.size());
  EncodedInput enc;
  enc.tokens.assign(source.begin(), source.end());
  enc.states.resize(2 * C, n);
  const Mat& table = params_[id_.src_emb].value;
  Mat emb(cfg_.embed_size, n);
  for (Eigen::Index i = 0; i < n; ++i) emb.col(i) = table.row(vocab_.source_id(source[static_cast<std::size_t>(i)])).transpose();
  auto run = [&](int w, int b, bool reverse, Eigen::Index row0) {
    nn::LstmState s{Mat::Zero(C, 1), Mat::Zero(C, 1)};
    for (Eigen::Index k = 0; k < n; ++k) {
      Eigen::Index i = reverse ? n - 1 - k : k;
      s = nn::lstm_step(params_[w].value, params_[b].value.col(0), emb.col(i), s);
      enc.states.block(row0, i, C, 1) = s.h;
    }
  };
  run(id_.enc_f_w, id_.enc_f_b, false, 0);
  run(id_.enc_b_w, id_.enc_b_b, true, C);
  enc.att_keys = params_[id_.att_wh].value * enc.states;
  enc.ptr_keys = params_[id_.ptr_wh].value * enc.states;
  return enc;
}

std::pair<Vec, Vec> Model::attend(const Vec& h, const EncodedInput& enc) const {
  Vec q = params_[id_.att_wq].value * h + params_[id_.att_b].value.col(0);
  Mat t = (enc.att_keys.colwise() + q).array().tanh();
  Vec alpha = nn::softmax(t.transpose() * params_[id_.att_v].value.col(0));
  Vec ctx = enc.states * alpha;
  return {alpha, ctx};
}

StepOutput Model::step(const EncodedInput& enc, const StepInput& in) const {
  const auto B = in.h.cols();
  const int R = cfg_.rnn_size, E = cfg_.embed_size, C2 = 2 * cfg_.encoder_size;
  if (in.prev_action.cols() != B || in.parent.cols() != B || static_cast<Eigen::Index>(in.frontier_type.size()) != B) {
    throw ModelError("inconsistent batch in decoder step");
  }
  StepOutput out;
  out.context.resize(C2, B);
  for (Eigen::Index j = 0; j < B; ++j) out.context.col(j) = attend(in.h.col(j), enc).second;

  Mat x(decoder_input_size(), B);
  x.topRows(E) = in.prev_action;
  x.middleRows(E, C2) = out.context;
  x.middleRows(E + C2, parent_size()) = in.parent;
  for (Eigen::Index j = 0; j < B; ++j) {
    x.block(E + C2 + parent_size(), j, cfg_.node_embed_size, 1) = node_embedding(in.frontier_type[static_cast<std::size_t>(j)]);
  }
  auto s = nn::lstm_step(params_[id_.dec_w].value, params_[id_.dec_b].value.col(0), x, {in.h, in.c});
  out.h = std::move(s.h);
  out.c = std::move(s.c);

  Mat g = (params_[id_.rule_w].value * out.h).colwise() + params_[id_.rule_b].value.col(0);
  g = g.array().tanh();
  Mat rule_scores = (params_[id_.rule_emb].value * g).colwise() + params_[id_.rule_bias].value.col(0);
  out.rule_logp.resize(rule_scores.rows(), B);
  for (Eigen::Index j = 0; j < B; ++j) {
    if (cfg_.masked_rule_softmax) {
      auto legal = grammar_.productions_for(in.frontier_type[static_cast<std::size_t>(j)]);
      std::vector<double> xs;
      for (int r : legal) xs.push_back(rule_scores(r, j));
      double lse = nn::logsumexp(xs);
      out.rule_logp.col(j).setConstant(-std::numeric_limits<double>::infinity());
      for (int r : legal) out.rule_logp(r, j) = rule_scores(r, j) - lse;
    } else {
      out.rule_logp.col(j) = nn::log_softmax(rule_scores.col(j));
    }
  }

  Mat sel = (params_[id_.sel_w].value * out.h).colwise() + params_[id_.sel_b].value.col(0);
  out.sel_logp = nn::log_softmax_cols(sel);

  Mat sc(R + C2, B);
  sc.topRows(R) = out.h;
  sc.bottomRows(C2) = out.context;
  Mat gh = (params_[id_.gen_w].value * sc).colwise() + params_[id_.gen_b].value.col(0);
  gh = gh.array().tanh();
  Mat gen = (params_[id_.token_emb].value * gh).colwise() + params_[id_.gen_bias].value.col(0);
  out.gen_logp = nn::log_softmax_cols(gen);

  Mat pq = (params_[id_.ptr_wq].value * sc).colwise() + params_[id_.ptr_b].value.col(0);
  const auto n = enc.ptr_keys.cols();
  out.ptr_logp.resize(n, B);
  const Vec v = params_[id_.ptr_v].value.col(0);
  for (Eigen::Index j = 0; j < B; ++j) {
    Mat t = (enc.ptr_keys.colwise() + pq.col(j)).array().tanh();
    out.ptr_logp.col(j) = nn::log_softmax(t.transpose() * v);
  }
  return out;
}

double Model::action_log_prob(const StepOutput& out, int col, const Action& a, int frontier_type) const {
  (void)frontier_type;
  if (a.kind == ActionKind::rule) return out.rule_logp(a.arg, col);
  std::vector<double> routes;
  if (a.kind != ActionKind::copy) routes.push_back(out.sel_logp(0, col) + out.gen_logp(token_row(a), col));
  std::vector<int> positions = a.copy_positions;
  if (a.kind == ActionKind::copy && positions.empty()) positions.push_back(a.arg);
  if (a.kind != ActionKind::close) {
    for (int i : positions) routes.push_back(out.sel_logp(1, col) + out.ptr_logp(i, col));
  }
  return nn::logsumexp(routes);
}

Vec Model::apply_rule_dist(const Vec& s) const {
  Vec g = (params_[id_.rule_w].value * s + params_[id_.rule_b].value.col(0)).array().tanh();
  return nn::softmax(params_[id_.rule_emb].value * g + params_[id_.rule_bias].value.col(0));
}

TokenDist Model::gen_token_dist(const Vec& s, const Vec& context, const EncodedInput& enc) const {
  const int R = cfg_.rnn_size;
  TokenDist d;
  Vec sel = nn::softmax(params_[id_.sel_w].value * s + params_[id_.sel_b].value.col(0));
  d.p_gen = sel(0);
  d.p_copy = sel(1);
  Vec sc(R + context.size());
  sc.head(R) = s;
  sc.tail(context.size()) = context;
  Vec gh = (params_[id_.gen_w].value * sc + params_[id_.gen_b].value.col(0)).array().tanh();
  d.gen = d.p_gen * nn::softmax(params_[id_.token_emb].value * gh + params_[id_.gen_bias].value.col(0));
  Vec pq = params_[id_.ptr_wq].value * sc + params_[id_.ptr_b].value.col(0);
  Mat t = (enc.ptr_keys.colwise() + pq).array().tanh();
  d.copy = d.p_copy * nn::softmax(t.transpose() * params_[id_.ptr_v].value.col(0));
  return d;
}

}  // namespace synforge
