#include <doctest.h>

#include <cmath>

#include "synforge/error.hpp"
#include "synforge/model.hpp"

using namespace synforge;
using nn::Mat;
using nn::Vec;

namespace {

using Words = std::vector<std::string>;

const char* kTiny =
    "type root\n"
    "type str variable\n"
    "rule root -> name:str\n"
    "rule root -> name:str alias:str\n";

ModelConfig small_config() {
  ModelConfig c;
  c.embed_size = 6;
  c.node_embed_size = 4;
  c.rnn_size = 8;
  c.encoder_size = 5;
  c.scorer_size = 4;
  return c;
}

Model tiny_model(ModelConfig cfg = small_config(), std::uint64_t seed = 3) {
  Model m(load_grammar(kTiny), Vocab({"sort", "x"}, {"x", "y"}), cfg);
  m.initialize(seed);
  nn::Rng rng(seed + 100);
  // Random biases so no head sits at a symmetric point.
  for (int i = 0; i < m.params().size(); ++i) {
    auto& p = m.params()[i];
    if (p.init == nn::Init::zeros) p.value = p.value.unaryExpr([&](double) { return rng.uniform(-0.5, 0.5); });
  }
  return m;
}

Action vocab_word(int id, std::string w, std::vector<int> positions) {
  auto a = Action::gen_vocab(id, std::move(w));
  a.copy_positions = std::move(positions);
  return a;
}

// rule 1, x (vocab + copy), close, then a copied OOV word, close.
std::vector<Action> tiny_actions() {
  auto copy = Action::gen_copy(2, "zed");
  copy.copy_positions = {2};
  return {Action::apply_rule(1), vocab_word(2, "x", {1}), Action::close(), copy, Action::close()};
}

const Words kSource{"sort", "x", "zed"};

}  // namespace

TEST_CASE("default sizes") {
  Model m(load_grammar(kTiny), Vocab({"a"}, {"b"}));
  CHECK(m.decoder_input_size() == 128 + 256 + 256 + 128 + 64);
  CHECK(m.parent_size() == 384);
  const auto& dec = m.params()[m.params().id("dec_w")].value;
  CHECK(dec.rows() == 4 * 256);
  CHECK(dec.cols() == m.decoder_input_size() + 256);
}

TEST_CASE("config round trips through json") {
  auto c = small_config();
  c.dropout = 0.3;
  c.masked_rule_softmax = true;
  auto back = ModelConfig::from_json(c.to_json());
  CHECK(back.embed_size == 6);
  CHECK(back.rnn_size == 8);
  CHECK(back.dropout == 0.3);
  CHECK(back.masked_rule_softmax);
}

TEST_CASE("trace follows frontier and parents") {
  auto g = load_grammar(kTiny);
  auto tr = trace_actions(g, tiny_actions());
  CHECK(tr.frontier_type == std::vector<int>{0, 1, 1, 1, 1});
  CHECK(tr.parent_step == std::vector<int>{0, 1, 1, 1, 1});
}

TEST_CASE("tape and tape-free decoders agree") {
  auto m = tiny_model();
  auto acts = tiny_actions();
  auto steps = m.step_log_probs(kSource, acts);
  REQUIRE(steps.size() == acts.size());
  double total = 0.0;
  for (double s : steps) {
    CHECK(s < 0.0);
    total += s;
  }
  nn::Tape tape(m.params());
  double nll = tape.value(m.nll(tape, kSource, acts))(0, 0);
  CHECK(std::fabs(nll + total) < 1e-10);
  CHECK(std::fabs(m.sequence_log_prob(kSource, acts) - total) < 1e-10);
}

TEST_CASE("gold token probability sums the generation and copy routes") {
  auto m = tiny_model();
  auto enc = m.encode(kSource);
  const int R = m.config().rnn_size;
  StepInput in;
  in.prev_action = m.start_embedding();
  in.parent = Mat::Zero(m.parent_size(), 1);
  in.frontier_type = {0};
  in.h = Mat::Zero(R, 1);
  in.c = Mat::Zero(R, 1);
  auto o1 = m.step(enc, in);
  auto a1 = m.action_embedding(Action::apply_rule(1));
  in.prev_action = a1;
  in.parent.topRows(R) = o1.h;
  in.parent.bottomRows(m.config().embed_size) = a1;
  in.frontier_type = {1};
  in.h = o1.h;
  in.c = o1.c;
  auto o2 = m.step(enc, in);

  auto d = m.gen_token_dist(o2.h.col(0), o2.context.col(0), enc);
  CHECK(d.p_gen + d.p_copy == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.gen.sum() + d.copy.sum() == doctest::Approx(1.0).epsilon(1e-12));

  double both = std::exp(m.action_log_prob(o2, 0, vocab_word(2, "x", {1}), 1));
  CHECK(both == doctest::Approx(d.gen(2) + d.copy(1)).epsilon(1e-12));
  double gen_only = std::exp(m.action_log_prob(o2, 0, vocab_word(2, "x", {}), 1));
  CHECK(gen_only == doctest::Approx(d.gen(2)).epsilon(1e-12));
  double copy_only = std::exp(m.action_log_prob(o2, 0, Action::gen_copy(2, "zed"), 1));
  CHECK(copy_only == doctest::Approx(d.copy(2)).epsilon(1e-12));

  auto merged = d.merged(m.vocab(), kSource);
  CHECK(merged.at("x") == doctest::Approx(both).epsilon(1e-12));
  CHECK(merged.at("zed") == doctest::Approx(copy_only).epsilon(1e-12));
  double total = 0.0;
  for (const auto& [w, p] : merged) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  auto lp = m.step_log_probs(kSource, tiny_actions());
  CHECK(std::exp(lp[1]) == doctest::Approx(both).epsilon(1e-10));
}

TEST_CASE("batched steps match single steps") {
  auto m = tiny_model();
  auto enc = m.encode(kSource);
  const int R = m.config().rnn_size;
  nn::Rng rng(8);
  auto rnd = [&](int r, int c) { return Mat(Mat::NullaryExpr(r, c, [&] { return rng.uniform(-1, 1); })); };
  StepInput both;
  both.prev_action = rnd(m.config().embed_size, 2);
  both.parent = rnd(m.parent_size(), 2);
  both.frontier_type = {0, 1};
  both.h = rnd(R, 2);
  both.c = rnd(R, 2);
  auto ob = m.step(enc, both);
  for (int j = 0; j < 2; ++j) {
    StepInput one;
    one.prev_action = both.prev_action.col(j);
    one.parent = both.parent.col(j);
    one.frontier_type = {both.frontier_type[static_cast<std::size_t>(j)]};
    one.h = both.h.col(j);
    one.c = both.c.col(j);
    auto os = m.step(enc, one);
    CHECK((os.h.col(0) - ob.h.col(j)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((os.rule_logp.col(0) - ob.rule_logp.col(j)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((os.ptr_logp.col(0) - ob.ptr_logp.col(j)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((os.gen_logp.col(0) - ob.gen_logp.col(j)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("rule distributions are normalized") {
  auto m = tiny_model();
  nn::Rng rng(4);
  for (int k = 0; k < 20; ++k) {
    Vec s = Vec::NullaryExpr(m.config().rnn_size, [&] { return rng.uniform(-2, 2); });
    CHECK(m.apply_rule_dist(s).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("masked rule softmax normalizes over the frontier's productions") {
  auto cfg = small_config();
  cfg.masked_rule_softmax = true;
  const char* two_heads =
      "type root\ntype A\ntype str variable\n"
      "rule root -> a:A\nrule root -> a:A b:A\nrule A -> v:str\nrule A -> w:str u:str\n";
  Model m(load_grammar(two_heads), Vocab({"x"}, {"x"}), cfg);
  m.initialize(1);
  auto full_cfg = small_config();
  Model full(load_grammar(two_heads), Vocab({"x"}, {"x"}), full_cfg);
  full.initialize(1);
  std::vector<Action> acts{Action::apply_rule(0), Action::apply_rule(3)};
  auto masked = m.step_log_probs(Words{"x"}, acts);
  auto unmasked = full.step_log_probs(Words{"x"}, acts);
  CHECK(masked[0] > unmasked[0]);
  CHECK(masked[1] > unmasked[1]);
  // Exactly two productions per head: the pair sums to one.
  std::vector<Action> other{Action::apply_rule(1)};
  auto alt = m.step_log_probs(Words{"x"}, other);
  CHECK(std::exp(masked[0]) + std::exp(alt[0]) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("dropout only applies with a generator") {
  auto cfg = small_config();
  cfg.dropout = 0.4;
  auto m = tiny_model(cfg);
  auto acts = tiny_actions();
  auto loss = [&](nn::Rng* rng) {
    nn::Tape t(m.params());
    return t.value(m.nll(t, kSource, acts, rng))(0, 0);
  };
  double plain = loss(nullptr);
  CHECK(plain == doctest::Approx(-m.sequence_log_prob(kSource, acts)).epsilon(1e-12));
  nn::Rng a(5), b(5);
  double da = loss(&a), db = loss(&b);
  CHECK(da == db);
  CHECK(da != plain);
}

TEST_CASE("unknown source words share the unknown embedding") {
  auto m = tiny_model();
  auto e1 = m.encode(Words{"sort", "qqq"});
  auto e2 = m.encode(Words{"sort", "rrr"});
  CHECK((e1.states - e2.states).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(m.encode(Words{}), ModelError);
}

TEST_CASE("attention weights form a distribution") {
  auto m = tiny_model();
  auto enc = m.encode(kSource);
  Vec h = Vec::Constant(m.config().rnn_size, 0.3);
  auto [w, ctx] = m.attend(h, enc);
  CHECK(w.size() == 3);
  CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((ctx - enc.states * w).cwiseAbs().maxCoeff() < 1e-12);
}
