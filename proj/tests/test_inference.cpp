#include <doctest.h>

#include <cmath>

#include "synforge/error.hpp"
#include "synforge/inference.hpp"

using namespace synforge;

namespace {

using Words = std::vector<std::string>;

std::string data(const std::string& rel) { return std::string(SYNFORGE_DATA_DIR) + "/" + rel; }

struct Fixture {
  Grammar g = load_grammar_file(data("minipy.grammar"));
  std::vector<Example> exs = load_dataset(data("minipy/train.jsonl"), g, Language::minipy).examples;
  Vocab v = build_vocab(exs, 3, 3);
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

ModelConfig small_config() {
  ModelConfig c;
  c.embed_size = 16;
  c.node_embed_size = 8;
  c.rnn_size = 24;
  c.encoder_size = 12;
  c.scorer_size = 10;
  return c;
}

Model random_model(std::uint64_t seed) {
  Model m(fx().g, fx().v, small_config());
  m.initialize(seed);
  return m;
}

}  // namespace

TEST_CASE("greedy decoding equals a beam of one") {
  for (int i = 0; i < 50; ++i) {
    auto m = random_model(100 + static_cast<std::uint64_t>(i % 5));
    const auto& src = fx().exs[static_cast<std::size_t>(i * 3) % fx().exs.size()].source;
    DecodeOptions one;
    one.beam_size = 1;
    auto g = greedy_decode(m, src, one);
    auto b = beam_search(m, src, one);
    CAPTURE(i);
    REQUIRE(g.hypotheses.size() == b.hypotheses.size());
    CHECK(g.incomplete == b.incomplete);
    if (g.hypotheses.empty()) continue;
    CHECK(g.hypotheses[0].actions == b.hypotheses[0].actions);
    CHECK(g.hypotheses[0].score == b.hypotheses[0].score);
  }
}

TEST_CASE("a wide beam never loses to greedy") {
  auto m = random_model(7);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& src = fx().exs[i].source;
    auto g = greedy_decode(m, src);
    auto b = beam_search(m, src);
    if (g.incomplete) continue;
    REQUIRE_FALSE(b.incomplete);
    CHECK(b.hypotheses[0].score >= g.hypotheses[0].score - 1e-9);
  }
}

TEST_CASE("hypothesis scores equal the model's sequence probability") {
  auto m = random_model(11);
  DecodeOptions opts;
  opts.beam_size = 5;
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& src = fx().exs[i].source;
    auto r = beam_search(m, src, opts);
    if (r.incomplete) continue;
    CHECK(r.hypotheses.size() <= 5);
    for (std::size_t k = 0; k < r.hypotheses.size(); ++k) {
      const auto& h = r.hypotheses[k];
      REQUIRE(h.complete);
      REQUIRE(h.ast);
      CHECK_FALSE(ast_violation(*h.ast, fx().g));
      CHECK(ast_equal(replay(h.actions, fx().g), *h.ast));
      CHECK(std::fabs(m.sequence_log_prob(src, h.actions) - h.score) < 1e-9);
      if (k > 0) CHECK(h.score <= r.hypotheses[k - 1].score);
    }
  }
}

TEST_CASE("single-derivation grammars decode identically") {
  auto g = load_grammar("type root\ntype A\ntype Leaf op\nrule root -> a:A b:A\nrule A -> Leaf\n");
  Model m(g, Vocab({"x"}, {}), small_config());
  m.initialize(2);
  Words src{"x", "y"};
  auto b = beam_search(m, src);
  auto gr = greedy_decode(m, src);
  REQUIRE(b.hypotheses.size() == 1);
  CHECK(b.hypotheses[0].actions == gr.hypotheses[0].actions);
  CHECK(b.hypotheses[0].score < 0.0);
  // With frontier-masked rule softmax the only derivation is certain.
  auto cfg = small_config();
  cfg.masked_rule_softmax = true;
  Model masked(g, Vocab({"x"}, {}), cfg);
  masked.initialize(2);
  CHECK(beam_search(masked, src).hypotheses[0].score == doctest::Approx(0.0));
}

TEST_CASE("step budget exhaustion yields an incomplete partial") {
  auto m = random_model(3);
  DecodeOptions opts;
  opts.max_steps = 2;
  auto r = beam_search(m, fx().exs[0].source, opts);
  CHECK(r.incomplete);
  CHECK(r.steps == 2);
  REQUIRE(r.hypotheses.size() == 1);
  CHECK_FALSE(r.hypotheses[0].complete);
  CHECK_FALSE(r.hypotheses[0].ast);
  auto g = greedy_decode(m, fx().exs[0].source, opts);
  CHECK(g.incomplete);
}

TEST_CASE("terminal token cap is respected") {
  auto m = random_model(5);
  DecodeOptions opts;
  opts.max_terminal_tokens = 1;
  auto r = beam_search(m, fx().exs[1].source, opts);
  for (const auto& h : r.hypotheses) {
    auto walk = [](auto&& self, const AstNode& n) -> void {
      CHECK(n.tokens.size() <= 1);
      for (const auto& c : n.children) self(self, c);
    };
    if (h.ast) walk(walk, *h.ast);
  }
}

TEST_CASE("invalid options throw") {
  auto m = random_model(1);
  DecodeOptions bad;
  bad.beam_size = 0;
  CHECK_THROWS_AS(beam_search(m, fx().exs[0].source, bad), ModelError);
  CHECK_THROWS_AS(greedy_decode(m, Words{}), ModelError);
  DecodeOptions steps;
  steps.max_steps = 0;
  CHECK_THROWS_AS(beam_search(m, fx().exs[0].source, steps), ModelError);
}

TEST_CASE("tie-break keys") {
  CHECK(action_key(Action::apply_rule(3)) < action_key(Action::apply_rule(4)));
  CHECK(action_key(Action::apply_rule(99)) < action_key(Action::close()));
  CHECK(action_key(Action::close()) < action_key(Action::gen_vocab(2, "a")));
  CHECK(action_key(Action::gen_vocab(50, "a")) < action_key(Action::gen_copy(0, "b")));
  CHECK(action_key(Action::gen_copy(0, "b")) < action_key(Action::gen_copy(1, "b")));
}

TEST_CASE("length normalization divides by the action count") {
  Hypothesis h;
  h.actions.assign(4, Action::apply_rule(0));
  h.score = -2.0;
  CHECK(h.ranking_score(false) == -2.0);
  CHECK(h.ranking_score(true) == -0.5);
}

TEST_CASE("decode records and predictions") {
  auto m = random_model(9);
  const auto& ex = fx().exs[2];
  DecodeOptions opts;
  opts.beam_size = 3;
  auto p = predict(m, ex, Language::minipy, opts);
  auto j = decode_record(p.result, fx().g);
  CHECK(j["steps"] == p.result.steps);
  CHECK(j["hypotheses"].size() == p.result.hypotheses.size());
  if (!p.result.incomplete) {
    REQUIRE(p.ast);
    CHECK(p.ok);
    CHECK(p.code == restore_placeholders(render(*p.ast, Language::minipy), ex.table));
    const auto& acts = j["hypotheses"][0]["actions"];
    CHECK(acts.size() == p.result.hypotheses[0].actions.size());
    CHECK(acts[0]["t"] == 1);
    CHECK(acts[0]["parent"] == 0);
    CHECK(ast_equal(deserialize(j["hypotheses"][0]["ast"].get<std::string>()), *p.ast));
  }
}
