#include "synforge/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "synforge/checkpoint.hpp"
#include "synforge/closure.hpp"
#include "synforge/error.hpp"
#include "synforge/evalx.hpp"
#include "synforge/util.hpp"

namespace synforge {

namespace {

// Runs fn(i, worker) for i in [0, n) with item i on worker i % workers.
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn fn) {
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i, 0u);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i, w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x ^= x >> 31;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 29;
  return x;
}

std::vector<std::vector<Action>> bind_all(std::span<const Example> exs, const Vocab& v) {
  std::vector<std::vector<Action>> out;
  out.reserve(exs.size());
  for (const auto& ex : exs) out.push_back(bind_actions(ex.oracle, v, ex.source));
  return out;
}

double dev_nll(const Model& model, std::span<const Example> exs, std::span<const std::vector<Action>> bound,
               unsigned workers) {
  if (exs.empty()) return 0.0;
  std::vector<double> nll(exs.size());
  parallel_for(exs.size(), workers, [&](std::size_t i, unsigned) {
    nn::Tape tape(model.params());
    nll[i] = tape.value(model.nll(tape, exs[i].source, bound[i]))(0, 0);
  });
  return std::accumulate(nll.begin(), nll.end(), 0.0) / static_cast<double>(exs.size());
}

}  // namespace

void TrainConfig::validate() const {
  const auto& m = model;
  if (m.embed_size < 1 || m.node_embed_size < 1 || m.rnn_size < 1 || m.encoder_size < 1 || m.scorer_size < 1) {
    throw ModelError("model sizes must be >= 1");
  }
  static constexpr double kDropouts[] = {0.0, 0.2, 0.3, 0.4};
  if (std::find(std::begin(kDropouts), std::end(kDropouts), m.dropout) == std::end(kDropouts)) {
    throw ModelError("dropout must be one of 0, 0.2, 0.3, 0.4");
  }
  if (dev_beam < 1) throw ModelError("dev beam must be >= 1");
  if (batch_size < 1) throw ModelError("batch size must be >= 1");
  if (max_epochs < 0) throw ModelError("max epochs must be >= 0");
  if (patience < 1) throw ModelError("patience must be >= 1");
  if (!(lr >= 0.0)) throw ModelError("learning rate must be >= 0");
  if (!(clip_norm > 0.0)) throw ModelError("clip norm must be > 0");
  if (closure_k < 1) throw ModelError("closure threshold must be >= 1");
  if (vocab_min_count < 1) throw ModelError("vocabulary threshold must be >= 1");
  if (eval_every < 1) throw ModelError("eval interval must be >= 1");
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = model.to_json();
  j["dev_beam"] = dev_beam;
  j["batch_size"] = batch_size;
  j["max_epochs"] = max_epochs;
  j["patience"] = patience;
  j["seed"] = seed;
  j["lr"] = lr;
  j["clip_norm"] = clip_norm;
  j["closure"] = closure;
  j["closure_k"] = closure_k;
  j["vocab_min_count"] = vocab_min_count;
  j["target_dev_accuracy"] = target_dev_accuracy;
  j["eval_every"] = eval_every;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
  c.dev_beam = j.value("dev_beam", c.dev_beam);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.lr = j.value("lr", c.lr);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.closure = j.value("closure", c.closure);
  c.closure_k = j.value("closure_k", c.closure_k);
  c.vocab_min_count = j.value("vocab_min_count", c.vocab_min_count);
  c.target_dev_accuracy = j.value("target_dev_accuracy", c.target_dev_accuracy);
  c.eval_every = j.value("eval_every", c.eval_every);
  return c;
}

nlohmann::ordered_json EpochRecord::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["train_nll"] = train_nll;
  if (evaluated) {
    j["dev_acc"] = dev_acc;
    j["dev_bleu"] = dev_bleu;
    j["dev_nll"] = dev_nll;
  } else {
    j["dev_acc"] = nullptr;
    j["dev_bleu"] = nullptr;
    j["dev_nll"] = nullptr;
  }
  j["lr"] = lr;
  return j;
}

Corpus prepare_corpus(const Grammar& base, std::vector<Example> train, std::vector<Example> dev,
                      const TrainConfig& cfg) {
  if (train.empty()) throw DataError("empty training set");
  for (std::size_t i = 0; i < train.size(); ++i) {
    try {
      auto ast = replay(train[i].oracle, base);
      if (!ast_equal(ast, train[i].ast)) throw TransitionError("oracle does not reproduce the tree");
    } catch (const Error& e) {
      throw DataError("training example " + std::to_string(i) + " (" + train[i].id + ") is not derivable: " +
                      e.what());
    }
  }
  Grammar g = base;
  if (cfg.closure) {
    std::vector<std::vector<Action>> corpus;
    for (const auto& ex : train) corpus.push_back(ex.oracle);
    g = unary_closure(base, corpus, cfg.closure_k);
    for (auto* split : {&train, &dev}) {
      for (auto& ex : *split) ex.oracle = oracle_actions(ex.ast, g);
    }
  }
  Vocab v = build_vocab(train, cfg.vocab_min_count, cfg.vocab_min_count);
  return {std::move(g), std::move(v), std::move(train), std::move(dev)};
}

double train_step(Model& model, nn::Adam& adam, std::span<const std::vector<std::string>> sources,
                  std::span<const std::vector<Action>> actions, const TrainConfig& cfg, std::uint64_t dropout_seed) {
  const std::size_t n = sources.size();
  if (n == 0 || actions.size() != n) throw ModelError("bad batch");
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_threads(), n));
  std::vector<nn::Grads> grads(workers, nn::Grads(model.params()));
  std::vector<double> loss(n);
  const double scale = 1.0 / static_cast<double>(n);
  const Model& cmodel = model;
  parallel_for(n, workers, [&](std::size_t i, unsigned w) {
    nn::Tape tape(cmodel.params());
    nn::Rng rng(mix(dropout_seed, i));
    auto v = cmodel.nll(tape, sources[i], actions[i], cfg.model.dropout > 0.0 ? &rng : nullptr);
    loss[i] = tape.value(v)(0, 0);
    if (!std::isfinite(loss[i])) return;
    tape.backward(v, grads[w], scale);
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(loss[i])) {
      throw ModelError("non-finite loss on batch item " + std::to_string(i) + " (" + std::to_string(actions[i].size()) +
                       " actions)");
    }
  }
  for (unsigned w = 1; w < workers; ++w) grads[0].add(grads[w]);
  nn::clip_global_norm(grads[0], cfg.clip_norm);
  adam.step(model.params(), grads[0]);
  return std::accumulate(loss.begin(), loss.end(), 0.0) * scale;
}

DevScore evaluate_model(const Model& model, std::span<const Example> examples, Language lang, int beam) {
  DevScore s;
  if (examples.empty()) return s;
  DecodeOptions opts;
  opts.beam_size = beam;
  std::vector<double> em(examples.size()), bl(examples.size());
  parallel_for(examples.size(), worker_threads(), [&](std::size_t i, unsigned) {
    auto p = predict(model, examples[i], lang, opts);
    em[i] = p.ok && exact_match(p.code, examples[i].code) ? 1.0 : 0.0;
    bl[i] = p.code.empty() ? 0.0 : bleu4(code_tokens(p.code), code_tokens(examples[i].code));
  });
  const auto n = static_cast<double>(examples.size());
  s.accuracy = std::accumulate(em.begin(), em.end(), 0.0) / n;
  s.bleu = std::accumulate(bl.begin(), bl.end(), 0.0) / n;
  return s;
}

TrainResult train(const Corpus& corpus, Language lang, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  Model model(corpus.grammar, corpus.vocab, cfg.model);
  model.initialize(cfg.seed);
  const auto train_bound = bind_all(corpus.train, corpus.vocab);
  const auto dev_bound = bind_all(corpus.dev, corpus.vocab);
  const unsigned workers = worker_threads();

  nn::Adam adam(model.params(), cfg.lr);
  nn::Rng order_rng(mix(cfg.seed, 0x5eed));
  nn::ParamSet best = model.params();
  round_to_float32(best);
  TrainResult res{Model(corpus.grammar, corpus.vocab, cfg.model), 0, -1.0, {}};
  double best_nll = std::numeric_limits<double>::infinity();
  int since_best = 0;

  const std::size_t n = corpus.train.size();
  std::vector<std::size_t> order(n);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    // Shuffle, bucket by oracle length, then shuffle the batches.
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return train_bound[a].size() < train_bound[b].size(); });
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(cfg.batch_size)) {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + static_cast<std::size_t>(cfg.batch_size))));
    }
    for (std::size_t i = batches.size(); i > 1; --i) std::swap(batches[i - 1], batches[order_rng.below(i)]);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = adam.lr();
    double total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<std::vector<std::string>> src;
      std::vector<std::vector<Action>> acts;
      for (auto i : batches[b]) {
        src.push_back(corpus.train[i].source);
        acts.push_back(train_bound[i]);
      }
      try {
        total += train_step(model, adam, src, acts, cfg, mix(mix(cfg.seed, static_cast<std::uint64_t>(epoch)), b)) *
                 static_cast<double>(src.size());
      } catch (const ModelError& e) {
        throw ModelError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) + ": " + e.what());
      }
    }
    rec.train_nll = total / static_cast<double>(n);

    bool stop = false;
    if (epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs) {
      rec.evaluated = true;
      const auto& dev = corpus.dev.empty() ? corpus.train : corpus.dev;
      const auto& bound = corpus.dev.empty() ? train_bound : dev_bound;
      auto score = evaluate_model(model, dev, lang, cfg.dev_beam);
      rec.dev_acc = score.accuracy;
      rec.dev_bleu = score.bleu;
      rec.dev_nll = dev_nll(model, dev, bound, workers);
      // Exact match decides; dev likelihood breaks ties so the patience clock
      // does not run out while accuracy is still flat at zero.
      if (rec.dev_acc > res.best_dev_acc || (rec.dev_acc == res.best_dev_acc && rec.dev_nll < best_nll)) {
        res.best_dev_acc = rec.dev_acc;
        res.best_epoch = epoch;
        best_nll = rec.dev_nll;
        best = model.params();
        round_to_float32(best);
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        stop = true;
      }
      if (rec.dev_acc >= cfg.target_dev_accuracy) stop = true;
    }
    res.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stop) break;
  }
  res.model.params() = std::move(best);
  if (res.best_dev_acc < 0.0) res.best_dev_acc = 0.0;
  return res;
}

GradcheckReport gradcheck(std::uint64_t seed, double step) {
  auto g = load_grammar(
      "type root\ntype str variable\nrule root -> name:str\nrule root -> name:str alias:str\n");
  Vocab v({"sort", "x"}, {"x"});
  ModelConfig cfg;
  cfg.embed_size = 6;
  cfg.node_embed_size = 4;
  cfg.rnn_size = 8;
  cfg.encoder_size = 5;
  cfg.scorer_size = 4;
  Model model(std::move(g), std::move(v), cfg);
  model.initialize(seed);
  // Random biases too, so no gradient sits at a symmetric point.
  nn::Rng rng(mix(seed, 7));
  for (int i = 0; i < model.params().size(); ++i) {
    auto& p = model.params()[i];
    if (p.init == nn::Init::zeros) p.value = p.value.unaryExpr([&](double) { return rng.uniform(-0.1, 0.1); });
  }
  const std::vector<std::string> source{"sort", "x"};
  const int x = *model.vocab().terminal_id("x");
  auto word = Action::gen_vocab(x, "x");
  word.copy_positions = {1};
  const std::vector<Action> actions{Action::apply_rule(0), word, Action::close()};

  auto loss = [&] {
    nn::Tape tape(model.params());
    return tape.value(model.nll(tape, source, actions))(0, 0);
  };
  nn::Grads grads(model.params());
  {
    nn::Tape tape(model.params());
    tape.backward(model.nll(tape, source, actions), grads);
  }
  GradcheckReport rep;
  for (int i = 0; i < model.params().size(); ++i) {
    auto& m = model.params()[i].value;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      double orig = m(k);
      m(k) = orig + step;
      double up = loss();
      m(k) = orig - step;
      double down = loss();
      m(k) = orig;
      double num = (up - down) / (2.0 * step);
      double ana = grads[i](k);
      double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6});
      worst = std::max(worst, rel);
      ++rep.checked;
    }
    rep.per_group.emplace_back(model.params()[i].name, worst);
    rep.max_rel_error = std::max(rep.max_rel_error, worst);
  }
  return rep;
}

}  // namespace synforge
