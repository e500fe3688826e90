// synforge command-line driver.
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "synforge/checkpoint.hpp"
#include "synforge/closure.hpp"
#include "synforge/data.hpp"
#include "synforge/error.hpp"
#include "synforge/evalx.hpp"
#include "synforge/fixtures.hpp"
#include "synforge/grammar.hpp"
#include "synforge/inference.hpp"
#include "synforge/lang.hpp"
#include "synforge/training.hpp"
#include "synforge/util.hpp"

namespace sf = synforge;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const char* error_code(const std::exception& e) {
  if (dynamic_cast<const sf::GrammarError*>(&e)) return "grammar";
  if (dynamic_cast<const sf::AstError*>(&e)) return "ast";
  if (dynamic_cast<const sf::TransitionError*>(&e)) return "transition";
  if (dynamic_cast<const sf::DataError*>(&e)) return "data";
  if (dynamic_cast<const sf::ModelError*>(&e)) return "model";
  if (dynamic_cast<const sf::CheckpointError*>(&e)) return "checkpoint";
  return "io";
}

// key=value lines; '#' starts a comment, values may be quoted.
std::map<std::string, std::string> read_config(const std::string& path) {
  std::map<std::string, std::string> out;
  std::ifstream f(path);
  if (!f) throw UsageError("cannot read config file " + path);
  std::string line;
  int n = 0;
  while (std::getline(f, line)) {
    ++n;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto t = std::string(sf::trim(line));
    if (t.empty() || t.front() == '[') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(n) + ": expected key = value");
    auto key = std::string(sf::trim(std::string_view(t).substr(0, eq)));
    auto val = std::string(sf::trim(std::string_view(t).substr(eq + 1)));
    if (val.size() >= 2 && (val.front() == '"' || val.front() == '\'') && val.back() == val.front()) {
      val = val.substr(1, val.size() - 2);
    }
    std::replace(key.begin(), key.end(), '_', '-');
    out[key] = val;
  }
  return out;
}

sf::Language parse_lang(const std::string& name) {
  auto l = sf::language_from_name(name);
  if (!l) throw UsageError("unknown language '" + name + "' (expected minipy or flowdsl)");
  return *l;
}

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    sf::write_file(path, text);
  }
}

std::vector<sf::Example> load_examples(const std::string& path, const sf::Grammar& g, sf::Language lang) {
  auto ds = sf::load_dataset(path, g, lang);
  for (const auto& s : ds.skipped) {
    std::cerr << "W:skipped: " << path << ":" << s.line << " (" << s.id << "): " << s.reason << "\n";
  }
  return std::move(ds.examples);
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(prec) << v;
  return o.str();
}

struct Opts {
  std::string grammar, data, input, dev, out, model, config, lang = "minipy", log, root = "root", pred;
  std::uint64_t seed = 1;
  int beam = 15;
  double dropout = 0.0;
  int closure_k = 0;
  int max_steps = 300;
  int epochs = 500;
  int batch_size = 10;
  double lr = 1e-3;
  int patience = 10;
  int eval_every = 1;
  int min_count = 3;
  bool masked = false;
  bool length_norm = false;
};

sf::Language model_language(const sf::LoadedCheckpoint& ck, const Opts& o, const CLI::App& sub) {
  if (sub.get_option("--lang")->count() == 0 && ck.manifest.contains("extra") &&
      ck.manifest["extra"].contains("language")) {
    return parse_lang(ck.manifest["extra"]["language"].get<std::string>());
  }
  return parse_lang(o.lang);
}

int cmd_fixtures(const Opts& o) {
  auto dir = o.out.empty() ? std::string(SYNFORGE_DATA_DIR) : o.out;
  auto manifest = sf::write_fixtures(dir, o.seed);
  std::cout << manifest.dump(2) << "\n";
  return 0;
}

int cmd_induce(const Opts& o) {
  auto lang = parse_lang(o.lang);
  std::vector<sf::AstNode> asts;
  for (const auto& r : sf::read_jsonl(o.data)) {
    auto canon = sf::canonicalize(r.nl);
    asts.push_back(sf::canonicalize_ast(sf::parse_code(r.code, lang), canon.table));
  }
  auto g = sf::induce_grammar(asts, o.root);
  write_out(o.out, g.to_text());
  return 0;
}

int cmd_closure(const Opts& o) {
  auto g = sf::load_grammar_file(o.grammar);
  auto exs = load_examples(o.data, g, parse_lang(o.lang));
  std::vector<std::vector<sf::Action>> corpus;
  for (const auto& ex : exs) corpus.push_back(ex.oracle);
  auto closed = sf::unary_closure(g, corpus, o.closure_k > 0 ? o.closure_k : 30);
  write_out(o.out, closed.to_text());
  std::cerr << "closure: " << closed.closure_count() << " productions added\n";
  return 0;
}

int cmd_oracle(const Opts& o) {
  auto g = sf::load_grammar_file(o.grammar);
  auto exs = load_examples(o.data, g, parse_lang(o.lang));
  std::string text;
  for (const auto& ex : exs) {
    auto tr = sf::trace_actions(g, ex.oracle);
    nlohmann::ordered_json j;
    j["id"] = ex.id;
    auto acts = nlohmann::json::array();
    for (std::size_t t = 0; t < ex.oracle.size(); ++t) {
      acts.push_back(sf::action_record(ex.oracle[t], static_cast<int>(t) + 1, tr.parent_step[t]));
    }
    j["actions"] = std::move(acts);
    text += j.dump() + "\n";
  }
  write_out(o.out, text);
  return 0;
}

int cmd_stats(const Opts& o) {
  auto g = sf::load_grammar_file(o.grammar);
  auto exs = load_examples(o.data, g, parse_lang(o.lang));
  std::vector<sf::AstNode> asts;
  for (const auto& ex : exs) asts.push_back(ex.ast);
  auto s = sf::grammar_stats(g, asts);
  std::ostringstream out;
  out << "Statistics of Grammar\n";
  out << "  productions          " << s.productions << "\n";
  out << "  node types           " << s.node_types << "\n";
  out << "  terminal vocabulary  " << s.terminal_vocab << "\n";
  out << "  examples             " << s.examples << "\n";
  out << "  avg nodes            " << fmt(s.avg_nodes, 2) << "\n";
  out << "  avg actions          " << fmt(s.avg_actions, 2) << "\n";
  if (o.closure_k > 0) {
    std::vector<std::vector<sf::Action>> corpus;
    for (const auto& ex : exs) corpus.push_back(ex.oracle);
    auto closed = sf::unary_closure(g, corpus, o.closure_k);
    auto c = sf::grammar_stats(closed, asts);
    out << "  with unary closure (k=" << o.closure_k << ")\n";
    out << "    productions        " << c.productions << "\n";
    out << "    avg actions        " << fmt(c.avg_actions, 2) << "\n";
  }
  write_out(o.out, out.str());
  return 0;
}

sf::TrainConfig train_config(const Opts& o) {
  sf::TrainConfig c;
  c.model.dropout = o.dropout;
  c.model.masked_rule_softmax = o.masked;
  c.dev_beam = o.beam;
  c.batch_size = o.batch_size;
  c.max_epochs = o.epochs;
  c.patience = o.patience;
  c.seed = o.seed;
  c.lr = o.lr;
  c.closure = o.closure_k > 0;
  if (c.closure) c.closure_k = o.closure_k;
  c.vocab_min_count = o.min_count;
  c.eval_every = o.eval_every;
  return c;
}

int cmd_train(const Opts& o) {
  if (o.out.empty()) throw UsageError("train needs --out");
  auto lang = parse_lang(o.lang);
  auto g = sf::load_grammar_file(o.grammar);
  auto cfg = train_config(o);
  cfg.validate();
  auto train = load_examples(o.data, g, lang);
  std::vector<sf::Example> dev;
  if (!o.dev.empty()) dev = load_examples(o.dev, g, lang);
  auto corpus = sf::prepare_corpus(g, std::move(train), std::move(dev), cfg);
  std::ofstream log;
  if (!o.log.empty()) {
    log.open(o.log);
    if (!log) throw UsageError("cannot write log file " + o.log);
  }
  auto res = sf::train(corpus, lang, cfg, [&](const sf::EpochRecord& r) {
    auto line = r.to_json().dump();
    if (log.is_open()) log << line << "\n" << std::flush;
    std::cerr << line << "\n";
  });
  nlohmann::json extra;
  extra["language"] = std::string(sf::language_name(lang));
  extra["train_config"] = cfg.to_json();
  extra["best_epoch"] = res.best_epoch;
  extra["best_dev_acc"] = res.best_dev_acc;
  sf::save_checkpoint(res.model, o.out, extra);
  std::cerr << "best dev exact match " << fmt(res.best_dev_acc) << " at epoch " << res.best_epoch << "\n";
  return 0;
}

sf::DecodeOptions decode_options(const Opts& o) {
  sf::DecodeOptions d;
  d.beam_size = o.beam;
  d.max_steps = o.max_steps;
  d.length_normalize = o.length_norm;
  return d;
}

int cmd_decode(const Opts& o, const CLI::App& sub) {
  std::optional<sf::Grammar> expected;
  if (!o.grammar.empty()) expected = sf::load_grammar_file(o.grammar);
  auto ck = sf::load_checkpoint(o.model, expected ? &*expected : nullptr);
  auto lang = model_language(ck, o, sub);
  auto opts = decode_options(o);
  auto lines = sf::split_lines(sf::read_file(o.input));
  std::string text;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (sf::trim(lines[i]).empty()) continue;
    nlohmann::json in;
    try {
      in = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      throw sf::DataError(o.input + ":" + std::to_string(i + 1) + ": malformed JSON: " + e.what());
    }
    if (!in.is_object() || !in.contains("nl") || !in["nl"].is_string()) {
      throw sf::DataError(o.input + ":" + std::to_string(i + 1) + ": missing string field 'nl'");
    }
    sf::Example ex;
    ex.id = in.value("id", std::to_string(i + 1));
    ex.nl = in["nl"].get<std::string>();
    auto canon = sf::canonicalize(ex.nl);
    ex.source = canon.tokens;
    ex.table = canon.table;
    auto p = sf::predict(ck.model, ex, lang, opts);
    nlohmann::ordered_json j;
    j["id"] = ex.id;
    j["code"] = p.code;
    j["ok"] = p.ok;
    j["incomplete"] = p.result.incomplete;
    j["score"] = p.result.hypotheses.empty() ? 0.0 : p.result.hypotheses.front().score;
    auto rec = sf::decode_record(p.result, ck.model.grammar());
    j["hypotheses"] = rec["hypotheses"].size();
    if (!rec["hypotheses"].empty()) j["actions"] = rec["hypotheses"][0]["actions"];
    text += j.dump() + "\n";
  }
  write_out(o.out, text);
  return 0;
}

int cmd_eval(const Opts& o, const CLI::App& sub) {
  std::optional<sf::Grammar> expected;
  if (!o.grammar.empty()) expected = sf::load_grammar_file(o.grammar);
  auto ck = sf::load_checkpoint(o.model, expected ? &*expected : nullptr);
  auto lang = model_language(ck, o, sub);
  auto exs = load_examples(o.data, ck.model.grammar(), lang);
  auto opts = decode_options(o);
  std::vector<sf::EvalItem> items;
  for (const auto& ex : exs) {
    auto p = sf::predict(ck.model, ex, lang, opts);
    items.push_back({ex.id, p.code, ex.code, p.ast, ex.ast, p.ok});
  }
  sf::EvalOptions eo;
  eo.dsl = lang == sf::Language::flowdsl;
  auto report = sf::evaluate(items, eo);
  write_out(o.out, report.dump(2) + "\n");
  std::cerr << "accuracy " << fmt(report["accuracy"].get<double>()) << "  bleu4 "
            << fmt(report["bleu4"].get<double>()) << "  n " << items.size() << "\n";
  return 0;
}

int cmd_gradcheck(const Opts& o) {
  auto rep = sf::gradcheck(o.seed);
  constexpr double kTol = 1e-4;
  std::ostringstream out;
  out << std::scientific << std::setprecision(3);
  for (const auto& [name, err] : rep.per_group) out << "  " << std::left << std::setw(12) << name << " " << err << "\n";
  out << "checked " << rep.checked << " scalars, max relative error " << rep.max_rel_error << " -> "
      << (rep.max_rel_error <= kTol ? "PASS" : "FAIL") << " (tolerance 1e-4)\n";
  write_out(o.out, out.str());
  if (rep.max_rel_error > kTol) throw sf::ModelError("gradient check failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Syntax-driven neural code generation"};
  app.require_subcommand(1);
  Opts o;

  auto* fixtures = app.add_subcommand("fixtures", "Regenerate the bundled fixture corpora");
  fixtures->add_option("--out", o.out, "Data directory holding the grammar files");
  fixtures->add_option("--seed", o.seed, "Generator seed");

  auto* induce = app.add_subcommand("induce-grammar", "Induce productions from a parsed corpus");
  induce->add_option("--data,--input", o.data, "Dataset (JSON-lines)")->required();
  induce->add_option("--lang", o.lang, "minipy or flowdsl");
  induce->add_option("--root", o.root, "Root node type");
  induce->add_option("--out", o.out, "Grammar file to write");

  auto* closure = app.add_subcommand("closure", "Add unary-closure productions");
  auto* oracle = app.add_subcommand("oracle", "Print oracle action sequences");
  auto* stats = app.add_subcommand("stats", "Grammar and corpus statistics");
  for (auto* s : {closure, oracle, stats}) {
    s->add_option("--grammar", o.grammar, "Grammar file")->required();
    s->add_option("--data,--input", o.data, "Dataset (JSON-lines)")->required();
    s->add_option("--lang", o.lang, "minipy or flowdsl");
    s->add_option("--out", o.out, "Output file (default stdout)");
  }
  closure->add_option("--closure-k", o.closure_k, "Frequency threshold (default 30)");
  stats->add_option("--closure-k", o.closure_k, "Also report statistics after closure at this threshold");

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--grammar", o.grammar, "Grammar file")->required();
  train->add_option("--data,--input", o.data, "Training set (JSON-lines)")->required();
  train->add_option("--dev", o.dev, "Dev set; defaults to the training set");
  train->add_option("--lang", o.lang, "minipy or flowdsl");
  train->add_option("--out", o.out, "Checkpoint to write");
  train->add_option("--log", o.log, "Per-epoch JSON-lines log");
  train->add_option("--seed", o.seed, "Random seed");
  train->add_option("--dropout", o.dropout, "Dropout: 0, 0.2, 0.3 or 0.4");
  train->add_option("--closure-k", o.closure_k, "Enable unary closure at this threshold");
  train->add_option("--beam", o.beam, "Beam size for dev decoding");
  train->add_option("--epochs", o.epochs, "Maximum epochs");
  train->add_option("--batch-size", o.batch_size, "Examples per batch");
  train->add_option("--lr", o.lr, "Adam learning rate");
  train->add_option("--patience", o.patience, "Evaluations without improvement before stopping");
  train->add_option("--eval-every", o.eval_every, "Epochs between dev evaluations");
  train->add_option("--min-count", o.min_count, "Vocabulary frequency threshold");
  train->add_flag("--masked-rules", o.masked, "Normalize ApplyRule over the frontier's productions");

  auto* decode = app.add_subcommand("decode", "Decode descriptions with a trained model");
  auto* eval = app.add_subcommand("eval", "Decode and score a labelled set");
  for (auto* s : {decode, eval}) {
    s->add_option("--grammar", o.grammar, "Grammar the checkpoint must match");
    s->add_option("--model", o.model, "Checkpoint")->required();
    s->add_option("--beam", o.beam, "Beam size");
    s->add_option("--max-steps", o.max_steps, "Decoder step limit");
    s->add_option("--lang", o.lang, "minipy or flowdsl (default: from the checkpoint)");
    s->add_option("--out", o.out, "Output file (default stdout)");
    s->add_flag("--length-norm", o.length_norm, "Rank finished hypotheses by per-action score");
  }
  decode->add_option("--input,--data", o.input, "Descriptions (JSON-lines with id, nl)")->required();
  eval->add_option("--data,--input", o.data, "Labelled set (JSON-lines)")->required();

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  grad->add_option("--seed", o.seed, "Parameter seed");
  grad->add_option("--out", o.out, "Report file (default stdout)");

  for (auto* s : app.get_subcommands({})) s->add_option("--config", o.config, "key = value defaults file");

  try {
    // Config values fill options missing from the command line.
    std::vector<std::string> args(argv + 1, argv + argc);
    auto cfg = std::find(args.begin(), args.end(), "--config");
    CLI::App* sub = args.empty() ? nullptr : app.get_subcommand_no_throw(args[0]);
    if (sub && cfg != args.end() && cfg + 1 != args.end()) {
      std::set<std::string> given;
      for (const auto& a : args) {
        if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') - 2));
      }
      for (const auto& [key, val] : read_config(*(cfg + 1))) {
        auto* opt = sub->get_option_no_throw("--" + key);
        if (!opt) throw UsageError("unknown config key '" + key + "' for " + args[0]);
        bool on_cli = std::any_of(given.begin(), given.end(), [&](const std::string& n) { return opt->check_lname(n); });
        if (!on_cli) args.push_back("--" + key + "=" + val);
      }
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "E:usage: " << e.what() << "\n";
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "E:usage: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*fixtures) return cmd_fixtures(o);
    if (*induce) return cmd_induce(o);
    if (*closure) return cmd_closure(o);
    if (*oracle) return cmd_oracle(o);
    if (*stats) return cmd_stats(o);
    if (*train) return cmd_train(o);
    if (*decode) return cmd_decode(o, *decode);
    if (*eval) return cmd_eval(o, *eval);
    if (*grad) return cmd_gradcheck(o);
  } catch (const UsageError& e) {
    std::cerr << "E:usage: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "E:" << error_code(e) << ": " << e.what() << "\n";
    return 2;
  }
  return 1;
}
