#include "synforge/evalx.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "synforge/error.hpp"

namespace synforge {

namespace {

std::vector<std::string_view> normalized_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

using Ngrams = std::map<std::vector<std::string>, int>;

Ngrams ngrams(std::span<const std::string> toks, std::size_t n) {
  Ngrams out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    ++out[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                   toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

const AstNode& channel_node(const AstNode& root, std::size_t i) {
  if (root.children.size() != 2) throw AstError("not a recipe tree");
  const AstNode& slot = root.children[i];
  if (slot.children.size() != 1) throw AstError("recipe slot '" + slot.type + "' has no channel");
  return slot.children.front();
}

}  // namespace

bool exact_match(std::string_view pred, std::string_view gold) {
  return normalized_lines(pred) == normalized_lines(gold);
}

std::vector<std::string> code_tokens(std::string_view code) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < code.size()) {
    char c = code[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '\'' || c == '"') {
      std::size_t j = i + 1;
      while (j < code.size() && code[j] != c) j += code[j] == '\\' ? 2 : 1;
      j = std::min(j + 1, code.size());
      out.emplace_back(code.substr(i, j - i));
      i = j;
    } else if (word_char(c)) {
      const bool number = std::isdigit(static_cast<unsigned char>(c)) != 0;
      std::size_t j = i;
      while (j < code.size()) {
        if (word_char(code[j])) {
          ++j;
        } else if (number && code[j] == '.' && j + 1 < code.size() && std::isdigit(static_cast<unsigned char>(code[j + 1]))) {
          ++j;
        } else {
          break;
        }
      }
      out.emplace_back(code.substr(i, j - i));
      i = j;
    } else {
      out.emplace_back(1, c);
      ++i;
    }
  }
  return out;
}

double bleu4(std::span<const std::string> pred, std::span<const std::string> gold) {
  if (gold.empty()) throw DataError("empty reference");
  if (pred.empty()) return 0.0;
  double log_p = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    auto p = ngrams(pred, n), g = ngrams(gold, n);
    int match = 0, total = 0;
    for (const auto& [gram, count] : p) {
      total += count;
      auto it = g.find(gram);
      if (it != g.end()) match += std::min(count, it->second);
    }
    double prec;
    if (n == 1) {
      if (match == 0) return 0.0;
      prec = static_cast<double>(match) / total;
    } else if (match == 0) {
      prec = 1.0 / (total + 1.0);
    } else {
      prec = static_cast<double>(match) / total;
    }
    log_p += 0.25 * std::log(prec);
  }
  double c = static_cast<double>(pred.size()), r = static_cast<double>(gold.size());
  double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_p);
}

DslAccuracy dsl_accuracy(const AstNode& pred, const AstNode& gold) {
  DslAccuracy a;
  a.channel = channel_node(pred, 0).type == channel_node(gold, 0).type &&
              channel_node(pred, 1).type == channel_node(gold, 1).type;
  a.full = ast_equal(pred, gold);
  return a;
}

nlohmann::ordered_json evaluate(std::span<const EvalItem> items, const EvalOptions& opts) {
  if (opts.bucket_width < 1) throw DataError("bucket width must be >= 1");
  struct Bucket {
    int n = 0;
    int correct = 0;
    double bleu = 0.0;
  };
  std::map<std::size_t, Bucket> buckets;
  double acc = 0.0, bleu = 0.0, channel = 0.0, full = 0.0;
  auto per = nlohmann::ordered_json::array();
  for (const auto& it : items) {
    bool em = it.decoded && exact_match(it.pred, it.gold);
    auto pt = code_tokens(it.pred), gt = code_tokens(it.gold);
    double b = it.decoded ? bleu4(pt, gt) : 0.0;
    auto size = node_count(it.gold_ast);
    nlohmann::ordered_json j;
    j["id"] = it.id;
    j["exact"] = em;
    j["bleu4"] = b;
    j["ref_nodes"] = size;
    j["pred"] = it.pred;
    j["gold"] = it.gold;
    if (opts.dsl) {
      DslAccuracy d;
      if (it.pred_ast) d = dsl_accuracy(*it.pred_ast, it.gold_ast);
      j["channel"] = d.channel;
      j["full"] = d.full;
      channel += d.channel;
      full += d.full;
    }
    per.push_back(std::move(j));
    acc += em;
    bleu += b;
    auto& bk = buckets[size / static_cast<std::size_t>(opts.bucket_width)];
    ++bk.n;
    bk.correct += em;
    bk.bleu += b;
  }
  const double n = items.empty() ? 1.0 : static_cast<double>(items.size());
  nlohmann::ordered_json out;
  out["accuracy"] = acc / n;
  out["bleu4"] = bleu / n;
  out["n_examples"] = items.size();
  if (opts.dsl) {
    out["channel_accuracy"] = channel / n;
    out["full_accuracy"] = full / n;
  }
  auto by_size = nlohmann::ordered_json::array();
  for (const auto& [k, bk] : buckets) {
    nlohmann::ordered_json j;
    j["min_nodes"] = k * static_cast<std::size_t>(opts.bucket_width);
    j["max_nodes"] = (k + 1) * static_cast<std::size_t>(opts.bucket_width) - 1;
    j["n"] = bk.n;
    j["accuracy"] = static_cast<double>(bk.correct) / bk.n;
    j["bleu4"] = bk.bleu / bk.n;
    by_size.push_back(std::move(j));
  }
  out["by_size"] = std::move(by_size);
  out["per_example"] = std::move(per);
  return out;
}

}  // namespace synforge
