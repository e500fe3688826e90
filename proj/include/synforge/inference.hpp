#pragma once

#include <optional>
#include <utility>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "synforge/ast.hpp"
#include "synforge/data.hpp"
#include "synforge/lang.hpp"
#include "synforge/model.hpp"
#include "synforge/transition.hpp"

namespace synforge {

struct DecodeOptions {
  int beam_size = 15;
  int max_steps = 300;
  int max_terminal_tokens = kMaxTerminalTokens;
  // Rank finished hypotheses by log-probability / length.
  bool length_normalize = false;
};

struct Hypothesis {
  std::vector<Action> actions;
  double score = 0.0;  // log-probability
  bool complete = false;
  std::optional<AstNode> ast;  // set when complete

  double ranking_score(bool length_normalize) const;
};

struct DecodeResult {
  // Best first. On an incomplete decode this holds the single best partial.
  std::vector<Hypothesis> hypotheses;
  bool incomplete = false;
  int steps = 0;
};

DecodeResult beam_search(const Model& model, std::span<const std::string> source, const DecodeOptions& opts = {});

// Step-wise argmax under the same tie-breaking as beam_search with width 1.
DecodeResult greedy_decode(const Model& model, std::span<const std::string> source, const DecodeOptions& opts = {});

// Candidate ordering shared by both decoders: lower key wins among equal
// scores (ApplyRule by id, then close, vocabulary id, copy position).
std::pair<int, int> action_key(const Action& a);

// Best complete hypothesis rendered as surface code with the example's
// placeholders restored. `code` stays empty when decoding did not complete;
// `ok` is also false when a generated placeholder is missing from the table.
struct Prediction {
  DecodeResult result;
  std::optional<AstNode> ast;
  std::string code;
  bool ok = false;
};
Prediction predict(const Model& model, const Example& ex, Language lang, const DecodeOptions& opts = {});

nlohmann::ordered_json decode_record(const DecodeResult& r, const Grammar& g);

}  // namespace synforge
