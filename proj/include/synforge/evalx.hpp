#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "synforge/ast.hpp"

namespace synforge {

// String equality after stripping trailing whitespace from every line and
// dropping trailing blank lines.
bool exact_match(std::string_view pred, std::string_view gold);

// Generic code lexer: identifiers and numbers, quoted literals as one token,
// every other non-space character on its own.
std::vector<std::string> code_tokens(std::string_view code);

// Sentence BLEU-4 with uniform weights and brevity penalty. Zero match counts
// for n > 1 are add-one smoothed. An empty prediction scores 0; an empty
// reference throws.
double bleu4(std::span<const std::string> pred, std::span<const std::string> gold);

struct DslAccuracy {
  bool channel = false;
  bool full = false;
};

// Channel level compares the trigger and action channel nodes; full level is
// ast_equal. Throws AstError on a tree that is not a recipe.
DslAccuracy dsl_accuracy(const AstNode& pred, const AstNode& gold);

struct EvalItem {
  std::string id;
  std::string pred;  // rendered, placeholders restored; empty on failure
  std::string gold;
  std::optional<AstNode> pred_ast;
  AstNode gold_ast;
  bool decoded = true;
};

struct EvalOptions {
  bool dsl = false;
  int bucket_width = 10;
};

// {accuracy, bleu4, n_examples, per_example, by_size[, channel_accuracy, full_accuracy]}
nlohmann::ordered_json evaluate(std::span<const EvalItem> items, const EvalOptions& opts = {});

}  // namespace synforge
