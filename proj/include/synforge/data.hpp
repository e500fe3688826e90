#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synforge/ast.hpp"
#include "synforge/grammar.hpp"
#include "synforge/lang.hpp"
#include "synforge/transition.hpp"

namespace synforge {

struct Canonical {
  std::vector<std::string> tokens;
  // Placeholder index -> original quoted text.
  std::vector<std::string> table;
  std::vector<std::string> warnings;
};

// Replaces quoted spans with _STR:i_ placeholders and tokenizes the rest.
// Identical quoted values share one index.
Canonical canonicalize(std::string_view description);

// Whitespace split plus punctuation detachment and dotted-name expansion. No
// quote handling; canonicalize() calls this after placeholder substitution.
std::vector<std::string> tokenize_description(std::string_view text);

// Swaps every _STR:i_ in `code` for the quoted table entry. Throws DataError on
// an index missing from the table.
std::string restore_placeholders(std::string_view code, std::span<const std::string> table);

// Rewrites string literals whose value is a table entry into placeholders.
AstNode canonicalize_ast(const AstNode& ast, std::span<const std::string> table);

struct Example {
  std::string id;
  std::string nl;
  std::vector<std::string> source;
  std::vector<std::string> table;
  // Gold surface code as rendered from the parsed tree, placeholders restored.
  std::string code;
  // Tree with placeholders in place and rule ids resolved.
  AstNode ast;
  // Grammar-only oracle: GenToken steps are unbound until bind_actions().
  std::vector<Action> oracle;
};

struct RawExample {
  std::string id;
  std::string nl;
  std::string code;
};

// Source words (id 0 is <unk>) and terminal tokens (row 0 is </n>, row 1 is
// <unk>). Ids of real words are ordered by frequency, then lexicographically.
class Vocab {
 public:
  Vocab() : Vocab(std::vector<std::string>{}, std::vector<std::string>{}) {}
  // Word lists without the reserved entries.
  Vocab(std::vector<std::string> source_words, std::vector<std::string> terminal_words);

  int source_size() const { return static_cast<int>(source_.size()); }
  int terminal_size() const { return static_cast<int>(terminal_.size()); }
  const std::string& source_word(int id) const { return source_.at(id); }
  const std::string& terminal_word(int id) const { return terminal_.at(id); }
  int source_id(std::string_view word) const;
  std::optional<int> terminal_id(std::string_view word) const;

  std::vector<int> encode(std::span<const std::string> words) const;
  // Real words only, in id order.
  std::vector<std::string> source_words() const;
  std::vector<std::string> terminal_words() const;
  std::string hash() const;

 private:
  std::vector<std::string> source_;
  std::vector<std::string> terminal_;
  std::map<std::string, int, std::less<>> source_index_;
  std::map<std::string, int, std::less<>> terminal_index_;
};

inline constexpr int kSourceUnknownId = 0;
inline constexpr const char* kSourceUnknown = "<unk>";

// Words seen fewer than d times fall out of the vocabulary. Terminal tokens are
// counted over the oracle GenToken steps.
Vocab build_vocab(std::span<const Example> examples, int d_source, int d_terminal);

// Binds oracle GenToken steps against the vocabulary and the source sentence.
// In-vocabulary tokens become GenVocab with every matching source position
// attached; OOV tokens present in the source become GenCopy at the first
// match; anything else binds to the unknown row.
std::vector<Action> bind_actions(std::span<const Action> oracle, const Vocab& vocab,
                                 std::span<const std::string> source);

// True when every gold token is reachable by generation or copying.
bool producible(const Example& ex, const Vocab& vocab);

struct SkippedExample {
  std::size_t line = 0;
  std::string id;
  std::string reason;
};

struct Dataset {
  std::vector<Example> examples;
  std::vector<SkippedExample> skipped;
};

// Builds an Example: canonicalizes the description, parses and canonicalizes
// the code, resolves rules and extracts the oracle. Throws on any failure.
Example make_example(const RawExample& raw, const Grammar& g, Language lang);

// JSON-lines {id, nl, code}. Malformed JSON throws DataError naming the line;
// examples whose code fails to parse or derive are skipped and reported.
Dataset load_dataset(const std::filesystem::path& path, const Grammar& g, Language lang);
std::vector<RawExample> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(std::span<const RawExample> rows);

}  // namespace synforge
