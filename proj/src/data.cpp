#include "synforge/data.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include <json.hpp>

#include "synforge/error.hpp"
#include "synforge/util.hpp"

namespace synforge {

namespace {

std::string placeholder(std::size_t i) { return "_STR:" + std::to_string(i) + "_"; }

bool all_digits_or_dots(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)) || c == '.'; });
}

}  // namespace

std::vector<std::string> tokenize_description(std::string_view text) {
  static constexpr std::string_view kDetach = "()[],:='\"";
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) {
    std::vector<std::string> pieces;
    if (is_placeholder(word)) {
      pieces.push_back(word);
    } else {
      std::string cur;
      for (char c : word) {
        if (kDetach.find(c) != std::string_view::npos) {
          if (!cur.empty()) pieces.push_back(std::move(cur));
          cur.clear();
          pieces.emplace_back(1, c);
        } else {
          cur += c;
        }
      }
      if (!cur.empty()) pieces.push_back(std::move(cur));
    }
    for (auto& p : pieces) {
      bool trailing_stop = p.size() > 1 && p.back() == '.' && !is_placeholder(p);
      if (trailing_stop) p.pop_back();
      out.push_back(p);
      auto inner = p.find('.');
      if (inner != std::string::npos && !all_digits_or_dots(p)) {
        std::size_t start = 0;
        while (start <= p.size()) {
          auto dot = p.find('.', start);
          auto part = p.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
          if (!part.empty()) out.push_back(part);
          if (dot == std::string::npos) break;
          start = dot + 1;
        }
      }
      if (trailing_stop) out.emplace_back(".");
    }
  }
  return out;
}

Canonical canonicalize(std::string_view description) {
  Canonical c;
  std::string text;
  std::size_t i = 0;
  while (i < description.size()) {
    char q = description[i];
    if (q != '\'' && q != '"') {
      text += q;
      ++i;
      continue;
    }
    auto close = description.find(q, i + 1);
    if (close == std::string_view::npos) {
      c.warnings.push_back("unbalanced quote at offset " + std::to_string(i) + "; left verbatim");
      text.append(description.substr(i));
      break;
    }
    std::string value(description.substr(i + 1, close - i - 1));
    auto it = std::find(c.table.begin(), c.table.end(), value);
    std::size_t idx = static_cast<std::size_t>(it - c.table.begin());
    if (it == c.table.end()) c.table.push_back(value);
    text += ' ' + placeholder(idx) + ' ';
    i = close + 1;
  }
  c.tokens = tokenize_description(text);
  return c;
}

std::string restore_placeholders(std::string_view code, std::span<const std::string> table) {
  std::string out;
  std::size_t i = 0;
  while (i < code.size()) {
    if (code.compare(i, 5, "_STR:") == 0) {
      std::size_t j = i + 5;
      while (j < code.size() && std::isdigit(static_cast<unsigned char>(code[j]))) ++j;
      if (j > i + 5 && j < code.size() && code[j] == '_') {
        auto idx = std::stoul(std::string(code.substr(i + 5, j - i - 5)));
        if (idx >= table.size()) throw DataError("unknown placeholder index " + std::to_string(idx));
        out += '\'';
        for (char c : table[idx]) {
          if (c == '\'' || c == '\\') out += '\\';
          out += c;
        }
        out += '\'';
        i = j + 1;
        continue;
      }
    }
    out += code[i++];
  }
  return out;
}

AstNode canonicalize_ast(const AstNode& ast, std::span<const std::string> table) {
  AstNode out = ast;
  if (out.type == "string" && !out.tokens.empty()) {
    auto value = join_terminal_tokens(out.tokens, "string");
    auto it = std::find(table.begin(), table.end(), value);
    if (it != table.end()) out.tokens = {placeholder(static_cast<std::size_t>(it - table.begin()))};
  }
  for (auto& c : out.children) c = canonicalize_ast(c, table);
  return out;
}

Vocab::Vocab(std::vector<std::string> source_words, std::vector<std::string> terminal_words) {
  source_.push_back(kSourceUnknown);
  terminal_.push_back(kCloseToken);
  terminal_.push_back(kUnknownToken);
  for (auto& w : source_words) {
    if (w == kSourceUnknown) throw DataError("reserved source word '" + w + "'");
    source_.push_back(std::move(w));
  }
  for (auto& w : terminal_words) {
    if (w == kCloseToken || w == kUnknownToken) throw DataError("reserved terminal token '" + w + "'");
    terminal_.push_back(std::move(w));
  }
  for (int i = 0; i < source_size(); ++i) {
    if (!source_index_.emplace(source_[i], i).second) throw DataError("duplicate source word '" + source_[i] + "'");
  }
  for (int i = kFirstWordId; i < terminal_size(); ++i) {
    if (!terminal_index_.emplace(terminal_[i], i).second) {
      throw DataError("duplicate terminal token '" + terminal_[i] + "'");
    }
  }
}

int Vocab::source_id(std::string_view word) const {
  auto it = source_index_.find(word);
  return it == source_index_.end() ? kSourceUnknownId : it->second;
}

std::optional<int> Vocab::terminal_id(std::string_view word) const {
  auto it = terminal_index_.find(word);
  if (it == terminal_index_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> Vocab::encode(std::span<const std::string> words) const {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(source_id(w));
  return ids;
}

std::vector<std::string> Vocab::source_words() const { return {source_.begin() + 1, source_.end()}; }

std::vector<std::string> Vocab::terminal_words() const {
  return {terminal_.begin() + kFirstWordId, terminal_.end()};
}

std::string Vocab::hash() const {
  std::string blob;
  for (const auto& w : source_) blob += w + '\n';
  blob += '\x1f';
  for (const auto& w : terminal_) blob += w + '\n';
  return fnv1a_hex(blob);
}

namespace {

std::vector<std::string> frequent(const std::map<std::string, int>& counts, int d) {
  std::vector<std::pair<std::string, int>> kept;
  for (const auto& [w, n] : counts) {
    if (n >= d) kept.emplace_back(w, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> out;
  for (auto& [w, n] : kept) out.push_back(std::move(w));
  return out;
}

}  // namespace

Vocab build_vocab(std::span<const Example> examples, int d_source, int d_terminal) {
  if (d_source < 1 || d_terminal < 1) throw DataError("frequency threshold must be >= 1");
  std::map<std::string, int> src, term;
  for (const auto& ex : examples) {
    for (const auto& w : ex.source) {
      if (w != kSourceUnknown) ++src[w];
    }
    for (const auto& a : ex.oracle) {
      if (a.kind == ActionKind::vocab || a.kind == ActionKind::copy) ++term[a.token];
    }
  }
  return Vocab(frequent(src, d_source), frequent(term, d_terminal));
}

std::vector<Action> bind_actions(std::span<const Action> oracle, const Vocab& vocab,
                                 std::span<const std::string> source) {
  std::vector<Action> out;
  out.reserve(oracle.size());
  for (const auto& a : oracle) {
    if (a.kind != ActionKind::vocab && a.kind != ActionKind::copy) {
      out.push_back(a);
      continue;
    }
    std::vector<int> positions;
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (source[i] == a.token) positions.push_back(static_cast<int>(i));
    }
    Action b;
    if (auto id = vocab.terminal_id(a.token)) {
      b = Action::gen_vocab(*id, a.token);
    } else if (!positions.empty()) {
      b = Action::gen_copy(positions.front(), a.token);
    } else {
      b = Action::gen_vocab(kUnknownTokenId, a.token);
    }
    b.copy_positions = std::move(positions);
    out.push_back(std::move(b));
  }
  return out;
}

bool producible(const Example& ex, const Vocab& vocab) {
  for (const auto& a : bind_actions(ex.oracle, vocab, ex.source)) {
    if (a.kind == ActionKind::vocab && a.arg == kUnknownTokenId) return false;
  }
  return true;
}

Example make_example(const RawExample& raw, const Grammar& g, Language lang) {
  Example ex;
  ex.id = raw.id;
  ex.nl = raw.nl;
  auto canon = canonicalize(raw.nl);
  ex.source = std::move(canon.tokens);
  ex.table = std::move(canon.table);
  if (ex.source.empty()) throw DataError("empty description");
  AstNode parsed = parse_code(raw.code, lang);
  ex.code = render(parsed, lang);
  ex.ast = resolve_rules(canonicalize_ast(parsed, ex.table), g);
  ex.oracle = oracle_actions(ex.ast, g);
  return ex;
}

std::vector<RawExample> read_jsonl(const std::filesystem::path& path) {
  std::vector<RawExample> rows;
  auto lines = split_lines(read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(i + 1) + ": malformed JSON: " + e.what());
    }
    auto field = [&](const char* key) {
      if (!j.is_object() || !j.contains(key) || !j[key].is_string()) {
        throw DataError(path.string() + ":" + std::to_string(i + 1) + ": missing string field '" + key + "'");
      }
      return j[key].get<std::string>();
    };
    rows.push_back({field("id"), field("nl"), field("code")});
  }
  return rows;
}

std::string to_jsonl(std::span<const RawExample> rows) {
  std::string out;
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["nl"] = r.nl;
    j["code"] = r.code;
    out += j.dump() + '\n';
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& path, const Grammar& g, Language lang) {
  Dataset ds;
  auto lines = split_lines(read_file(path));
  std::size_t line_no = 0;
  for (const auto& line : lines) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    RawExample raw;
    if (j.is_object()) {
      if (j.contains("id") && j["id"].is_string()) raw.id = j["id"].get<std::string>();
      if (j.contains("nl") && j["nl"].is_string()) raw.nl = j["nl"].get<std::string>();
      if (j.contains("code") && j["code"].is_string()) raw.code = j["code"].get<std::string>();
    }
    if (!j.is_object() || !j.contains("nl") || !j.contains("code")) {
      ds.skipped.push_back({line_no, raw.id, "missing nl or code field"});
      continue;
    }
    try {
      ds.examples.push_back(make_example(raw, g, lang));
    } catch (const Error& e) {
      ds.skipped.push_back({line_no, raw.id, e.what()});
    }
  }
  return ds;
}

}  // namespace synforge
