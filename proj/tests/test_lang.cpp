#include <doctest.h>

#include <string>

#include "synforge/data.hpp"
#include "synforge/error.hpp"
#include "synforge/lang.hpp"

using namespace synforge;

namespace {

std::string data(const std::string& rel) { return std::string(SYNFORGE_DATA_DIR) + "/" + rel; }

void check_round_trip(const std::string& code, Language lang) {
  CAPTURE(code);
  auto tree = parse_code(code, lang);
  auto text = render(tree, lang);
  CHECK(text == code);
  CHECK(ast_equal(parse_code(text, lang), tree));
}

}  // namespace

TEST_CASE("language names") {
  CHECK(language_from_name("minipy") == Language::minipy);
  CHECK(language_from_name("flowdsl") == Language::flowdsl);
  CHECK_FALSE(language_from_name("cobol"));
  CHECK(language_name(Language::flowdsl) == "flowdsl");
}

TEST_CASE("canonical minipy renders back verbatim") {
  for (const char* code : {
           "print(config)",
           "x = 1",
           "x = 2.5",
           "token = sorted(entry, reverse=True)",
           "record = width.split('done')",
           "width = lambda numbers: numbers * 10",
           "x = a + b * 2",
           "x = (a + b) * 2",
           "x = a - (b - c)",
           "x = a / b / c",
           "message.join()",
           "if result:\n    my_list = 12\nelse:\n    my_list = 10",
           "for text in score:\n    reversed(text)",
           "for config in index:\n    if config:\n        stack.append(config)",
           "x = 'two words'",
       }) {
    check_round_trip(code, Language::minipy);
  }
}

TEST_CASE("else: pass is dropped") {
  auto t = parse_code("if a:\n    b()\nelse:\n    pass", Language::minipy);
  CHECK(render(t, Language::minipy) == "if a:\n    b()");
}

TEST_CASE("every bundled example round trips") {
  for (const char* f : {"minipy/train.jsonl", "minipy/dev.jsonl", "minipy/test.jsonl", "oov_copy.jsonl"}) {
    for (const auto& r : read_jsonl(data(f))) check_round_trip(r.code, Language::minipy);
  }
  for (const char* f : {"flowdsl/train.jsonl", "flowdsl/dev.jsonl", "flowdsl/test.jsonl"}) {
    for (const auto& r : read_jsonl(data(f))) check_round_trip(r.code, Language::flowdsl);
  }
}

TEST_CASE("flowdsl recipes") {
  auto t = parse_code("IF Gmail.NewEmailInInbox THEN Hue.BlinkLights", Language::flowdsl);
  CHECK(t.type == "root");
  REQUIRE(t.children.size() == 2);
  CHECK(render(t, Language::flowdsl) == "IF Gmail.NewEmailInInbox THEN Hue.BlinkLights");
  CHECK_THROWS_AS(parse_code("IF Gmail THEN Hue.BlinkLights", Language::flowdsl), DataError);
  CHECK_THROWS_AS(parse_code("WHEN a.b THEN c.d", Language::flowdsl), DataError);
}

TEST_CASE("parse errors carry a position") {
  for (const char* bad : {"x = (1", "for x in:\n    y()", "x = = 2", "if a\n    b()", "x = 'open"}) {
    CAPTURE(bad);
    try {
      parse_code(bad, Language::minipy);
      FAIL("accepted malformed code");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
  }
}

TEST_CASE("rendering rejects foreign or incomplete trees") {
  auto t = parse_code("print(config)", Language::minipy);
  CHECK_THROWS_AS(render(t, Language::flowdsl), AstError);
  t.children[0].complete = false;
  CHECK_THROWS_AS(render(t, Language::minipy), AstError);
}

TEST_CASE("terminal split and join conventions") {
  CHECK(split_terminal_value("sortedList", "str") == std::vector<std::string>{"sorted", "List"});
  CHECK(join_terminal_tokens({"sorted", "List"}, "str") == "sortedList");
  CHECK(split_terminal_value("two  words", "string") == std::vector<std::string>{"two", "words"});
  CHECK(join_terminal_tokens({"two", "words"}, "string") == "two words");
  CHECK(split_terminal_value("12.5", "number") == std::vector<std::string>{"12.5"});
}

TEST_CASE("placeholder tokens") {
  CHECK(is_placeholder("_STR:0_"));
  CHECK(is_placeholder("_STR:12_"));
  CHECK_FALSE(is_placeholder("_STR:_"));
  CHECK_FALSE(is_placeholder("_STR:a_"));
  CHECK_FALSE(is_placeholder("STR:0"));
}
