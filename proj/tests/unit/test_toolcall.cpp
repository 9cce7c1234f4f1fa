#include <doctest.h>

#include <atomic>

#include "distillrag/errors.hpp"
#include "distillrag/llm_client.hpp"
#include "distillrag/toolcall.hpp"

using namespace distillrag;

TEST_CASE("parse_tool_call extracts the first balanced call") {
  CHECK(parse_tool_call("search_engine(Guangzhou Typhoon Forecast.)").query == "Guangzhou Typhoon Forecast.");
  CHECK(parse_tool_call("Sure! search_engine(dose (adult) of ibuprofen) hope this helps").query ==
        "dose (adult) of ibuprofen");
  CHECK(parse_tool_call("`SEARCH_ENGINE (  aspirin dose  )`").query == "aspirin dose");
  CHECK(parse_tool_call("search_engine\t(x)").query == "x");

  const auto multi = parse_tool_call("search_engine(a) then search_engine(b)");
  CHECK(multi.query == "a");
  CHECK(multi.multiple_calls);
  CHECK_FALSE(parse_tool_call("search_engine(a)").multiple_calls);
}

TEST_CASE("parse_tool_call classifies failures") {
  auto code = [](std::string_view s) {
    try {
      (void)parse_tool_call(s);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  CHECK(code("The dose is 400mg.") == ErrorCode::NoToolCall);
  CHECK(code("search_engine x") == ErrorCode::NoToolCall);
  CHECK(code("search_engine(abc") == ErrorCode::UnbalancedParens);
  CHECK(code("search_engine(a(b)") == ErrorCode::UnbalancedParens);
  CHECK(code("search_engine(   )") == ErrorCode::EmptyQuery);
  CHECK(try_parse_tool_call("").error == ToolCallError::no_tool_call);
}

TEST_CASE("format and parse round trip") {
  for (const char* q : {"a", "ibuprofen (adult) dose", "阿莫西林 用法", "x)(y"}) {
    const auto parsed = try_parse_tool_call(format_tool_call(q));
    if (std::string_view(q) == "x)(y") {
      // The first balanced group closes early, so the query is not recoverable.
      REQUIRE(parsed.ok());
      CHECK(parsed.call->query == "x");
    } else {
      REQUIRE(parsed.ok());
      CHECK(parsed.call->query == q);
    }
  }
}

TEST_CASE("history serialization") {
  CHECK(serialize_history({}) == "(none)");
  CHECK(serialize_history({{"q1", "a1"}, {"q2", "a2"}}) == "User: q1\nAssistant: a1\nUser: q2\nAssistant: a2");
}

TEST_CASE("distill prompt contains the pieces in order") {
  const auto empty = build_distill_prompt({}, "What is the adult dose of ibuprofen?");
  CHECK(empty.find("What is the adult dose of ibuprofen?") != std::string::npos);
  CHECK(empty.find("search_engine(<keywords>)") != std::string::npos);
  CHECK(empty.find("exactly one tool call") != std::string::npos);

  const DialogueHistory h{{"q1", "a1"}, {"q2", "a2"}, {"q3", "a3"}};
  const auto p = build_distill_prompt(h, "final?");
  std::size_t pos = 0;
  for (const char* line : {"User: q1", "Assistant: a1", "User: q2", "Assistant: a2", "User: q3", "Assistant: a3",
                           "final?"}) {
    const auto next = p.find(line, pos);
    REQUIRE(next != std::string::npos);
    pos = next;
  }
  CHECK(p == build_distill_prompt(h, "final?"));
  CHECK(p != build_distill_prompt({{"q1", "a1"}}, "final?"));
  CHECK_THROWS_AS(build_distill_prompt(h, "  "), Error);

  const DistillPrompt custom("H={{history}} Q={{question}}");
  CHECK(custom.build({{"a", "b"}}, " q ") == "H=User: a\nAssistant: b Q=q");
}

TEST_CASE("baseline queries") {
  CHECK(baseline_query({}, "Can I take it with alcohol?", BaselineKind::last_question) ==
        "Can I take it with alcohol?");
  CHECK(baseline_query({{"x", "y"}}, "Q", BaselineKind::last_question) == "Q");
  CHECK(baseline_query({}, "Q", BaselineKind::history) == "Q");
  CHECK(baseline_query({{"q1", "a1"}, {"q2", "a2"}}, "Q", BaselineKind::history) == "q1\na1\nq2\na2\nQ");
  CHECK_THROWS_AS(baseline_query({}, " ", BaselineKind::history), Error);
  CHECK(parse_baseline_kind("history") == BaselineKind::history);
}

TEST_CASE("synthetic pair generation keeps order and drops bad replies") {
  ScriptedLlmClient teacher({{"X?", "search_engine(X)", ""},
                             {"prose", "I think you should rest.", ""},
                             {"boom", "", "timeout"}},
                            "search_engine(default)");
  const auto r = generate_synthetic_pairs({"X?", "prose question", "Y?", "boom"}, teacher, {.workers = 3});
  REQUIRE(r.pairs.size() == 2);
  CHECK(r.pairs[0] == SyntheticPair{"X?", "search_engine(X)"});
  CHECK(r.pairs[1] == SyntheticPair{"Y?", "search_engine(default)"});
  CHECK(r.dropped == 2);
  REQUIRE(r.failures.size() == 2);
  CHECK(r.failures[0].index == 1);
  CHECK(r.failures[1].index == 3);

  ScriptedLlmClient silent({}, "no call");
  try {
    (void)generate_synthetic_pairs({"a", "b"}, silent);
    FAIL("expected AllItemsFailed");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AllItemsFailed);
  }
}

TEST_CASE("synthetic records validate") {
  CHECK(validate_synthetic_record({"long question about ibuprofen", "search_engine(short query)"}).empty());
  CHECK(validate_synthetic_record({"q", "search_engine()"}) ==
        std::vector<SynthViolation>{SynthViolation::empty_query});
  CHECK(validate_synthetic_record({"q", "no call here"}) == std::vector<SynthViolation>{SynthViolation::no_tool_call});
  CHECK(validate_synthetic_record({"abc", "search_engine(abcdef)"}) ==
        std::vector<SynthViolation>{SynthViolation::non_compressive});
  CHECK(to_string(SynthViolation::no_tool_call) == "NoToolCall");
}

TEST_CASE("synthetic jsonl round trip") {
  const std::vector<SyntheticPair> pairs{{"如何服用?", "search_engine(阿莫西林 用法)"}, {"b", "search_engine(c)"}};
  const auto text = to_jsonl(pairs);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  CHECK(parse_synthetic_jsonl(text) == pairs);
  CHECK_THROWS_AS(parse_synthetic_jsonl("{\"input\":1}\n"), Error);
}
