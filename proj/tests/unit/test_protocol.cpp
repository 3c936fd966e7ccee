#include <gtest/gtest.h>

#include "dwim/protocol.hpp"
#include "dwim/rng.hpp"
#include "fixtures.hpp"

using namespace dwim;

namespace {

Action parsed(std::string_view raw) {
  auto r = parse_action(raw);
  if (auto* e = std::get_if<ParseError>(&r)) ADD_FAILURE() << "unexpected parse error: " << e->message;
  return std::get_if<Action>(&r) ? std::get<Action>(r) : Action{};
}

ParseErrorKind error_kind(std::string_view raw) {
  auto r = parse_action(raw);
  EXPECT_TRUE(std::holds_alternative<ParseError>(r)) << raw;
  return std::holds_alternative<ParseError>(r) ? std::get<ParseError>(r).kind : ParseErrorKind::NoTag;
}

std::string random_text(Rng& rng, std::string_view alphabet, std::size_t max_len) {
  std::string s;
  const auto len = 1 + rng.below(max_len);
  for (std::uint64_t i = 0; i < len; ++i) s += alphabet[rng.below(alphabet.size())];
  return s;
}

std::string trimmed(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
  return s.empty() ? "x" : s;
}

const Task kTask{"t1", "scene-1", "How many chairs are there?", "2"};

}  // namespace

TEST(ParseAction, Examples) {
  EXPECT_EQ(parsed("<thought>I think this is the answer.</thought>"), Action::thought("I think this is the answer."));
  EXPECT_EQ(parsed("<done></done>"), Action::done());
  EXPECT_EQ(parsed("<code>```\nfinal_answer = \"yes\"\n```</code>"), Action::code("final_answer = \"yes\""));
  EXPECT_EQ(error_kind("<code>no fence</code>"), ParseErrorKind::MalformedCode);
}

TEST(ParseAction, SurroundingWhitespaceIgnored) {
  EXPECT_EQ(parsed("\n  <done></done>\n\n"), Action::done());
}

TEST(ParseAction, RethinkMarkersSetFlag) {
  const auto a = parsed("<thought>Discrepancy: count is 0. Next: ask simple_query.</thought>");
  EXPECT_TRUE(a.is_rethink);
  EXPECT_FALSE(parsed("<thought>Next: only</thought>").is_rethink);
}

TEST(ParseAction, Errors) {
  EXPECT_EQ(error_kind("just prose"), ParseErrorKind::NoTag);
  EXPECT_EQ(error_kind("<plan>x</plan>"), ParseErrorKind::NoTag);
  EXPECT_EQ(error_kind("<thought>a</thought><done></done>"), ParseErrorKind::MultipleTags);
  EXPECT_EQ(error_kind("<code>```\nx = 1\n</code>"), ParseErrorKind::MalformedCode);
  EXPECT_EQ(error_kind("<done>now</done>"), ParseErrorKind::UnexpectedContent);
  EXPECT_EQ(error_kind("sure! <done></done>"), ParseErrorKind::UnexpectedContent);
}

TEST(ParseAction, ErrorSpanPointsIntoInput) {
  const std::string raw = "<thought>a</thought> <done></done>";
  const auto e = std::get<ParseError>(parse_action(raw));
  EXPECT_EQ(raw.substr(e.span.begin, e.span.end - e.span.begin), "<done></done>");
}

TEST(ParseAction, TotalOnArbitraryInput) {
  const std::string alphabet = "<>/`\n tcodehugrsn=\"";
  const std::vector<std::string> pieces = {"<thought>", "</thought>", "<code>", "</code>", "```", "\n",
                                           "<done>",    "</done>",    "x = 1",  "<result>", "</result>"};
  Rng rng(3);
  for (int i = 0; i < 20000; ++i) {
    std::string raw;
    const auto n = rng.below(8);
    for (std::uint64_t k = 0; k < n; ++k)
      raw += rng.bernoulli(0.6) ? pieces[rng.below(pieces.size())] : random_text(rng, alphabet, 4);
    ActionParse r;
    ASSERT_NO_THROW(r = parse_action(raw)) << raw;
    if (auto* e = std::get_if<ParseError>(&r)) {
      ASSERT_LE(e->span.begin, e->span.end);
      ASSERT_LE(e->span.end, raw.size());
    }
  }
}

TEST(ParseAction, RenderRoundTrip) {
  Rng rng(5);
  const std::string code_chars = "abcxyz_ =()[]\"',.0123456789\n<>/";
  const std::string thought_chars = "abcXYZ ,.:;'\"()0123456789-\n";
  for (int i = 0; i < 5000; ++i) {
    Action a;
    switch (rng.below(3)) {
      case 0: a = Action::code(trimmed(random_text(rng, code_chars, 60))); break;
      case 1: a = Action::thought(trimmed(random_text(rng, thought_chars, 60))); break;
      default: a = Action::done();
    }
    if (a.kind == ActionKind::Thought && rng.bernoulli(0.3)) a = Action::thought(make_rethink_text("a b", "c d"));
    a.is_rethink = a.kind == ActionKind::Thought && split_rethink(a.content).has_value();
    const auto once = render_action(a);
    const auto back = parsed(once);
    ASSERT_EQ(back, a) << once;
    ASSERT_EQ(render_action(back), once);
  }
}

TEST(RenderFeedback, Examples) {
  EXPECT_EQ(render_feedback(Feedback::make(1, "2")), "<result>2</result>");
  EXPECT_EQ(render_feedback(Feedback::make(1, "")), "<result></result>");
  const auto nasty = Feedback::make(1, "a</result>b &amp; c");
  const auto wire = render_feedback(nasty);
  EXPECT_EQ(wire.find("</result>"), wire.size() - 9);
  EXPECT_EQ(unescape_payload(escape_payload(nasty.payload)), nasty.payload);
}

TEST(RenderFeedback, EscapeIsReversible) {
  Rng rng(9);
  const std::string chars = "</result>&amp;lgt x\n";
  for (int i = 0; i < 20000; ++i) {
    const auto s = random_text(rng, chars, 40);
    ASSERT_EQ(unescape_payload(escape_payload(s)), s);
    ASSERT_EQ(escape_payload(s).find("</result>"), std::string::npos);
  }
}

TEST(RenderWorkflow, FixtureCorpusIsFixpoint) {
  const auto corpus = fixtures::load_labeled_corpus();
  ASSERT_GE(corpus.size(), 30u);
  for (const auto& fx : corpus) {
    const auto rendered = render_workflow(fx.workflow);
    EXPECT_EQ(rendered, fx.body) << fx.path;
    const auto again = std::get<std::vector<Step>>(parse_transcript(rendered));
    EXPECT_EQ(render_steps(again), rendered) << fx.path;
    for (const auto& a : fx.workflow.actions) {
      auto single = a;
      single.index = 0;
      EXPECT_EQ(parsed(render_action(a)), single);
    }
  }
}

TEST(RenderWorkflow, SingleActionIsOneBlock) {
  Workflow w;
  w.actions.push_back(Action::done());
  w.actions.back().index = 1;
  EXPECT_EQ(render_workflow(w), "<done></done>\n");
}

TEST(RenderWorkflow, RethinkMarkersSurvive) {
  const auto text = render_action(Action::thought(make_rethink_text("the count was 0.", "use simple_query.")));
  EXPECT_NE(text.find(kRethinkDiscrepancyMarker), std::string::npos);
  EXPECT_NE(text.find(kRethinkNextMarker), std::string::npos);
}

TEST(ParseTranscript, ResultWithoutCodeIsRejected) {
  EXPECT_TRUE(std::holds_alternative<ParseError>(parse_transcript("<thought>x</thought>\n<result>1</result>\n")));
}

TEST(RenderPrompt, StandardHasNoAnswerLine) {
  EnvState env(kTask, "find(name) -> list\n");
  const auto p = render_prompt(env, {}, PromptMode::Standard);
  EXPECT_NE(p.find(kTask.query), std::string::npos);
  EXPECT_NE(p.find("find(name)"), std::string::npos);
  EXPECT_EQ(p.find(kAnswerLinePrefix), std::string::npos);
  EXPECT_FALSE(disclosed_answer(p));
  EXPECT_NE(p.find(system_rules()), std::string::npos);
}

TEST(RenderPrompt, AnswerConditionedDisclosesOnce) {
  EnvState env(kTask, "docs\n");
  const auto p = render_prompt(env, {}, PromptMode::AnswerConditioned);
  const auto first = p.find(kAnswerLinePrefix);
  ASSERT_NE(first, std::string::npos);
  EXPECT_EQ(p.find(kAnswerLinePrefix, first + 1), std::string::npos);
  EXPECT_EQ(disclosed_answer(p), "2");
}

TEST(RenderPrompt, HistoryInOrderAndLast) {
  EnvState env(kTask, "docs\n");
  std::vector<Step> history;
  auto c = Action::code("n = count(find(\"chair\"))\nn");
  c.index = 1;
  history.push_back({c, Feedback::make(1, "2")});
  auto d = Action::done();
  d.index = 2;
  history.push_back({d, std::nullopt});
  const auto p = render_prompt(env, history, PromptMode::Standard);
  EXPECT_EQ(history_section(p), render_steps(history));
  EXPECT_TRUE(p.ends_with(render_steps(history)));
  EXPECT_LT(p.rfind("<result>2</result>"), p.rfind("<done></done>"));
}

TEST(RenderPrompt, StandardNeverCarriesAnswerLineForAnyAnswer) {
  Rng rng(21);
  for (int i = 0; i < 500; ++i) {
    Task t = kTask;
    t.answer = std::to_string(rng.below(100));
    EnvState env(t, "docs\n");
    ASSERT_FALSE(disclosed_answer(render_prompt(env, {}, PromptMode::Standard)));
    ASSERT_EQ(disclosed_answer(render_prompt(env, {}, PromptMode::AnswerConditioned)), t.answer);
  }
}

TEST(RenderPrompt, SingleTurnDirective) {
  EnvState env(kTask, "docs\n");
  PromptOptions opts;
  opts.single_turn = true;
  EXPECT_TRUE(requests_single_turn(render_prompt(env, {}, PromptMode::Standard, opts)));
  EXPECT_FALSE(requests_single_turn(render_prompt(env, {}, PromptMode::Standard)));
}
