#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "dwim/dsl.hpp"
#include "dwim/rng.hpp"
#include "dwim/serialize.hpp"
#include "dwim/sim.hpp"
#include "fixtures.hpp"

using namespace dwim;
using namespace dwim::dsl;

namespace {

sim::Scene two_chairs() {
  sim::Scene s;
  s.scene_id = "s";
  s.objects = {{0, "chair", {{"color", "red"}, {"size", "small"}}, {10, 10, 40, 40}},
               {1, "chair", {{"color", "blue"}, {"size", "large"}}, {300, 200, 360, 260}},
               {2, "lamp", {{"color", "white"}, {"size", "small"}}, {100, 300, 130, 340}}};
  return s;
}

struct Noiseless {
  sim::Scene scene = two_chairs();
  sim::ToolSession session{scene, sim::NoiseModel::uniform(0.0, 1), ToolLibrary::complete(), 1};
  Bindings bindings{{"image", session.image()}};

  Feedback run(std::string_view src) { return run_code(src, bindings, session, 1); }
};

/// Tool backend that records calls and fails on demand.
class Recorder final : public ToolBackend {
 public:
  std::vector<std::string> calls;
  std::string fail_on;

  ToolOutcome call(std::string_view name, std::span<const Value>) override {
    calls.emplace_back(name);
    if (name == fail_on) return ToolOutcome::error("RuntimeError", "tool failed");
    return ToolOutcome::ok(Value(ValueList{Value("x")}));
  }
  Value image() const override { return Value(Region::full(512, 512)); }
};

std::vector<std::filesystem::path> programs(const std::string& kind) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(fixtures::fixture_dir() / "programs" / kind))
    out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(ParseProgram, Assignment) {
  const auto p = parse_program("dogs = find(\"dog\")");
  ASSERT_EQ(p.statements.size(), 1u);
  const auto& st = p.statements[0];
  EXPECT_EQ(st.target, "dogs");
  EXPECT_EQ(st.expr.kind, Expr::Kind::Call);
  EXPECT_EQ(st.expr.name, "find");
  ASSERT_EQ(st.expr.args.size(), 1u);
  EXPECT_EQ(st.expr.args[0].literal, Value("dog"));
}

TEST(ParseProgram, NestedCall) {
  const auto p = parse_program("final_answer = bool_to_yesno(exists(\"cat\"))");
  const auto& outer = p.statements.at(0).expr;
  EXPECT_EQ(outer.name, "bool_to_yesno");
  ASSERT_EQ(outer.args.size(), 1u);
  EXPECT_EQ(outer.args[0].kind, Expr::Kind::Call);
  EXPECT_EQ(outer.args[0].name, "exists");
}

TEST(ParseProgram, ImportIsSyntaxError) {
  try {
    parse_program("import os");
    FAIL() << "expected SyntaxError";
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.line(), 1);
    EXPECT_EQ(e.column(), 1);
  }
}

TEST(ParseProgram, UnknownBuiltinNamesIt) {
  try {
    parse_program("x = 1\ny = detect(\"dog\")");
    FAIL() << "expected UnknownBuiltin";
  } catch (const UnknownBuiltin& e) {
    EXPECT_EQ(e.name(), "detect");
    EXPECT_EQ(e.line(), 2);
  }
}

TEST(ParseProgram, ValidCorpusParses) {
  const auto files = programs("valid");
  ASSERT_GE(files.size(), 8u);
  for (const auto& f : files) EXPECT_NO_THROW(parse_program(read_text_file(f))) << f;
}

TEST(ParseProgram, InvalidCorpusIsRejected) {
  const auto files = programs("invalid");
  ASSERT_GE(files.size(), 8u);
  for (const auto& f : files) {
    bool rejected = false;
    try {
      parse_program(read_text_file(f));
    } catch (const SyntaxError&) {
      rejected = true;
    } catch (const UnknownBuiltin&) {
      rejected = true;
    }
    EXPECT_TRUE(rejected) << f;
  }
}

TEST(Evaluate, ExistsOnCatFreeScene) {
  Noiseless env;
  const auto fb = env.run("exists(\"cat\")");
  EXPECT_EQ(fb.payload, "False");
  EXPECT_FALSE(fb.is_error);
}

TEST(Evaluate, UnknownSymbolIsTraceback) {
  Noiseless env;
  const auto fb = env.run("foo()");
  EXPECT_TRUE(fb.is_error);
  EXPECT_TRUE(fb.payload.starts_with(kTracebackSentinel));
  EXPECT_TRUE(fb.payload.ends_with("UnknownBuiltin: foo"));
}

TEST(Evaluate, BoolToYesNo) {
  Noiseless env;
  EXPECT_EQ(env.run("bool_to_yesno(True)").payload, "yes");
  EXPECT_EQ(env.run("bool_to_yesno(False)").payload, "no");
}

TEST(Evaluate, CountingAndAssignment) {
  Noiseless env;
  EXPECT_EQ(env.run("n = count(find(\"chair\"))").payload, "");
  EXPECT_EQ(env.bindings.at("n"), Value(2));
  EXPECT_EQ(env.run("final_answer = n\nfinal_answer").payload, "2");
  EXPECT_EQ(env.run("count(find(\"chair\")) > count(find(\"lamp\"))").payload, "True");
}

TEST(Evaluate, BindingsPersistAcrossRuns) {
  Noiseless env;
  env.run("a = find(\"lamp\")");
  EXPECT_EQ(env.run("best_description_from_options(a[0], [\"red\", \"white\"])").payload, "white");
}

TEST(Evaluate, RuntimeFaults) {
  Noiseless env;
  EXPECT_TRUE(env.run("x = find(\"dog\")[0]").payload.ends_with("IndexError: list index out of range"));
  EXPECT_TRUE(env.run("y").payload.ends_with("NameError: name 'y' is not defined"));
  EXPECT_TRUE(env.run("count(3)").is_error);
  EXPECT_TRUE(env.run("1 < \"a\"").is_error);
}

TEST(Evaluate, FaultAtomicity) {
  Rng rng(4);
  const std::vector<std::string> good = {"a = find(\"x\")", "b = 1", "c = \"s\"", "a = [1, 2]", "b = count(find(\"y\"))"};
  for (int trial = 0; trial < 2000; ++trial) {
    Recorder tools;
    tools.fail_on = "simple_query";
    Bindings bindings{{"seed", Value(trial)}};
    std::string src;
    const auto before_fault = rng.below(4);
    for (std::uint64_t i = 0; i < before_fault; ++i) src += good[rng.below(good.size())] + "\n";
    // Reference: the statements before the fault, run on their own.
    Bindings expected = bindings;
    Recorder ref_tools;
    if (!src.empty()) run_code(src, expected, ref_tools, 1);

    src += "z = simple_query(\"q\")\n";
    for (std::uint64_t i = 0; i < 1 + rng.below(3); ++i) src += good[rng.below(good.size())] + "\n";
    const auto fb = run_code(src, bindings, tools, 1);
    ASSERT_TRUE(fb.is_error);
    ASSERT_EQ(bindings, expected) << src;
    ASSERT_FALSE(tools.calls.empty());
    ASSERT_EQ(tools.calls.back(), "simple_query") << "a statement after the fault ran";
  }
}

TEST(Evaluate, DeterministicUnderFixedSeed) {
  auto scene = two_chairs();
  const auto src = "a = count(find(\"chair\"))\nb = simple_query(\"What color is the lamp?\")\nc = exists(\"lamp\")\n[a, b, c]";
  std::vector<std::string> payloads;
  for (int run = 0; run < 2; ++run) {
    sim::ToolSession session(scene, sim::NoiseModel::uniform(0.5, 3), ToolLibrary::complete(), 77);
    Bindings b{{"image", session.image()}};
    std::string all;
    for (int i = 0; i < 20; ++i) all += run_code(src, b, session, i + 1).payload + "|";
    payloads.push_back(all);
  }
  EXPECT_EQ(payloads[0], payloads[1]);
}

TEST(Evaluate, DisabledToolIsFault) {
  auto scene = two_chairs();
  ToolLibrary lib{{ToolGroup::Detector}};
  sim::ToolSession session(scene, sim::NoiseModel::uniform(0.0, 1), lib, 1);
  Bindings b{{"image", session.image()}};
  const auto fb = run_code("exists(\"chair\")", b, session, 1);
  EXPECT_TRUE(fb.is_error);
  EXPECT_EQ(run_code("count(find(\"chair\"))", b, session, 2).payload, "2");
}

TEST(BuiltinDocs, DetectorOnly) {
  const auto docs = builtin_docs(ToolLibrary{{ToolGroup::Detector}});
  EXPECT_NE(docs.find("find(object_name"), std::string::npos);
  EXPECT_NE(docs.find("Detect Object"), std::string::npos);
  EXPECT_EQ(docs.find("exists("), std::string::npos);
}

TEST(BuiltinDocs, CompleteListsEveryBuiltinInOrder) {
  const auto docs = builtin_docs(ToolLibrary::complete());
  std::size_t last = 0;
  int seen = 0;
  for (const auto& b : builtins()) {
    const auto pos = docs.find(std::string(b.signature));
    ASSERT_NE(pos, std::string::npos) << b.name;
    EXPECT_GE(pos, last);
    last = pos;
    ++seen;
  }
  EXPECT_GE(seen, 10);
  EXPECT_EQ(docs, builtin_docs(ToolLibrary::complete()));
}

TEST(BuiltinDocs, EmptyLibraryKeepsPureHelpers) {
  const auto docs = builtin_docs(ToolLibrary::none());
  EXPECT_NE(docs.find("bool_to_yesno"), std::string::npos);
  EXPECT_NE(docs.find("Comparisons"), std::string::npos);
  for (const auto& b : builtins())
    if (b.group) EXPECT_EQ(docs.find(std::string(b.signature)), std::string::npos) << b.name;
}
