#include <gtest/gtest.h>

#include <numeric>

#include "dwim/engine.hpp"
#include "dwim/flagmask.hpp"
#include "dwim/pipeline.hpp"
#include "dwim/protocol.hpp"
#include "dwim/serialize.hpp"
#include "fixtures.hpp"

using namespace dwim;
using namespace dwim::mask;

namespace {

const std::string kTraceback =
    std::string(kTracebackSentinel) + "\n  File \"<cell>\", line 1, in <module>\nRuntimeError: boom";

struct Builder {
  Workflow w;
  Builder& code(std::string src, std::string payload) {
    push(Action::code(std::move(src)));
    w.feedbacks.push_back(Feedback::make(w.actions.back().index, std::move(payload)));
    return *this;
  }
  Builder& thought(std::string text) {
    push(Action::thought(std::move(text)));
    return *this;
  }
  Builder& done(std::string prediction) {
    push(Action::done());
    w.prediction = std::move(prediction);
    w.accepted = true;
    return *this;
  }
  void push(Action a) {
    a.index = static_cast<int>(w.actions.size()) + 1;
    w.actions.push_back(std::move(a));
  }
};

/// [Code(ok), Code(Traceback), Rethink, Code(ok), Done]
Workflow recovered() {
  Builder b;
  b.w.task_id = "wf-rethink";
  b.code("n = count(find(\"chair\"))", "")
      .code("final_answer = simple_query(\"How many chairs are there?\", n)", kTraceback)
      .thought(make_rethink_text("However, the call failed.", "rethink and drop the extra argument."))
      .code("final_answer = simple_query(\"How many chairs are there?\")\nfinal_answer", "2")
      .done("2");
  return b.w;
}

Workflow clean() {
  Builder b;
  b.w.task_id = "wf-clean";
  b.code("n = count(find(\"chair\"))", "").code("final_answer = n\nfinal_answer", "2").done("2");
  return b.w;
}

std::vector<int> targets(const std::vector<MaskSample>& samples) {
  std::vector<int> out;
  for (const auto& s : samples) out.push_back(s.target_index);
  return out;
}

std::size_t occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

std::vector<Workflow> collected(std::uint64_t seed, int n) {
  const auto set = generate_task_set(seed, sim::SceneConfig::defaults(), n);
  engine::Environment env;
  for (const auto& s : set.scenes) env.scenes.emplace(s.scene_id, s);
  env.noise = sim::NoiseModel::uniform(0.3, seed);
  engine::EpisodeConfig cfg;
  cfg.mode = GenerationMode::DiscrepancyAware;
  return engine::collect_dataset(set.tasks, engine::scripted_factory(sim::SceneConfig::defaults()), env, cfg)
      .dataset.workflows;
}

std::string slurp(const std::filesystem::path& p) { return read_text_file(p); }

}  // namespace

TEST(FlagActions, RecoveredWorkflow) {
  const auto r = flag_actions(recovered());
  EXPECT_EQ(r.flags, (std::vector<int>{1, 0, 0, 1, 1}));
  EXPECT_EQ(r.rule_hits[1], (std::vector<std::string>{"R1_traceback", "R2_context"}));
  EXPECT_EQ(r.rule_hits[2], (std::vector<std::string>{"R3_rethink"}));
  EXPECT_EQ(r.workflow_id, "wf-rethink");
}

TEST(FlagActions, CleanWorkflow) { EXPECT_EQ(flag_actions(clean()).flags, (std::vector<int>{1, 1, 1})); }

TEST(FlagActions, HoweverMarksPrecedingCode) {
  Builder b;
  b.code("n = count(find(\"chair\"))\nn", "0").thought("However, that seems wrong").code("x = 1", "").done("");
  const auto r = flag_actions(b.w);
  EXPECT_EQ(r.flags, (std::vector<int>{0, 1, 1, 1}));
  EXPECT_EQ(r.rule_hits[0], (std::vector<std::string>{"R2_context"}));
  EXPECT_TRUE(has_reconsideration_cue("let me RETHINK"));
  EXPECT_FALSE(has_reconsideration_cue("looks right"));
}

TEST(FlagActions, ZeroFlagsAlwaysHaveAHit) {
  for (const auto& fx : fixtures::load_labeled_corpus()) {
    const auto r = flag_actions(fx.workflow);
    ASSERT_EQ(r.flags.size(), fx.workflow.actions.size());
    for (std::size_t i = 0; i < r.flags.size(); ++i) {
      if (r.flags[i] == 0) EXPECT_FALSE(r.rule_hits[i].empty());
      if (fx.workflow.actions[i].kind == ActionKind::Done) EXPECT_EQ(r.flags[i], 1);
    }
  }
}

TEST(BuildMaskSamples, InstructTargets) {
  const auto w = recovered();
  const auto samples = build_mask_samples(w, flag_actions(w), {});
  EXPECT_EQ(targets(samples), (std::vector<int>{1, 4, 5}));
  for (const auto& s : samples) {
    ASSERT_EQ(s.target.size(), 1u);
    EXPECT_EQ(s.target[0].action.index, s.target_index);
    EXPECT_EQ(s.prefix.size() + 1 + s.suffix.size(), w.actions.size());
    EXPECT_EQ(s.reward, 1);
    EXPECT_EQ(s.instruction, kDefaultInstruction);
  }
}

TEST(BuildMaskSamples, NaiveSftHasNoMask) {
  const auto w = recovered();
  MaskOptions o;
  o.variant = MaskVariant::NaiveSft;
  const auto samples = build_mask_samples(w, flag_actions(w), o);
  ASSERT_EQ(samples.size(), 1u);
  EXPECT_EQ(samples[0].target_index, 0);
  EXPECT_EQ(samples[0].target.size(), w.actions.size());
  const auto ctx = render_sample_context(samples[0]);
  EXPECT_EQ(ctx.find(kMaskToken), std::string::npos);
  EXPECT_NE(ctx.find(kNaiveSftInstruction), std::string::npos);
}

TEST(BuildMaskSamples, AllEffectiveGivesOneSentinelEach) {
  const auto w = clean();
  const auto samples = build_mask_samples(w, flag_actions(w), {});
  ASSERT_EQ(samples.size(), 3u);
  for (const auto& s : samples) EXPECT_EQ(occurrences(render_sample_context(s), kMaskToken), 1u);
}

TEST(BuildMaskSamples, MaskingWithRethinkAddsTriggers) {
  const auto w = recovered();
  MaskOptions o;
  o.variant = MaskVariant::MaskingWithRethink;
  EXPECT_EQ(targets(build_mask_samples(w, flag_actions(w), o)), (std::vector<int>{1, 2, 3, 4, 5}));
}

TEST(BuildMaskSamples, RandomMaskingKeepsCountAndSeed) {
  const auto w = recovered();
  MaskOptions o;
  o.variant = MaskVariant::RandomMasking;
  o.seed = 42;
  const auto a = targets(build_mask_samples(w, flag_actions(w), o));
  EXPECT_EQ(a.size(), 3u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::adjacent_find(a.begin(), a.end()), a.end());
  EXPECT_EQ(a, targets(build_mask_samples(w, flag_actions(w), o)));
  std::set<std::vector<int>> draws;
  for (std::uint64_t s = 0; s < 50; ++s) {
    o.seed = s;
    draws.insert(targets(build_mask_samples(w, flag_actions(w), o)));
  }
  EXPECT_GT(draws.size(), 1u);
}

TEST(BuildMaskSamples, RejectedWorkflow) {
  auto w = clean();
  w.accepted = false;
  EXPECT_THROW(build_mask_samples(w, flag_actions(w), {}), UsageError);
  MaskOptions o;
  o.include_rejected = true;
  const auto samples = build_mask_samples(w, flag_actions(w), o);
  ASSERT_EQ(samples.size(), 3u);
  for (const auto& s : samples) EXPECT_EQ(s.reward, 0);
}

TEST(Properties, ConservationExclusivityVisibility) {
  const auto workflows = collected(5, 200);
  ASSERT_FALSE(workflows.empty());
  long expected = 0;
  long produced = 0;
  for (const auto& w : workflows) {
    // Independent recount of effective actions.
    for (std::size_t i = 0; i < w.actions.size(); ++i) {
      const auto& a = w.actions[i];
      const auto* fb = w.feedback_for(a.index);
      const bool traceback = a.kind == ActionKind::Code && fb && fb->payload.starts_with(kTracebackSentinel);
      const bool before_cue = i + 1 < w.actions.size() && w.actions[i + 1].kind == ActionKind::Thought &&
                              has_reconsideration_cue(w.actions[i + 1].content);
      expected += a.kind == ActionKind::Done || !(traceback || before_cue || a.is_rethink);
    }
    const auto samples = build_mask_samples(w, flag_actions(w), {});
    produced += static_cast<long>(samples.size());
    for (const auto& s : samples) {
      const auto ctx = render_sample_context(s);
      ASSERT_EQ(occurrences(ctx, kMaskToken), 1u);
      // Target content appears nowhere in the context unless an identical
      // action occurs elsewhere in the workflow.
      const auto& target = s.target[0].action;
      const auto dupes = std::count(w.actions.begin(), w.actions.end(), target) - 1;
      if (!target.content.empty() && dupes == 0) {
        bool repeated = false;
        for (const auto& a : w.actions)
          repeated = repeated || (a.index != target.index && a.content.find(target.content) != std::string::npos);
        if (!repeated) ASSERT_EQ(ctx.find(target.content), std::string::npos) << w.task_id;
      }
      for (const auto& a : w.actions)
        if (a.is_rethink) ASSERT_NE(ctx.find(a.content), std::string::npos);
    }
  }
  EXPECT_EQ(produced, expected);
}

TEST(EmitDataset, EmptyAndReemission) {
  const auto dir = fixtures::scratch_dir("emit");
  const auto empty = emit_dataset({}, dir / "empty.jsonl", {"instruct_masking", "abc", 3});
  EXPECT_EQ(empty.at("count"), 0);
  EXPECT_EQ(slurp(dir / "empty.jsonl"), "");

  std::vector<MaskSample> samples;
  for (const auto& w : collected(6, 60)) {
    auto s = build_mask_samples(w, flag_actions(w), {});
    samples.insert(samples.end(), s.begin(), s.end());
  }
  const DatasetMeta meta{"instruct_masking", "abc", 6};
  const auto m1 = emit_dataset(samples, dir / "a.jsonl", meta);
  const auto m2 = emit_dataset(samples, dir / "b.jsonl", meta);
  EXPECT_EQ(slurp(dir / "a.jsonl"), slurp(dir / "b.jsonl"));
  EXPECT_EQ(m1.at("digest"), m2.at("digest"));
  EXPECT_EQ(m1.at("count"), samples.size());
  EXPECT_EQ(m1.at("per_variant").at("instruct_masking"), samples.size());
  EXPECT_EQ(m1.at("seed"), 6);
  EXPECT_EQ(m1.at("source_digest"), "abc");

  const auto back = read_records<MaskSample>(dir / "a.jsonl");
  EXPECT_EQ(back, samples);
  read_jsonl(dir / "a.jsonl", [](const json& j, std::size_t) {
    for (auto key : {"schema", "task_id", "variant", "target_index", "prefix", "mask_token", "suffix", "instruction",
                     "target", "reward", "flags"})
      ASSERT_TRUE(j.contains(key)) << key;
  });
}

TEST(FlagHistogram, CountsByKind) {
  FlagHistogram h;
  const auto w = recovered();
  h.add(w, flag_actions(w));
  const auto j = h.to_json();
  EXPECT_EQ(j.at("actions"), 5);
  EXPECT_EQ(j.at("ineffective"), 2);
  EXPECT_EQ(j.at("rule_hits").at("R1_traceback"), 1);
  EXPECT_EQ(j.at("rule_hits").at("R2_context"), 1);
  EXPECT_EQ(j.at("rule_hits").at("R3_rethink"), 1);
  EXPECT_EQ(j.at("ineffective_share_by_kind").at("Code"), 0.5);
}
