#include <gtest/gtest.h>

#include <cmath>

#include "dwim/flagmask.hpp"
#include "dwim/loss.hpp"
#include "dwim/protocol.hpp"
#include "dwim/rng.hpp"
#include "fixtures.hpp"

using namespace dwim;
using namespace dwim::loss;

namespace {

/// P(target[i]) = p[i]; the remaining mass is spread evenly over the other
/// vocabulary entries.
class PositionScorer final : public TokenScorer {
 public:
  PositionScorer(std::vector<std::string> vocab, std::vector<std::string> target, std::vector<double> p,
                 std::size_t context_len)
      : vocab_(std::move(vocab)), target_(std::move(target)), p_(std::move(p)), context_len_(context_len) {}

  double score(std::span<const std::string> context, std::string_view next) const override {
    const auto i = context.size() - context_len_;
    if (next == target_[i]) return p_[i];
    return (1.0 - p_[i]) / static_cast<double>(vocab_.size() - 1);
  }
  std::vector<std::string> vocabulary() const override { return vocab_; }
  std::string name() const override { return "position"; }

 private:
  std::vector<std::string> vocab_;
  std::vector<std::string> target_;
  std::vector<double> p_;
  std::size_t context_len_;
};

class ConstantScorer final : public TokenScorer {
 public:
  explicit ConstantScorer(double p) : p_(p) {}
  double score(std::span<const std::string>, std::string_view) const override { return p_; }
  std::vector<std::string> vocabulary() const override { return {"a"}; }
  std::string name() const override { return "constant"; }

 private:
  double p_;
};

MaskSample sample_with_target(std::string code, int reward = 1) {
  MaskSample s;
  s.task_id = "t";
  s.target_index = 1;
  s.mask_token = std::string(kMaskToken);
  s.instruction = std::string(kDefaultInstruction);
  auto a = Action::code(std::move(code));
  a.index = 1;
  s.target = {Step{a, Feedback::make(1, "ok")}};
  s.reward = reward;
  s.flags = {1};
  return s;
}

std::vector<MaskSample> corpus_samples() {
  std::vector<MaskSample> out;
  for (const auto& fx : fixtures::load_labeled_corpus()) {
    mask::MaskOptions o;
    o.include_rejected = true;
    auto s = mask::build_mask_samples(fx.workflow, mask::flag_actions(fx.workflow), o);
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

}  // namespace

TEST(Tokenize, Whitespace) {
  EXPECT_EQ(tokenize("  a b\n\tc  "), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_TRUE(tokenize(" \n").empty());
}

TEST(SequenceNll, CertainScorerGivesZero) {
  const std::vector<std::string> target{"a", "b", "c"};
  EXPECT_EQ(sequence_nll(ConstantScorer(1.0), {}, target), 0.0);
}

TEST(SequenceNll, UniformOverFourTokens) {
  const UniformScorer s({"w", "x", "y", "z"});
  const std::vector<std::string> target{"x", "x", "z"};
  const double got = sequence_nll(s, {}, target);
  double brute = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) brute -= std::log(0.25);
  EXPECT_NEAR(got, 3.0 * std::log(4.0), 1e-12);
  EXPECT_NEAR(got, brute, 1e-12);
  EXPECT_NEAR(got, 4.1589, 1e-4);
}

TEST(SequenceNll, EmptyTarget) { EXPECT_EQ(sequence_nll(ConstantScorer(0.5), {}, {}), 0.0); }

TEST(SequenceNll, ContextTokensAreNotScored) {
  const std::vector<std::string> context(50, "ctx");
  const std::vector<std::string> target{"a"};
  EXPECT_NEAR(sequence_nll(ConstantScorer(0.5), context, target), std::log(2.0), 1e-15);
}

TEST(SequenceNll, ContractViolation) {
  const std::vector<std::string> target{"a"};
  EXPECT_THROW(sequence_nll(ConstantScorer(0.0), {}, target), ContractViolation);
  EXPECT_THROW(sequence_nll(ConstantScorer(1.5), {}, target), ContractViolation);
  EXPECT_THROW(sequence_nll(ConstantScorer(std::nan("")), {}, target), ContractViolation);
}

TEST(SequenceNll, MonotoneInTargetProbability) {
  Rng rng(12);
  const std::vector<std::string> vocab{"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 2000; ++trial) {
    const auto n = 1 + rng.below(6);
    std::vector<std::string> target;
    std::vector<double> p;
    for (std::uint64_t i = 0; i < n; ++i) {
      target.push_back(vocab[rng.below(vocab.size())]);
      p.push_back(0.01 + 0.98 * rng.uniform());
    }
    const std::vector<std::string> context(rng.below(4), "q");
    const double before = sequence_nll(PositionScorer(vocab, target, p, context.size()), context, target);
    const auto k = rng.below(n);
    p[k] = p[k] + (1.0 - p[k]) * rng.uniform();
    const double after = sequence_nll(PositionScorer(vocab, target, p, context.size()), context, target);
    ASSERT_LE(after, before + 1e-12);
  }
}

TEST(Objective, MeanAndWeighting) {
  const std::vector<double> nll{2.0, 4.0};
  EXPECT_EQ(objective_from_terms(nll, std::vector<int>{1, 1}, true), 3.0);
  EXPECT_EQ(objective_from_terms(nll, std::vector<int>{1, 0}, true), 1.0);
  EXPECT_EQ(objective_from_terms(nll, std::vector<int>{1, 0}, false), 3.0);
  EXPECT_THROW(objective_from_terms({}, {}, true), UsageError);
}

TEST(Objective, AllRewardZeroIsZeroForEveryScorer) {
  auto samples = corpus_samples();
  for (auto& s : samples) s.reward = 0;
  for (auto name : {"uniform", "unigram", "oracle"}) {
    const auto scorer = make_scorer(name, samples);
    EXPECT_EQ(objective(*scorer, samples).objective, 0.0) << name;
  }
}

TEST(Objective, OracleScorerIsZeroOnItsOwnData) {
  const auto samples = corpus_samples();
  EXPECT_EQ(objective(*make_scorer("oracle", samples), samples).objective, 0.0);
}

TEST(Objective, Decomposition) {
  const auto samples = corpus_samples();
  const auto scorer = make_scorer("unigram", samples);
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<MaskSample> a, b, all;
    for (const auto& s : samples) {
      auto copy = s;
      copy.reward = static_cast<int>(rng.below(2));
      (rng.bernoulli(0.4) ? a : b).push_back(copy);
    }
    if (a.empty() || b.empty()) continue;
    all = a;
    all.insert(all.end(), b.begin(), b.end());
    const double oa = objective(*scorer, a).objective;
    const double ob = objective(*scorer, b).objective;
    const double joint = objective(*scorer, all).objective;
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    ASSERT_NEAR(joint, (na * oa + nb * ob) / (na + nb), 1e-12);
  }
}

TEST(Objective, ReportInvariants) {
  const auto samples = corpus_samples();
  const auto scorer = make_scorer("uniform", samples);
  const auto r1 = objective(*scorer, samples, true, 1);
  const auto r4 = objective(*scorer, samples, true, 4);
  EXPECT_EQ(r1.per_sample_nll, r4.per_sample_nll);
  EXPECT_EQ(r1.objective, r4.objective);
  EXPECT_GE(r1.objective, 0.0);
  EXPECT_EQ(r1.sample_count, samples.size());
  double mean = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) mean += r1.rewards[i] * r1.per_sample_nll[i];
  EXPECT_NEAR(r1.objective, mean / static_cast<double>(samples.size()), 1e-12);
  EXPECT_EQ(to_json(r1).at("scorer"), "uniform");
  EXPECT_THROW(objective(*scorer, std::span<const MaskSample>{}), UsageError);
}

TEST(Scorers, DistributionsSumToOne) {
  const auto samples = corpus_samples();
  Rng rng(2);
  for (auto name : {"uniform", "unigram", "oracle"}) {
    const auto scorer = make_scorer(name, samples);
    const auto vocab = scorer->vocabulary();
    for (int trial = 0; trial < 30; ++trial) {
      // Half the contexts are real target prefixes, half are noise.
      std::vector<std::string> context;
      if (rng.bernoulli(0.5)) {
        const auto [ctx, target] = tokenize_sample(samples[rng.below(samples.size())]);
        context = ctx;
        context.insert(context.end(), target.begin(), target.begin() + static_cast<long>(rng.below(target.size())));
      } else {
        for (int i = 0; i < 5; ++i) context.push_back(vocab[rng.below(vocab.size())]);
      }
      double total = 0;
      for (const auto& t : vocab) total += scorer->score(context, t);
      ASSERT_NEAR(total, 1.0, 1e-9) << name;
    }
  }
  EXPECT_THROW(make_scorer("gpt", samples), UsageError);
}

TEST(Scorers, UnigramSmoothing) {
  const std::vector<std::string> corpus{"a", "a", "b"};
  const UnigramScorer s(corpus);
  EXPECT_DOUBLE_EQ(s.score({}, "a"), 3.0 / 6.0);
  EXPECT_DOUBLE_EQ(s.score({}, "b"), 2.0 / 6.0);
  EXPECT_DOUBLE_EQ(s.score({}, "zzz"), 1.0 / 6.0);
}

TEST(PairwiseSum, MatchesExactSums) {
  std::vector<double> v(1000, 0.1);
  EXPECT_NEAR(pairwise_sum(v), 100.0, 1e-12);
  EXPECT_EQ(pairwise_sum({}), 0.0);
}

TEST(SequenceNll, SampleTargetOnly) {
  const auto s = sample_with_target("x = 1");
  const auto [ctx, target] = tokenize_sample(s);
  EXPECT_EQ(target, tokenize(render_steps(s.target)));
  EXPECT_NEAR(sequence_nll(ConstantScorer(0.5), s), static_cast<double>(target.size()) * std::log(2.0), 1e-12);
}
