#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "dwim/core.hpp"

namespace dwim::loss {

/// A scorer returned a probability outside (0, 1].
class ContractViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Splits on ASCII whitespace.
std::vector<std::string> tokenize(std::string_view text);

class TokenScorer {
 public:
  virtual ~TokenScorer() = default;
  /// P(next | context). Must lie in (0, 1] for tokens that occur as targets.
  virtual double score(std::span<const std::string> context, std::string_view next) const = 0;
  /// Declared vocabulary; probabilities over it sum to 1 for every context.
  virtual std::vector<std::string> vocabulary() const = 0;
  virtual std::string name() const = 0;
};

class UniformScorer final : public TokenScorer {
 public:
  explicit UniformScorer(std::vector<std::string> vocabulary);
  double score(std::span<const std::string>, std::string_view) const override;
  std::vector<std::string> vocabulary() const override { return vocab_; }
  std::string name() const override { return "uniform"; }

 private:
  std::vector<std::string> vocab_;
};

/// Add-one smoothed unigram model. Tokens unseen in the corpus share the
/// `<unk>` entry.
class UnigramScorer final : public TokenScorer {
 public:
  static constexpr std::string_view kUnknown = "<unk>";

  explicit UnigramScorer(std::span<const std::string> corpus);
  double score(std::span<const std::string>, std::string_view next) const override;
  std::vector<std::string> vocabulary() const override;
  std::string name() const override { return "unigram"; }

 private:
  std::unordered_map<std::string, long> counts_;
  long total_ = 0;
};

/// Memorizes the continuations of every target prefix in a dataset. A context
/// with a single observed continuation gives it probability 1. Unseen
/// contexts fall back to uniform over the vocabulary.
class OracleScorer final : public TokenScorer {
 public:
  explicit OracleScorer(std::span<const MaskSample> samples);
  double score(std::span<const std::string> context, std::string_view next) const override;
  std::vector<std::string> vocabulary() const override { return vocab_; }
  std::string name() const override { return "oracle"; }

 private:
  std::unordered_map<std::uint64_t, std::unordered_map<std::string, double>> next_;  // context hash -> P(next)
  std::vector<std::string> vocab_;
};

/// Corpus is the target and context text of `samples`.
std::unique_ptr<TokenScorer> make_scorer(std::string_view name, std::span<const MaskSample> samples);

struct TokenizedSample {
  std::vector<std::string> context;
  std::vector<std::string> target;
};

TokenizedSample tokenize_sample(const MaskSample& sample);

/// Summation by recursive halving; result independent of thread scheduling.
double pairwise_sum(std::span<const double> values);

/// -sum_i ln P(target[i] | context + target[..i]); context tokens are not scored.
double sequence_nll(const TokenScorer& scorer, std::span<const std::string> context,
                    std::span<const std::string> target);
double sequence_nll(const TokenScorer& scorer, const MaskSample& sample);

struct LossReport {
  std::vector<double> per_sample_nll;
  std::vector<int> rewards;
  double objective = 0.0;
  std::size_t sample_count = 0;
  bool reward_weighted = true;
  std::string scorer;
};

/// Mean of reward * nll (or plain mean NLL when reward_weighted is false).
/// Throws UsageError on an empty dataset.
LossReport objective(const TokenScorer& scorer, std::span<const MaskSample> samples, bool reward_weighted = true,
                     int jobs = 1);

/// Objective recomputed from a report's stored terms.
double objective_from_terms(std::span<const double> nll, std::span<const int> rewards, bool reward_weighted);

nlohmann::json to_json(const LossReport& report);

}  // namespace dwim::loss
