#include "dwim/loss.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <set>
#include <thread>

#include "dwim/flagmask.hpp"
#include "dwim/rng.hpp"

namespace dwim::loss {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const auto space = [](char c) { return c == ' ' || c == '\n' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && space(text[i])) ++i;
    const auto start = i;
    while (i < text.size() && !space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

UniformScorer::UniformScorer(std::vector<std::string> vocabulary) : vocab_(std::move(vocabulary)) {
  if (vocab_.empty()) throw UsageError("uniform scorer needs a non-empty vocabulary");
}

double UniformScorer::score(std::span<const std::string>, std::string_view) const {
  return 1.0 / static_cast<double>(vocab_.size());
}

UnigramScorer::UnigramScorer(std::span<const std::string> corpus) {
  for (const auto& t : corpus) ++counts_[t];
  total_ = static_cast<long>(corpus.size());
  counts_.erase(std::string(kUnknown));
}

double UnigramScorer::score(std::span<const std::string>, std::string_view next) const {
  const auto vocab = static_cast<double>(counts_.size() + 1);
  const auto it = counts_.find(std::string(next));
  const double c = it == counts_.end() ? 0.0 : static_cast<double>(it->second);
  return (c + 1.0) / (static_cast<double>(total_) + vocab);
}

std::vector<std::string> UnigramScorer::vocabulary() const {
  std::vector<std::string> out;
  for (const auto& [t, c] : counts_) out.push_back(t);
  out.emplace_back(kUnknown);
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::uint64_t context_key(std::span<const std::string> context) {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (const auto& t : context) h = mix64(h ^ fnv1a64(t));
  return h;
}

}  // namespace

OracleScorer::OracleScorer(std::span<const MaskSample> samples) {
  std::set<std::string> vocab;
  std::unordered_map<std::uint64_t, std::unordered_map<std::string, long>> seen;
  for (const auto& s : samples) {
    auto [context, target] = tokenize_sample(s);
    vocab.insert(context.begin(), context.end());
    for (const auto& t : target) {
      vocab.insert(t);
      ++seen[context_key(context)][t];
      context.push_back(t);
    }
  }
  for (auto& [key, nexts] : seen) {
    long total = 0;
    for (const auto& [t, c] : nexts) total += c;
    auto& dist = next_[key];
    for (const auto& [t, c] : nexts) dist[t] = static_cast<double>(c) / static_cast<double>(total);
  }
  vocab_.assign(vocab.begin(), vocab.end());
  if (vocab_.empty()) vocab_.emplace_back("<unk>");
}

double OracleScorer::score(std::span<const std::string> context, std::string_view next) const {
  const auto it = next_.find(context_key(context));
  if (it == next_.end()) return 1.0 / static_cast<double>(vocab_.size());
  const auto p = it->second.find(std::string(next));
  return p == it->second.end() ? 0.0 : p->second;
}

std::unique_ptr<TokenScorer> make_scorer(std::string_view name, std::span<const MaskSample> samples) {
  if (name == "oracle") return std::make_unique<OracleScorer>(samples);
  std::vector<std::string> corpus;
  for (const auto& s : samples) {
    auto [context, target] = tokenize_sample(s);
    corpus.insert(corpus.end(), context.begin(), context.end());
    corpus.insert(corpus.end(), target.begin(), target.end());
  }
  if (name == "unigram") return std::make_unique<UnigramScorer>(corpus);
  if (name == "uniform") {
    std::set<std::string> vocab(corpus.begin(), corpus.end());
    if (vocab.empty()) vocab.insert("<unk>");
    return std::make_unique<UniformScorer>(std::vector<std::string>(vocab.begin(), vocab.end()));
  }
  throw UsageError("unknown scorer: " + std::string(name) + " (expected uniform, unigram or oracle)");
}

TokenizedSample tokenize_sample(const MaskSample& sample) {
  return {tokenize(mask::render_sample_context(sample)), tokenize(mask::render_sample_target(sample))};
}

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const auto half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

double sequence_nll(const TokenScorer& scorer, std::span<const std::string> context,
                    std::span<const std::string> target) {
  std::vector<std::string> seen(context.begin(), context.end());
  std::vector<double> terms;
  terms.reserve(target.size());
  for (const auto& t : target) {
    const double p = scorer.score(seen, t);
    if (!(p > 0.0 && p <= 1.0))
      throw ContractViolation(scorer.name() + " scorer returned probability " + std::to_string(p) + " for '" + t + "'");
    terms.push_back(-std::log(p));
    seen.push_back(t);
  }
  return pairwise_sum(terms);
}

double sequence_nll(const TokenScorer& scorer, const MaskSample& sample) {
  const auto [context, target] = tokenize_sample(sample);
  return sequence_nll(scorer, context, target);
}

double objective_from_terms(std::span<const double> nll, std::span<const int> rewards, bool reward_weighted) {
  if (nll.empty()) throw UsageError("objective needs at least one sample");
  std::vector<double> weighted(nll.begin(), nll.end());
  if (reward_weighted)
    for (std::size_t i = 0; i < weighted.size(); ++i) weighted[i] = rewards[i] == 0 ? 0.0 : weighted[i];
  return pairwise_sum(weighted) / static_cast<double>(weighted.size());
}

LossReport objective(const TokenScorer& scorer, std::span<const MaskSample> samples, bool reward_weighted, int jobs) {
  if (samples.empty()) throw UsageError("objective needs a non-empty dataset");
  LossReport r;
  r.per_sample_nll.resize(samples.size());
  r.rewards.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].reward != 0 && samples[i].reward != 1) throw UsageError("rewards must be 0 or 1");
    r.rewards[i] = samples[i].reward;
  }

  const auto workers = static_cast<std::size_t>(std::clamp<long>(jobs, 1, static_cast<long>(samples.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < samples.size(); ++i) r.per_sample_nll[i] = sequence_nll(scorer, samples[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
      std::vector<std::jthread> pool;
      for (std::size_t k = 0; k < workers; ++k)
        pool.emplace_back([&] {
          for (std::size_t i = next++; i < samples.size(); i = next++) {
            try {
              r.per_sample_nll[i] = sequence_nll(scorer, samples[i]);
            } catch (...) {
              std::lock_guard lock(failure_mutex);
              if (!failure) failure = std::current_exception();
            }
          }
        });
    }
    if (failure) std::rethrow_exception(failure);
  }

  r.sample_count = samples.size();
  r.reward_weighted = reward_weighted;
  r.scorer = scorer.name();
  r.objective = objective_from_terms(r.per_sample_nll, r.rewards, reward_weighted);
  return r;
}

nlohmann::json to_json(const LossReport& r) {
  return nlohmann::json{{"schema", kSchemaVersion},      {"scorer", r.scorer},
                        {"objective", r.objective},       {"sample_count", r.sample_count},
                        {"reward_weighted", r.reward_weighted}, {"per_sample_nll", r.per_sample_nll},
                        {"rewards", r.rewards}};
}

}  // namespace dwim::loss
