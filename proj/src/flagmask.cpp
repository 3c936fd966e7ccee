#include "dwim/flagmask.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "dwim/digest.hpp"
#include "dwim/protocol.hpp"
#include "dwim/rng.hpp"
#include "dwim/serialize.hpp"

namespace dwim::mask {

bool has_reconsideration_cue(std::string_view thought) {
  std::string lower(thought);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower.find("however") != std::string::npos || lower.find("rethink") != std::string::npos;
}

FlagReport flag_actions(const Workflow& w) {
  FlagReport r;
  r.workflow_id = w.task_id;
  const auto n = w.actions.size();
  r.rule_hits.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = w.actions[i];
    if (a.kind == ActionKind::Code) {
      const auto* fb = w.feedback_for(a.index);
      if (fb && fb->is_error) r.rule_hits[i].emplace_back(kRuleTraceback);
    }
    if (i + 1 < n) {
      const auto& next = w.actions[i + 1];
      if (next.kind == ActionKind::Thought && has_reconsideration_cue(next.content))
        r.rule_hits[i].emplace_back(kRuleContext);
    }
    if (a.is_rethink) r.rule_hits[i].emplace_back(kRuleRethink);
  }
  r.flags.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    r.flags[i] = w.actions[i].kind == ActionKind::Done || r.rule_hits[i].empty() ? 1 : 0;
  return r;
}

Workflow with_flags(Workflow w, const FlagReport& report) {
  if (report.flags.size() != w.actions.size()) throw UsageError("flag report does not match the workflow");
  w.flags = report.flags;
  return w;
}

std::vector<int> masked_indices(const Workflow& w, const FlagReport& report, const MaskOptions& options) {
  if (report.flags.size() != w.actions.size()) throw UsageError("flag report does not match the workflow");
  std::vector<int> out;
  const auto n = static_cast<int>(w.actions.size());
  switch (options.variant) {
    case MaskVariant::InstructMasking:
      for (int t = 1; t <= n; ++t)
        if (report.flags[t - 1] == 1) out.push_back(t);
      break;
    case MaskVariant::MaskingWithRethink:
      for (int t = 1; t <= n; ++t) {
        const auto& hits = report.rule_hits[t - 1];
        const bool triggers = std::any_of(hits.begin(), hits.end(), [](const std::string& h) {
          return h == kRuleContext || h == kRuleRethink;
        });
        if (report.flags[t - 1] == 1 || triggers) out.push_back(t);
      }
      break;
    case MaskVariant::RandomMasking: {
      const auto k = static_cast<int>(std::count(report.flags.begin(), report.flags.end(), 1));
      std::vector<int> pool(n);
      std::iota(pool.begin(), pool.end(), 1);
      Rng rng(split_seed(options.seed, w.task_id));
      // Partial Fisher-Yates: the first k slots become a uniform k-subset.
      for (int i = 0; i < k; ++i) {
        const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(pool[i], pool[j]);
      }
      out.assign(pool.begin(), pool.begin() + k);
      std::sort(out.begin(), out.end());
      break;
    }
    case MaskVariant::NaiveSft: break;
  }
  return out;
}

std::vector<MaskSample> build_mask_samples(const Workflow& w, const FlagReport& report, const MaskOptions& options) {
  if (!w.accepted && !options.include_rejected)
    throw UsageError("workflow " + w.task_id + " was not accepted; mask samples need accepted workflows");
  const int reward = w.accepted ? 1 : 0;
  const auto steps = w.steps();
  std::vector<MaskSample> out;

  if (options.variant == MaskVariant::NaiveSft) {
    MaskSample s;
    s.task_id = w.task_id;
    s.variant = options.variant;
    s.target_index = 0;
    s.instruction = std::string(kNaiveSftInstruction);
    s.target = steps;
    s.reward = reward;
    s.flags = report.flags;
    out.push_back(std::move(s));
    return out;
  }

  for (const int t : masked_indices(w, report, options)) {
    MaskSample s;
    s.task_id = w.task_id;
    s.variant = options.variant;
    s.target_index = t;
    s.prefix.assign(steps.begin(), steps.begin() + (t - 1));
    s.mask_token = std::string(kMaskToken);
    s.suffix.assign(steps.begin() + t, steps.end());
    s.instruction = options.instruction;
    s.target = {steps[t - 1]};
    s.reward = reward;
    s.flags = report.flags;
    out.push_back(std::move(s));
  }
  return out;
}

std::string render_sample_context(const MaskSample& s) {
  std::string out = "Task: " + s.task_id + "\n";
  out += render_steps(s.prefix);
  if (!s.mask_token.empty()) {
    out += s.mask_token;
    out += '\n';
  }
  out += render_steps(s.suffix);
  out += s.instruction;
  return out;
}

std::string render_sample_target(const MaskSample& s) { return render_steps(s.target); }

nlohmann::json emit_dataset(std::span<const MaskSample> samples, const std::filesystem::path& sink,
                            const DatasetMeta& meta) {
  std::vector<json> records;
  records.reserve(samples.size());
  std::map<std::string, long> per_variant;
  for (const auto& s : samples) {
    records.emplace_back(s);
    ++per_variant[std::string(to_string(s.variant))];
  }
  write_jsonl(sink, records);
  return json{{"schema", kSchemaVersion},
              {"records", sink.filename().string()},
              {"count", samples.size()},
              {"per_variant", per_variant},
              {"generator", meta.generator},
              {"source_digest", meta.config_digest},
              {"seed", meta.seed},
              {"digest", sha256_hex(read_text_file(sink))}};
}

void FlagHistogram::add(const Workflow& w, const FlagReport& r) {
  for (std::size_t i = 0; i < w.actions.size(); ++i) {
    ++actions;
    for (const auto& h : r.rule_hits[i]) ++rule_hits[h];
    if (r.flags[i] == 0) {
      ++ineffective;
      ++ineffective_by_kind[std::string(to_string(w.actions[i].kind))];
    }
  }
}

nlohmann::json FlagHistogram::to_json() const {
  json shares = json::object();
  for (const auto& [kind, n] : ineffective_by_kind)
    shares[kind] = ineffective ? static_cast<double>(n) / static_cast<double>(ineffective) : 0.0;
  json hits = json::object();
  for (auto rule : {kRuleTraceback, kRuleContext, kRuleRethink}) {
    const auto it = rule_hits.find(std::string(rule));
    hits[std::string(rule)] = it == rule_hits.end() ? 0 : it->second;
  }
  return json{{"actions", actions},
              {"ineffective", ineffective},
              {"rule_hits", hits},
              {"ineffective_by_kind", ineffective_by_kind},
              {"ineffective_share_by_kind", shares}};
}

}  // namespace dwim::mask
