#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dwim/core.hpp"

namespace dwim::mask {

inline constexpr std::string_view kRuleTraceback = "R1_traceback";
inline constexpr std::string_view kRuleContext = "R2_context";
inline constexpr std::string_view kRuleRethink = "R3_rethink";

struct FlagReport {
  std::string workflow_id;
  std::vector<int> flags;
  std::vector<std::vector<std::string>> rule_hits;  // per action, in rule order

  bool operator==(const FlagReport&) const = default;
};

/// True when a Thought's text carries a reconsideration cue ("however",
/// "rethink", any case).
bool has_reconsideration_cue(std::string_view thought);

FlagReport flag_actions(const Workflow& workflow);

/// Copy of `workflow` with `flags` filled in from the report.
Workflow with_flags(Workflow workflow, const FlagReport& report);

struct MaskOptions {
  MaskVariant variant = MaskVariant::InstructMasking;
  std::uint64_t seed = 0;  // random_masking only
  std::string instruction = std::string(kDefaultInstruction);
  /// Accept rejected workflows and emit their samples with reward 0.
  bool include_rejected = false;
};

/// Step indices a variant masks, ascending. Not used for naive SFT.
std::vector<int> masked_indices(const Workflow& workflow, const FlagReport& report, const MaskOptions& options);

/// Throws UsageError for a rejected workflow unless include_rejected is set.
std::vector<MaskSample> build_mask_samples(const Workflow& workflow, const FlagReport& report,
                                           const MaskOptions& options);

/// Task line, prefix, mask sentinel, suffix and instruction as the model
/// sees them. The task line keeps contexts of different tasks apart.
std::string render_sample_context(const MaskSample& sample);
/// The text the model must produce.
std::string render_sample_target(const MaskSample& sample);

/// Writes one record per sample and returns the manifest.
nlohmann::json emit_dataset(std::span<const MaskSample> samples, const std::filesystem::path& sink,
                            const DatasetMeta& meta);

/// Rule-hit counts and the action-kind breakdown of ineffective actions.
struct FlagHistogram {
  long actions = 0;
  long ineffective = 0;
  std::map<std::string, long> rule_hits;
  std::map<std::string, long> ineffective_by_kind;

  void add(const Workflow& workflow, const FlagReport& report);
  nlohmann::json to_json() const;
};

}  // namespace dwim::mask
