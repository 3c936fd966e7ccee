#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dwim {

inline constexpr std::string_view kSchemaVersion = "dwim/v1";
inline constexpr std::string_view kMaskToken = "<MASK_ACTION/>";
inline constexpr std::string_view kDefaultInstruction =
    "Regenerate the masked step exactly; do not proceed to the next step.";
inline constexpr std::string_view kNaiveSftInstruction = "Reproduce the full workflow.";
inline constexpr std::string_view kTracebackSentinel = "Traceback (most recent call last):";
inline constexpr std::string_view kRethinkDiscrepancyMarker = "Discrepancy:";
inline constexpr std::string_view kRethinkNextMarker = "Next:";

/// Raised when an operation is invoked outside its contract (wrong task,
/// rejected workflow where an accepted one is required, empty inputs).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class ActionKind { Thought, Code, Done };
enum class GenerationMode { Standard, DiscrepancyAware, SingleTurn };

std::string_view to_string(ActionKind kind);
std::string_view to_string(GenerationMode mode);
ActionKind parse_action_kind(std::string_view s);
GenerationMode parse_generation_mode(std::string_view s);

struct Task {
  std::string task_id;
  std::string scene_ref;
  std::string query;
  std::string answer;

  bool operator==(const Task&) const = default;
};

struct Action {
  int index = 0;  // 1-based
  ActionKind kind = ActionKind::Thought;
  std::string content;
  bool is_rethink = false;

  static Action thought(std::string text);
  static Action code(std::string source);
  static Action done();

  bool operator==(const Action&) const = default;
};

/// Splits a Rethink thought into its discrepancy and next-step parts.
/// Returns nothing unless both markers are present, in order, with non-empty
/// text after each.
struct RethinkParts {
  std::string discrepancy;
  std::string next;
};
std::optional<RethinkParts> split_rethink(std::string_view thought);

std::string make_rethink_text(std::string_view discrepancy, std::string_view next);

struct Feedback {
  int step_index = 0;
  std::string payload;
  bool is_error = false;

  /// Builds a feedback record; is_error follows the Traceback sentinel.
  static Feedback make(int step_index, std::string payload);

  bool operator==(const Feedback&) const = default;
};

/// One action together with the feedback it produced (Code actions only).
struct Step {
  Action action;
  std::optional<Feedback> feedback;

  bool operator==(const Step&) const = default;
};

/// Initial environment (task + tool docs) plus the append-only feedback log.
class EnvState {
 public:
  EnvState(Task task, std::string tool_docs)
      : task_(std::move(task)), tool_docs_(std::move(tool_docs)) {}

  const Task& task() const { return task_; }
  const std::string& tool_docs() const { return tool_docs_; }
  std::span<const Feedback> feedback_log() const { return log_; }

  void append(Feedback feedback) { log_.push_back(std::move(feedback)); }

 private:
  Task task_;
  std::string tool_docs_;
  std::vector<Feedback> log_;
};

struct Workflow {
  std::string task_id;
  std::vector<Action> actions;
  std::vector<Feedback> feedbacks;
  std::optional<std::vector<int>> flags;
  std::optional<std::string> prediction;
  bool accepted = false;
  GenerationMode generation_mode = GenerationMode::Standard;
  std::optional<std::string> abort_reason;

  /// Actions paired with their feedback (matched by step index).
  std::vector<Step> steps() const;
  const Feedback* feedback_for(int step_index) const;
  int code_action_count() const;

  bool operator==(const Workflow&) const = default;
};

/// Throws UsageError naming the first broken structural invariant.
void validate(const Workflow& workflow);

enum class MaskVariant { InstructMasking, RandomMasking, MaskingWithRethink, NaiveSft };
std::string_view to_string(MaskVariant variant);
MaskVariant parse_mask_variant(std::string_view s);

struct MaskSample {
  std::string task_id;
  MaskVariant variant = MaskVariant::InstructMasking;
  int target_index = 0;  // 0 for naive SFT (no mask)
  std::vector<Step> prefix;
  std::string mask_token;
  std::vector<Step> suffix;
  std::string instruction;
  /// The masked step (one element), or every step for naive SFT.
  std::vector<Step> target;
  int reward = 1;
  std::vector<int> flags;

  bool operator==(const MaskSample&) const = default;
};

struct DatasetMeta {
  std::string generator;  // generation mode or mask variant
  std::string config_digest;
  std::uint64_t seed = 0;
};

struct WorkflowDataset {
  std::vector<Workflow> workflows;
  DatasetMeta meta;
};

struct MaskDataset {
  std::vector<MaskSample> samples;
  DatasetMeta meta;
};

/// Lowercase, trim, drop trailing sentence punctuation, collapse internal
/// whitespace. Idempotent.
std::string normalize_answer(std::string_view raw);

bool answers_match(std::string_view prediction, std::string_view answer);

/// Acceptance per the workflow invariant: ends with Done and the prediction
/// matches the answer after normalization.
bool is_accepted(const Workflow& workflow, std::string_view answer);

/// Binary reward. Throws UsageError if the workflow belongs to another task.
int reward(const Workflow& workflow, const Task& task);

}  // namespace dwim
