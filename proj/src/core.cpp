#include "dwim/core.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace dwim {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

constexpr std::string_view kSentencePunctuation = ".!?;:,";

}  // namespace

std::string_view to_string(ActionKind kind) {
  switch (kind) {
    case ActionKind::Thought: return "Thought";
    case ActionKind::Code: return "Code";
    case ActionKind::Done: return "Done";
  }
  return "?";
}

std::string_view to_string(GenerationMode mode) {
  switch (mode) {
    case GenerationMode::Standard: return "standard";
    case GenerationMode::DiscrepancyAware: return "discrepancy_aware";
    case GenerationMode::SingleTurn: return "single_turn";
  }
  return "?";
}

ActionKind parse_action_kind(std::string_view s) {
  if (s == "Thought") return ActionKind::Thought;
  if (s == "Code") return ActionKind::Code;
  if (s == "Done") return ActionKind::Done;
  throw UsageError("unknown action kind: " + std::string(s));
}

GenerationMode parse_generation_mode(std::string_view s) {
  if (s == "standard") return GenerationMode::Standard;
  if (s == "discrepancy_aware" || s == "discrepancy" || s == "discrepancy-aware")
    return GenerationMode::DiscrepancyAware;
  if (s == "single_turn" || s == "single-turn") return GenerationMode::SingleTurn;
  throw UsageError("unknown generation mode: " + std::string(s));
}

std::string_view to_string(MaskVariant variant) {
  switch (variant) {
    case MaskVariant::InstructMasking: return "instruct_masking";
    case MaskVariant::RandomMasking: return "random_masking";
    case MaskVariant::MaskingWithRethink: return "masking_w_rethink";
    case MaskVariant::NaiveSft: return "naive_sft";
  }
  return "?";
}

MaskVariant parse_mask_variant(std::string_view s) {
  std::string key(s);
  std::replace(key.begin(), key.end(), '-', '_');
  if (key == "instruct_masking") return MaskVariant::InstructMasking;
  if (key == "random_masking") return MaskVariant::RandomMasking;
  if (key == "masking_w_rethink") return MaskVariant::MaskingWithRethink;
  if (key == "naive_sft") return MaskVariant::NaiveSft;
  throw UsageError("unknown mask variant: " + std::string(s));
}

Action Action::thought(std::string text) {
  Action a;
  a.kind = ActionKind::Thought;
  a.is_rethink = split_rethink(text).has_value();
  a.content = std::move(text);
  return a;
}

Action Action::code(std::string source) {
  Action a;
  a.kind = ActionKind::Code;
  a.content = std::move(source);
  return a;
}

Action Action::done() {
  Action a;
  a.kind = ActionKind::Done;
  return a;
}

std::optional<RethinkParts> split_rethink(std::string_view thought) {
  const auto d = thought.find(kRethinkDiscrepancyMarker);
  if (d == std::string_view::npos) return std::nullopt;
  const auto body = d + kRethinkDiscrepancyMarker.size();
  const auto n = thought.find(kRethinkNextMarker, body);
  if (n == std::string_view::npos) return std::nullopt;
  auto discrepancy = trim(thought.substr(body, n - body));
  auto next = trim(thought.substr(n + kRethinkNextMarker.size()));
  if (discrepancy.empty() || next.empty()) return std::nullopt;
  return RethinkParts{std::string(discrepancy), std::string(next)};
}

std::string make_rethink_text(std::string_view discrepancy, std::string_view next) {
  std::string out;
  out.append(kRethinkDiscrepancyMarker).append(" ").append(discrepancy);
  out.append(" ").append(kRethinkNextMarker).append(" ").append(next);
  return out;
}

Feedback Feedback::make(int step_index, std::string payload) {
  Feedback f;
  f.step_index = step_index;
  f.is_error = payload.starts_with(kTracebackSentinel);
  f.payload = std::move(payload);
  return f;
}

std::vector<Step> Workflow::steps() const {
  std::vector<Step> out;
  out.reserve(actions.size());
  for (const auto& a : actions) {
    Step s{a, std::nullopt};
    if (const auto* fb = feedback_for(a.index)) s.feedback = *fb;
    out.push_back(std::move(s));
  }
  return out;
}

const Feedback* Workflow::feedback_for(int step_index) const {
  for (const auto& f : feedbacks)
    if (f.step_index == step_index) return &f;
  return nullptr;
}

int Workflow::code_action_count() const {
  return static_cast<int>(std::count_if(actions.begin(), actions.end(),
                                        [](const Action& a) { return a.kind == ActionKind::Code; }));
}

void validate(const Workflow& w) {
  std::set<int> code_steps;
  for (std::size_t i = 0; i < w.actions.size(); ++i) {
    const auto& a = w.actions[i];
    if (a.index != static_cast<int>(i) + 1)
      throw UsageError("action indices must be consecutive from 1 (got " +
                       std::to_string(a.index) + " at position " + std::to_string(i + 1) + ")");
    if (a.kind == ActionKind::Done) {
      if (!a.content.empty()) throw UsageError("Done action must have empty content");
      if (i + 1 != w.actions.size()) throw UsageError("Done action must be last");
    }
    if (a.is_rethink && a.kind != ActionKind::Thought)
      throw UsageError("only Thought actions can be Rethinks");
    if (a.kind == ActionKind::Code) code_steps.insert(a.index);
  }
  std::set<int> seen;
  for (const auto& f : w.feedbacks) {
    if (!code_steps.contains(f.step_index))
      throw UsageError("feedback for step " + std::to_string(f.step_index) +
                       " does not answer a Code action");
    if (!seen.insert(f.step_index).second)
      throw UsageError("duplicate feedback for step " + std::to_string(f.step_index));
    if (f.is_error != f.payload.starts_with(kTracebackSentinel))
      throw UsageError("feedback is_error disagrees with its payload");
  }
  for (int step : code_steps)
    if (!seen.contains(step)) throw UsageError("code action " + std::to_string(step) + " has no feedback");
  if (w.flags && w.flags->size() != w.actions.size())
    throw UsageError("flags length differs from action count");
}

std::string normalize_answer(std::string_view raw) {
  std::string lowered;
  lowered.reserve(raw.size());
  for (char c : raw) lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));

  std::string_view s = trim(lowered);
  while (!s.empty() && (kSentencePunctuation.find(s.back()) != std::string_view::npos || is_space(s.back())))
    s.remove_suffix(1);

  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

bool answers_match(std::string_view prediction, std::string_view answer) {
  return normalize_answer(prediction) == normalize_answer(answer);
}

bool is_accepted(const Workflow& w, std::string_view answer) {
  return !w.actions.empty() && w.actions.back().kind == ActionKind::Done && w.prediction.has_value() &&
         answers_match(*w.prediction, answer);
}

int reward(const Workflow& w, const Task& task) {
  if (w.task_id != task.task_id)
    throw UsageError("reward: workflow " + w.task_id + " evaluated against task " + task.task_id);
  return is_accepted(w, task.answer) ? 1 : 0;
}

}  // namespace dwim
