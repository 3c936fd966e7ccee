#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dwim/core.hpp"

namespace dwim {

// Tag protocol between policy backends and the engine:
//   <thought>text</thought>
//   <code>```\nsource\n```</code>
//   <done></done>
//   <result>payload</result>        (engine -> policy)

enum class ParseErrorKind {
  NoTag,              // no recognized tag
  MultipleTags,       // more than one top-level tag
  MalformedCode,      // code tag without a complete backtick fence
  UnexpectedContent,  // stray text outside the tag, or content inside <done>
};

std::string_view to_string(ParseErrorKind kind);

struct TextSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const TextSpan&) const = default;
};

struct ParseError {
  ParseErrorKind kind;
  TextSpan span;  // offending byte range in the raw input
  std::string message;
};

using ActionParse = std::variant<Action, ParseError>;

/// Parses one raw policy turn. Total: every input yields an Action or a
/// ParseError. The returned action has index 0; callers assign step numbers.
ActionParse parse_action(std::string_view raw);

std::string render_action(const Action& action);

std::string escape_payload(std::string_view payload);
std::string unescape_payload(std::string_view escaped);

/// `<result>payload</result>` with the closing tag escaped inside the payload.
std::string render_feedback(const Feedback& feedback);

/// Renders steps in order, each action followed by its feedback (if any).
std::string render_steps(std::span<const Step> steps);
std::string render_workflow(const Workflow& workflow);

/// Parses a rendered transcript (sequence of action blocks, each Code block
/// optionally followed by a result block). Step indices are assigned from 1.
using TranscriptParse = std::variant<std::vector<Step>, ParseError>;
TranscriptParse parse_transcript(std::string_view text);

enum class PromptMode { Standard, AnswerConditioned };

struct PromptOptions {
  bool single_turn = false;
  /// Rendered example transcripts prepended as in-context shots.
  std::vector<std::string> examples;
};

inline constexpr std::string_view kAnswerLinePrefix = "Expected answer: ";
inline constexpr std::string_view kHistoryHeader = "History:\n";
inline constexpr std::string_view kSingleTurnDirective =
    "Single-turn mode: write the complete program in one <code> action. The task ends after it runs.";

/// Builds the full prompt: rules, tool docs, query, the answer disclosure
/// (answer-conditioned mode only) and the serialized history. History is
/// always last so the prompt at turn t is a prefix of the prompt at t+1.
std::string render_prompt(const EnvState& env, std::span<const Step> history, PromptMode mode,
                          const PromptOptions& options = {});

/// The 12 formatting rules given to every policy.
std::string_view system_rules();

std::string_view history_section(std::string_view prompt);
std::optional<std::string> disclosed_answer(std::string_view prompt);
bool requests_single_turn(std::string_view prompt);

}  // namespace dwim
