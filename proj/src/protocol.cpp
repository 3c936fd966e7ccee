#include "dwim/protocol.hpp"

#include <array>
#include <cctype>

namespace dwim {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

struct Block {
  std::string_view tag;
  std::size_t begin = 0;        // '<' of the opening tag
  std::size_t inner_begin = 0;  // first byte after the opening tag
  std::size_t inner_end = 0;    // '<' of the closing tag
  std::size_t end = 0;          // one past the closing tag

  std::string_view inner(std::string_view text) const {
    return text.substr(inner_begin, inner_end - inner_begin);
  }
};

constexpr std::array<std::string_view, 3> kActionTags = {"thought", "code", "done"};
constexpr std::array<std::string_view, 4> kTranscriptTags = {"thought", "code", "done", "result"};

template <std::size_t N>
std::optional<Block> match_block(std::string_view text, std::size_t pos,
                                 const std::array<std::string_view, N>& tags) {
  if (pos >= text.size() || text[pos] != '<') return std::nullopt;
  for (auto tag : tags) {
    const std::string open = "<" + std::string(tag) + ">";
    if (text.compare(pos, open.size(), open) != 0) continue;
    const std::string close = "</" + std::string(tag) + ">";
    const auto inner_begin = pos + open.size();
    const auto close_pos = text.find(close, inner_begin);
    if (close_pos == std::string_view::npos) return std::nullopt;
    return Block{tag, pos, inner_begin, close_pos, close_pos + close.size()};
  }
  return std::nullopt;
}

ParseError make_error(ParseErrorKind kind, TextSpan span, std::string message) {
  return ParseError{kind, span, std::move(message)};
}

/// Extracts the source inside a backtick fence. The text between the opening
/// fence and the first newline is an info string (e.g. a language name) when
/// it is a bare word.
std::variant<std::string, ParseError> parse_fence(std::string_view text, const Block& block) {
  const auto inner = block.inner(text);
  const auto body = trim(inner);
  const auto body_offset = block.inner_begin + static_cast<std::size_t>(body.data() - inner.data());
  const TextSpan span{block.begin, block.end};
  constexpr std::string_view fence = "```";
  if (!body.starts_with(fence))
    return make_error(ParseErrorKind::MalformedCode, span, "code tag must contain a ``` fence");
  if (body.size() < 2 * fence.size() || !body.ends_with(fence))
    return make_error(ParseErrorKind::MalformedCode, {body_offset, block.inner_end},
                      "code fence is not closed");
  auto source = body.substr(fence.size(), body.size() - 2 * fence.size());
  if (const auto nl = source.find('\n'); nl != std::string_view::npos) {
    const auto info = source.substr(0, nl);
    bool bare_word = true;
    for (char c : info)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '+' || c == '-')) bare_word = false;
    if (bare_word) source.remove_prefix(nl + 1);
  }
  return std::string(trim(source));
}

ActionParse action_from_block(std::string_view text, const Block& block) {
  if (block.tag == "thought") return Action::thought(std::string(trim(block.inner(text))));
  if (block.tag == "done") {
    if (!trim(block.inner(text)).empty())
      return make_error(ParseErrorKind::UnexpectedContent, {block.inner_begin, block.inner_end},
                        "<done> must be empty");
    return Action::done();
  }
  auto source = parse_fence(text, block);
  if (auto* err = std::get_if<ParseError>(&source)) return *err;
  return Action::code(std::move(std::get<std::string>(source)));
}

}  // namespace

std::string_view to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::NoTag: return "NoTag";
    case ParseErrorKind::MultipleTags: return "MultipleTags";
    case ParseErrorKind::MalformedCode: return "MalformedCode";
    case ParseErrorKind::UnexpectedContent: return "UnexpectedContent";
  }
  return "?";
}

ActionParse parse_action(std::string_view raw) {
  std::vector<Block> blocks;
  std::optional<TextSpan> stray;
  bool in_stray = false;
  std::size_t i = 0;
  while (i < raw.size()) {
    if (auto b = match_block(raw, i, kActionTags)) {
      blocks.push_back(*b);
      i = b->end;
      in_stray = false;
      continue;
    }
    if (is_space(raw[i])) {
      ++i;
      continue;
    }
    if (!stray) {
      stray = TextSpan{i, i + 1};
      in_stray = true;
    } else if (in_stray) {
      stray->end = i + 1;
    }
    ++i;
  }

  if (blocks.empty()) {
    const auto body = trim(raw);
    const auto begin = static_cast<std::size_t>(body.data() - raw.data());
    return make_error(ParseErrorKind::NoTag, {begin, begin + body.size()},
                      "no <thought>, <code> or <done> tag found");
  }
  if (blocks.size() > 1)
    return make_error(ParseErrorKind::MultipleTags, {blocks[1].begin, blocks[1].end},
                      "only one action is allowed per turn");
  if (stray)
    return make_error(ParseErrorKind::UnexpectedContent, *stray, "text outside the action tag");
  return action_from_block(raw, blocks.front());
}

std::string render_action(const Action& action) {
  switch (action.kind) {
    case ActionKind::Thought: return "<thought>" + action.content + "</thought>";
    case ActionKind::Code: return "<code>```\n" + action.content + "\n```</code>";
    case ActionKind::Done: return "<done></done>";
  }
  return {};
}

std::string escape_payload(std::string_view payload) {
  std::string out;
  out.reserve(payload.size());
  constexpr std::string_view close = "</result>";
  for (std::size_t i = 0; i < payload.size();) {
    if (payload[i] == '&') {
      out += "&amp;";
      ++i;
    } else if (payload.compare(i, close.size(), close) == 0) {
      out += "&lt;/result&gt;";
      i += close.size();
    } else {
      out.push_back(payload[i++]);
    }
  }
  return out;
}

std::string unescape_payload(std::string_view escaped) {
  std::string out;
  out.reserve(escaped.size());
  constexpr std::string_view amp = "&amp;";
  constexpr std::string_view close = "&lt;/result&gt;";
  for (std::size_t i = 0; i < escaped.size();) {
    if (escaped.compare(i, amp.size(), amp) == 0) {
      out.push_back('&');
      i += amp.size();
    } else if (escaped.compare(i, close.size(), close) == 0) {
      out += "</result>";
      i += close.size();
    } else {
      out.push_back(escaped[i++]);
    }
  }
  return out;
}

std::string render_feedback(const Feedback& feedback) {
  return "<result>" + escape_payload(feedback.payload) + "</result>";
}

std::string render_steps(std::span<const Step> steps) {
  std::string out;
  for (const auto& s : steps) {
    out += render_action(s.action);
    out += '\n';
    if (s.feedback) {
      out += render_feedback(*s.feedback);
      out += '\n';
    }
  }
  return out;
}

std::string render_workflow(const Workflow& workflow) {
  const auto steps = workflow.steps();
  return render_steps(steps);
}

TranscriptParse parse_transcript(std::string_view text) {
  std::vector<Step> steps;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    auto b = match_block(text, i, kTranscriptTags);
    if (!b) {
      auto end = text.find('\n', i);
      if (end == std::string_view::npos) end = text.size();
      return make_error(ParseErrorKind::UnexpectedContent, {i, end}, "expected a tag block");
    }
    if (b->tag == "result") {
      if (steps.empty() || steps.back().action.kind != ActionKind::Code || steps.back().feedback)
        return make_error(ParseErrorKind::UnexpectedContent, {b->begin, b->end},
                          "<result> must follow a <code> action");
      steps.back().feedback = Feedback::make(steps.back().action.index, unescape_payload(b->inner(text)));
    } else {
      auto parsed = action_from_block(text, *b);
      if (auto* err = std::get_if<ParseError>(&parsed)) return *err;
      auto action = std::get<Action>(std::move(parsed));
      action.index = static_cast<int>(steps.size()) + 1;
      steps.push_back(Step{std::move(action), std::nullopt});
    }
    i = b->end;
  }
  return steps;
}

std::string_view system_rules() {
  static constexpr std::string_view kRules =
      "You answer questions about a scene by writing code that calls the tools listed below. "
      "Your code runs in a persistent session: variables survive between steps. "
      "Every response must follow these rules.\n"
      "1. To run code, wrap it in triple backticks inside a `<code>` tag.\n"
      "2. To write reasoning in plain text, use the `<thought>` tag. Example: "
      "`<thought>I should look for the cups first.</thought>`\n"
      "3. When you have finished, reply with an empty `<done>` tag: `<done></done>`\n"
      "4. Execution output is returned inside a `<result>` tag. Example: `<result>2</result>`\n"
      "5. The whole scene is available in the variable `image`.\n"
      "6. Store your answer, a single word or phrase, in a variable named `final_answer`.\n"
      "7. When you lack information, write code that queries the tools for it.\n"
      "8. Each response contains exactly one action.\n"
      "9. One statement per line; build the solution incrementally, step by step.\n"
      "10. After `final_answer` holds the answer, finish with `<done></done>`.\n"
      "11. Always commit to an answer, even when you are unsure.\n"
      "12. Convert True/False answers with `bool_to_yesno` before storing them in `final_answer`.\n";
  return kRules;
}

std::string render_prompt(const EnvState& env, std::span<const Step> history, PromptMode mode,
                          const PromptOptions& options) {
  std::string out(system_rules());
  out += "\nTools:\n";
  out += env.tool_docs();
  if (!env.tool_docs().empty() && env.tool_docs().back() != '\n') out += '\n';
  for (std::size_t k = 0; k < options.examples.size(); ++k) {
    out += "\nExample " + std::to_string(k + 1) + ":\n";
    out += options.examples[k];
    if (!options.examples[k].empty() && options.examples[k].back() != '\n') out += '\n';
  }
  out += "\nQuery: ";
  out += env.task().query;
  out += '\n';
  if (mode == PromptMode::AnswerConditioned) {
    out += kAnswerLinePrefix;
    out += env.task().answer;
    out += '\n';
    out +=
        "After every result, check it against the expected answer. If they disagree, reply with a "
        "<thought> of the form \"Discrepancy: <what went wrong> Next: <an alternative step>\".\n";
  }
  if (options.single_turn) {
    out += kSingleTurnDirective;
    out += '\n';
  }
  out += '\n';
  out += kHistoryHeader;
  out += render_steps(history);
  return out;
}

namespace {

// Offset of the history header. Searched after the query line so that text
// inside tool docs or examples cannot be mistaken for it.
std::size_t history_offset(std::string_view prompt) {
  const auto query = prompt.find("\nQuery: ");
  if (query == std::string_view::npos) return std::string_view::npos;
  const auto pos = prompt.find("\n\nHistory:\n", query);
  return pos == std::string_view::npos ? pos : pos + 2;
}

}  // namespace

std::string_view history_section(std::string_view prompt) {
  const auto pos = history_offset(prompt);
  if (pos == std::string_view::npos) return {};
  return prompt.substr(pos + kHistoryHeader.size());
}

std::optional<std::string> disclosed_answer(std::string_view prompt) {
  const auto head = prompt.substr(0, history_offset(prompt));
  std::size_t pos = 0;
  while (pos < head.size()) {
    auto end = head.find('\n', pos);
    if (end == std::string_view::npos) end = head.size();
    const auto line = head.substr(pos, end - pos);
    if (line.starts_with(kAnswerLinePrefix)) return std::string(line.substr(kAnswerLinePrefix.size()));
    pos = end + 1;
  }
  return std::nullopt;
}

bool requests_single_turn(std::string_view prompt) {
  const auto head = prompt.substr(0, history_offset(prompt));
  return head.find(kSingleTurnDirective) != std::string_view::npos;
}

}  // namespace dwim
