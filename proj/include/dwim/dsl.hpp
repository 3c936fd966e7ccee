#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dwim/core.hpp"
#include "dwim/value.hpp"

namespace dwim::dsl {

// ---------------------------------------------------------------------------
// Program representation. The grammar is line oriented; see docs/dsl.ebnf.

struct Expr {
  enum class Kind { Literal, VarRef, Call, List, Compare, Index };

  Kind kind = Kind::Literal;
  Value literal;           // Literal
  std::string name;        // VarRef name, Call builtin, Compare operator
  std::vector<Expr> args;  // Call/List elements, Compare/Index operands
  int line = 0;
  int column = 0;

  bool operator==(const Expr&) const = default;
};

struct Statement {
  std::optional<std::string> target;  // assignment target, if any
  Expr expr;
  int line = 0;

  bool operator==(const Statement&) const = default;
};

struct Program {
  std::vector<Statement> statements;

  bool operator==(const Program&) const = default;
};

class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(int line, int column, const std::string& message);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

class UnknownBuiltin : public std::runtime_error {
 public:
  UnknownBuiltin(std::string name, int line, int column);
  const std::string& name() const { return name_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  std::string name_;
  int line_;
  int column_;
};

/// Full-input parse. Throws SyntaxError or UnknownBuiltin.
Program parse_program(std::string_view source);

// ---------------------------------------------------------------------------
// Builtins and tool libraries.

/// Tool capability groups; a library enables a subset. Pure helpers
/// (bool_to_yesno, count, comparisons) are always available.
enum class ToolGroup {
  Detector,
  CheckExistence,
  SimpleQuery,
  ExternalKnowledge,
  ImageCrop,
  PropertyMatching,
  VerifyProperty,
};

std::string_view to_string(ToolGroup group);
ToolGroup parse_tool_group(std::string_view s);

struct ToolLibrary {
  std::set<ToolGroup> enabled;

  static ToolLibrary complete();
  static ToolLibrary none() { return {}; }
  bool allows(ToolGroup g) const { return enabled.contains(g); }
};

struct BuiltinInfo {
  std::string_view name;
  std::string_view signature;
  std::string_view description;
  std::optional<ToolGroup> group;  // nullopt = always-on pure helper
};

/// Every builtin in documentation order.
std::span<const BuiltinInfo> builtins();
const BuiltinInfo* find_builtin(std::string_view name);

/// Signature + description block for the enabled tools (the prompt's tool docs).
std::string builtin_docs(const ToolLibrary& library);

// ---------------------------------------------------------------------------
// Evaluation.

/// A fault raised by a tool; becomes a Traceback feedback.
struct ToolFault {
  std::string type;  // exception class name shown to the agent
  std::string message;
};

struct ToolOutcome {
  std::optional<Value> value;
  std::optional<ToolFault> fault;

  static ToolOutcome ok(Value v) { return {std::move(v), std::nullopt}; }
  static ToolOutcome error(std::string type, std::string message) {
    return {std::nullopt, ToolFault{std::move(type), std::move(message)}};
  }
};

/// Where non-pure builtins are dispatched. The simulated environment
/// implements this; tests may supply their own.
class ToolBackend {
 public:
  virtual ~ToolBackend() = default;
  virtual ToolOutcome call(std::string_view builtin, std::span<const Value> args) = 0;
  /// Value bound to `image` at the start of an episode.
  virtual Value image() const = 0;
};

using Bindings = std::map<std::string, Value>;

/// Executes statements in order. Payload is the repr of the final expression
/// statement, or empty for an assignment. Any fault stops execution and yields
/// a Traceback payload; bindings keep the effects of completed statements only.
Feedback evaluate(const Program& program, Bindings& bindings, ToolBackend& tools, int step_index);

/// parse_program + evaluate; parse failures also become Traceback feedback.
Feedback run_code(std::string_view source, Bindings& bindings, ToolBackend& tools, int step_index);

std::string format_traceback(int line, std::string_view type, std::string_view message);

}  // namespace dwim::dsl
