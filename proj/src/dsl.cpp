#include "dwim/dsl.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>

namespace dwim::dsl {

SyntaxError::SyntaxError(int line, int column, const std::string& message)
    : std::runtime_error(message), line_(line), column_(column) {}

UnknownBuiltin::UnknownBuiltin(std::string name, int line, int column)
    : std::runtime_error(name), name_(std::move(name)), line_(line), column_(column) {}

// ---------------------------------------------------------------------------
// Builtins

namespace {

constexpr std::array<BuiltinInfo, 12> kBuiltins = {{
    {"find", "find(object_name, patch=image) -> list[ObjectPatch]",
     "Detect Object. Returns every detected object with the given name whose center lies in the patch.",
     ToolGroup::Detector},
    {"exists", "exists(object_name, patch=image) -> bool",
     "Check Object Existence. True if an object with the given name is present in the patch.",
     ToolGroup::CheckExistence},
    {"verify_property", "verify_property(object, visual_property, patch=image) -> bool",
     "Verify Visual Property. `object` is a name or an ObjectPatch; checks e.g. a color or a size.",
     ToolGroup::VerifyProperty},
    {"best_description_from_options",
     "best_description_from_options(object, options, patch=image) -> str",
     "Identify the Best-Matching Visual Property. Picks the option that best describes the object.",
     ToolGroup::PropertyMatching},
    {"simple_query", "simple_query(question, patch=image) -> str | number",
     "Answering Simple Questions with a Word or Phrase, about the patch.", ToolGroup::SimpleQuery},
    {"llm_query", "llm_query(question) -> str | number",
     "Acquire External Knowledge. Answers a question with a language model.", ToolGroup::ExternalKnowledge},
    {"crop_left_of_bbox", "crop_left_of_bbox(box, patch=image) -> ImagePatch",
     "Crop Images Based on Provided Coordinates: the part of the patch left of the box center. "
     "`box` is an ObjectPatch or four numbers left, upper, right, lower.",
     ToolGroup::ImageCrop},
    {"crop_right_of_bbox", "crop_right_of_bbox(box, patch=image) -> ImagePatch",
     "Crop Images Based on Provided Coordinates: the part of the patch right of the box center.",
     ToolGroup::ImageCrop},
    {"crop_above_bbox", "crop_above_bbox(box, patch=image) -> ImagePatch",
     "Crop Images Based on Provided Coordinates: the part of the patch above the box center.",
     ToolGroup::ImageCrop},
    {"crop_below_bbox", "crop_below_bbox(box, patch=image) -> ImagePatch",
     "Crop Images Based on Provided Coordinates: the part of the patch below the box center.",
     ToolGroup::ImageCrop},
    {"bool_to_yesno", "bool_to_yesno(value) -> str", "Convert True/False to Yes/No.", std::nullopt},
    {"count", "count(items) -> number", "Number of items in a list, e.g. the result of find.", std::nullopt},
}};

constexpr std::string_view kComparisonDoc =
    "Comparisons: a == b, a != b, a < b, a <= b, a > b, a >= b on numbers and strings.\n";

}  // namespace

std::string_view to_string(ToolGroup group) {
  switch (group) {
    case ToolGroup::Detector: return "Detector";
    case ToolGroup::CheckExistence: return "CheckExistence";
    case ToolGroup::SimpleQuery: return "SimpleQuery";
    case ToolGroup::ExternalKnowledge: return "ExternalKnowledge";
    case ToolGroup::ImageCrop: return "ImageCrop";
    case ToolGroup::PropertyMatching: return "PropertyMatching";
    case ToolGroup::VerifyProperty: return "VerifyProperty";
  }
  return "?";
}

ToolGroup parse_tool_group(std::string_view s) {
  for (auto g : {ToolGroup::Detector, ToolGroup::CheckExistence, ToolGroup::SimpleQuery,
                 ToolGroup::ExternalKnowledge, ToolGroup::ImageCrop, ToolGroup::PropertyMatching,
                 ToolGroup::VerifyProperty})
    if (to_string(g) == s) return g;
  throw UsageError("unknown tool group: " + std::string(s));
}

ToolLibrary ToolLibrary::complete() {
  return ToolLibrary{{ToolGroup::Detector, ToolGroup::CheckExistence, ToolGroup::SimpleQuery,
                      ToolGroup::ExternalKnowledge, ToolGroup::ImageCrop, ToolGroup::PropertyMatching,
                      ToolGroup::VerifyProperty}};
}

std::span<const BuiltinInfo> builtins() { return kBuiltins; }

const BuiltinInfo* find_builtin(std::string_view name) {
  for (const auto& b : kBuiltins)
    if (b.name == name) return &b;
  return nullptr;
}

std::string builtin_docs(const ToolLibrary& library) {
  std::string out;
  for (const auto& b : kBuiltins) {
    if (b.group && !library.allows(*b.group)) continue;
    out += b.signature;
    out += "\n    ";
    out += b.description;
    out += '\n';
  }
  out += kComparisonDoc;
  return out;
}

// ---------------------------------------------------------------------------
// Lexer

namespace {

enum class Tok { Ident, Number, String, Punct, Newline, End };

struct Token {
  Tok kind;
  std::string text;  // identifier, punctuation, or decoded string literal
  double number = 0;
  int line = 0;
  int column = 0;
};

constexpr std::array<std::string_view, 26> kKeywords = {
    "and",  "as",     "assert", "async", "await",  "break", "class", "continue", "def",
    "del",  "elif",   "else",   "except", "finally", "for",  "from",  "global",   "if",
    "import", "in",   "is",     "lambda", "not",    "or",    "return", "while"};

bool is_keyword(std::string_view s) {
  for (auto k : kKeywords)
    if (k == s) return true;
  return false;
}

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> toks;
  int line = 1;
  int col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n = 1) {
    i += n;
    col += static_cast<int>(n);
  };
  while (i < src.size()) {
    const char c = src[i];
    if (c == '\n') {
      toks.push_back({Tok::Newline, "\n", 0, line, col});
      ++i;
      ++line;
      col = 1;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r') {
      advance();
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance();
      continue;
    }
    const int start_col = col;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      toks.push_back({Tok::Ident, std::string(src.substr(i, j - i)), 0, line, start_col});
      advance(j - i);
      continue;
    }
    // No arithmetic in the grammar, so a '-' can only start a negative literal.
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '-' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i + (c == '-' ? 1 : 0);
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      if (j < src.size() && src[j] == '.') {
        ++j;
        while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      }
      const std::string text(src.substr(i, j - i));
      toks.push_back({Tok::Number, text, std::strtod(text.c_str(), nullptr), line, start_col});
      advance(j - i);
      continue;
    }
    if (c == '"' || c == '\'') {
      std::string value;
      std::size_t j = i + 1;
      bool closed = false;
      while (j < src.size() && src[j] != '\n') {
        if (src[j] == c) {
          closed = true;
          break;
        }
        if (src[j] == '\\' && j + 1 < src.size()) {
          const char e = src[j + 1];
          value.push_back(e == 'n' ? '\n' : e == 't' ? '\t' : e);
          j += 2;
          continue;
        }
        value.push_back(src[j++]);
      }
      if (!closed) throw SyntaxError(line, start_col, "unterminated string literal");
      toks.push_back({Tok::String, std::move(value), 0, line, start_col});
      advance(j + 1 - i);
      continue;
    }
    static constexpr std::array<std::string_view, 6> kTwoChar = {"==", "!=", "<=", ">=", "->", "**"};
    bool matched = false;
    for (auto op : kTwoChar) {
      if (src.compare(i, 2, op) == 0) {
        if (op == "->" || op == "**") throw SyntaxError(line, start_col, "unsupported operator '" + std::string(op) + "'");
        toks.push_back({Tok::Punct, std::string(op), 0, line, start_col});
        advance(2);
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (std::string_view("()[],=<>").find(c) != std::string_view::npos) {
      toks.push_back({Tok::Punct, std::string(1, c), 0, line, start_col});
      advance();
      continue;
    }
    throw SyntaxError(line, start_col, std::string("invalid character '") + c + "'");
  }
  toks.push_back({Tok::End, "", 0, line, col});
  return toks;
}

// ---------------------------------------------------------------------------
// Parser

bool is_comparison(const Token& t) {
  return t.kind == Tok::Punct &&
         (t.text == "==" || t.text == "!=" || t.text == "<" || t.text == "<=" || t.text == ">" || t.text == ">=");
}

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  Program parse() {
    Program program;
    while (peek().kind != Tok::End) {
      if (peek().kind == Tok::Newline) {
        ++pos_;
        continue;
      }
      program.statements.push_back(statement());
      if (peek().kind == Tok::Newline) {
        ++pos_;
      } else if (peek().kind != Tok::End) {
        throw unexpected(peek());
      }
    }
    return program;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token& take() { return toks_[pos_++]; }

  static SyntaxError unexpected(const Token& t) {
    if (t.kind == Tok::Newline || t.kind == Tok::End)
      return SyntaxError(t.line, t.column, "unexpected end of line");
    return SyntaxError(t.line, t.column, "unexpected '" + t.text + "'");
  }

  void expect(std::string_view punct) {
    const auto& t = peek();
    if (t.kind != Tok::Punct || t.text != punct) throw unexpected(t);
    ++pos_;
  }

  Statement statement() {
    Statement st;
    st.line = peek().line;
    if (peek().kind == Tok::Ident && peek(1).kind == Tok::Punct && peek(1).text == "=") {
      const auto& target = take();
      if (is_keyword(target.text) || target.text == "True" || target.text == "False" || target.text == "None")
        throw SyntaxError(target.line, target.column, "cannot assign to '" + target.text + "'");
      if (find_builtin(target.text))
        throw SyntaxError(target.line, target.column, "cannot assign to builtin '" + target.text + "'");
      ++pos_;  // '='
      st.target = target.text;
    }
    st.expr = expression();
    return st;
  }

  Expr expression() {
    Expr lhs = operand();
    if (!is_comparison(peek())) return lhs;
    const auto& op = take();
    Expr cmp;
    cmp.kind = Expr::Kind::Compare;
    cmp.name = op.text;
    cmp.line = op.line;
    cmp.column = op.column;
    cmp.args.push_back(std::move(lhs));
    cmp.args.push_back(operand());
    if (is_comparison(peek()))
      throw SyntaxError(peek().line, peek().column, "chained comparisons are not supported");
    return cmp;
  }

  Expr operand() {
    Expr e = primary();
    while (peek().kind == Tok::Punct && peek().text == "[") {
      const auto& open = take();
      Expr idx;
      idx.kind = Expr::Kind::Index;
      idx.line = open.line;
      idx.column = open.column;
      idx.args.push_back(std::move(e));
      idx.args.push_back(expression());
      expect("]");
      e = std::move(idx);
    }
    return e;
  }

  std::vector<Expr> arguments(std::string_view close) {
    std::vector<Expr> args;
    if (peek().kind == Tok::Punct && peek().text == close) {
      ++pos_;
      return args;
    }
    while (true) {
      args.push_back(expression());
      if (peek().kind == Tok::Punct && peek().text == ",") {
        ++pos_;
        continue;
      }
      expect(close);
      return args;
    }
  }

  Expr primary() {
    const auto& t = take();
    Expr e;
    e.line = t.line;
    e.column = t.column;
    switch (t.kind) {
      case Tok::Number:
        e.kind = Expr::Kind::Literal;
        e.literal = Value(t.number);
        return e;
      case Tok::String:
        e.kind = Expr::Kind::Literal;
        e.literal = Value(t.text);
        return e;
      case Tok::Ident: {
        if (t.text == "True" || t.text == "False") {
          e.kind = Expr::Kind::Literal;
          e.literal = Value(t.text == "True");
          return e;
        }
        if (t.text == "None") {
          e.kind = Expr::Kind::Literal;
          return e;
        }
        if (is_keyword(t.text))
          throw SyntaxError(t.line, t.column, "'" + t.text + "' is not supported in tool programs");
        if (peek().kind == Tok::Punct && peek().text == "(") {
          if (!find_builtin(t.text)) throw UnknownBuiltin(t.text, t.line, t.column);
          ++pos_;
          e.kind = Expr::Kind::Call;
          e.name = t.text;
          e.args = arguments(")");
          return e;
        }
        e.kind = Expr::Kind::VarRef;
        e.name = t.text;
        return e;
      }
      case Tok::Punct:
        if (t.text == "[") {
          e.kind = Expr::Kind::List;
          e.args = arguments("]");
          return e;
        }
        if (t.text == "(") {
          Expr inner = expression();
          expect(")");
          return inner;
        }
        [[fallthrough]];
      default:
        throw unexpected(t);
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluator

struct RuntimeFault {
  std::string type;
  std::string message;
  int line;
};

class Evaluator {
 public:
  Evaluator(const Bindings& bindings, ToolBackend& tools) : bindings_(bindings), tools_(tools) {}

  Value eval(const Expr& e) {
    switch (e.kind) {
      case Expr::Kind::Literal: return e.literal;
      case Expr::Kind::VarRef: {
        auto it = bindings_.find(e.name);
        if (it == bindings_.end()) throw RuntimeFault{"NameError", "name '" + e.name + "' is not defined", e.line};
        return it->second;
      }
      case Expr::Kind::List: {
        ValueList items;
        for (const auto& a : e.args) items.push_back(eval(a));
        return Value(std::move(items));
      }
      case Expr::Kind::Index: return index(e);
      case Expr::Kind::Compare: return compare(e);
      case Expr::Kind::Call: return call(e);
    }
    throw RuntimeFault{"RuntimeError", "bad expression", e.line};
  }

 private:
  Value index(const Expr& e) {
    const Value base = eval(e.args[0]);
    const Value key = eval(e.args[1]);
    if (!base.is<ValueList>())
      throw RuntimeFault{"TypeError", "'" + std::string(type_name(base)) + "' object is not subscriptable", e.line};
    if (!key.is<double>() || key.as<double>() != std::floor(key.as<double>()))
      throw RuntimeFault{"TypeError", "list indices must be integers", e.line};
    const auto& list = base.as<ValueList>();
    auto i = static_cast<long long>(key.as<double>());
    if (i < 0) i += static_cast<long long>(list.size());
    if (i < 0 || i >= static_cast<long long>(list.size()))
      throw RuntimeFault{"IndexError", "list index out of range", e.line};
    return list[static_cast<std::size_t>(i)];
  }

  Value compare(const Expr& e) {
    const Value a = eval(e.args[0]);
    const Value b = eval(e.args[1]);
    const auto& op = e.name;
    if (op == "==") return Value(a == b);
    if (op == "!=") return Value(!(a == b));
    int order = 0;
    if (a.is<double>() && b.is<double>()) {
      order = a.as<double>() < b.as<double>() ? -1 : (a.as<double>() > b.as<double>() ? 1 : 0);
    } else if (a.is<std::string>() && b.is<std::string>()) {
      order = a.as<std::string>().compare(b.as<std::string>());
      order = order < 0 ? -1 : (order > 0 ? 1 : 0);
    } else {
      throw RuntimeFault{"TypeError",
                         "'" + op + "' not supported between '" + std::string(type_name(a)) + "' and '" +
                             std::string(type_name(b)) + "'",
                         e.line};
    }
    if (op == "<") return Value(order < 0);
    if (op == "<=") return Value(order <= 0);
    if (op == ">") return Value(order > 0);
    return Value(order >= 0);
  }

  Value call(const Expr& e) {
    std::vector<Value> args;
    args.reserve(e.args.size());
    for (const auto& a : e.args) args.push_back(eval(a));

    if (e.name == "bool_to_yesno") {
      if (args.size() != 1) throw arity(e, 1);
      if (!args[0].is<bool>())
        throw RuntimeFault{"TypeError", "bool_to_yesno expects a bool, got " + std::string(type_name(args[0])),
                           e.line};
      return Value(std::string(args[0].as<bool>() ? "yes" : "no"));
    }
    if (e.name == "count") {
      if (args.size() != 1) throw arity(e, 1);
      if (!args[0].is<ValueList>())
        throw RuntimeFault{"TypeError", "count expects a list, got " + std::string(type_name(args[0])), e.line};
      return Value(static_cast<double>(args[0].as<ValueList>().size()));
    }
    auto outcome = tools_.call(e.name, args);
    if (outcome.fault) throw RuntimeFault{outcome.fault->type, outcome.fault->message, e.line};
    if (!outcome.value) throw RuntimeFault{"RuntimeError", e.name + " returned no value", e.line};
    return std::move(*outcome.value);
  }

  static RuntimeFault arity(const Expr& e, std::size_t n) {
    return RuntimeFault{"TypeError",
                        e.name + "() takes " + std::to_string(n) + " argument(s) but " +
                            std::to_string(e.args.size()) + " were given",
                        e.line};
  }

  const Bindings& bindings_;
  ToolBackend& tools_;
};

}  // namespace

Program parse_program(std::string_view source) { return Parser(lex(source)).parse(); }

std::string format_traceback(int line, std::string_view type, std::string_view message) {
  std::string out(kTracebackSentinel);
  out += "\n  File \"<cell>\", line " + std::to_string(line) + ", in <module>\n";
  out += type;
  out += ": ";
  out += message;
  return out;
}

Feedback evaluate(const Program& program, Bindings& bindings, ToolBackend& tools, int step_index) {
  std::string payload;
  for (const auto& st : program.statements) {
    Value v;
    try {
      v = Evaluator(bindings, tools).eval(st.expr);
    } catch (const RuntimeFault& f) {
      return Feedback::make(step_index, format_traceback(f.line, f.type, f.message));
    }
    if (st.target) {
      bindings[*st.target] = std::move(v);
      payload.clear();
    } else {
      payload = repr(v);
    }
  }
  return Feedback::make(step_index, std::move(payload));
}

Feedback run_code(std::string_view source, Bindings& bindings, ToolBackend& tools, int step_index) {
  Program program;
  try {
    program = parse_program(source);
  } catch (const SyntaxError& e) {
    return Feedback::make(step_index, format_traceback(e.line(), "SyntaxError",
                                                       std::string(e.what()) + " (column " +
                                                           std::to_string(e.column()) + ")"));
  } catch (const UnknownBuiltin& e) {
    return Feedback::make(step_index, format_traceback(e.line(), "UnknownBuiltin", e.name()));
  }
  return evaluate(program, bindings, tools, step_index);
}

}  // namespace dwim::dsl
