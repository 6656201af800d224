#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

// Reasoning-program DSL: a line-oriented, Python-like grammar of
// `var = Question("...")`, `var = Verify("...")` and `var = Predict(expr)`
// assignments. This header provides the AST, the parser with diagnostics,
// and the canonical renderer.
//
// Grammar (EBNF):
//   program     := line+
//   line        := ident "=" kind "(" arg ")"
//   kind        := "Question" | "Verify" | "Predict"      ; matched case-insensitively
//   arg         := string (Question/Verify) | logic_expr (Predict)
//   string      := ["f"] quote { char | "{" ident "}" | "{{" | "}}" } quote
//   logic_expr  := or_expr
//   or_expr     := and_expr { "or" and_expr }
//   and_expr    := not_expr { "and" not_expr }
//   not_expr    := "not" not_expr | primary
//   primary     := ident | "(" or_expr ")"
//   ident       := [A-Za-z_][A-Za-z0-9_]*
//
// Blank lines, `# ...` comment lines and `def program():` headers are skipped.

namespace progfc::dsl {

enum class StepKind { Question, Verify, Predict };

const char* to_string(StepKind kind);

/// A quoted argument: literal text interleaved with {variable} placeholders.
/// `{{` and `}}` escape literal braces.
struct TemplateString {
  struct Segment {
    enum class Kind { Literal, Placeholder };
    Kind kind;
    std::string text;  // literal text, or the referenced variable name
  };
  std::vector<Segment> segments;

  bool has_placeholders() const;
  std::vector<std::string> placeholder_names() const;  // in order of appearance
};

/// Boolean expression over step variables. Precedence: not > and > or.
struct LogicExpr {
  enum class Op { Var, Not, And, Or };
  Op op = Op::Var;
  std::string var;                  // Op::Var only
  std::unique_ptr<LogicExpr> lhs;   // Not: operand; And/Or: left
  std::unique_ptr<LogicExpr> rhs;   // And/Or: right

  LogicExpr() = default;
  explicit LogicExpr(std::string name) : op(Op::Var), var(std::move(name)) {}
  LogicExpr(Op o, std::unique_ptr<LogicExpr> l, std::unique_ptr<LogicExpr> r = nullptr)
      : op(o), lhs(std::move(l)), rhs(std::move(r)) {}

  LogicExpr clone() const;
  std::vector<std::string> variables() const;  // first-use order, deduplicated
};

struct ReasoningStep {
  std::string target_var;
  StepKind kind = StepKind::Verify;
  std::variant<TemplateString, LogicExpr> argument;
  int line = 1;  // 1-based source line

  const TemplateString& template_arg() const { return std::get<TemplateString>(argument); }
  const LogicExpr& logic_arg() const { return std::get<LogicExpr>(argument); }
};

/// A validated program: non-empty step list ending in the unique Predict step,
/// single assignment per variable, every reference bound by an earlier step.
struct ReasoningProgram {
  std::vector<ReasoningStep> steps;
  std::string source_text;  // verbatim text the program was parsed from
};

enum class Severity { SyntaxError, SemanticError };
enum class SemanticKind { Token, Structure, Subtask };

struct ParseDiagnostic {
  Severity severity = Severity::SyntaxError;
  std::optional<SemanticKind> sub_kind;  // set iff severity == SemanticError
  std::string message;
  int line = 1;    // 1-based
  int column = 1;  // 1-based byte offset within the line
};

/// Line-oriented report form: `severity:subkind:line:col:message`
/// (subkind empty for syntax errors).
std::string format_diagnostic(const ParseDiagnostic& diagnostic);
std::string format_diagnostics(const std::vector<ParseDiagnostic>& diagnostics);

struct ParseResult {
  std::optional<ReasoningProgram> program;
  std::vector<ParseDiagnostic> diagnostics;  // non-empty iff !program

  bool ok() const { return program.has_value(); }
};

/// Parse and statically validate a program. Total over arbitrary input:
/// returns either a program satisfying all invariants or the diagnostics
/// found in one pass (syntax errors suppress the semantic pass).
ParseResult parse_program(std::string_view text);

/// Isolate the program block from a raw model completion: skips leading blank
/// lines and a `def program():` header, then takes contiguous lines until the
/// first blank line, the first `#` line, or end of text. Returns an empty
/// string when the block contains no assignment line.
std::string extract_program_block(std::string_view completion);

/// Canonical one-line-per-step text. parse_program(render_program(p))
/// succeeds and is structurally equal to p.
std::string render_program(const ReasoningProgram& program);

/// Expression with minimal parentheses under the documented precedence.
std::string render_logic(const LogicExpr& expr);

/// Unquoted template pattern with placeholders intact and braces re-escaped.
std::string render_template_pattern(const TemplateString& ts);

bool structurally_equal(const LogicExpr& a, const LogicExpr& b);
bool structurally_equal(const TemplateString& a, const TemplateString& b);
bool structurally_equal(const ReasoningProgram& a, const ReasoningProgram& b);

}  // namespace progfc::dsl
