#include "progfc/dsl.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace progfc::dsl {

namespace {

bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

bool is_ident_char(char c) {
  return is_ident_start(c) || (c >= '0' && c <= '9');
}

bool is_space(char c) { return c == ' ' || c == '\t'; }

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i]))) {
      return false;
    }
  }
  return true;
}

struct Line {
  std::string_view text;
  int number;  // 1-based position in the original input
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  size_t start = 0;
  int number = 1;
  while (start <= text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      if (start < text.size()) lines.push_back({text.substr(start), number});
      break;
    }
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back({line, number});
    start = end + 1;
    ++number;
  }
  return lines;
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return is_space(c); });
}

bool is_comment(std::string_view line) {
  size_t i = 0;
  while (i < line.size() && is_space(line[i])) ++i;
  return i < line.size() && line[i] == '#';
}

// Matches `def program():` allowing internal whitespace.
bool is_def_header(std::string_view line) {
  size_t i = 0;
  auto skip_ws = [&] { while (i < line.size() && is_space(line[i])) ++i; };
  auto eat = [&](std::string_view word) {
    if (line.substr(i, word.size()) != word) return false;
    i += word.size();
    return true;
  };
  skip_ws();
  if (!eat("def")) return false;
  if (i >= line.size() || !is_space(line[i])) return false;
  skip_ws();
  if (!eat("program")) return false;
  skip_ws();
  if (!eat("(")) return false;
  skip_ws();
  if (!eat(")")) return false;
  skip_ws();
  if (!eat(":")) return false;
  skip_ws();
  return i == line.size();
}

// Per-line recursive-descent parser. Columns are 1-based byte offsets.
class LineParser {
 public:
  LineParser(std::string_view line, int line_number)
      : line_(line), line_number_(line_number) {}

  std::optional<ReasoningStep> parse(std::vector<ParseDiagnostic>& diagnostics) {
    diagnostics_ = &diagnostics;
    ReasoningStep step;
    step.line = line_number_;

    skip_ws();
    auto target = parse_ident();
    if (!target) return error("expected a variable name");
    step.target_var = *target;

    skip_ws();
    if (!eat('=')) return error("expected '=' after variable name");

    skip_ws();
    size_t kind_col = pos_ + 1;
    auto kind_name = parse_ident();
    if (!kind_name) return error("expected a function name after '='");
    if (iequals(*kind_name, "Question")) {
      step.kind = StepKind::Question;
    } else if (iequals(*kind_name, "Verify")) {
      step.kind = StepKind::Verify;
    } else if (iequals(*kind_name, "Predict")) {
      step.kind = StepKind::Predict;
    } else {
      return error("unknown function name '" + *kind_name + "'", kind_col);
    }

    skip_ws();
    if (!eat('(')) return error("expected '(' after function name");

    if (step.kind == StepKind::Predict) {
      auto expr = parse_or_expr();
      if (!expr) return std::nullopt;
      step.argument = std::move(*expr);
    } else {
      auto tmpl = parse_string_arg();
      if (!tmpl) return std::nullopt;
      step.argument = std::move(*tmpl);
    }

    skip_ws();
    if (!eat(')')) return error("expected ')' to close the function call");
    skip_ws();
    if (pos_ < line_.size() && line_[pos_] != '#') {
      return error("unexpected text after ')'");
    }
    return step;
  }

 private:
  std::optional<ReasoningStep> error(std::string message, size_t column = 0) {
    diagnostics_->push_back({Severity::SyntaxError, std::nullopt, std::move(message),
                             line_number_, static_cast<int>(column ? column : pos_ + 1)});
    return std::nullopt;
  }

  // Overload used inside expression parsing where the caller returns optionals
  // of other types; records the diagnostic and lets the caller bail out.
  void fail(std::string message, size_t column = 0) {
    diagnostics_->push_back({Severity::SyntaxError, std::nullopt, std::move(message),
                             line_number_, static_cast<int>(column ? column : pos_ + 1)});
  }

  void skip_ws() {
    while (pos_ < line_.size() && is_space(line_[pos_])) ++pos_;
  }

  bool eat(char c) {
    if (pos_ < line_.size() && line_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::optional<std::string> parse_ident() {
    if (pos_ >= line_.size() || !is_ident_start(line_[pos_])) return std::nullopt;
    size_t start = pos_;
    while (pos_ < line_.size() && is_ident_char(line_[pos_])) ++pos_;
    return std::string(line_.substr(start, pos_ - start));
  }

  // ["f"] quote ... quote, with {ident} placeholders and {{ }} escapes.
  std::optional<TemplateString> parse_string_arg() {
    skip_ws();
    size_t start_col = pos_ + 1;
    if (pos_ < line_.size() && (line_[pos_] == 'f' || line_[pos_] == 'F') &&
        pos_ + 1 < line_.size() && (line_[pos_ + 1] == '"' || line_[pos_ + 1] == '\'')) {
      ++pos_;  // f-strings and plain strings are treated identically
    }
    if (pos_ >= line_.size() || (line_[pos_] != '"' && line_[pos_] != '\'')) {
      fail("expected a quoted string argument", start_col);
      return std::nullopt;
    }
    char quote = line_[pos_++];
    TemplateString tmpl;
    std::string literal;
    auto flush_literal = [&] {
      if (!literal.empty()) {
        tmpl.segments.push_back({TemplateString::Segment::Kind::Literal, literal});
        literal.clear();
      }
    };
    while (true) {
      if (pos_ >= line_.size()) {
        fail("unterminated string (missing closing quote)", start_col);
        return std::nullopt;
      }
      char c = line_[pos_];
      if (c == quote) {
        ++pos_;
        break;
      }
      if (c == '{') {
        if (pos_ + 1 < line_.size() && line_[pos_ + 1] == '{') {
          literal.push_back('{');
          pos_ += 2;
          continue;
        }
        size_t brace_col = pos_ + 1;
        ++pos_;
        if (pos_ >= line_.size() || !is_ident_start(line_[pos_])) {
          fail("malformed placeholder: expected an identifier after '{'", brace_col);
          return std::nullopt;
        }
        size_t name_start = pos_;
        while (pos_ < line_.size() && is_ident_char(line_[pos_])) ++pos_;
        std::string name(line_.substr(name_start, pos_ - name_start));
        if (pos_ >= line_.size() || line_[pos_] != '}') {
          fail("malformed placeholder: expected '}' after identifier", brace_col);
          return std::nullopt;
        }
        ++pos_;
        flush_literal();
        tmpl.segments.push_back({TemplateString::Segment::Kind::Placeholder, std::move(name)});
        continue;
      }
      if (c == '}') {
        if (pos_ + 1 < line_.size() && line_[pos_ + 1] == '}') {
          literal.push_back('}');
          pos_ += 2;
          continue;
        }
        fail("unescaped '}' in string (use '}}' for a literal brace)", pos_ + 1);
        return std::nullopt;
      }
      literal.push_back(c);
      ++pos_;
    }
    flush_literal();
    return tmpl;
  }

  // or_expr := and_expr { "or" and_expr }
  std::optional<LogicExpr> parse_or_expr() {
    auto lhs = parse_and_expr();
    if (!lhs) return std::nullopt;
    while (peek_keyword("or")) {
      consume_keyword();
      auto rhs = parse_and_expr();
      if (!rhs) return std::nullopt;
      lhs = LogicExpr(LogicExpr::Op::Or,
                      std::make_unique<LogicExpr>(std::move(*lhs)),
                      std::make_unique<LogicExpr>(std::move(*rhs)));
    }
    return lhs;
  }

  std::optional<LogicExpr> parse_and_expr() {
    auto lhs = parse_not_expr();
    if (!lhs) return std::nullopt;
    while (peek_keyword("and")) {
      consume_keyword();
      auto rhs = parse_not_expr();
      if (!rhs) return std::nullopt;
      lhs = LogicExpr(LogicExpr::Op::And,
                      std::make_unique<LogicExpr>(std::move(*lhs)),
                      std::make_unique<LogicExpr>(std::move(*rhs)));
    }
    return lhs;
  }

  std::optional<LogicExpr> parse_not_expr() {
    if (peek_keyword("not")) {
      consume_keyword();
      auto operand = parse_not_expr();
      if (!operand) return std::nullopt;
      return LogicExpr(LogicExpr::Op::Not,
                       std::make_unique<LogicExpr>(std::move(*operand)));
    }
    return parse_primary();
  }

  std::optional<LogicExpr> parse_primary() {
    skip_ws();
    if (eat('(')) {
      auto inner = parse_or_expr();
      if (!inner) return std::nullopt;
      skip_ws();
      if (!eat(')')) {
        fail("expected ')' in expression");
        return std::nullopt;
      }
      return inner;
    }
    size_t col = pos_ + 1;
    auto name = parse_ident();
    if (!name) {
      fail("expected a variable name in expression", col);
      return std::nullopt;
    }
    if (*name == "and" || *name == "or" || *name == "not") {
      fail("unexpected keyword '" + *name + "' in expression", col);
      return std::nullopt;
    }
    if (*name == "True" || *name == "False") {
      fail("boolean constants are not allowed in Predict", col);
      return std::nullopt;
    }
    skip_ws();
    if (pos_ < line_.size() && line_[pos_] == '(') {
      fail("nested function calls are not allowed", pos_ + 1);
      return std::nullopt;
    }
    return LogicExpr(std::move(*name));
  }

  // Looks ahead for a lowercase keyword token at the next non-space position.
  bool peek_keyword(std::string_view word) {
    size_t p = pos_;
    while (p < line_.size() && is_space(line_[p])) ++p;
    if (line_.substr(p, word.size()) != word) return false;
    size_t after = p + word.size();
    if (after < line_.size() && is_ident_char(line_[after])) return false;
    keyword_end_ = after;
    return true;
  }

  void consume_keyword() { pos_ = keyword_end_; }

  std::string_view line_;
  int line_number_;
  size_t pos_ = 0;
  size_t keyword_end_ = 0;
  std::vector<ParseDiagnostic>* diagnostics_ = nullptr;
};

struct Assigned {
  int step_index;
  StepKind kind;
};

// Resolves `name` against variables assigned by steps before `step_index`:
// exact match first, then a unique case-insensitive match.
enum class Resolution { Found, Unbound, Ambiguous };

Resolution resolve_earlier(const std::string& name, int step_index,
                           const std::map<std::string, Assigned>& assigned,
                           const Assigned** out) {
  auto it = assigned.find(name);
  if (it != assigned.end() && it->second.step_index < step_index) {
    *out = &it->second;
    return Resolution::Found;
  }
  const Assigned* match = nullptr;
  int matches = 0;
  std::string lower = to_lower(name);
  for (const auto& [var, info] : assigned) {
    if (info.step_index < step_index && to_lower(var) == lower) {
      match = &info;
      ++matches;
    }
  }
  if (matches == 1) {
    *out = match;
    return Resolution::Found;
  }
  return matches == 0 ? Resolution::Unbound : Resolution::Ambiguous;
}

void semantic_pass(const std::vector<ReasoningStep>& steps,
                   std::vector<ParseDiagnostic>& diagnostics) {
  auto semantic = [&](SemanticKind kind, std::string message, int line) {
    diagnostics.push_back({Severity::SemanticError, kind, std::move(message), line, 1});
  };

  std::map<std::string, Assigned> assigned;
  for (int i = 0; i < static_cast<int>(steps.size()); ++i) {
    const ReasoningStep& step = steps[i];

    if (step.kind != StepKind::Predict) {
      for (const auto& name : step.template_arg().placeholder_names()) {
        const Assigned* info = nullptr;
        switch (resolve_earlier(name, i, assigned, &info)) {
          case Resolution::Found:
            break;
          case Resolution::Unbound:
            semantic(SemanticKind::Token,
                     "placeholder '{" + name + "}' references a variable not assigned by an earlier step",
                     step.line);
            break;
          case Resolution::Ambiguous:
            semantic(SemanticKind::Token,
                     "placeholder '{" + name + "}' matches multiple earlier variables (case-insensitive)",
                     step.line);
            break;
        }
      }
    } else {
      for (const auto& name : step.logic_arg().variables()) {
        const Assigned* info = nullptr;
        switch (resolve_earlier(name, i, assigned, &info)) {
          case Resolution::Found:
            if (info->kind == StepKind::Question) {
              semantic(SemanticKind::Subtask,
                       "Predict operand '" + name + "' was assigned by a Question step (text used as boolean)",
                       step.line);
            }
            break;
          case Resolution::Unbound:
            semantic(SemanticKind::Token,
                     "Predict references undefined variable '" + name + "'", step.line);
            break;
          case Resolution::Ambiguous:
            semantic(SemanticKind::Token,
                     "Predict operand '" + name + "' matches multiple earlier variables (case-insensitive)",
                     step.line);
            break;
        }
      }
    }

    if (assigned.count(step.target_var)) {
      semantic(SemanticKind::Token,
               "variable '" + step.target_var + "' is assigned more than once", step.line);
    } else {
      assigned[step.target_var] = {i, step.kind};
    }
  }

  int predict_count = 0;
  for (const auto& step : steps) {
    if (step.kind == StepKind::Predict) ++predict_count;
  }
  if (predict_count == 0) {
    semantic(SemanticKind::Structure, "program has no Predict step",
             steps.empty() ? 1 : steps.back().line);
  } else if (predict_count > 1) {
    for (const auto& step : steps) {
      if (step.kind == StepKind::Predict && &step != &steps.back()) {
        semantic(SemanticKind::Structure, "Predict must appear exactly once, as the final step",
                 step.line);
      }
    }
    if (steps.back().kind != StepKind::Predict) {
      semantic(SemanticKind::Structure, "last step must be a Predict", steps.back().line);
    }
  } else if (steps.back().kind != StepKind::Predict) {
    for (const auto& step : steps) {
      if (step.kind == StepKind::Predict) {
        semantic(SemanticKind::Structure, "Predict must be the final step", step.line);
      }
    }
  }
}

int precedence(LogicExpr::Op op) {
  switch (op) {
    case LogicExpr::Op::Or: return 0;
    case LogicExpr::Op::And: return 1;
    case LogicExpr::Op::Not: return 2;
    case LogicExpr::Op::Var: return 3;
  }
  return 3;
}

void render_logic_impl(const LogicExpr& e, std::string& out) {
  auto child = [&](const LogicExpr& c, bool parens) {
    if (parens) out.push_back('(');
    render_logic_impl(c, out);
    if (parens) out.push_back(')');
  };
  switch (e.op) {
    case LogicExpr::Op::Var:
      out += e.var;
      break;
    case LogicExpr::Op::Not:
      out += "not ";
      child(*e.lhs, precedence(e.lhs->op) < precedence(LogicExpr::Op::Not));
      break;
    case LogicExpr::Op::And:
      child(*e.lhs, precedence(e.lhs->op) < 1);
      out += " and ";
      child(*e.rhs, precedence(e.rhs->op) <= 1);
      break;
    case LogicExpr::Op::Or:
      child(*e.lhs, precedence(e.lhs->op) < 0);
      out += " or ";
      child(*e.rhs, precedence(e.rhs->op) <= 0);
      break;
  }
}

void collect_vars(const LogicExpr& e, std::vector<std::string>& out) {
  switch (e.op) {
    case LogicExpr::Op::Var:
      if (std::find(out.begin(), out.end(), e.var) == out.end()) out.push_back(e.var);
      break;
    case LogicExpr::Op::Not:
      collect_vars(*e.lhs, out);
      break;
    case LogicExpr::Op::And:
    case LogicExpr::Op::Or:
      collect_vars(*e.lhs, out);
      collect_vars(*e.rhs, out);
      break;
  }
}

}  // namespace

const char* to_string(StepKind kind) {
  switch (kind) {
    case StepKind::Question: return "Question";
    case StepKind::Verify: return "Verify";
    case StepKind::Predict: return "Predict";
  }
  return "Verify";
}

bool TemplateString::has_placeholders() const {
  return std::any_of(segments.begin(), segments.end(), [](const Segment& s) {
    return s.kind == Segment::Kind::Placeholder;
  });
}

std::vector<std::string> TemplateString::placeholder_names() const {
  std::vector<std::string> names;
  for (const auto& seg : segments) {
    if (seg.kind == Segment::Kind::Placeholder) names.push_back(seg.text);
  }
  return names;
}

LogicExpr LogicExpr::clone() const {
  LogicExpr copy;
  copy.op = op;
  copy.var = var;
  if (lhs) copy.lhs = std::make_unique<LogicExpr>(lhs->clone());
  if (rhs) copy.rhs = std::make_unique<LogicExpr>(rhs->clone());
  return copy;
}

std::vector<std::string> LogicExpr::variables() const {
  std::vector<std::string> out;
  collect_vars(*this, out);
  return out;
}

std::string format_diagnostic(const ParseDiagnostic& d) {
  std::string severity =
      d.severity == Severity::SyntaxError ? "syntax_error" : "semantic_error";
  std::string sub;
  if (d.sub_kind) {
    switch (*d.sub_kind) {
      case SemanticKind::Token: sub = "token"; break;
      case SemanticKind::Structure: sub = "structure"; break;
      case SemanticKind::Subtask: sub = "subtask"; break;
    }
  }
  std::ostringstream os;
  os << severity << ':' << sub << ':' << d.line << ':' << d.column << ':' << d.message;
  return os.str();
}

std::string format_diagnostics(const std::vector<ParseDiagnostic>& diagnostics) {
  std::string out;
  for (const auto& d : diagnostics) {
    out += format_diagnostic(d);
    out.push_back('\n');
  }
  return out;
}

ParseResult parse_program(std::string_view text) {
  ParseResult result;
  std::vector<ReasoningStep> steps;
  std::vector<ParseDiagnostic> syntax;

  for (const Line& line : split_lines(text)) {
    if (is_blank(line.text) || is_comment(line.text) || is_def_header(line.text)) continue;
    LineParser parser(line.text, line.number);
    if (auto step = parser.parse(syntax)) steps.push_back(std::move(*step));
  }

  if (!syntax.empty()) {
    result.diagnostics = std::move(syntax);
    return result;
  }
  if (steps.empty()) {
    result.diagnostics.push_back(
        {Severity::SyntaxError, std::nullopt, "no program lines found", 1, 1});
    return result;
  }

  std::vector<ParseDiagnostic> semantic;
  semantic_pass(steps, semantic);
  if (!semantic.empty()) {
    result.diagnostics = std::move(semantic);
    return result;
  }

  ReasoningProgram program;
  program.steps = std::move(steps);
  program.source_text = std::string(text);
  result.program = std::move(program);
  return result;
}

std::string extract_program_block(std::string_view completion) {
  std::vector<Line> lines = split_lines(completion);
  size_t i = 0;
  while (i < lines.size() && is_blank(lines[i].text)) ++i;
  if (i < lines.size() && is_def_header(lines[i].text)) {
    ++i;
    while (i < lines.size() && is_blank(lines[i].text)) ++i;
  }

  std::vector<std::string_view> block;
  bool has_assignment = false;
  for (; i < lines.size(); ++i) {
    std::string_view line = lines[i].text;
    if (is_blank(line) || is_comment(line)) break;
    if (line.find('=') != std::string_view::npos) has_assignment = true;
    block.push_back(line);
  }
  if (!has_assignment) return "";

  std::string out;
  for (size_t k = 0; k < block.size(); ++k) {
    if (k) out.push_back('\n');
    out += std::string(block[k]);
  }
  return out;
}

std::string render_template_pattern(const TemplateString& ts) {
  std::string out;
  for (const auto& seg : ts.segments) {
    if (seg.kind == TemplateString::Segment::Kind::Placeholder) {
      out.push_back('{');
      out += seg.text;
      out.push_back('}');
    } else {
      for (char c : seg.text) {
        if (c == '{') out += "{{";
        else if (c == '}') out += "}}";
        else out.push_back(c);
      }
    }
  }
  return out;
}

std::string render_logic(const LogicExpr& expr) {
  std::string out;
  render_logic_impl(expr, out);
  return out;
}

std::string render_program(const ReasoningProgram& program) {
  std::string out;
  for (const auto& step : program.steps) {
    out += step.target_var;
    out += " = ";
    out += to_string(step.kind);
    out.push_back('(');
    if (step.kind == StepKind::Predict) {
      out += render_logic(step.logic_arg());
    } else {
      std::string pattern = render_template_pattern(step.template_arg());
      char quote = pattern.find('"') == std::string::npos ? '"' : '\'';
      out.push_back(quote);
      out += pattern;
      out.push_back(quote);
    }
    out += ")\n";
  }
  return out;
}

bool structurally_equal(const LogicExpr& a, const LogicExpr& b) {
  if (a.op != b.op) return false;
  switch (a.op) {
    case LogicExpr::Op::Var:
      return a.var == b.var;
    case LogicExpr::Op::Not:
      return structurally_equal(*a.lhs, *b.lhs);
    case LogicExpr::Op::And:
    case LogicExpr::Op::Or:
      return structurally_equal(*a.lhs, *b.lhs) && structurally_equal(*a.rhs, *b.rhs);
  }
  return false;
}

bool structurally_equal(const TemplateString& a, const TemplateString& b) {
  if (a.segments.size() != b.segments.size()) return false;
  for (size_t i = 0; i < a.segments.size(); ++i) {
    if (a.segments[i].kind != b.segments[i].kind) return false;
    if (a.segments[i].text != b.segments[i].text) return false;
  }
  return true;
}

bool structurally_equal(const ReasoningProgram& a, const ReasoningProgram& b) {
  if (a.steps.size() != b.steps.size()) return false;
  for (size_t i = 0; i < a.steps.size(); ++i) {
    const ReasoningStep& sa = a.steps[i];
    const ReasoningStep& sb = b.steps[i];
    if (sa.target_var != sb.target_var || sa.kind != sb.kind) return false;
    if (sa.kind == StepKind::Predict) {
      if (!structurally_equal(sa.logic_arg(), sb.logic_arg())) return false;
    } else {
      if (!structurally_equal(sa.template_arg(), sb.template_arg())) return false;
    }
  }
  return true;
}

}  // namespace progfc::dsl
