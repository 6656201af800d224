#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "progfc/claim.hpp"
#include "progfc/dsl.hpp"
#include "progfc/handlers.hpp"
#include "progfc/retrieval.hpp"

// Step-by-step interpreter for validated reasoning programs: maintains the
// variable environment, substitutes placeholders, dispatches Question/Verify
// to a handler with evidence chosen per setting, evaluates Predict, and emits
// a full trace. Also implements the N-program majority vote.

namespace progfc::engine {

/// A step's stored result: Question steps bind text, Verify/Predict bind bools.
struct Binding {
  std::string name;
  std::variant<std::string, bool> value;
  int origin_step = 0;

  bool is_bool() const { return std::holds_alternative<bool>(value); }
  bool bool_value() const { return std::get<bool>(value); }
  const std::string& text_value() const { return std::get<std::string>(value); }

  /// Placeholder rendering: text as-is, booleans as "True"/"False".
  std::string text_form() const;
};

/// Deterministically ordered so case-insensitive scans are stable.
using Environment = std::map<std::string, Binding>;

enum class ExecErrorKind {
  UnboundVariable,
  AmbiguousCaseMatch,
  TypeMismatch,
  HandlerFailure,
};

const char* to_string(ExecErrorKind kind);
std::optional<ExecErrorKind> exec_error_kind_from_string(std::string_view text);

struct ExecError {
  ExecErrorKind kind = ExecErrorKind::HandlerFailure;
  int step_index = 0;
  std::string detail;
};

/// Raised by substitute/eval_logic; execute() turns it into a trace failure.
class ExecutionError : public std::runtime_error {
 public:
  ExecutionError(ExecErrorKind k, const std::string& detail)
      : std::runtime_error(detail), kind(k) {}
  ExecErrorKind kind;
};

struct StepRecord {
  int step_index = 0;
  dsl::StepKind kind = dsl::StepKind::Verify;
  std::string raw_argument;
  std::string substituted_argument;
  std::vector<std::string> evidence_doc_ids;  // docs handed to the handler
  Binding result;
  std::optional<std::string> handler_anomaly;
};

/// The explanation artifact: one record per executed step, in order. Step
/// records form a prefix of the program; they cover every step exactly when
/// failure is absent, and final_label is present iff failure is absent.
struct ExecutionTrace {
  std::string claim_id;
  std::string program_source;
  std::vector<StepRecord> step_records;
  std::optional<VeracityLabel> final_label;
  std::optional<ExecError> failure;
};

/// Replaces each placeholder with its binding's text form. Lookup is exact
/// first, then unique case-insensitive. Throws ExecutionError on an unbound
/// placeholder or an ambiguous case-insensitive match.
std::string substitute(const dsl::TemplateString& arg, const Environment& env);

/// Standard boolean semantics. Throws ExecutionError when a variable is
/// unbound or holds text.
bool eval_logic(const dsl::LogicExpr& expr, const Environment& env);

struct ExecSettings {
  handlers::EvidenceSetting setting = handlers::EvidenceSetting::ClosedBook;
  int per_step_k = 10;
  std::size_t evidence_budget = handlers::kDefaultEvidenceBudget;
  const retrieval::Bm25Index* index = nullptr;            // open-book retrieval
  std::vector<retrieval::EvidenceDoc> gold_docs;          // gold evidence, per claim
};

/// Runs the program strictly in step order. Any step error aborts execution
/// at that step and records the failure; earlier step records are kept.
ExecutionTrace execute(const dsl::ReasoningProgram& program,
                       handlers::SubTaskHandler& handler, const ClaimRecord& claim,
                       const ExecSettings& settings);

/// Rebuilds the variable environment from a trace's step records.
Environment env_from_trace(const ExecutionTrace& trace);

/// Resolves a verdict when the vote ties or every program failed.
class FallbackPolicy {
 public:
  virtual ~FallbackPolicy() = default;
  virtual VeracityLabel resolve(const ClaimRecord& claim) = 0;
};

/// Runs the handler's Verify on the raw claim text with evidence chosen per
/// setting; an unverifiable claim resolves to Refuted.
class DirectVerifyFallback : public FallbackPolicy {
 public:
  DirectVerifyFallback(handlers::SubTaskHandler& handler, ExecSettings settings)
      : handler_(handler), settings_(std::move(settings)) {}
  VeracityLabel resolve(const ClaimRecord& claim) override;

 private:
  handlers::SubTaskHandler& handler_;
  ExecSettings settings_;
};

class FixedLabelFallback : public FallbackPolicy {
 public:
  explicit FixedLabelFallback(VeracityLabel label) : label_(label) {}
  VeracityLabel resolve(const ClaimRecord&) override {
    ++calls;
    return label_;
  }
  int calls = 0;

 private:
  VeracityLabel label_;
};

/// Majority vote over the present verdicts; duplicates are counted, failed
/// executions (absent entries) are excluded, ties and the all-failed case go
/// to the fallback. Total: always returns a label.
VeracityLabel aggregate(const std::vector<std::optional<VeracityLabel>>& verdicts,
                        const ClaimRecord& claim, FallbackPolicy& fallback);

/// One-line JSON with stable field names:
/// {claim_id, program_source, steps[], final_label, failure}.
std::string trace_to_json(const ExecutionTrace& trace);
ExecutionTrace trace_from_json(const std::string& line);

}  // namespace progfc::engine
