#include "progfc/engine.hpp"

#include <algorithm>
#include <cctype>

#include <nlohmann/json.hpp>

namespace progfc::engine {

namespace {

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Exact lookup with unique case-insensitive fallback.
const Binding& lookup(const Environment& env, const std::string& name) {
  auto it = env.find(name);
  if (it != env.end()) return it->second;

  const Binding* match = nullptr;
  int matches = 0;
  std::string lower = to_lower(name);
  for (const auto& [var, binding] : env) {
    if (to_lower(var) == lower) {
      match = &binding;
      ++matches;
    }
  }
  if (matches == 1) return *match;
  if (matches == 0) {
    throw ExecutionError(ExecErrorKind::UnboundVariable,
                         "variable '" + name + "' is not bound");
  }
  throw ExecutionError(ExecErrorKind::AmbiguousCaseMatch,
                       "variable '" + name + "' matches multiple bindings (case-insensitive)");
}

bool bool_of(const Binding& binding, const std::string& name) {
  if (!binding.is_bool()) {
    throw ExecutionError(ExecErrorKind::TypeMismatch,
                         "variable '" + name + "' holds text, expected a boolean");
  }
  return binding.bool_value();
}

// Expression with variables replaced by their truth values, for the trace.
dsl::LogicExpr substitute_logic(const dsl::LogicExpr& expr, const Environment& env) {
  dsl::LogicExpr out = expr.clone();
  struct Walker {
    const Environment& env;
    void walk(dsl::LogicExpr& e) {
      if (e.op == dsl::LogicExpr::Op::Var) {
        const Binding& binding = lookup(env, e.var);
        e.var = bool_of(binding, e.var) ? "True" : "False";
        return;
      }
      if (e.lhs) walk(*e.lhs);
      if (e.rhs) walk(*e.rhs);
    }
  } walker{env};
  walker.walk(out);
  return out;
}

}  // namespace

std::string Binding::text_form() const {
  if (is_bool()) return bool_value() ? "True" : "False";
  return text_value();
}

const char* to_string(ExecErrorKind kind) {
  switch (kind) {
    case ExecErrorKind::UnboundVariable: return "unbound_variable";
    case ExecErrorKind::AmbiguousCaseMatch: return "ambiguous_case_match";
    case ExecErrorKind::TypeMismatch: return "type_mismatch";
    case ExecErrorKind::HandlerFailure: return "handler_failure";
  }
  return "handler_failure";
}

std::optional<ExecErrorKind> exec_error_kind_from_string(std::string_view text) {
  if (text == "unbound_variable") return ExecErrorKind::UnboundVariable;
  if (text == "ambiguous_case_match") return ExecErrorKind::AmbiguousCaseMatch;
  if (text == "type_mismatch") return ExecErrorKind::TypeMismatch;
  if (text == "handler_failure") return ExecErrorKind::HandlerFailure;
  return std::nullopt;
}

std::string substitute(const dsl::TemplateString& arg, const Environment& env) {
  std::string out;
  for (const auto& seg : arg.segments) {
    if (seg.kind == dsl::TemplateString::Segment::Kind::Literal) {
      out += seg.text;
    } else {
      out += lookup(env, seg.text).text_form();
    }
  }
  return out;
}

bool eval_logic(const dsl::LogicExpr& expr, const Environment& env) {
  switch (expr.op) {
    case dsl::LogicExpr::Op::Var:
      return bool_of(lookup(env, expr.var), expr.var);
    case dsl::LogicExpr::Op::Not:
      return !eval_logic(*expr.lhs, env);
    case dsl::LogicExpr::Op::And:
      // No short-circuit: every operand is type-checked.
      {
        bool lhs = eval_logic(*expr.lhs, env);
        bool rhs = eval_logic(*expr.rhs, env);
        return lhs && rhs;
      }
    case dsl::LogicExpr::Op::Or: {
      bool lhs = eval_logic(*expr.lhs, env);
      bool rhs = eval_logic(*expr.rhs, env);
      return lhs || rhs;
    }
  }
  throw ExecutionError(ExecErrorKind::TypeMismatch, "malformed logic expression");
}

namespace {

struct StepEvidence {
  std::vector<retrieval::EvidenceDoc> docs;
  std::vector<std::string> ids;
};

StepEvidence select_evidence(const ExecSettings& settings, const std::string& query) {
  StepEvidence out;
  switch (settings.setting) {
    case handlers::EvidenceSetting::ClosedBook:
      break;
    case handlers::EvidenceSetting::Gold:
      out.docs = handlers::truncate_evidence(settings.gold_docs, settings.evidence_budget);
      break;
    case handlers::EvidenceSetting::OpenBook: {
      if (settings.index == nullptr) {
        throw handlers::HandlerFailure("open-book execution requires an index");
      }
      auto result = settings.index->retrieve(query, settings.per_step_k);
      std::vector<retrieval::EvidenceDoc> docs;
      docs.reserve(result.ranked.size());
      for (const auto& scored : result.ranked) {
        if (auto doc = settings.index->doc_by_id(scored.doc_id)) {
          docs.push_back(std::move(*doc));
        }
      }
      out.docs = handlers::truncate_evidence(docs, settings.evidence_budget);
      break;
    }
  }
  out.ids.reserve(out.docs.size());
  for (const auto& doc : out.docs) out.ids.push_back(doc.doc_id);
  return out;
}

}  // namespace

ExecutionTrace execute(const dsl::ReasoningProgram& program,
                       handlers::SubTaskHandler& handler, const ClaimRecord& claim,
                       const ExecSettings& settings) {
  ExecutionTrace trace;
  trace.claim_id = claim.claim_id;
  trace.program_source = program.source_text;

  Environment env;
  for (int i = 0; i < static_cast<int>(program.steps.size()); ++i) {
    const dsl::ReasoningStep& step = program.steps[i];
    StepRecord record;
    record.step_index = i;
    record.kind = step.kind;
    try {
      if (step.kind == dsl::StepKind::Predict) {
        record.raw_argument = dsl::render_logic(step.logic_arg());
        bool value = eval_logic(step.logic_arg(), env);
        record.substituted_argument = dsl::render_logic(substitute_logic(step.logic_arg(), env));
        record.result = {step.target_var, value, i};
      } else {
        record.raw_argument = dsl::render_template_pattern(step.template_arg());
        std::string text = substitute(step.template_arg(), env);
        record.substituted_argument = text;
        StepEvidence evidence = select_evidence(settings, text);
        record.evidence_doc_ids = std::move(evidence.ids);
        if (step.kind == dsl::StepKind::Question) {
          auto answer = handler.question(text, evidence.docs);
          if (answer.answer.empty()) {
            throw handlers::HandlerFailure("handler returned an empty answer");
          }
          record.result = {step.target_var, answer.answer, i};
          record.handler_anomaly = answer.anomaly;
        } else {
          auto verdict = handler.verify(text, evidence.docs);
          record.result = {step.target_var, verdict.verdict, i};
          record.handler_anomaly = verdict.anomaly;
        }
      }
    } catch (const ExecutionError& e) {
      trace.failure = ExecError{e.kind, i, e.what()};
      return trace;
    } catch (const handlers::HandlerFailure& e) {
      trace.failure = ExecError{ExecErrorKind::HandlerFailure, i, e.what()};
      return trace;
    }
    env[step.target_var] = record.result;
    trace.step_records.push_back(std::move(record));
  }

  const Binding& last = trace.step_records.back().result;
  if (!last.is_bool()) {
    trace.failure = ExecError{ExecErrorKind::TypeMismatch,
                              static_cast<int>(program.steps.size()) - 1,
                              "final step did not produce a boolean"};
    return trace;
  }
  trace.final_label = label_from_bool(last.bool_value());
  return trace;
}

Environment env_from_trace(const ExecutionTrace& trace) {
  Environment env;
  for (const auto& record : trace.step_records) {
    env[record.result.name] = record.result;
  }
  return env;
}

VeracityLabel DirectVerifyFallback::resolve(const ClaimRecord& claim) {
  try {
    StepEvidence evidence = select_evidence(settings_, claim.text);
    auto verdict = handler_.verify(claim.text, evidence.docs);
    return label_from_bool(verdict.verdict);
  } catch (const std::exception&) {
    return VeracityLabel::Refuted;
  }
}

VeracityLabel aggregate(const std::vector<std::optional<VeracityLabel>>& verdicts,
                        const ClaimRecord& claim, FallbackPolicy& fallback) {
  int supported = 0;
  int refuted = 0;
  for (const auto& verdict : verdicts) {
    if (!verdict) continue;
    if (*verdict == VeracityLabel::Supported) {
      ++supported;
    } else {
      ++refuted;
    }
  }
  if (supported > refuted) return VeracityLabel::Supported;
  if (refuted > supported) return VeracityLabel::Refuted;
  return fallback.resolve(claim);
}

// ---------------------------------------------------------------------------
// Trace serialization

std::string trace_to_json(const ExecutionTrace& trace) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& record : trace.step_records) {
    nlohmann::json result = {
        {"name", record.result.name},
        {"type", record.result.is_bool() ? "bool" : "text"},
    };
    if (record.result.is_bool()) {
      result["value"] = record.result.bool_value();
    } else {
      result["value"] = record.result.text_value();
    }
    nlohmann::json step = {
        {"step_index", record.step_index},
        {"kind", dsl::to_string(record.kind)},
        {"raw_argument", record.raw_argument},
        {"substituted_argument", record.substituted_argument},
        {"evidence_doc_ids", record.evidence_doc_ids},
        {"result", result},
    };
    if (record.handler_anomaly) step["handler_anomaly"] = *record.handler_anomaly;
    steps.push_back(std::move(step));
  }

  nlohmann::json j = {
      {"claim_id", trace.claim_id},
      {"program_source", trace.program_source},
      {"steps", steps},
  };
  if (trace.final_label) {
    j["final_label"] = to_string(*trace.final_label);
  } else {
    j["final_label"] = nullptr;
  }
  if (trace.failure) {
    j["failure"] = {
        {"kind", to_string(trace.failure->kind)},
        {"step_index", trace.failure->step_index},
        {"detail", trace.failure->detail},
    };
  } else {
    j["failure"] = nullptr;
  }
  return j.dump();
}

ExecutionTrace trace_from_json(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line);
  ExecutionTrace trace;
  trace.claim_id = j.at("claim_id").get<std::string>();
  trace.program_source = j.at("program_source").get<std::string>();
  for (const auto& step : j.at("steps")) {
    StepRecord record;
    record.step_index = step.at("step_index").get<int>();
    std::string kind = step.at("kind").get<std::string>();
    record.kind = kind == "Question"  ? dsl::StepKind::Question
                  : kind == "Predict" ? dsl::StepKind::Predict
                                      : dsl::StepKind::Verify;
    record.raw_argument = step.at("raw_argument").get<std::string>();
    record.substituted_argument = step.at("substituted_argument").get<std::string>();
    record.evidence_doc_ids = step.at("evidence_doc_ids").get<std::vector<std::string>>();
    const auto& result = step.at("result");
    record.result.name = result.at("name").get<std::string>();
    record.result.origin_step = record.step_index;
    if (result.at("type").get<std::string>() == "bool") {
      record.result.value = result.at("value").get<bool>();
    } else {
      record.result.value = result.at("value").get<std::string>();
    }
    if (step.contains("handler_anomaly")) {
      record.handler_anomaly = step.at("handler_anomaly").get<std::string>();
    }
    trace.step_records.push_back(std::move(record));
  }
  if (!j.at("final_label").is_null()) {
    trace.final_label = veracity_from_string(j.at("final_label").get<std::string>());
  }
  if (!j.at("failure").is_null()) {
    const auto& failure = j.at("failure");
    ExecError error;
    error.kind = exec_error_kind_from_string(failure.at("kind").get<std::string>())
                     .value_or(ExecErrorKind::HandlerFailure);
    error.step_index = failure.at("step_index").get<int>();
    error.detail = failure.at("detail").get<std::string>();
    trace.failure = error;
  }
  return trace;
}

}  // namespace progfc::engine
