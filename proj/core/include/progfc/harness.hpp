#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "progfc/claim.hpp"
#include "progfc/engine.hpp"
#include "progfc/generation.hpp"
#include "progfc/handlers.hpp"
#include "progfc/retrieval.hpp"

// End-to-end evaluation harness: loads HOVER/FEVEROUS-S-format datasets,
// orchestrates generate -> execute -> aggregate per evidence setting, scores
// macro-F1, and supports the error-annotation workflow. All data files are
// line-delimited JSON.

namespace progfc::harness {

enum class DatasetFormat { Hover, FeverousS };

const char* to_string(DatasetFormat format);
std::optional<DatasetFormat> dataset_format_from_string(std::string_view text);

struct LoadResult {
  std::vector<ClaimRecord> records;
  std::map<std::string, std::size_t> skipped_by_label;  // rows outside the two classes

  std::size_t skipped() const {
    std::size_t n = 0;
    for (const auto& [_, count] : skipped_by_label) n += count;
    return n;
  }
};

/// HOVER rows: {uid|id, claim, label: SUPPORTED|NOT_SUPPORTED, num_hops,
/// evidence_ids?|supporting_facts?}. FEVEROUS-S rows: {id, claim,
/// label: SUPPORTS|REFUTES, evidence_ids?}. Rows with any other label are
/// skipped and counted; malformed lines raise with their line number.
LoadResult load_dataset(const std::filesystem::path& path, DatasetFormat format);

// ---------------------------------------------------------------------------
// Metrics

struct MacroF1Report {
  double macro_f1 = 0.0;
  double f1_supported = 0.0;
  double f1_refuted = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
  bool supported_absent = false;  // class missing from both preds and golds
  bool refuted_absent = false;
};

/// Unweighted mean of per-class F1 over {Supported, Refuted}; a class absent
/// from both vectors contributes 0 and is flagged. Throws on length mismatch
/// or empty input.
MacroF1Report macro_f1(const std::vector<VeracityLabel>& preds,
                       const std::vector<VeracityLabel>& golds);

// ---------------------------------------------------------------------------
// Predictions and trace files

struct Prediction {
  std::string claim_id;
  VeracityLabel predicted = VeracityLabel::Refuted;
  std::optional<VeracityLabel> gold;
  std::optional<int> hops;
  int n_supported = 0;  // votes from successful program runs
  int n_refuted = 0;
  int n_failed = 0;
  bool used_fallback = false;
};

std::string prediction_to_json(const Prediction& prediction);
Prediction prediction_from_json(const std::string& line);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

/// One line per (claim, program sample): either a full execution trace or,
/// for samples that never executed, a parse/transport failure record carrying
/// the diagnostics.
struct TraceFileRecord {
  std::optional<engine::ExecutionTrace> trace;
  std::string claim_id;
  std::string program_source;
  std::vector<dsl::ParseDiagnostic> diagnostics;
  std::optional<std::string> transport_error;

  bool is_trace() const { return trace.has_value(); }
};

std::string parse_failure_to_json(const std::string& claim_id,
                                  const std::string& program_source,
                                  const std::vector<dsl::ParseDiagnostic>& diagnostics,
                                  const std::optional<std::string>& transport_error);
TraceFileRecord trace_record_from_json(const std::string& line);
std::vector<TraceFileRecord> read_trace_file(const std::filesystem::path& path);

/// programs.jsonl rows: {claim_id, samples: [{text, parse_ok, diagnostics?,
/// transport_error?}]}.
struct GenerationRecord {
  std::string claim_id;
  std::vector<generation::GeneratedSample> samples;
};

std::string generation_record_to_json(const GenerationRecord& record);
GenerationRecord generation_record_from_json(const std::string& line);
std::vector<GenerationRecord> read_generation_records(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Run configuration

enum class PromptStyle { Program, Direct, Cot, ZsCot, SelfAsk };

const char* to_string(PromptStyle style);
std::optional<PromptStyle> prompt_style_from_string(std::string_view text);

struct RunConfig {
  handlers::EvidenceSetting setting = handlers::EvidenceSetting::ClosedBook;
  generation::GenerationConfig generation;
  std::string exemplar_set = "hover";  // bundled name or a file path
  handlers::LmEndpointConfig generator_endpoint;
  handlers::LmEndpointConfig handler_endpoint;
  std::filesystem::path index_path;  // open-book retrieval / gold doc store
  int per_step_k = 10;
  std::size_t evidence_budget = handlers::kDefaultEvidenceBudget;
  std::string fallback = "direct_verify";  // or fixed_supported / fixed_refuted
  PromptStyle prompt_style = PromptStyle::Program;
  std::filesystem::path output_dir = "runs";
  bool hash_subdir = true;  // write into output_dir/run-<config-hash>/
  std::filesystem::path fixture_path;  // offline mode: mock fixture JSON
  std::uint64_t seed = 0;
  int workers = 1;
};

/// 16 hex digits over the canonical config serialization; reruns with the
/// same config land in the same directory.
std::string config_hash(const RunConfig& config);
std::string config_to_json(const RunConfig& config);

/// Fixture file: {"questions": {q: answer}, "claims": {claim: bool},
/// "programs": {claim_id: [program_text, ...]}}.
struct MockFixture {
  std::map<std::string, std::string> questions;
  std::map<std::string, bool> claims;
  std::map<std::string, std::vector<std::string>> programs;
};

MockFixture load_mock_fixture(const std::filesystem::path& path);

/// Injection seam: the pipeline pieces a run needs. Built from RunConfig by
/// default (endpoints or fixture), overridable in tests.
struct PipelineParts {
  std::shared_ptr<generation::ProgramGenerator> generator;
  std::shared_ptr<handlers::SubTaskHandler> handler;
  const retrieval::Bm25Index* index = nullptr;
  std::function<VeracityLabel(const ClaimRecord&)> baseline;  // non-Program styles
};

struct RunReport {
  std::filesystem::path run_dir;
  std::filesystem::path predictions_path;
  std::filesystem::path traces_path;
  std::filesystem::path metrics_path;
  std::size_t claims_processed = 0;
  std::size_t claims_resumed = 0;  // already present in predictions.jsonl
  std::string metrics_json;
};

/// Processes every dataset claim not already present in predictions.jsonl
/// (resumable), writing one prediction line per claim and one trace line per
/// (claim, program). Output order follows the dataset; per-claim errors are
/// recorded, never fatal. Claims run on a bounded worker pool; writes are
/// serialized in dataset order so identical runs produce identical bytes.
RunReport run_pipeline(const RunConfig& config, const std::vector<ClaimRecord>& dataset,
                       PipelineParts parts);

/// Convenience overload wiring parts from the config (fixture or endpoints).
RunReport run_pipeline(const RunConfig& config, const std::vector<ClaimRecord>& dataset);

// ---------------------------------------------------------------------------
// Evaluation over prediction files

struct EvalReport {
  MacroF1Report overall;
  std::map<int, MacroF1Report> per_hop;  // HOVER breakdown
  std::size_t missing_gold = 0;
};

EvalReport evaluate_predictions(const std::vector<Prediction>& predictions);
std::string eval_report_to_json(const EvalReport& report);

// ---------------------------------------------------------------------------
// Error-annotation workflow

enum class ErrorCategory {
  Syntax,
  SemanticToken,
  SemanticStructure,
  SemanticSubtask,
  IncorrectExecution,
};

const char* to_string(ErrorCategory category);
std::optional<ErrorCategory> error_category_from_string(std::string_view text);

struct ErrorAnnotation {
  std::string claim_id;
  ErrorCategory category = ErrorCategory::IncorrectExecution;
  std::string note;
};

std::vector<ErrorAnnotation> read_annotations(const std::filesystem::path& path);

struct ErrorBreakdown {
  // hop -> category -> count over incorrectly predicted claims (hop 0 when unknown)
  std::map<int, std::map<ErrorCategory, std::size_t>> counts;
  std::map<int, std::size_t> totals;
  std::vector<ErrorAnnotation> resolved;    // per-claim categories (auto + human)
  std::vector<std::string> unresolved;      // wrong claims needing human annotation

  std::string to_table() const;  // percentage breakdown per hop
};

/// Auto-fills syntax/semantic categories from the diagnostics stored in the
/// trace file; claims whose programs all parsed need the human annotation
/// file to be tagged incorrect_execution. Throws when an annotation
/// references an unknown claim id.
ErrorBreakdown classify_errors(const std::vector<TraceFileRecord>& traces,
                               const std::vector<Prediction>& predictions,
                               const std::vector<ErrorAnnotation>& annotations);

}  // namespace progfc::harness
