#include <unistd.h>

#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "progfc/assets.hpp"
#include "progfc/engine.hpp"
#include "progfc/generation.hpp"
#include "progfc/handlers.hpp"
#include "progfc/harness.hpp"
#include "progfc/iterative.hpp"
#include "progfc/retrieval.hpp"

using namespace progfc;
using nlohmann::json;

namespace {

struct EndpointFlags {
  std::string base_url = "http://localhost:8000";
  std::string completion_path = "/v1/completions";
  std::string model = "flan-t5-xl";
  int max_retries = 3;
  int timeout_ms = 30000;
  int max_in_flight = 4;

  handlers::LmEndpointConfig to_config() const {
    handlers::LmEndpointConfig config;
    config.base_url = base_url;
    config.completion_path = completion_path;
    config.model_name = model;
    config.max_retries = max_retries;
    config.timeout = std::chrono::milliseconds(timeout_ms);
    config.max_in_flight = max_in_flight;
    return config;
  }

  void attach(CLI::App* app, const std::string& prefix) {
    app->add_option("--" + prefix + ".base_url", base_url,
                    "Endpoint origin, e.g. http://localhost:8000");
    app->add_option("--" + prefix + ".completion_path", completion_path,
                    "Path of the completion route");
    app->add_option("--" + prefix + ".model", model, "Model name sent with requests");
    app->add_option("--" + prefix + ".max_retries", max_retries, "Retries after failures");
    app->add_option("--" + prefix + ".timeout_ms", timeout_ms, "Per-request timeout");
    app->add_option("--" + prefix + ".max_in_flight", max_in_flight,
                    "Concurrent request cap");
  }
};

harness::DatasetFormat parse_format(const std::string& text) {
  auto format = harness::dataset_format_from_string(text);
  if (!format) throw CLI::ValidationError("--format", "expected hover or feverous_s");
  return *format;
}

handlers::EvidenceSetting parse_setting(const std::string& text) {
  auto setting = handlers::evidence_setting_from_string(text);
  if (!setting) {
    throw CLI::ValidationError("--setting", "expected gold, open_book or closed_book");
  }
  return *setting;
}

std::vector<ClaimRecord> load_records(const std::string& dataset,
                                      const std::string& format, std::ostream& log) {
  auto loaded = harness::load_dataset(dataset, parse_format(format));
  if (loaded.skipped() > 0) {
    log << "skipped " << loaded.skipped() << " record(s) with out-of-scope labels:";
    for (const auto& [label, count] : loaded.skipped_by_label) {
      log << " " << label << "=" << count;
    }
    log << "\n";
  }
  return std::move(loaded.records);
}

void write_or_print(const std::optional<std::string>& path, const std::string& content) {
  if (path && !path->empty()) {
    std::ofstream os(*path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open output file: " + *path);
    os << content;
    if (content.empty() || content.back() != '\n') os << '\n';
  } else {
    std::cout << content;
    if (content.empty() || content.back() != '\n') std::cout << '\n';
  }
}

generation::ExemplarSet resolve_exemplars(const std::string& name_or_path) {
  if (std::filesystem::exists(name_or_path)) {
    return generation::load_exemplar_set(name_or_path);
  }
  return generation::bundled_exemplar_set(name_or_path);
}

// ProgramGenerator view over a programs.jsonl file (the execute verb).
class StoredProgramGenerator : public generation::ProgramGenerator {
 public:
  explicit StoredProgramGenerator(std::vector<harness::GenerationRecord> records) {
    for (auto& record : records) {
      by_id_.emplace(record.claim_id, std::move(record.samples));
    }
  }

  std::vector<generation::GeneratedSample> generate(const ClaimRecord& claim) override {
    auto it = by_id_.find(claim.claim_id);
    if (it != by_id_.end()) {
      std::vector<generation::GeneratedSample> out;
      for (const auto& sample : it->second) {
        if (sample.transport_error) {
          generation::GeneratedSample copy;
          copy.transport_error = sample.transport_error;
          out.push_back(std::move(copy));
        } else {
          out.push_back(generation::sample_from_completion(sample.program_text));
        }
      }
      return out;
    }
    generation::GeneratedSample missing;
    missing.transport_error = "no generated programs for claim " + claim.claim_id;
    std::vector<generation::GeneratedSample> out;
    out.push_back(std::move(missing));
    return out;
  }

 private:
  std::map<std::string, std::vector<generation::GeneratedSample>> by_id_;
};

// --------------------------------------------------------------------------
// Subcommands

int cmd_index(const std::string& corpus, const std::string& out, double k1, double b) {
  retrieval::JsonlCorpusReader reader(corpus);
  auto index = retrieval::ingest_corpus_to_file(reader, out, {k1, b});
  std::cout << "indexed " << index.doc_count() << " documents, " << index.term_count()
            << " terms, avg_doc_length " << index.avg_doc_length() << "\n"
            << "index written to " << out << "\n";
  return 0;
}

int cmd_generate(const std::string& dataset, const std::string& format,
                 const std::string& exemplars, int n, double temperature,
                 int max_new_tokens, const std::string& out,
                 const std::string& fixture, const EndpointFlags& endpoint) {
  auto records = load_records(dataset, format, std::cerr);

  std::unique_ptr<generation::ProgramGenerator> generator;
  if (!fixture.empty()) {
    auto mock = harness::load_mock_fixture(fixture);
    generator = std::make_unique<generation::FixtureProgramGenerator>(mock.programs, n);
  } else {
    generation::GenerationConfig config;
    config.num_programs = n;
    config.temperature = temperature;
    config.max_new_tokens = max_new_tokens;
    generator = std::make_unique<generation::LmProgramGenerator>(
        std::make_shared<handlers::LmClient>(endpoint.to_config()),
        resolve_exemplars(exemplars), config);
  }

  std::ofstream os(out, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open output file: " + out);
  size_t parsed = 0, failed = 0;
  for (const auto& claim : records) {
    harness::GenerationRecord record;
    record.claim_id = claim.claim_id;
    record.samples = generator->generate(claim);
    for (const auto& sample : record.samples) {
      (sample.ok() ? parsed : failed) += 1;
    }
    os << harness::generation_record_to_json(record) << '\n';
  }
  std::cout << "generated programs for " << records.size() << " claim(s): " << parsed
            << " parsed, " << failed << " failed -> " << out << "\n";
  return 0;
}

struct ExecuteFlags {
  std::string dataset, format = "hover", programs, setting = "closed_book";
  std::string index_path, fixture, traces = "traces.jsonl", predictions = "predictions.jsonl";
  std::string fallback = "direct_verify";
  int per_step_k = 10;
  std::size_t evidence_budget = handlers::kDefaultEvidenceBudget;
  int workers = 1;
  EndpointFlags endpoint;
};

int cmd_execute(const ExecuteFlags& flags) {
  auto records = load_records(flags.dataset, flags.format, std::cerr);

  harness::RunConfig config;
  config.setting = parse_setting(flags.setting);
  config.per_step_k = flags.per_step_k;
  config.evidence_budget = flags.evidence_budget;
  config.fallback = flags.fallback;
  config.workers = flags.workers;
  config.hash_subdir = false;
  // Stage into a scratch directory so pre-existing files never feed the
  // resume logic; the outputs move to the requested paths below.
  std::filesystem::path parent = std::filesystem::path(flags.predictions).parent_path();
  if (parent.empty()) parent = ".";
  config.output_dir = parent / (".progfc_execute_" + std::to_string(::getpid()));

  harness::PipelineParts parts;
  std::optional<retrieval::Bm25Index> index;
  if (!flags.index_path.empty()) {
    index = retrieval::Bm25Index::load(flags.index_path);
    parts.index = &*index;
  }
  parts.generator = std::make_shared<StoredProgramGenerator>(
      harness::read_generation_records(flags.programs));
  if (!flags.fixture.empty()) {
    auto mock = harness::load_mock_fixture(flags.fixture);
    parts.handler = std::make_shared<handlers::MockHandler>(mock.questions, mock.claims);
  } else {
    handlers::LmSubTaskHandler::Options options;
    options.setting = config.setting;
    options.evidence_budget = config.evidence_budget;
    parts.handler = std::make_shared<handlers::LmSubTaskHandler>(
        std::make_shared<handlers::LmClient>(flags.endpoint.to_config()), options);
  }

  auto report = harness::run_pipeline(config, records, parts);
  std::filesystem::rename(report.predictions_path, flags.predictions);
  std::filesystem::rename(report.traces_path, flags.traces);
  std::filesystem::remove_all(config.output_dir);
  std::cout << "executed " << report.claims_processed << " claim(s); predictions -> "
            << flags.predictions << ", traces -> " << flags.traces << "\n";
  return 0;
}

struct RunFlags {
  std::string dataset, format = "hover";
  std::string setting = "closed_book", exemplars = "hover";
  int n = 5;
  double temperature = 0.7;
  int max_new_tokens = 256;
  std::string index_path, fixture, fallback = "direct_verify", prompt_style = "program";
  std::string out_dir = "runs";
  bool no_hash_subdir = false;
  int per_step_k = 10;
  std::size_t evidence_budget = handlers::kDefaultEvidenceBudget;
  std::uint64_t seed = 0;
  int workers = 1;
  EndpointFlags generator_endpoint;
  EndpointFlags handler_endpoint;
};

int cmd_run(const RunFlags& flags) {
  auto records = load_records(flags.dataset, flags.format, std::cerr);

  harness::RunConfig config;
  config.setting = parse_setting(flags.setting);
  config.generation.num_programs = flags.n;
  config.generation.temperature = flags.temperature;
  config.generation.max_new_tokens = flags.max_new_tokens;
  config.exemplar_set = flags.exemplars;
  config.generator_endpoint = flags.generator_endpoint.to_config();
  config.handler_endpoint = flags.handler_endpoint.to_config();
  config.index_path = flags.index_path;
  config.per_step_k = flags.per_step_k;
  config.evidence_budget = flags.evidence_budget;
  config.fallback = flags.fallback;
  auto style = harness::prompt_style_from_string(flags.prompt_style);
  if (!style) {
    throw CLI::ValidationError("--prompt-style",
                               "expected program, direct, cot, zs-cot or self-ask");
  }
  config.prompt_style = *style;
  if (config.prompt_style != harness::PromptStyle::Program &&
      config.setting != handlers::EvidenceSetting::ClosedBook) {
    throw CLI::ValidationError("--prompt-style",
                               "baseline prompt styles run in the closed_book setting");
  }
  if (config.setting == handlers::EvidenceSetting::ClosedBook && !flags.index_path.empty()) {
    std::cerr << "warning: --index is unused in the closed_book setting\n";
    config.index_path.clear();
  }
  config.output_dir = flags.out_dir;
  config.hash_subdir = !flags.no_hash_subdir;
  config.fixture_path = flags.fixture;
  config.seed = flags.seed;
  config.workers = flags.workers;

  auto report = harness::run_pipeline(config, records);
  std::cout << "run directory: " << report.run_dir.string() << "\n"
            << "processed " << report.claims_processed << " claim(s), resumed "
            << report.claims_resumed << "\n"
            << report.metrics_json << "\n";
  return 0;
}

int cmd_eval(const std::string& predictions, const std::optional<std::string>& out) {
  auto report = harness::evaluate_predictions(harness::read_predictions(predictions));
  json j = json::parse(harness::eval_report_to_json(report));
  write_or_print(out, j.dump(2));
  return 0;
}

int cmd_retrieve_eval(const std::string& index_path, const std::string& dataset,
                      const std::string& format, int k, const std::string& mode,
                      const std::string& traces_path,
                      const std::optional<std::string>& out) {
  auto records = load_records(dataset, format, std::cerr);
  auto index = retrieval::Bm25Index::load(index_path);

  std::map<std::string, const engine::ExecutionTrace*> best_trace;
  std::vector<harness::TraceFileRecord> trace_records;
  if (mode == "iterative") {
    if (traces_path.empty()) {
      throw CLI::ValidationError("--traces", "iterative mode needs a traces file");
    }
    trace_records = harness::read_trace_file(traces_path);
    for (const auto& record : trace_records) {
      if (!record.is_trace() || record.trace->failure.has_value()) continue;
      best_trace.emplace(record.claim_id, &*record.trace);  // first success wins
    }
  } else if (mode != "onestep") {
    throw CLI::ValidationError("--mode", "expected onestep or iterative");
  }

  double total = 0.0;
  std::size_t counted = 0, skipped = 0;
  std::map<int, std::pair<double, std::size_t>> per_hop;
  for (const auto& claim : records) {
    if (claim.gold_evidence_ids.empty()) {
      ++skipped;
      continue;
    }
    std::unordered_set<std::string> gold(claim.gold_evidence_ids.begin(),
                                         claim.gold_evidence_ids.end());
    double recall = 0.0;
    if (mode == "onestep") {
      recall = retrieval::recall_at_k(retrieval::one_step_retrieve(index, claim.text, k),
                                      gold, k);
    } else {
      auto it = best_trace.find(claim.claim_id);
      if (it == best_trace.end()) {
        ++skipped;
        continue;
      }
      auto parsed = dsl::parse_program(it->second->program_source);
      if (!parsed.ok()) {
        ++skipped;
        continue;
      }
      auto result = retrieval::iterative_retrieve(
          *parsed.program, engine::env_from_trace(*it->second), index, k, k);
      recall = retrieval::recall_at_k(result.combined, gold, k);
    }
    total += recall;
    ++counted;
    if (claim.hops) {
      per_hop[*claim.hops].first += recall;
      per_hop[*claim.hops].second += 1;
    }
  }

  json j = {
      {"mode", mode},
      {"k", k},
      {"claims", counted},
      {"skipped", skipped},
      {"mean_recall", counted == 0 ? 0.0 : total / static_cast<double>(counted)},
  };
  json hops = json::object();
  for (const auto& [hop, sums] : per_hop) {
    hops[std::to_string(hop)] = sums.second == 0
                                    ? 0.0
                                    : sums.first / static_cast<double>(sums.second);
  }
  j["per_hop"] = hops;
  write_or_print(out, j.dump(2));
  return 0;
}

int cmd_errors(const std::string& traces_path, const std::string& predictions_path,
               const std::string& annotations_path,
               const std::optional<std::string>& out,
               const std::optional<std::string>& annotations_out) {
  auto traces = harness::read_trace_file(traces_path);
  auto predictions = harness::read_predictions(predictions_path);
  std::vector<harness::ErrorAnnotation> annotations;
  if (!annotations_path.empty()) {
    annotations = harness::read_annotations(annotations_path);
  }
  auto breakdown = harness::classify_errors(traces, predictions, annotations);
  write_or_print(out, breakdown.to_table());
  if (annotations_out) {
    std::ofstream os(*annotations_out, std::ios::trunc);
    for (const auto& annotation : breakdown.resolved) {
      os << json{{"claim_id", annotation.claim_id},
                 {"category", harness::to_string(annotation.category)},
                 {"note", annotation.note}}
                .dump()
         << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"progfc: program-guided fact-checking pipeline"};
  app.require_subcommand(1);
  // Usage: progfc --config run.ini run   (keys live in a [run] section)
  app.set_config("--config", "", "INI/TOML-style config; subcommand keys in [<name>] sections");

  // index
  auto* index_cmd = app.add_subcommand("index", "Build a BM25 index from a JSONL corpus");
  std::string corpus, index_out;
  double k1 = 0.9, b = 0.4;
  index_cmd->add_option("--corpus", corpus, "Corpus file: one {id,title,text} per line")
      ->required();
  index_cmd->add_option("--out", index_out, "Index file to write")->required();
  index_cmd->add_option("--k1", k1, "BM25 k1");
  index_cmd->add_option("--b", b, "BM25 b");

  // generate
  auto* generate_cmd =
      app.add_subcommand("generate", "Sample candidate reasoning programs per claim");
  std::string gen_dataset, gen_format = "hover", gen_exemplars = "hover";
  std::string gen_out = "programs.jsonl", gen_fixture;
  int gen_n = 5, gen_max_tokens = 256;
  double gen_temperature = 0.7;
  EndpointFlags gen_endpoint;
  generate_cmd->add_option("--dataset", gen_dataset, "Dataset JSONL file")->required();
  generate_cmd->add_option("--format", gen_format, "hover or feverous_s");
  generate_cmd->add_option("--exemplars", gen_exemplars, "Bundled set name or asset path");
  generate_cmd->add_option("--n", gen_n, "Programs sampled per claim");
  generate_cmd->add_option("--temperature", gen_temperature, "Sampling temperature");
  generate_cmd->add_option("--max-new-tokens", gen_max_tokens, "Generation length cap");
  generate_cmd->add_option("--out", gen_out, "programs.jsonl output path");
  generate_cmd->add_option("--fixture", gen_fixture, "Mock fixture file (offline mode)");
  gen_endpoint.attach(generate_cmd, "endpoint");

  // execute
  auto* execute_cmd =
      app.add_subcommand("execute", "Execute stored programs against a handler");
  ExecuteFlags exec_flags;
  execute_cmd->add_option("--dataset", exec_flags.dataset, "Dataset JSONL file")->required();
  execute_cmd->add_option("--format", exec_flags.format, "hover or feverous_s");
  execute_cmd->add_option("--programs", exec_flags.programs, "programs.jsonl from generate")
      ->required();
  execute_cmd->add_option("--setting", exec_flags.setting,
                          "gold, open_book or closed_book");
  execute_cmd->add_option("--index", exec_flags.index_path, "BM25 index file");
  execute_cmd->add_option("--fixture", exec_flags.fixture, "Mock fixture file");
  execute_cmd->add_option("--traces", exec_flags.traces, "Trace output file");
  execute_cmd->add_option("--predictions", exec_flags.predictions, "Prediction output file");
  execute_cmd->add_option("--fallback", exec_flags.fallback,
                          "direct_verify, fixed_supported or fixed_refuted");
  execute_cmd->add_option("--per-step-k", exec_flags.per_step_k, "Docs retrieved per step");
  execute_cmd->add_option("--evidence-budget", exec_flags.evidence_budget,
                          "Evidence block budget in bytes");
  execute_cmd->add_option("--workers", exec_flags.workers, "Worker pool size");
  exec_flags.endpoint.attach(execute_cmd, "endpoint");

  // run
  auto* run_cmd = app.add_subcommand("run", "End-to-end generate + execute + eval");
  run_cmd->configurable();
  RunFlags run_flags;
  run_cmd->add_option("--dataset", run_flags.dataset, "Dataset JSONL file")->required();
  run_cmd->add_option("--format", run_flags.format, "hover or feverous_s");
  run_cmd->add_option("--setting", run_flags.setting, "gold, open_book or closed_book");
  run_cmd->add_option("--exemplars", run_flags.exemplars, "Bundled set name or asset path");
  run_cmd->add_option("--n", run_flags.n, "Programs sampled per claim");
  run_cmd->add_option("--temperature", run_flags.temperature, "Generation temperature");
  run_cmd->add_option("--max-new-tokens", run_flags.max_new_tokens, "Generation length cap");
  run_cmd->add_option("--index", run_flags.index_path, "BM25 index file");
  run_cmd->add_option("--fixture", run_flags.fixture, "Mock fixture file (offline mode)");
  run_cmd->add_option("--fallback", run_flags.fallback,
                      "direct_verify, fixed_supported or fixed_refuted");
  run_cmd->add_option("--prompt-style", run_flags.prompt_style,
                      "program, direct, cot, zs-cot or self-ask");
  run_cmd->add_option("--out-dir", run_flags.out_dir, "Base output directory");
  run_cmd->add_flag("--no-hash-subdir", run_flags.no_hash_subdir,
                    "Write directly into --out-dir");
  run_cmd->add_option("--per-step-k", run_flags.per_step_k, "Docs retrieved per step");
  run_cmd->add_option("--evidence-budget", run_flags.evidence_budget,
                      "Evidence block budget in bytes");
  run_cmd->add_option("--seed", run_flags.seed, "Recorded in metrics for provenance");
  run_cmd->add_option("--workers", run_flags.workers, "Worker pool size");
  run_flags.generator_endpoint.attach(run_cmd, "generator");
  run_flags.handler_endpoint.attach(run_cmd, "handler");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Metrics from a predictions file");
  std::string eval_predictions;
  std::optional<std::string> eval_out;
  eval_cmd->add_option("--predictions", eval_predictions, "predictions.jsonl")->required();
  eval_cmd->add_option("--out", eval_out, "metrics.json output path (stdout otherwise)");

  // retrieve-eval
  auto* retrieve_cmd =
      app.add_subcommand("retrieve-eval", "recall@k for one-step vs iterative retrieval");
  std::string re_index, re_dataset, re_format = "hover", re_mode = "onestep", re_traces;
  std::optional<std::string> re_out;
  int re_k = 10;
  retrieve_cmd->add_option("--index", re_index, "BM25 index file")->required();
  retrieve_cmd->add_option("--dataset", re_dataset, "Dataset JSONL file")->required();
  retrieve_cmd->add_option("--format", re_format, "hover or feverous_s");
  retrieve_cmd->add_option("--k", re_k, "Cutoff depth");
  retrieve_cmd->add_option("--mode", re_mode, "onestep or iterative");
  retrieve_cmd->add_option("--traces", re_traces, "Trace file (iterative mode)");
  retrieve_cmd->add_option("--out", re_out, "Report output path (stdout otherwise)");

  // errors
  auto* errors_cmd =
      app.add_subcommand("errors", "Error taxonomy breakdown for wrong predictions");
  std::string err_traces, err_predictions, err_annotations;
  std::optional<std::string> err_out, err_annotations_out;
  errors_cmd->add_option("--traces", err_traces, "traces.jsonl")->required();
  errors_cmd->add_option("--predictions", err_predictions, "predictions.jsonl")->required();
  errors_cmd->add_option("--annotations", err_annotations,
                         "Human annotations JSONL: {claim_id, category, note?}");
  errors_cmd->add_option("--out", err_out, "Table output path (stdout otherwise)");
  errors_cmd->add_option("--annotations-out", err_annotations_out,
                         "Write resolved per-claim categories here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (index_cmd->parsed()) return cmd_index(corpus, index_out, k1, b);
    if (generate_cmd->parsed()) {
      return cmd_generate(gen_dataset, gen_format, gen_exemplars, gen_n, gen_temperature,
                          gen_max_tokens, gen_out, gen_fixture, gen_endpoint);
    }
    if (execute_cmd->parsed()) return cmd_execute(exec_flags);
    if (run_cmd->parsed()) return cmd_run(run_flags);
    if (eval_cmd->parsed()) return cmd_eval(eval_predictions, eval_out);
    if (retrieve_cmd->parsed()) {
      return cmd_retrieve_eval(re_index, re_dataset, re_format, re_k, re_mode, re_traces,
                               re_out);
    }
    if (errors_cmd->parsed()) {
      return cmd_errors(err_traces, err_predictions, err_annotations, err_out,
                        err_annotations_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
