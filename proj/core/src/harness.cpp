#include "progfc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "progfc/assets.hpp"
#include "progfc/iterative.hpp"

namespace progfc::harness {

using nlohmann::json;

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

json parse_json_line(const std::string& line, const std::filesystem::path& path,
                     std::size_t number) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw std::runtime_error(path.string() + ":" + std::to_string(number) +
                             ": malformed JSON line");
  }
  return j;
}

std::string id_field(const json& j, const char* key) {
  if (!j.contains(key)) return "";
  if (j[key].is_string()) return j[key].get<std::string>();
  if (j[key].is_number_integer()) return std::to_string(j[key].get<std::int64_t>());
  return "";
}

}  // namespace

const char* to_string(DatasetFormat format) {
  return format == DatasetFormat::Hover ? "hover" : "feverous_s";
}

std::optional<DatasetFormat> dataset_format_from_string(std::string_view text) {
  if (text == "hover") return DatasetFormat::Hover;
  if (text == "feverous_s" || text == "feverous-s" || text == "feverous") {
    return DatasetFormat::FeverousS;
  }
  return std::nullopt;
}

LoadResult load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open dataset file: " + path.string());

  LoadResult result;
  std::string line;
  std::size_t number = 0;
  while (std::getline(is, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j = parse_json_line(line, path, number);

    ClaimRecord record;
    record.claim_id = id_field(j, "uid");
    if (record.claim_id.empty()) record.claim_id = id_field(j, "id");
    if (record.claim_id.empty()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(number) +
                               ": missing 'uid'/'id' field");
    }
    if (!j.contains("claim") || !j["claim"].is_string()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(number) +
                               ": missing 'claim' field");
    }
    record.text = j["claim"].get<std::string>();
    if (!j.contains("label") || !j["label"].is_string()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(number) +
                               ": missing 'label' field");
    }
    std::string label = j["label"].get<std::string>();
    std::optional<VeracityLabel> mapped;
    if (format == DatasetFormat::Hover) {
      if (label == "SUPPORTED") mapped = VeracityLabel::Supported;
      if (label == "NOT_SUPPORTED") mapped = VeracityLabel::Refuted;
    } else {
      if (label == "SUPPORTS") mapped = VeracityLabel::Supported;
      if (label == "REFUTES") mapped = VeracityLabel::Refuted;
    }
    if (!mapped) {
      ++result.skipped_by_label[label];
      continue;
    }
    record.gold_label = mapped;

    if (format == DatasetFormat::Hover && j.contains("num_hops") &&
        j["num_hops"].is_number_integer()) {
      record.hops = j["num_hops"].get<int>();
    }

    if (j.contains("evidence_ids") && j["evidence_ids"].is_array()) {
      for (const auto& id : j["evidence_ids"]) {
        if (id.is_string()) record.gold_evidence_ids.push_back(id.get<std::string>());
      }
    } else if (j.contains("supporting_facts") && j["supporting_facts"].is_array()) {
      for (const auto& fact : j["supporting_facts"]) {
        if (fact.is_array() && !fact.empty() && fact[0].is_string()) {
          std::string title = fact[0].get<std::string>();
          auto& ids = record.gold_evidence_ids;
          if (std::find(ids.begin(), ids.end(), title) == ids.end()) {
            ids.push_back(title);
          }
        }
      }
    }
    result.records.push_back(std::move(record));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Metrics

MacroF1Report macro_f1(const std::vector<VeracityLabel>& preds,
                       const std::vector<VeracityLabel>& golds) {
  if (preds.size() != golds.size()) {
    throw std::invalid_argument("macro_f1: prediction/gold length mismatch");
  }
  if (preds.empty()) throw std::invalid_argument("macro_f1: empty input");

  auto class_f1 = [&](VeracityLabel positive, bool& absent) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
      bool predicted = preds[i] == positive;
      bool actual = golds[i] == positive;
      if (predicted && actual) ++tp;
      if (predicted && !actual) ++fp;
      if (!predicted && actual) ++fn;
    }
    absent = (tp + fp + fn) == 0;
    if (absent) return 0.0;  // class absent from both sides, by convention
    double denom = static_cast<double>(2 * tp + fp + fn);
    if (denom == 0.0) return 0.0;
    return 2.0 * static_cast<double>(tp) / denom;
  };

  MacroF1Report report;
  report.count = preds.size();
  report.f1_supported = class_f1(VeracityLabel::Supported, report.supported_absent);
  report.f1_refuted = class_f1(VeracityLabel::Refuted, report.refuted_absent);
  report.macro_f1 = (report.f1_supported + report.f1_refuted) / 2.0;
  std::size_t correct = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == golds[i]) ++correct;
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
  return report;
}

// ---------------------------------------------------------------------------
// Predictions

std::string prediction_to_json(const Prediction& p) {
  json j = {
      {"claim_id", p.claim_id},
      {"predicted", to_string(p.predicted)},
      {"votes",
       {{"supported", p.n_supported}, {"refuted", p.n_refuted}, {"failed", p.n_failed}}},
      {"used_fallback", p.used_fallback},
  };
  if (p.gold) j["gold"] = to_string(*p.gold);
  if (p.hops) j["hops"] = *p.hops;
  return j.dump();
}

Prediction prediction_from_json(const std::string& line) {
  json j = json::parse(line);
  Prediction p;
  p.claim_id = j.at("claim_id").get<std::string>();
  p.predicted =
      veracity_from_string(j.at("predicted").get<std::string>()).value_or(VeracityLabel::Refuted);
  if (j.contains("gold")) p.gold = veracity_from_string(j["gold"].get<std::string>());
  if (j.contains("hops")) p.hops = j["hops"].get<int>();
  if (j.contains("votes")) {
    p.n_supported = j["votes"].value("supported", 0);
    p.n_refuted = j["votes"].value("refuted", 0);
    p.n_failed = j["votes"].value("failed", 0);
  }
  p.used_fallback = j.value("used_fallback", false);
  return p;
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::vector<Prediction> out;
  for (const auto& line : read_lines(path)) out.push_back(prediction_from_json(line));
  return out;
}

// ---------------------------------------------------------------------------
// Trace file records

namespace {

json diagnostic_to_json(const dsl::ParseDiagnostic& d) {
  json j = {
      {"severity", d.severity == dsl::Severity::SyntaxError ? "syntax_error" : "semantic_error"},
      {"line", d.line},
      {"column", d.column},
      {"message", d.message},
  };
  if (d.sub_kind) {
    switch (*d.sub_kind) {
      case dsl::SemanticKind::Token: j["sub_kind"] = "token"; break;
      case dsl::SemanticKind::Structure: j["sub_kind"] = "structure"; break;
      case dsl::SemanticKind::Subtask: j["sub_kind"] = "subtask"; break;
    }
  }
  return j;
}

dsl::ParseDiagnostic diagnostic_from_json(const json& j) {
  dsl::ParseDiagnostic d;
  d.severity = j.at("severity").get<std::string>() == "syntax_error"
                   ? dsl::Severity::SyntaxError
                   : dsl::Severity::SemanticError;
  if (j.contains("sub_kind")) {
    std::string kind = j["sub_kind"].get<std::string>();
    if (kind == "token") d.sub_kind = dsl::SemanticKind::Token;
    if (kind == "structure") d.sub_kind = dsl::SemanticKind::Structure;
    if (kind == "subtask") d.sub_kind = dsl::SemanticKind::Subtask;
  }
  d.line = j.value("line", 1);
  d.column = j.value("column", 1);
  d.message = j.value("message", "");
  return d;
}

}  // namespace

std::string parse_failure_to_json(const std::string& claim_id,
                                  const std::string& program_source,
                                  const std::vector<dsl::ParseDiagnostic>& diagnostics,
                                  const std::optional<std::string>& transport_error) {
  json diags = json::array();
  for (const auto& d : diagnostics) diags.push_back(diagnostic_to_json(d));
  json j = {
      {"claim_id", claim_id},
      {"program_source", program_source},
      {"diagnostics", diags},
  };
  if (transport_error) j["transport_error"] = *transport_error;
  return j.dump();
}

TraceFileRecord trace_record_from_json(const std::string& line) {
  json j = json::parse(line);
  TraceFileRecord record;
  if (j.contains("diagnostics")) {
    record.claim_id = j.at("claim_id").get<std::string>();
    record.program_source = j.value("program_source", "");
    for (const auto& d : j["diagnostics"]) {
      record.diagnostics.push_back(diagnostic_from_json(d));
    }
    if (j.contains("transport_error")) {
      record.transport_error = j["transport_error"].get<std::string>();
    }
    return record;
  }
  record.trace = engine::trace_from_json(line);
  record.claim_id = record.trace->claim_id;
  record.program_source = record.trace->program_source;
  return record;
}

std::vector<TraceFileRecord> read_trace_file(const std::filesystem::path& path) {
  std::vector<TraceFileRecord> out;
  for (const auto& line : read_lines(path)) out.push_back(trace_record_from_json(line));
  return out;
}

// ---------------------------------------------------------------------------
// Generation records

std::string generation_record_to_json(const GenerationRecord& record) {
  json samples = json::array();
  for (const auto& sample : record.samples) {
    json s = {
        {"text", sample.program_text},
        {"parse_ok", sample.ok()},
    };
    if (!sample.diagnostics.empty()) {
      json diags = json::array();
      for (const auto& d : sample.diagnostics) diags.push_back(diagnostic_to_json(d));
      s["diagnostics"] = diags;
    }
    if (sample.transport_error) s["transport_error"] = *sample.transport_error;
    samples.push_back(std::move(s));
  }
  return json{{"claim_id", record.claim_id}, {"samples", samples}}.dump();
}

GenerationRecord generation_record_from_json(const std::string& line) {
  json j = json::parse(line);
  GenerationRecord record;
  record.claim_id = j.at("claim_id").get<std::string>();
  for (const auto& s : j.at("samples")) {
    std::string text = s.value("text", "");
    generation::GeneratedSample sample;
    if (s.contains("transport_error")) {
      sample.transport_error = s["transport_error"].get<std::string>();
    } else {
      sample = generation::sample_from_completion(text);
      // Preserve the stored text verbatim; extraction already happened once.
      sample.program_text = text;
    }
    record.samples.push_back(std::move(sample));
  }
  return record;
}

std::vector<GenerationRecord> read_generation_records(const std::filesystem::path& path) {
  std::vector<GenerationRecord> out;
  for (const auto& line : read_lines(path)) out.push_back(generation_record_from_json(line));
  return out;
}

// ---------------------------------------------------------------------------
// Run configuration

const char* to_string(PromptStyle style) {
  switch (style) {
    case PromptStyle::Program: return "program";
    case PromptStyle::Direct: return "direct";
    case PromptStyle::Cot: return "cot";
    case PromptStyle::ZsCot: return "zs-cot";
    case PromptStyle::SelfAsk: return "self-ask";
  }
  return "program";
}

std::optional<PromptStyle> prompt_style_from_string(std::string_view text) {
  if (text == "program") return PromptStyle::Program;
  if (text == "direct") return PromptStyle::Direct;
  if (text == "cot") return PromptStyle::Cot;
  if (text == "zs-cot" || text == "zs_cot") return PromptStyle::ZsCot;
  if (text == "self-ask" || text == "self_ask") return PromptStyle::SelfAsk;
  return std::nullopt;
}

std::string config_to_json(const RunConfig& config) {
  json j = {
      {"setting", handlers::to_string(config.setting)},
      {"generation",
       {{"num_programs", config.generation.num_programs},
        {"temperature", config.generation.temperature},
        {"max_new_tokens", config.generation.max_new_tokens},
        {"stop_sequences", config.generation.stop_sequences}}},
      {"exemplar_set", config.exemplar_set},
      {"generator_endpoint",
       {{"base_url", config.generator_endpoint.base_url},
        {"model", config.generator_endpoint.model_name}}},
      {"handler_endpoint",
       {{"base_url", config.handler_endpoint.base_url},
        {"model", config.handler_endpoint.model_name}}},
      {"index_path", config.index_path.string()},
      {"per_step_k", config.per_step_k},
      {"evidence_budget", config.evidence_budget},
      {"fallback", config.fallback},
      {"prompt_style", to_string(config.prompt_style)},
      {"fixture_path", config.fixture_path.string()},
      {"seed", config.seed},
  };
  return j.dump();
}

std::string config_hash(const RunConfig& config) {
  std::string canonical = config_to_json(config);
  std::uint64_t hash = 1469598103934665603ull;  // FNV-1a 64
  for (unsigned char c : canonical) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(hash));
  return buffer;
}

MockFixture load_mock_fixture(const std::filesystem::path& path) {
  json j = json::parse(assets::read_file(path));
  MockFixture fixture;
  if (j.contains("questions")) {
    for (auto& [q, a] : j["questions"].items()) fixture.questions[q] = a.get<std::string>();
  }
  if (j.contains("claims")) {
    for (auto& [c, v] : j["claims"].items()) fixture.claims[c] = v.get<bool>();
  }
  if (j.contains("programs")) {
    for (auto& [id, list] : j["programs"].items()) {
      for (const auto& text : list) {
        fixture.programs[id].push_back(text.get<std::string>());
      }
    }
  }
  return fixture;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

// Serializes handler access when the inner handler is not concurrent-safe.
class SerializedHandler : public handlers::SubTaskHandler {
 public:
  explicit SerializedHandler(std::shared_ptr<handlers::SubTaskHandler> inner)
      : inner_(std::move(inner)) {}

  handlers::QuestionResult question(const std::string& q,
                                    std::span<const retrieval::EvidenceDoc> e) override {
    std::lock_guard lock(mutex_);
    return inner_->question(q, e);
  }
  handlers::VerifyResult verify(const std::string& c,
                                std::span<const retrieval::EvidenceDoc> e) override {
    std::lock_guard lock(mutex_);
    return inner_->verify(c, e);
  }
  bool concurrent_safe() const override { return true; }

 private:
  std::shared_ptr<handlers::SubTaskHandler> inner_;
  std::mutex mutex_;
};

struct ClaimOutcome {
  std::vector<std::string> trace_lines;
  Prediction prediction;
};

engine::ExecSettings settings_for_claim(const RunConfig& config,
                                        const PipelineParts& parts,
                                        const ClaimRecord& claim) {
  engine::ExecSettings settings;
  settings.setting = config.setting;
  settings.per_step_k = config.per_step_k;
  settings.evidence_budget = config.evidence_budget;
  settings.index = parts.index;
  if (config.setting == handlers::EvidenceSetting::Gold) {
    for (const auto& id : claim.gold_evidence_ids) {
      if (parts.index != nullptr) {
        if (auto doc = parts.index->doc_by_id(id)) {
          settings.gold_docs.push_back(std::move(*doc));
        }
      }
    }
  }
  return settings;
}

std::unique_ptr<engine::FallbackPolicy> make_fallback(const RunConfig& config,
                                                      const PipelineParts& parts,
                                                      const engine::ExecSettings& settings) {
  if (config.fallback == "fixed_supported") {
    return std::make_unique<engine::FixedLabelFallback>(VeracityLabel::Supported);
  }
  if (config.fallback == "fixed_refuted") {
    return std::make_unique<engine::FixedLabelFallback>(VeracityLabel::Refuted);
  }
  return std::make_unique<engine::DirectVerifyFallback>(*parts.handler, settings);
}

ClaimOutcome process_claim(const RunConfig& config, const PipelineParts& parts,
                           const ClaimRecord& claim) {
  ClaimOutcome outcome;
  outcome.prediction.claim_id = claim.claim_id;
  outcome.prediction.gold = claim.gold_label;
  outcome.prediction.hops = claim.hops;

  if (config.prompt_style != PromptStyle::Program) {
    outcome.prediction.predicted = parts.baseline(claim);
    outcome.prediction.n_supported =
        outcome.prediction.predicted == VeracityLabel::Supported ? 1 : 0;
    outcome.prediction.n_refuted = 1 - outcome.prediction.n_supported;
    return outcome;
  }

  engine::ExecSettings settings = settings_for_claim(config, parts, claim);
  auto samples = parts.generator->generate(claim);
  std::vector<std::optional<VeracityLabel>> verdicts;
  for (const auto& sample : samples) {
    if (!sample.ok()) {
      verdicts.push_back(std::nullopt);
      outcome.trace_lines.push_back(parse_failure_to_json(
          claim.claim_id,
          sample.program_text.empty() ? sample.completion_text : sample.program_text,
          sample.diagnostics, sample.transport_error));
      continue;
    }
    engine::ExecutionTrace trace =
        engine::execute(*sample.program, *parts.handler, claim, settings);
    verdicts.push_back(trace.final_label);
    outcome.trace_lines.push_back(engine::trace_to_json(trace));
  }

  auto fallback = make_fallback(config, parts, settings);
  outcome.prediction.predicted = engine::aggregate(verdicts, claim, *fallback);
  for (const auto& verdict : verdicts) {
    if (!verdict) {
      ++outcome.prediction.n_failed;
    } else if (*verdict == VeracityLabel::Supported) {
      ++outcome.prediction.n_supported;
    } else {
      ++outcome.prediction.n_refuted;
    }
  }
  outcome.prediction.used_fallback =
      outcome.prediction.n_supported == outcome.prediction.n_refuted;
  return outcome;
}

}  // namespace

RunReport run_pipeline(const RunConfig& config, const std::vector<ClaimRecord>& dataset,
                       PipelineParts parts) {
  if (config.prompt_style == PromptStyle::Program) {
    if (!parts.generator || !parts.handler) {
      throw std::invalid_argument("run_pipeline: generator and handler are required");
    }
  } else if (!parts.baseline) {
    throw std::invalid_argument("run_pipeline: baseline function is required");
  }
  if (config.setting == handlers::EvidenceSetting::OpenBook && parts.index == nullptr) {
    throw std::invalid_argument("open_book runs require an index");
  }
  if (config.setting == handlers::EvidenceSetting::Gold) {
    if (parts.index == nullptr) {
      throw std::invalid_argument("gold runs resolve evidence ids through an index");
    }
    for (const auto& claim : dataset) {
      if (claim.gold_evidence_ids.empty()) {
        throw std::invalid_argument("gold runs need gold_evidence_ids on every record; claim " +
                                    claim.claim_id + " has none");
      }
    }
  }

  if (parts.handler && !parts.handler->concurrent_safe() && config.workers > 1) {
    parts.handler = std::make_shared<SerializedHandler>(parts.handler);
  }

  RunReport report;
  report.run_dir = config.hash_subdir
                       ? config.output_dir / ("run-" + config_hash(config))
                       : config.output_dir;
  std::filesystem::create_directories(report.run_dir);
  report.predictions_path = report.run_dir / "predictions.jsonl";
  report.traces_path = report.run_dir / "traces.jsonl";
  report.metrics_path = report.run_dir / "metrics.json";

  // Resume: claims already predicted are skipped.
  std::unordered_set<std::string> done;
  if (std::filesystem::exists(report.predictions_path)) {
    for (const auto& prediction : read_predictions(report.predictions_path)) {
      done.insert(prediction.claim_id);
    }
  }

  std::vector<const ClaimRecord*> pending;
  for (const auto& claim : dataset) {
    if (done.count(claim.claim_id)) {
      ++report.claims_resumed;
    } else {
      pending.push_back(&claim);
    }
  }

  std::ofstream predictions_out(report.predictions_path, std::ios::app);
  std::ofstream traces_out(report.traces_path, std::ios::app);
  if (!predictions_out || !traces_out) {
    throw std::runtime_error("cannot open run outputs under " + report.run_dir.string());
  }

  const int workers = std::max(1, config.workers);
  if (workers == 1) {
    for (const ClaimRecord* claim : pending) {
      ClaimOutcome outcome = process_claim(config, parts, *claim);
      for (const auto& line : outcome.trace_lines) traces_out << line << '\n';
      predictions_out << prediction_to_json(outcome.prediction) << '\n';
      ++report.claims_processed;
    }
  } else {
    // Bounded pool; results are buffered and written in dataset order.
    std::mutex mutex;
    std::condition_variable cv;
    std::map<std::size_t, ClaimOutcome> ready;
    std::atomic<std::size_t> next_task{0};

    auto worker = [&] {
      while (true) {
        std::size_t task = next_task.fetch_add(1);
        if (task >= pending.size()) return;
        ClaimOutcome outcome = process_claim(config, parts, *pending[task]);
        {
          std::lock_guard lock(mutex);
          ready.emplace(task, std::move(outcome));
        }
        cv.notify_one();
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);

    for (std::size_t index = 0; index < pending.size(); ++index) {
      std::unique_lock lock(mutex);
      cv.wait(lock, [&] { return ready.count(index) > 0; });
      ClaimOutcome outcome = std::move(ready.at(index));
      ready.erase(index);
      lock.unlock();
      for (const auto& line : outcome.trace_lines) traces_out << line << '\n';
      predictions_out << prediction_to_json(outcome.prediction) << '\n';
      ++report.claims_processed;
    }
    for (auto& thread : pool) thread.join();
  }
  predictions_out.close();
  traces_out.close();

  // Metrics over the full prediction file (resumed + new).
  EvalReport eval = evaluate_predictions(read_predictions(report.predictions_path));
  json metrics = json::parse(eval_report_to_json(eval));
  metrics["config_hash"] = config_hash(config);
  metrics["setting"] = handlers::to_string(config.setting);
  metrics["prompt_style"] = to_string(config.prompt_style);
  metrics["num_programs"] = config.generation.num_programs;
  metrics["seed"] = config.seed;
  report.metrics_json = metrics.dump(2);
  std::ofstream metrics_out(report.metrics_path, std::ios::trunc);
  metrics_out << report.metrics_json << '\n';
  return report;
}

RunReport run_pipeline(const RunConfig& config, const std::vector<ClaimRecord>& dataset) {
  PipelineParts parts;

  // The index outlives the run via a shared holder captured where needed.
  auto index_holder = std::make_shared<std::optional<retrieval::Bm25Index>>();
  if (!config.index_path.empty()) {
    index_holder->emplace(retrieval::Bm25Index::load(config.index_path));
    parts.index = &index_holder->value();
  }

  if (!config.fixture_path.empty()) {
    MockFixture fixture = load_mock_fixture(config.fixture_path);
    parts.handler =
        std::make_shared<handlers::MockHandler>(fixture.questions, fixture.claims);
    parts.generator = std::make_shared<generation::FixtureProgramGenerator>(
        fixture.programs, config.generation.num_programs);
    auto mock = std::make_shared<handlers::MockHandler>(fixture.questions, fixture.claims);
    parts.baseline = [mock, index_holder](const ClaimRecord& claim) {
      return label_from_bool(mock->verify(claim.text, {}).verdict);
    };
  } else {
    auto generator_client =
        std::make_shared<handlers::LmClient>(config.generator_endpoint);
    auto handler_client = std::make_shared<handlers::LmClient>(config.handler_endpoint);

    generation::ExemplarSet set;
    if (std::filesystem::exists(config.exemplar_set)) {
      set = generation::load_exemplar_set(config.exemplar_set);
    } else {
      set = generation::bundled_exemplar_set(config.exemplar_set);
    }
    parts.generator = std::make_shared<generation::LmProgramGenerator>(
        generator_client, std::move(set), config.generation);

    handlers::LmSubTaskHandler::Options options;
    options.setting = config.setting;
    options.evidence_budget = config.evidence_budget;
    parts.handler = std::make_shared<handlers::LmSubTaskHandler>(handler_client, options);

    PromptStyle style = config.prompt_style;
    parts.baseline = [handler_client, style, index_holder](const ClaimRecord& claim) {
      std::string template_text;
      switch (style) {
        case PromptStyle::Direct: template_text = assets::load_prompt_template("direct"); break;
        case PromptStyle::Cot: template_text = assets::load_prompt_template("cot"); break;
        case PromptStyle::ZsCot: template_text = assets::load_prompt_template("zs_cot"); break;
        case PromptStyle::SelfAsk:
          template_text = assets::load_prompt_template("self_ask");
          break;
        case PromptStyle::Program: return VeracityLabel::Refuted;  // unreachable
      }
      std::string prompt = assets::render_claim_template(template_text, claim.text);
      int max_tokens = (style == PromptStyle::Direct || style == PromptStyle::ZsCot) ? 16 : 256;
      try {
        auto texts = handler_client->complete(prompt, 1, 0.0, max_tokens, {"\n\n"});
        return label_from_bool(handlers::parse_final_bool(texts[0]).verdict);
      } catch (const handlers::HandlerFailure&) {
        return VeracityLabel::Refuted;
      }
    };
  }

  return run_pipeline(config, dataset, parts);
}

// ---------------------------------------------------------------------------
// Evaluation

EvalReport evaluate_predictions(const std::vector<Prediction>& predictions) {
  EvalReport report;
  std::vector<VeracityLabel> preds, golds;
  std::map<int, std::pair<std::vector<VeracityLabel>, std::vector<VeracityLabel>>> per_hop;
  for (const auto& p : predictions) {
    if (!p.gold) {
      ++report.missing_gold;
      continue;
    }
    preds.push_back(p.predicted);
    golds.push_back(*p.gold);
    if (p.hops) {
      per_hop[*p.hops].first.push_back(p.predicted);
      per_hop[*p.hops].second.push_back(*p.gold);
    }
  }
  if (!preds.empty()) report.overall = macro_f1(preds, golds);
  for (auto& [hops, vectors] : per_hop) {
    report.per_hop[hops] = macro_f1(vectors.first, vectors.second);
  }
  return report;
}

namespace {

json report_to_json(const MacroF1Report& report) {
  return {
      {"macro_f1", report.macro_f1},
      {"f1_supported", report.f1_supported},
      {"f1_refuted", report.f1_refuted},
      {"accuracy", report.accuracy},
      {"count", report.count},
      {"supported_absent", report.supported_absent},
      {"refuted_absent", report.refuted_absent},
  };
}

}  // namespace

std::string eval_report_to_json(const EvalReport& report) {
  json j = {
      {"overall", report_to_json(report.overall)},
      {"missing_gold", report.missing_gold},
  };
  json per_hop = json::object();
  for (const auto& [hops, metrics] : report.per_hop) {
    per_hop[std::to_string(hops)] = report_to_json(metrics);
  }
  j["per_hop"] = per_hop;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Error-annotation workflow

const char* to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::Syntax: return "syntax";
    case ErrorCategory::SemanticToken: return "semantic_token";
    case ErrorCategory::SemanticStructure: return "semantic_structure";
    case ErrorCategory::SemanticSubtask: return "semantic_subtask";
    case ErrorCategory::IncorrectExecution: return "incorrect_execution";
  }
  return "incorrect_execution";
}

std::optional<ErrorCategory> error_category_from_string(std::string_view text) {
  if (text == "syntax") return ErrorCategory::Syntax;
  if (text == "semantic_token") return ErrorCategory::SemanticToken;
  if (text == "semantic_structure") return ErrorCategory::SemanticStructure;
  if (text == "semantic_subtask") return ErrorCategory::SemanticSubtask;
  if (text == "incorrect_execution") return ErrorCategory::IncorrectExecution;
  return std::nullopt;
}

std::vector<ErrorAnnotation> read_annotations(const std::filesystem::path& path) {
  std::vector<ErrorAnnotation> out;
  std::size_t number = 0;
  for (const auto& line : read_lines(path)) {
    ++number;
    json j = parse_json_line(line, path, number);
    ErrorAnnotation annotation;
    annotation.claim_id = j.at("claim_id").get<std::string>();
    auto category = error_category_from_string(j.at("category").get<std::string>());
    if (!category) {
      throw std::runtime_error(path.string() + ":" + std::to_string(number) +
                               ": unknown category '" + j["category"].get<std::string>() + "'");
    }
    annotation.category = *category;
    annotation.note = j.value("note", "");
    out.push_back(std::move(annotation));
  }
  return out;
}

ErrorBreakdown classify_errors(const std::vector<TraceFileRecord>& traces,
                               const std::vector<Prediction>& predictions,
                               const std::vector<ErrorAnnotation>& annotations) {
  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : predictions) by_id[p.claim_id] = &p;

  std::map<std::string, ErrorAnnotation> human;
  for (const auto& annotation : annotations) {
    if (!by_id.count(annotation.claim_id)) {
      throw std::runtime_error("annotation references unknown claim_id: " +
                               annotation.claim_id);
    }
    human[annotation.claim_id] = annotation;
  }

  std::map<std::string, std::vector<const TraceFileRecord*>> by_claim;
  for (const auto& record : traces) by_claim[record.claim_id].push_back(&record);

  ErrorBreakdown breakdown;
  for (const auto& p : predictions) {
    if (!p.gold || p.predicted == *p.gold) continue;
    int hop = p.hops.value_or(0);

    // Diagnostics auto-fill the syntax/semantic categories; priority follows
    // severity (syntax, then structure, token, subtask).
    bool syntax = false, structure = false, token = false, subtask = false;
    auto it = by_claim.find(p.claim_id);
    if (it != by_claim.end()) {
      for (const TraceFileRecord* record : it->second) {
        for (const auto& d : record->diagnostics) {
          if (d.severity == dsl::Severity::SyntaxError) syntax = true;
          if (d.sub_kind == dsl::SemanticKind::Structure) structure = true;
          if (d.sub_kind == dsl::SemanticKind::Token) token = true;
          if (d.sub_kind == dsl::SemanticKind::Subtask) subtask = true;
        }
      }
    }

    std::optional<ErrorCategory> category;
    std::string note;
    if (syntax) {
      category = ErrorCategory::Syntax;
    } else if (structure) {
      category = ErrorCategory::SemanticStructure;
    } else if (token) {
      category = ErrorCategory::SemanticToken;
    } else if (subtask) {
      category = ErrorCategory::SemanticSubtask;
    } else if (auto annotated = human.find(p.claim_id); annotated != human.end()) {
      category = annotated->second.category;
      note = annotated->second.note;
    }

    if (!category) {
      breakdown.unresolved.push_back(p.claim_id);
      continue;
    }
    ++breakdown.counts[hop][*category];
    ++breakdown.totals[hop];
    breakdown.resolved.push_back({p.claim_id, *category, note});
  }
  return breakdown;
}

std::string ErrorBreakdown::to_table() const {
  static constexpr ErrorCategory kOrder[] = {
      ErrorCategory::Syntax, ErrorCategory::SemanticToken, ErrorCategory::SemanticStructure,
      ErrorCategory::SemanticSubtask, ErrorCategory::IncorrectExecution};

  std::ostringstream os;
  os << "category";
  for (const auto& [hop, _] : totals) {
    if (hop == 0) {
      os << "\tall";
    } else {
      os << '\t' << hop << "-hop";
    }
  }
  os << '\n';
  for (ErrorCategory category : kOrder) {
    os << to_string(category);
    for (const auto& [hop, total] : totals) {
      std::size_t count = 0;
      auto hop_it = counts.find(hop);
      if (hop_it != counts.end()) {
        auto cat_it = hop_it->second.find(category);
        if (cat_it != hop_it->second.end()) count = cat_it->second;
      }
      double pct = total == 0 ? 0.0 : 100.0 * static_cast<double>(count) /
                                          static_cast<double>(total);
      char cell[32];
      std::snprintf(cell, sizeof(cell), "%.1f%%", pct);
      os << '\t' << cell;
    }
    os << '\n';
  }
  if (!unresolved.empty()) {
    os << "# " << unresolved.size()
       << " incorrectly-predicted claim(s) await human annotation\n";
  }
  return os.str();
}

}  // namespace progfc::harness
