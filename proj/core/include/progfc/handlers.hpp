#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "progfc/retrieval.hpp"

// Question/Verify sub-task handlers backed by a completion-style language
// model endpoint, plus a deterministic fixture handler for tests and offline
// runs. Prompt wording per evidence setting:
//
//   Question, closed book:   Q: {QUESTION}? The answer is:
//   Question, gold/open:     {EVIDENCE}\nQ: {QUESTION}? The answer is:
//   Verify, closed book:     Q: Is it true that {CLAIM}? True or False? The answer is:
//   Verify, gold/open:       {EVIDENCE}\nQ: Is it true that {CLAIM}? True or False? The answer is:
//
// Evidence documents are joined by one blank line in the given order.

namespace progfc::handlers {

enum class EvidenceSetting { Gold, OpenBook, ClosedBook };

const char* to_string(EvidenceSetting setting);
std::optional<EvidenceSetting> evidence_setting_from_string(std::string_view text);

/// Default cap on the joined evidence block passed to the model, in bytes.
inline constexpr std::size_t kDefaultEvidenceBudget = 3000;
inline constexpr std::size_t kNoEvidenceBudget = static_cast<std::size_t>(-1);

/// Keeps documents in the given order while the joined block fits the budget;
/// a first document that alone exceeds the budget is hard-truncated.
std::vector<retrieval::EvidenceDoc> truncate_evidence(
    std::span<const retrieval::EvidenceDoc> docs, std::size_t budget_chars);

std::string build_question_prompt(const std::string& question,
                                  std::span<const retrieval::EvidenceDoc> evidence,
                                  EvidenceSetting setting,
                                  std::size_t evidence_budget = kNoEvidenceBudget);

std::string build_verify_prompt(const std::string& claim,
                                std::span<const retrieval::EvidenceDoc> evidence,
                                EvidenceSetting setting,
                                std::size_t evidence_budget = kNoEvidenceBudget);

struct VerifyParse {
  bool verdict = false;
  std::optional<std::string> anomaly;
};

/// Total over arbitrary strings: the first alphabetic token decides
/// (true/yes/supported vs false/no/refuted, case-insensitive); anything else
/// maps to false with an anomaly note.
VerifyParse parse_verify_output(std::string_view text);

/// Scans for the last true/false token instead; used by the chain-of-thought
/// style baselines whose answer trails the reasoning.
VerifyParse parse_final_bool(std::string_view text);

/// Unrecoverable transport/model error, raised after retries are exhausted.
class HandlerFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QuestionResult {
  std::string answer;
  std::optional<std::string> anomaly;
};

struct VerifyResult {
  bool verdict = false;
  std::optional<std::string> anomaly;
};

class SubTaskHandler {
 public:
  virtual ~SubTaskHandler() = default;

  /// Never returns empty text; throws HandlerFailure instead.
  virtual QuestionResult question(const std::string& question,
                                  std::span<const retrieval::EvidenceDoc> evidence) = 0;

  /// Total: any model output maps to a verdict (see parse_verify_output).
  virtual VerifyResult verify(const std::string& claim,
                              std::span<const retrieval::EvidenceDoc> evidence) = 0;

  virtual bool concurrent_safe() const = 0;
};

struct LmEndpointConfig {
  std::string base_url = "http://localhost:8000";
  std::string completion_path = "/v1/completions";
  std::string model_name = "flan-t5-xl";
  int max_new_tokens = 64;
  double temperature = 0.0;
  std::vector<std::string> stop_sequences;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 3;
  // Sleep before retry attempt i is schedule[min(i, size-1)].
  std::vector<std::chrono::milliseconds> retry_backoff{
      std::chrono::milliseconds(500), std::chrono::milliseconds(1000),
      std::chrono::milliseconds(2000)};
  int max_in_flight = 4;  // concurrent request cap
};

/// Completion transport. Wire contract (provider-agnostic):
///   request  {model, prompt, temperature, max_tokens, n, stop}
///   response {choices: [{text}, ...]}
/// Authorization uses PROGFC_API_KEY (falling back to OPENAI_API_KEY) when set.
/// Retries transport errors and 408/429/5xx statuses per the backoff schedule.
class LmClient {
 public:
  explicit LmClient(LmEndpointConfig config);
  ~LmClient();
  LmClient(const LmClient&) = delete;
  LmClient& operator=(const LmClient&) = delete;

  /// Returns exactly n completion texts or throws HandlerFailure.
  std::vector<std::string> complete(const std::string& prompt, int n);
  std::vector<std::string> complete(const std::string& prompt, int n, double temperature,
                                    int max_new_tokens,
                                    const std::vector<std::string>& stop);

  const LmEndpointConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One-shot convenience wrapper over LmClient.
std::vector<std::string> complete(const LmEndpointConfig& config,
                                  const std::string& prompt, int n);

/// HTTP-backed Question/Verify handler. Sub-task calls decode greedily
/// (temperature 0) with short generation limits and a newline stop.
class LmSubTaskHandler : public SubTaskHandler {
 public:
  struct Options {
    EvidenceSetting setting = EvidenceSetting::ClosedBook;
    std::size_t evidence_budget = kDefaultEvidenceBudget;
    int question_max_new_tokens = 64;
    int verify_max_new_tokens = 8;
  };

  LmSubTaskHandler(std::shared_ptr<LmClient> client, Options options);

  QuestionResult question(const std::string& question,
                          std::span<const retrieval::EvidenceDoc> evidence) override;
  VerifyResult verify(const std::string& claim,
                      std::span<const retrieval::EvidenceDoc> evidence) override;
  bool concurrent_safe() const override { return true; }

 private:
  std::shared_ptr<LmClient> client_;
  Options options_;
};

/// Deterministic fixture handler. Keys are normalized (lowercased, whitespace
/// collapsed, trailing punctuation dropped). Unknown questions raise
/// HandlerFailure; unknown claims verify false with an anomaly.
class MockHandler : public SubTaskHandler {
 public:
  MockHandler(std::map<std::string, std::string> questions,
              std::map<std::string, bool> claims);

  static std::string normalize(std::string_view text);

  QuestionResult question(const std::string& question,
                          std::span<const retrieval::EvidenceDoc> evidence) override;
  VerifyResult verify(const std::string& claim,
                      std::span<const retrieval::EvidenceDoc> evidence) override;
  bool concurrent_safe() const override { return true; }

 private:
  std::map<std::string, std::string> questions_;
  std::map<std::string, bool> claims_;
};

}  // namespace progfc::handlers
