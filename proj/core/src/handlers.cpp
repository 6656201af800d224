#include "progfc/handlers.hpp"

#include <algorithm>
#include <cctype>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace progfc::handlers {

namespace {

std::string rstrip(std::string_view s, std::string_view chars = " \t\r\n") {
  size_t end = s.find_last_not_of(chars);
  if (end == std::string_view::npos) return "";
  return std::string(s.substr(0, end + 1));
}

std::string strip(std::string_view s) {
  size_t begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return "";
  size_t end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

// Drops trailing sentence punctuation so templates can append their own.
std::string strip_terminal_punct(std::string_view s) {
  std::string out = rstrip(s);
  while (!out.empty() && (out.back() == '.' || out.back() == '?' || out.back() == '!')) {
    out.pop_back();
    out = rstrip(out);
  }
  return out;
}

std::string evidence_block(std::span<const retrieval::EvidenceDoc> evidence,
                           std::size_t budget) {
  auto kept = truncate_evidence(evidence, budget);
  std::string block;
  for (size_t i = 0; i < kept.size(); ++i) {
    if (i) block += "\n\n";
    block += kept[i].text;
  }
  return block;
}

}  // namespace

const char* to_string(EvidenceSetting setting) {
  switch (setting) {
    case EvidenceSetting::Gold: return "gold";
    case EvidenceSetting::OpenBook: return "open_book";
    case EvidenceSetting::ClosedBook: return "closed_book";
  }
  return "closed_book";
}

std::optional<EvidenceSetting> evidence_setting_from_string(std::string_view text) {
  if (text == "gold") return EvidenceSetting::Gold;
  if (text == "open_book") return EvidenceSetting::OpenBook;
  if (text == "closed_book") return EvidenceSetting::ClosedBook;
  return std::nullopt;
}

std::vector<retrieval::EvidenceDoc> truncate_evidence(
    std::span<const retrieval::EvidenceDoc> docs, std::size_t budget_chars) {
  std::vector<retrieval::EvidenceDoc> kept;
  std::size_t used = 0;
  for (const auto& doc : docs) {
    std::size_t cost = doc.text.size() + (kept.empty() ? 0 : 2);  // "\n\n" separator
    if (used + cost > budget_chars) {
      if (kept.empty() && budget_chars > 0) {
        retrieval::EvidenceDoc clipped = doc;
        clipped.text = clipped.text.substr(0, budget_chars);
        kept.push_back(std::move(clipped));
      }
      break;
    }
    kept.push_back(doc);
    used += cost;
  }
  return kept;
}

std::string build_question_prompt(const std::string& question,
                                  std::span<const retrieval::EvidenceDoc> evidence,
                                  EvidenceSetting setting,
                                  std::size_t evidence_budget) {
  std::string q = rstrip(question);
  while (!q.empty() && q.back() == '?') {
    q.pop_back();
    q = rstrip(q);
  }
  std::string tail = "Q: " + q + "? The answer is:";
  if (setting == EvidenceSetting::ClosedBook) return tail;
  std::string block = evidence_block(evidence, evidence_budget);
  if (block.empty()) return tail;
  return block + "\n" + tail;
}

std::string build_verify_prompt(const std::string& claim,
                                std::span<const retrieval::EvidenceDoc> evidence,
                                EvidenceSetting setting,
                                std::size_t evidence_budget) {
  std::string c = strip_terminal_punct(claim);
  std::string tail = "Q: Is it true that " + c + "? True or False? The answer is:";
  if (setting == EvidenceSetting::ClosedBook) return tail;
  std::string block = evidence_block(evidence, evidence_budget);
  if (block.empty()) return tail;
  return block + "\n" + tail;
}

namespace {

std::optional<bool> token_verdict(const std::string& token) {
  if (token == "true" || token == "yes" || token == "supported") return true;
  if (token == "false" || token == "no" || token == "refuted") return false;
  return std::nullopt;
}

}  // namespace

VerifyParse parse_verify_output(std::string_view text) {
  size_t i = 0;
  while (i < text.size() && !std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
  if (i < text.size()) {
    size_t start = i;
    while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
    std::string token(text.substr(start, i - start));
    std::transform(token.begin(), token.end(), token.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (auto verdict = token_verdict(token)) return {*verdict, std::nullopt};
  }
  return {false, "unparseable verify output"};
}

VerifyParse parse_final_bool(std::string_view text) {
  std::optional<bool> last;
  size_t i = 0;
  while (i < text.size()) {
    if (!std::isalpha(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    size_t start = i;
    while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
    std::string token(text.substr(start, i - start));
    std::transform(token.begin(), token.end(), token.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (auto verdict = token_verdict(token)) last = verdict;
  }
  if (last) return {*last, std::nullopt};
  return {false, "unparseable verify output"};
}

// ---------------------------------------------------------------------------
// Completion transport

namespace {

// (origin, path_prefix) from e.g. "https://api.example.com/v1".
std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
  size_t scheme = base_url.find("://");
  size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
  size_t slash = base_url.find('/', host_start);
  if (slash == std::string::npos) return {base_url, ""};
  return {base_url.substr(0, slash), rstrip(base_url.substr(slash), "/")};
}

class InFlightLimiter {
 public:
  explicit InFlightLimiter(int limit) : available_(limit > 0 ? limit : 1) {}

  void acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return available_ > 0; });
    --available_;
  }

  void release() {
    {
      std::lock_guard lock(mutex_);
      ++available_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  int available_;
};

struct InFlightGuard {
  InFlightLimiter& limiter;
  explicit InFlightGuard(InFlightLimiter& l) : limiter(l) { limiter.acquire(); }
  ~InFlightGuard() { limiter.release(); }
};

bool retryable_status(int status) {
  return status == 408 || status == 429 || (status >= 500 && status < 600);
}

}  // namespace

struct LmClient::Impl {
  LmEndpointConfig config;
  std::string origin;
  std::string path;
  std::string api_key;
  InFlightLimiter limiter;

  explicit Impl(LmEndpointConfig cfg)
      : config(std::move(cfg)), limiter(config.max_in_flight) {
    auto [o, prefix] = split_base_url(config.base_url);
    origin = o;
    path = prefix + config.completion_path;
    if (const char* key = std::getenv("PROGFC_API_KEY")) {
      api_key = key;
    } else if (const char* fallback = std::getenv("OPENAI_API_KEY")) {
      api_key = fallback;
    }
  }
};

LmClient::LmClient(LmEndpointConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}

LmClient::~LmClient() = default;

const LmEndpointConfig& LmClient::config() const { return impl_->config; }

std::vector<std::string> LmClient::complete(const std::string& prompt, int n) {
  return complete(prompt, n, impl_->config.temperature, impl_->config.max_new_tokens,
                  impl_->config.stop_sequences);
}

std::vector<std::string> LmClient::complete(const std::string& prompt, int n,
                                            double temperature, int max_new_tokens,
                                            const std::vector<std::string>& stop) {
  if (n < 1) throw HandlerFailure("completion sample count must be >= 1");
  InFlightGuard guard(impl_->limiter);

  nlohmann::json request = {
      {"model", impl_->config.model_name},
      {"prompt", prompt},
      {"temperature", temperature},
      {"max_tokens", max_new_tokens},
      {"n", n},
  };
  if (!stop.empty()) request["stop"] = stop;
  const std::string body = request.dump();

  std::string last_error;
  const int attempts = impl_->config.max_retries + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      const auto& schedule = impl_->config.retry_backoff;
      if (!schedule.empty()) {
        size_t slot = std::min<size_t>(static_cast<size_t>(attempt - 1), schedule.size() - 1);
        std::this_thread::sleep_for(schedule[slot]);
      }
    }

    httplib::Client client(impl_->origin);
    client.set_connection_timeout(
        std::chrono::duration_cast<std::chrono::seconds>(impl_->config.timeout));
    client.set_read_timeout(impl_->config.timeout);
    client.set_write_timeout(impl_->config.timeout);
    httplib::Headers headers;
    if (!impl_->api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + impl_->api_key);
    }

    auto res = client.Post(impl_->path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      if (retryable_status(res->status)) continue;
      throw HandlerFailure("completion request failed: " + last_error);
    }

    nlohmann::json response = nlohmann::json::parse(res->body, nullptr, false);
    if (response.is_discarded() || !response.contains("choices") ||
        !response["choices"].is_array()) {
      throw HandlerFailure("malformed completion response body");
    }
    std::vector<std::string> texts;
    for (const auto& choice : response["choices"]) {
      if (!choice.contains("text") || !choice["text"].is_string()) {
        throw HandlerFailure("completion choice missing 'text' field");
      }
      texts.push_back(choice["text"].get<std::string>());
    }
    if (static_cast<int>(texts.size()) != n) {
      throw HandlerFailure("endpoint returned " + std::to_string(texts.size()) +
                           " choices, expected " + std::to_string(n));
    }
    return texts;
  }
  throw HandlerFailure("completion request failed after " + std::to_string(attempts) +
                       " attempts; last error: " + last_error);
}

std::vector<std::string> complete(const LmEndpointConfig& config,
                                  const std::string& prompt, int n) {
  LmClient client(config);
  return client.complete(prompt, n);
}

// ---------------------------------------------------------------------------
// HTTP-backed handler

LmSubTaskHandler::LmSubTaskHandler(std::shared_ptr<LmClient> client, Options options)
    : client_(std::move(client)), options_(options) {}

QuestionResult LmSubTaskHandler::question(
    const std::string& question, std::span<const retrieval::EvidenceDoc> evidence) {
  std::string prompt = build_question_prompt(question, evidence, options_.setting,
                                             options_.evidence_budget);
  auto texts = client_->complete(prompt, 1, 0.0, options_.question_max_new_tokens, {"\n"});
  std::string answer = strip(texts[0]);
  if (answer.empty()) throw HandlerFailure("model returned an empty answer");
  return {answer, std::nullopt};
}

VerifyResult LmSubTaskHandler::verify(const std::string& claim,
                                      std::span<const retrieval::EvidenceDoc> evidence) {
  std::string prompt =
      build_verify_prompt(claim, evidence, options_.setting, options_.evidence_budget);
  auto texts = client_->complete(prompt, 1, 0.0, options_.verify_max_new_tokens, {"\n"});
  VerifyParse parsed = parse_verify_output(texts[0]);
  return {parsed.verdict, parsed.anomaly};
}

// ---------------------------------------------------------------------------
// Fixture handler

MockHandler::MockHandler(std::map<std::string, std::string> questions,
                         std::map<std::string, bool> claims) {
  for (auto& [q, a] : questions) questions_[normalize(q)] = a;
  for (auto& [c, v] : claims) claims_[normalize(c)] = v;
}

std::string MockHandler::normalize(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  while (!out.empty() &&
         (out.back() == '.' || out.back() == '?' || out.back() == '!' || out.back() == ' ')) {
    out.pop_back();
  }
  return out;
}

QuestionResult MockHandler::question(const std::string& question,
                                     std::span<const retrieval::EvidenceDoc>) {
  auto it = questions_.find(normalize(question));
  if (it == questions_.end()) {
    throw HandlerFailure("mock handler has no answer for question: " + question);
  }
  return {it->second, std::nullopt};
}

VerifyResult MockHandler::verify(const std::string& claim,
                                 std::span<const retrieval::EvidenceDoc>) {
  auto it = claims_.find(normalize(claim));
  if (it == claims_.end()) {
    return {false, "unknown claim in fixture"};
  }
  return {it->second, std::nullopt};
}

}  // namespace progfc::handlers
