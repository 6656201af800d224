#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "progfc/generation.hpp"
#include "progfc/handlers.hpp"
#include "progfc/harness.hpp"

using namespace progfc;
using namespace progfc::handlers;
using retrieval::EvidenceDoc;

namespace {

// In-process completion endpoint for transport tests.
class FakeEndpoint {
 public:
  using Responder = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit FakeEndpoint(Responder responder) : responder_(std::move(responder)) {
    server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits_;
      responder_(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int hits() const { return hits_.load(); }

 private:
  httplib::Server server_;
  Responder responder_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
};

void respond_with_texts(httplib::Response& res, const std::vector<std::string>& texts) {
  nlohmann::json choices = nlohmann::json::array();
  for (const auto& t : texts) choices.push_back({{"text", t}});
  res.set_content(nlohmann::json{{"choices", choices}}.dump(), "application/json");
}

LmEndpointConfig fast_config(const std::string& base_url) {
  LmEndpointConfig config;
  config.base_url = base_url;
  config.max_retries = 3;
  config.retry_backoff = {std::chrono::milliseconds(1)};
  config.timeout = std::chrono::milliseconds(2000);
  return config;
}

}  // namespace

TEST_CASE("truncate_evidence keeps highest-ranked docs within the budget") {
  std::vector<EvidenceDoc> docs = {
      {"a", "", std::string(10, 'a')},
      {"b", "", std::string(10, 'b')},
      {"c", "", std::string(10, 'c')},
  };
  auto all = truncate_evidence(docs, kNoEvidenceBudget);
  CHECK(all.size() == 3);
  // 10 + 2 + 10 = 22 fits, adding c (another 12) would not.
  auto two = truncate_evidence(docs, 25);
  REQUIRE(two.size() == 2);
  CHECK(two[0].doc_id == "a");
  CHECK(two[1].doc_id == "b");
  // A first doc over budget is clipped rather than dropped.
  auto clipped = truncate_evidence(docs, 4);
  REQUIRE(clipped.size() == 1);
  CHECK(clipped[0].text == "aaaa");
  CHECK(truncate_evidence(docs, 0).empty());
}

TEST_CASE("question prompt wording per setting") {
  CHECK(build_question_prompt("Who is the director of the film Interstellar", {},
                              EvidenceSetting::ClosedBook) ==
        "Q: Who is the director of the film Interstellar? The answer is:");

  std::vector<EvidenceDoc> docs = {{"d", "", "E."}};
  CHECK(build_question_prompt("X", docs, EvidenceSetting::Gold) ==
        "E.\nQ: X? The answer is:");

  // A question already ending in '?' is not given a second one.
  CHECK(build_question_prompt("Was Nolan born in Canada?", {}, EvidenceSetting::ClosedBook) ==
        "Q: Was Nolan born in Canada? The answer is:");
  CHECK(build_question_prompt("Really??  ", {}, EvidenceSetting::ClosedBook) ==
        "Q: Really? The answer is:");
}

TEST_CASE("verify prompt wording per setting") {
  std::vector<EvidenceDoc> docs = {{"d", "", "Doc text."}};
  CHECK(build_verify_prompt("James Cameron was born in Canada.", docs, EvidenceSetting::Gold) ==
        "Doc text.\nQ: Is it true that James Cameron was born in Canada? True or False? "
        "The answer is:");
  CHECK(build_verify_prompt("x", {}, EvidenceSetting::ClosedBook) ==
        "Q: Is it true that x? True or False? The answer is:");
}

TEST_CASE("evidence docs join in order with blank lines") {
  std::vector<EvidenceDoc> docs = {{"1", "", "First."}, {"2", "", "Second."}, {"3", "", "Third."}};
  std::string prompt = build_verify_prompt("c", docs, EvidenceSetting::OpenBook);
  CHECK(prompt ==
        "First.\n\nSecond.\n\nThird.\nQ: Is it true that c? True or False? The answer is:");
}

TEST_CASE("parse_verify_output maps the first alphabetic token") {
  CHECK(parse_verify_output(" True.").verdict == true);
  CHECK_FALSE(parse_verify_output(" True.").anomaly.has_value());
  CHECK(parse_verify_output("FALSE, because…").verdict == false);
  CHECK_FALSE(parse_verify_output("FALSE, because…").anomaly.has_value());
  CHECK(parse_verify_output("yes").verdict == true);
  CHECK(parse_verify_output("No way").verdict == false);
  CHECK(parse_verify_output("Supported").verdict == true);
  CHECK(parse_verify_output("refuted!").verdict == false);

  auto unclear = parse_verify_output("Unclear.");
  CHECK(unclear.verdict == false);
  CHECK(unclear.anomaly == "unparseable verify output");
  CHECK(parse_verify_output("").anomaly.has_value());
  CHECK(parse_verify_output("123 ???").anomaly.has_value());
}

TEST_CASE("parse_final_bool scans for the last verdict token") {
  CHECK(parse_final_bool("Nolan was born in London. Therefore, the answer is: False.").verdict ==
        false);
  CHECK(parse_final_bool("False premise, but the final answer is true").verdict == true);
  CHECK(parse_final_bool("no verdict here at all").verdict == false);
  CHECK_FALSE(parse_final_bool("no verdict here at all").anomaly.has_value());  // "no" counts
  CHECK(parse_final_bool("hmm").anomaly.has_value());
}

TEST_CASE("mock handler answers from the fixture") {
  MockHandler handler({{"Who directed Interstellar?", "Christopher Nolan"}},
                      {{"Nolan was born in Canada.", false}});
  CHECK(handler.question("who directed interstellar", {}).answer == "Christopher Nolan");
  CHECK(handler.question("  WHO  directed   Interstellar?? ", {}).answer == "Christopher Nolan");
  CHECK_THROWS_AS(handler.question("unknown question", {}), HandlerFailure);

  CHECK(handler.verify("Nolan was born in Canada", {}).verdict == false);
  auto unknown = handler.verify("something else", {});
  CHECK(unknown.verdict == false);
  CHECK(unknown.anomaly == "unknown claim in fixture");
  CHECK(handler.concurrent_safe());
}

TEST_CASE("complete returns n texts and forwards request fields") {
  nlohmann::json seen;
  FakeEndpoint endpoint([&](const httplib::Request& req, httplib::Response& res) {
    seen = nlohmann::json::parse(req.body);
    respond_with_texts(res, {"alpha", "beta"});
  });
  LmEndpointConfig config = fast_config(endpoint.base_url());
  config.model_name = "test-model";
  LmClient client(config);
  auto texts = client.complete("some prompt", 2, 0.7, 256, {"\n# The claim", "\n\n\n"});
  REQUIRE(texts.size() == 2);
  CHECK(texts[0] == "alpha");
  CHECK(texts[1] == "beta");
  CHECK(seen["model"] == "test-model");
  CHECK(seen["prompt"] == "some prompt");
  CHECK(seen["temperature"] == doctest::Approx(0.7));
  CHECK(seen["max_tokens"] == 256);
  CHECK(seen["n"] == 2);
  CHECK(seen["stop"][0] == "\n# The claim");
}

TEST_CASE("complete retries rate limits per the schedule") {
  std::atomic<int> remaining_failures{2};
  FakeEndpoint endpoint([&](const httplib::Request&, httplib::Response& res) {
    if (remaining_failures.fetch_sub(1) > 0) {
      res.status = 429;
      return;
    }
    respond_with_texts(res, {"ok"});
  });
  LmClient client(fast_config(endpoint.base_url()));
  auto texts = client.complete("p", 1);
  REQUIRE(texts.size() == 1);
  CHECK(texts[0] == "ok");
  CHECK(endpoint.hits() == 3);  // 2 failures + 1 success
}

TEST_CASE("complete performs at most max_retries+1 attempts") {
  FakeEndpoint endpoint([](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
  });
  LmEndpointConfig config = fast_config(endpoint.base_url());
  config.max_retries = 1;
  LmClient client(config);
  CHECK_THROWS_AS(client.complete("p", 1), HandlerFailure);
  CHECK(endpoint.hits() == 2);
}

TEST_CASE("complete fails fast on a non-retryable status") {
  FakeEndpoint endpoint([](const httplib::Request&, httplib::Response& res) {
    res.status = 400;
  });
  LmClient client(fast_config(endpoint.base_url()));
  CHECK_THROWS_AS(client.complete("p", 1), HandlerFailure);
  CHECK(endpoint.hits() == 1);
}

TEST_CASE("complete surfaces transport failure when the endpoint is down") {
  LmEndpointConfig config;
  config.base_url = "http://127.0.0.1:1";  // nothing listens here
  config.max_retries = 1;
  config.retry_backoff = {std::chrono::milliseconds(1)};
  config.timeout = std::chrono::milliseconds(200);
  CHECK_THROWS_AS(complete(config, "p", 1), HandlerFailure);
}

TEST_CASE("http handler builds sub-task prompts and parses answers") {
  std::vector<std::string> prompts;
  FakeEndpoint endpoint([&](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    prompts.push_back(body["prompt"].get<std::string>());
    if (prompts.back().find("Is it true that") != std::string::npos) {
      respond_with_texts(res, {" FALSE"});
    } else {
      respond_with_texts(res, {" Christopher Nolan\n"});
    }
  });
  auto client = std::make_shared<LmClient>(fast_config(endpoint.base_url()));
  LmSubTaskHandler handler(client, {EvidenceSetting::Gold, kDefaultEvidenceBudget, 64, 8});

  std::vector<EvidenceDoc> docs = {{"d", "", "Interstellar is a 2014 film."}};
  auto answer = handler.question("Who is the director of the film Interstellar?", docs);
  CHECK(answer.answer == "Christopher Nolan");
  CHECK(prompts.back() ==
        "Interstellar is a 2014 film.\nQ: Who is the director of the film Interstellar? "
        "The answer is:");

  auto verdict = handler.verify("Christopher Nolan was born in Canada.", docs);
  CHECK(verdict.verdict == false);
  CHECK_FALSE(verdict.anomaly.has_value());
  CHECK(handler.concurrent_safe());
}

TEST_CASE("http handler treats an empty answer as a failure") {
  FakeEndpoint endpoint([](const httplib::Request&, httplib::Response& res) {
    respond_with_texts(res, {"   \n"});
  });
  auto client = std::make_shared<LmClient>(fast_config(endpoint.base_url()));
  LmSubTaskHandler handler(client, {});
  CHECK_THROWS_AS(handler.question("Q", {}), HandlerFailure);
}

TEST_CASE("pipeline output is identical with the http handler and an equivalent mock") {
  // The endpoint answers the two sub-task prompts this program produces.
  FakeEndpoint endpoint([](const httplib::Request& req, httplib::Response& res) {
    auto prompt = nlohmann::json::parse(req.body)["prompt"].get<std::string>();
    if (prompt.find("Is it true that Christopher Nolan was born in London") !=
        std::string::npos) {
      respond_with_texts(res, {" True"});
    } else if (prompt.find("Who directed Interstellar") != std::string::npos) {
      respond_with_texts(res, {" Christopher Nolan"});
    } else {
      respond_with_texts(res, {" False"});
    }
  });

  std::vector<ClaimRecord> dataset(1);
  dataset[0].claim_id = "c1";
  dataset[0].text = "The director of Interstellar was born in London.";
  dataset[0].gold_label = VeracityLabel::Supported;

  auto generator = std::make_shared<generation::FixtureProgramGenerator>(
      std::map<std::string, std::vector<std::string>>{
          {"c1",
           {"answer_1 = Question(\"Who directed Interstellar?\")\n"
            "fact_1 = Verify(\"{answer_1} was born in London.\")\n"
            "label = Predict(fact_1)"}}},
      3);

  auto run_with = [&](std::shared_ptr<SubTaskHandler> handler, const std::string& tag) {
    harness::RunConfig config;
    config.output_dir = std::filesystem::temp_directory_path() / ("progfc_subst_" + tag);
    std::filesystem::remove_all(config.output_dir);
    config.generation.num_programs = 3;
    harness::PipelineParts parts;
    parts.generator = generator;
    parts.handler = std::move(handler);
    auto report = harness::run_pipeline(config, dataset, parts);
    std::ifstream is(report.predictions_path);
    std::ostringstream os;
    os << is.rdbuf();
    std::filesystem::remove_all(config.output_dir);
    return os.str();
  };

  auto client = std::make_shared<LmClient>(fast_config(endpoint.base_url()));
  std::string with_http = run_with(
      std::make_shared<LmSubTaskHandler>(client, LmSubTaskHandler::Options{}), "http");
  std::string with_mock = run_with(
      std::make_shared<MockHandler>(
          std::map<std::string, std::string>{{"Who directed Interstellar?",
                                              "Christopher Nolan"}},
          std::map<std::string, bool>{
              {"Christopher Nolan was born in London.", true},
              {"The director of Interstellar was born in London.", true}}),
      "mock");
  CHECK(with_http == with_mock);
  CHECK(with_http.find("\"predicted\":\"Supported\"") != std::string::npos);
}
