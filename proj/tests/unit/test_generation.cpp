#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "progfc/assets.hpp"
#include "progfc/generation.hpp"

using namespace progfc;
using namespace progfc::generation;

namespace {

const char* kFigure2Completion =
    "\n    fact_1 = Verify(\"James Cameron was born in Canada.\")\n"
    "    Answer_1 = Question(\"Who is the director of the film Interstellar?\")\n"
    "    fact_2 = Verify(\"{Answer_1} was born in Canada.\")\n"
    "    label = Predict(fact_1 and fact_2)\n"
    "\n# The claim is that something else entirely.\n";

class FakeCompletionServer {
 public:
  explicit FakeCompletionServer(std::function<std::vector<std::string>(int)> texts_for_n)
      : texts_for_n_(std::move(texts_for_n)) {
    server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      auto body = nlohmann::json::parse(req.body);
      last_prompt = body["prompt"].get<std::string>();
      last_temperature = body["temperature"].get<double>();
      int n = body["n"].get<int>();
      nlohmann::json choices = nlohmann::json::array();
      for (const auto& text : texts_for_n_(n)) choices.push_back({{"text", text}});
      res.set_content(nlohmann::json{{"choices", choices}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~FakeCompletionServer() {
    server_.stop();
    thread_.join();
  }

  handlers::LmEndpointConfig config() const {
    handlers::LmEndpointConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port_);
    cfg.max_retries = 0;
    return cfg;
  }

  std::string last_prompt;
  double last_temperature = -1.0;

 private:
  httplib::Server server_;
  std::function<std::vector<std::string>(int)> texts_for_n_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST_CASE("bundled hover set: 20 exemplars, all parse and round-trip") {
  auto set = bundled_exemplar_set("hover");
  CHECK(set.name == "hover");
  CHECK(set.exemplars.size() == 20);
  CHECK(set.instruction.rfind("'''Generate a python-like program", 0) == 0);
  for (const auto& exemplar : set.exemplars) {
    auto parsed = dsl::parse_program(exemplar.program_text);
    REQUIRE_MESSAGE(parsed.ok(), exemplar.claim);
    auto reparsed = dsl::parse_program(dsl::render_program(*parsed.program));
    REQUIRE(reparsed.ok());
    CHECK(dsl::structurally_equal(*parsed.program, *reparsed.program));
  }
}

TEST_CASE("bundled feverous set: the 12 published exemplars parse") {
  auto set = bundled_exemplar_set("feverous");
  CHECK(set.exemplars.size() == 12);
  for (const auto& exemplar : set.exemplars) {
    auto parsed = dsl::parse_program(exemplar.program_text);
    REQUIRE_MESSAGE(parsed.ok(), exemplar.claim);
  }
  // The published listing repeats one claim with a different decomposition;
  // it is bundled verbatim.
  int cornejo = 0;
  for (const auto& exemplar : set.exemplars) {
    if (exemplar.claim.find("Alfredo Cornejo Cuevas") != std::string::npos) ++cornejo;
  }
  CHECK(cornejo == 2);
}

TEST_CASE("generation prompt layout") {
  ExemplarSet set;
  set.name = "tiny";
  set.instruction = "'''Do the thing.'''";
  set.exemplars.push_back(
      {"A and B.", "fact_1 = Verify(\"A.\")\nfact_2 = Verify(\"B.\")\nlabel = Predict(fact_1 and fact_2)"});

  std::string prompt = build_generation_prompt(set, "C and D.");
  CHECK(prompt ==
        "'''Do the thing.'''\n"
        "\n"
        "# The claim is that A and B.\n"
        "def program():\n"
        "    fact_1 = Verify(\"A.\")\n"
        "    fact_2 = Verify(\"B.\")\n"
        "    label = Predict(fact_1 and fact_2)\n"
        "\n"
        "# The claim is that C and D.\n"
        "def program():");

  // Degenerate composition: instruction + final claim block only.
  ExemplarSet empty;
  empty.instruction = "'''I.'''";
  CHECK(build_generation_prompt(empty, "X.") ==
        "'''I.'''\n\n# The claim is that X.\ndef program():");

  // Deterministic: identical inputs give byte-identical prompts.
  CHECK(build_generation_prompt(set, "C and D.") == prompt);
}

TEST_CASE("exemplar asset parsing rejects malformed files") {
  CHECK_THROWS(parse_exemplar_asset("CLAIM: x\nPROGRAM:\nlabel = Predict(f)\n", "bad"));
  CHECK_THROWS(parse_exemplar_asset("INSTRUCTION:\nhi\n", "empty"));
  CHECK_THROWS(parse_exemplar_asset(
      "INSTRUCTION:\nhi\n---\nCLAIM: c\nPROGRAM:\nnot a program\n", "unparsable"));
  CHECK_THROWS(parse_exemplar_asset("INSTRUCTION:\nhi\n---\nWRONG: c\n", "wrongkey"));
}

TEST_CASE("sample_from_completion extracts and parses") {
  auto good = sample_from_completion(kFigure2Completion);
  REQUIRE(good.ok());
  CHECK(good.program->steps.size() == 4);
  CHECK(good.diagnostics.empty());

  auto malformed = sample_from_completion("\n    fact_1 = Verify(\"x.\"\n");
  CHECK_FALSE(malformed.ok());
  CHECK_FALSE(malformed.diagnostics.empty());

  auto blank = sample_from_completion("   \n\n");
  CHECK_FALSE(blank.ok());
  REQUIRE(blank.diagnostics.size() == 1);
  CHECK(blank.diagnostics[0].message == "no assignment line found in completion");
}

TEST_CASE("generate_programs keeps sample order and duplicates") {
  FakeCompletionServer server([](int n) {
    return std::vector<std::string>(static_cast<size_t>(n), kFigure2Completion);
  });
  handlers::LmClient client(server.config());
  ExemplarSet set;
  set.instruction = "'''I.'''";
  set.exemplars.push_back({"A.", "fact_1 = Verify(\"A.\")\nlabel = Predict(fact_1)"});
  GenerationConfig config;
  config.num_programs = 3;

  auto samples = generate_programs(config, client, set, "The claim.");
  REQUIRE(samples.size() == 3);
  for (const auto& sample : samples) {
    REQUIRE(sample.ok());
    CHECK(sample.program->steps.size() == 4);
  }
  CHECK(server.last_temperature == doctest::Approx(0.7));
  CHECK(server.last_prompt.rfind("def program():") == server.last_prompt.size() - 14);
  CHECK(server.last_prompt.find("# The claim is that The claim.") != std::string::npos);
}

TEST_CASE("generate_programs keeps parse failures as diagnostics") {
  FakeCompletionServer server([](int) {
    return std::vector<std::string>{kFigure2Completion, "\n    broken = Verify(\"x\"\n"};
  });
  handlers::LmClient client(server.config());
  ExemplarSet set;
  set.instruction = "'''I.'''";
  set.exemplars.push_back({"A.", "fact_1 = Verify(\"A.\")\nlabel = Predict(fact_1)"});
  GenerationConfig config;
  config.num_programs = 2;

  auto samples = generate_programs(config, client, set, "claim");
  REQUIRE(samples.size() == 2);
  CHECK(samples[0].ok());
  CHECK_FALSE(samples[1].ok());
  CHECK_FALSE(samples[1].diagnostics.empty());
}

TEST_CASE("a fully failed batch yields N transport-error entries") {
  handlers::LmEndpointConfig config;
  config.base_url = "http://127.0.0.1:1";
  config.max_retries = 0;
  config.timeout = std::chrono::milliseconds(200);
  handlers::LmClient client(config);
  ExemplarSet set;
  set.instruction = "'''I.'''";
  set.exemplars.push_back({"A.", "fact_1 = Verify(\"A.\")\nlabel = Predict(fact_1)"});
  GenerationConfig gen;
  gen.num_programs = 4;

  auto samples = generate_programs(gen, client, set, "claim");
  REQUIRE(samples.size() == 4);
  for (const auto& sample : samples) {
    CHECK_FALSE(sample.ok());
    CHECK(sample.transport_error.has_value());
  }
}

TEST_CASE("fixture generator cycles its program list") {
  FixtureProgramGenerator generator(
      {{"c1",
        {"fact_1 = Verify(\"a.\")\nlabel = Predict(fact_1)",
         "fact_1 = Verify(\"b.\")\nlabel = Predict(fact_1)"}}},
      5);
  ClaimRecord claim;
  claim.claim_id = "c1";
  auto samples = generator.generate(claim);
  REQUIRE(samples.size() == 5);
  for (const auto& sample : samples) REQUIRE(sample.ok());
  CHECK(samples[0].program_text == samples[2].program_text);
  CHECK(samples[1].program_text == samples[3].program_text);
  CHECK(samples[0].program_text != samples[1].program_text);

  ClaimRecord unknown;
  unknown.claim_id = "missing";
  auto failed = generator.generate(unknown);
  REQUIRE(failed.size() == 5);
  for (const auto& sample : failed) CHECK(sample.transport_error.has_value());
}

TEST_CASE("closed-book prompt templates load and render") {
  auto direct = assets::load_prompt_template("direct");
  CHECK(direct.rfind("# Answer the following true/false questions:", 0) == 0);
  std::string rendered = assets::render_claim_template(direct, "Water is wet.");
  CHECK(rendered.find("Is it true that Water is wet?\nThe answer is: ") != std::string::npos);
  CHECK(rendered.find("{CLAIM}") == std::string::npos);

  auto zs = assets::load_prompt_template("zs_cot");
  CHECK(zs.find("Let us think step-by-step.") != std::string::npos);
  auto cot = assets::load_prompt_template("cot");
  CHECK(cot.find("Let's think step by step. ") != std::string::npos);
  auto self_ask = assets::load_prompt_template("self_ask");
  CHECK(self_ask.find("So the final answer is: False.") != std::string::npos);
}
