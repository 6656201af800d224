#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "progfc/dsl.hpp"
#include "progfc/engine.hpp"
#include "progfc/handlers.hpp"
#include "progfc/retrieval.hpp"

using namespace progfc;

namespace {

const char* kReferenceProgram =
    "fact_1 = Verify(\"James Cameron was born in Canada.\")\n"
    "Answer_1 = Question(\"Who is the director of the film Interstellar?\")\n"
    "fact_2 = Verify(\"{Answer_1} was born in Canada.\")\n"
    "label = Predict(fact_1 and fact_2)\n";

std::vector<retrieval::EvidenceDoc> synthetic_corpus(int docs, int vocab) {
  std::mt19937 rng(42);
  std::uniform_int_distribution<int> len(8, 60);
  std::uniform_int_distribution<int> term(0, vocab - 1);
  std::vector<retrieval::EvidenceDoc> out;
  out.reserve(docs);
  for (int d = 0; d < docs; ++d) {
    std::string text;
    int n = len(rng);
    for (int t = 0; t < n; ++t) text += "w" + std::to_string(term(rng)) + " ";
    out.push_back({"doc" + std::to_string(d), "", text});
  }
  return out;
}

void ParseProgram(benchmark::State& state) {
  for (auto _ : state) {
    auto result = dsl::parse_program(kReferenceProgram);
    benchmark::DoNotOptimize(result);
  }
}
BENCHMARK(ParseProgram);

void RenderParsedProgram(benchmark::State& state) {
  auto parsed = dsl::parse_program(kReferenceProgram);
  for (auto _ : state) {
    benchmark::DoNotOptimize(dsl::render_program(*parsed.program));
  }
}
BENCHMARK(RenderParsedProgram);

void SubstituteTemplate(benchmark::State& state) {
  auto parsed = dsl::parse_program(kReferenceProgram);
  const auto& tmpl = parsed.program->steps[2].template_arg();
  engine::Environment env;
  env["Answer_1"] = engine::Binding{"Answer_1", std::string("Christopher Nolan"), 1};
  for (auto _ : state) {
    benchmark::DoNotOptimize(engine::substitute(tmpl, env));
  }
}
BENCHMARK(SubstituteTemplate);

void EvalLogic(benchmark::State& state) {
  auto parsed = dsl::parse_program(
      "a = Verify(\"x.\")\nb = Verify(\"y.\")\nc = Verify(\"z.\")\n"
      "label = Predict(not (a and b) or c and a)");
  const auto& expr = parsed.program->steps[3].logic_arg();
  engine::Environment env;
  env["a"] = engine::Binding{"a", true, 0};
  env["b"] = engine::Binding{"b", false, 1};
  env["c"] = engine::Binding{"c", true, 2};
  for (auto _ : state) {
    benchmark::DoNotOptimize(engine::eval_logic(expr, env));
  }
}
BENCHMARK(EvalLogic);

void IngestCorpus(benchmark::State& state) {
  auto docs = synthetic_corpus(static_cast<int>(state.range(0)), 2000);
  for (auto _ : state) {
    retrieval::VectorDocumentReader reader(docs);
    auto index = retrieval::ingest_corpus(reader);
    benchmark::DoNotOptimize(index.doc_count());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(IngestCorpus)->RangeMultiplier(4)->Range(256, 16384)->Complexity();

void Retrieve(benchmark::State& state) {
  auto docs = synthetic_corpus(static_cast<int>(state.range(0)), 2000);
  retrieval::VectorDocumentReader reader(docs);
  auto index = retrieval::ingest_corpus(reader);
  for (auto _ : state) {
    benchmark::DoNotOptimize(index.retrieve("w3 w17 w256 w999", 10));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(Retrieve)->RangeMultiplier(4)->Range(256, 16384)->Complexity();

void BuildVerifyPrompt(benchmark::State& state) {
  std::vector<retrieval::EvidenceDoc> evidence;
  for (int i = 0; i < 10; ++i) {
    evidence.push_back({"e" + std::to_string(i), "", std::string(300, 'x')});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(handlers::build_verify_prompt(
        "James Cameron was born in Canada.", evidence, handlers::EvidenceSetting::Gold,
        handlers::kDefaultEvidenceBudget));
  }
}
BENCHMARK(BuildVerifyPrompt);

}  // namespace

BENCHMARK_MAIN();
