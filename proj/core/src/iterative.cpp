#include "progfc/iterative.hpp"

namespace progfc::retrieval {

IterativeRetrieval iterative_retrieve(const dsl::ReasoningProgram& program,
                                      const engine::Environment& env,
                                      const Bm25Index& index, int per_step_k,
                                      int combined_k) {
  IterativeRetrieval out;
  std::vector<RetrievalResult> all;
  for (int i = 0; i < static_cast<int>(program.steps.size()); ++i) {
    const dsl::ReasoningStep& step = program.steps[i];
    if (step.kind == dsl::StepKind::Predict) continue;
    std::string query = engine::substitute(step.template_arg(), env);
    RetrievalResult result = index.retrieve(query, per_step_k);
    all.push_back(result);
    out.per_step.emplace(i, std::move(result));
  }
  out.combined = combine_results(all, combined_k);
  return out;
}

RetrievalResult one_step_retrieve(const Bm25Index& index, const std::string& claim_text,
                                  int k) {
  return index.retrieve(claim_text, k);
}

}  // namespace progfc::retrieval
