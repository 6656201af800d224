#pragma once

#include <map>

#include "progfc/dsl.hpp"
#include "progfc/engine.hpp"
#include "progfc/retrieval.hpp"

namespace progfc::retrieval {

struct IterativeRetrieval {
  std::map<int, RetrievalResult> per_step;  // step index -> that step's top-k
  RetrievalResult combined;                 // max-score dedup across steps
};

/// Program-guided retrieval: each Question/Verify step queries the index with
/// its substituted argument (the environment must bind every referenced
/// variable, e.g. via engine::env_from_trace). The combined list is the union
/// of per-step results deduplicated by doc id at each doc's maximum score,
/// re-sorted and truncated to combined_k.
IterativeRetrieval iterative_retrieve(const dsl::ReasoningProgram& program,
                                      const engine::Environment& env,
                                      const Bm25Index& index, int per_step_k,
                                      int combined_k = 10);

/// One-step baseline: the raw claim text as the only query.
RetrievalResult one_step_retrieve(const Bm25Index& index, const std::string& claim_text,
                                  int k);

}  // namespace progfc::retrieval
