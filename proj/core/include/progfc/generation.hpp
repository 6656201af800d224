#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "progfc/claim.hpp"
#include "progfc/dsl.hpp"
#include "progfc/handlers.hpp"

// Few-shot program generation: composes the in-context prompt from a bundled
// exemplar set, samples N candidate programs from the completion endpoint,
// and parses each one. Parse failures stay in the sample list as diagnostics;
// downstream they count as failed executions.

namespace progfc::generation {

struct Exemplar {
  std::string claim;
  std::string program_text;  // dedented; parses with zero diagnostics
};

struct ExemplarSet {
  std::string name;
  std::string instruction;
  std::vector<Exemplar> exemplars;
};

/// Asset format: an INSTRUCTION: block, then `---`-separated blocks of
/// `CLAIM: <one line>` + `PROGRAM:` + indented program lines. Every program
/// must parse cleanly; a malformed asset throws with the diagnostics.
ExemplarSet parse_exemplar_asset(const std::string& text, const std::string& name);
ExemplarSet load_exemplar_set(const std::filesystem::path& path);

/// Loads a set shipped under assets/exemplars (bundled names: hover with 20
/// exemplars, feverous with the 12 published ones).
ExemplarSet bundled_exemplar_set(const std::string& name);

/// Prompt layout: the instruction block, then for each exemplar
/// `# The claim is that {claim}` / `def program():` / the indented program,
/// blocks separated by blank lines, ending with the input claim's header and
/// a bare `def program():`.
std::string build_generation_prompt(const ExemplarSet& set, const std::string& claim);

struct GenerationConfig {
  int num_programs = 5;  // kept odd by default to avoid binary ties
  double temperature = 0.7;
  int max_new_tokens = 256;
  std::vector<std::string> stop_sequences{"\n# The claim", "\n\n\n"};
};

struct GeneratedSample {
  std::string completion_text;                  // raw model output
  std::string program_text;                     // extracted block
  std::optional<dsl::ReasoningProgram> program;
  std::vector<dsl::ParseDiagnostic> diagnostics;  // set when parsing failed
  std::optional<std::string> transport_error;     // set when the request failed

  bool ok() const { return program.has_value(); }
};

/// extract_program_block + parse_program over one completion.
GeneratedSample sample_from_completion(std::string completion);

/// Requests num_programs samples in one call; sample order is preserved and
/// duplicates are retained. A failed request yields num_programs entries
/// carrying the transport error.
std::vector<GeneratedSample> generate_programs(const GenerationConfig& config,
                                               handlers::LmClient& client,
                                               const ExemplarSet& set,
                                               const std::string& claim);

class ProgramGenerator {
 public:
  virtual ~ProgramGenerator() = default;
  virtual std::vector<GeneratedSample> generate(const ClaimRecord& claim) = 0;
};

class LmProgramGenerator : public ProgramGenerator {
 public:
  LmProgramGenerator(std::shared_ptr<handlers::LmClient> client, ExemplarSet set,
                     GenerationConfig config)
      : client_(std::move(client)), set_(std::move(set)), config_(std::move(config)) {}

  std::vector<GeneratedSample> generate(const ClaimRecord& claim) override {
    return generate_programs(config_, *client_, set_, claim.text);
  }

 private:
  std::shared_ptr<handlers::LmClient> client_;
  ExemplarSet set_;
  GenerationConfig config_;
};

/// Deterministic generator for tests and offline runs: claim_id -> program
/// texts, cycled when fewer than num_programs are listed.
class FixtureProgramGenerator : public ProgramGenerator {
 public:
  FixtureProgramGenerator(std::map<std::string, std::vector<std::string>> programs,
                          int num_programs)
      : programs_(std::move(programs)), num_programs_(num_programs) {}

  std::vector<GeneratedSample> generate(const ClaimRecord& claim) override;

 private:
  std::map<std::string, std::vector<std::string>> programs_;
  int num_programs_;
};

}  // namespace progfc::generation
