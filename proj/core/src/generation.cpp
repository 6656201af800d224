#include "progfc/generation.hpp"

#include <algorithm>
#include <stdexcept>

#include "progfc/assets.hpp"

namespace progfc::generation {

namespace {

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  size_t start = 0;
  while (start <= text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  return lines;
}

std::string rstrip(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\n' ||
                        s.back() == '\r')) {
    s.pop_back();
  }
  return s;
}

// Removes the common leading whitespace of the non-blank lines.
std::string dedent(const std::vector<std::string>& lines) {
  size_t indent = std::string::npos;
  for (const auto& line : lines) {
    size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    indent = std::min(indent, first);
  }
  if (indent == std::string::npos) indent = 0;
  std::string out;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (i) out.push_back('\n');
    out += lines[i].size() >= indent ? lines[i].substr(indent) : lines[i];
  }
  return rstrip(out);
}

}  // namespace

ExemplarSet parse_exemplar_asset(const std::string& text, const std::string& name) {
  ExemplarSet set;
  set.name = name;

  std::vector<std::vector<std::string>> blocks;
  blocks.emplace_back();
  for (auto& line : split_lines(text)) {
    if (rstrip(line) == "---") {
      blocks.emplace_back();
    } else {
      blocks.back().push_back(line);
    }
  }

  bool saw_instruction = false;
  for (const auto& block : blocks) {
    size_t first = 0;
    while (first < block.size() && rstrip(block[first]).empty()) ++first;
    if (first == block.size()) continue;

    if (block[first] == "INSTRUCTION:") {
      std::vector<std::string> body(block.begin() + first + 1, block.end());
      set.instruction = dedent(body);
      saw_instruction = true;
      continue;
    }

    const std::string claim_prefix = "CLAIM: ";
    if (block[first].rfind(claim_prefix, 0) != 0) {
      throw std::runtime_error("exemplar asset '" + name +
                               "': block must start with CLAIM: or INSTRUCTION:");
    }
    Exemplar exemplar;
    exemplar.claim = rstrip(block[first].substr(claim_prefix.size()));
    size_t program_line = first + 1;
    if (program_line >= block.size() || rstrip(block[program_line]) != "PROGRAM:") {
      throw std::runtime_error("exemplar asset '" + name +
                               "': expected PROGRAM: after CLAIM:");
    }
    std::vector<std::string> body(block.begin() + program_line + 1, block.end());
    exemplar.program_text = dedent(body);

    auto parsed = dsl::parse_program(exemplar.program_text);
    if (!parsed.ok()) {
      throw std::runtime_error("exemplar asset '" + name + "': program for claim \"" +
                               exemplar.claim + "\" does not parse:\n" +
                               dsl::format_diagnostics(parsed.diagnostics));
    }
    set.exemplars.push_back(std::move(exemplar));
  }

  if (!saw_instruction) {
    throw std::runtime_error("exemplar asset '" + name + "': missing INSTRUCTION: block");
  }
  if (set.exemplars.empty()) {
    throw std::runtime_error("exemplar asset '" + name + "': no exemplars found");
  }
  return set;
}

ExemplarSet load_exemplar_set(const std::filesystem::path& path) {
  return parse_exemplar_asset(assets::read_file(path), path.stem().string());
}

ExemplarSet bundled_exemplar_set(const std::string& name) {
  return load_exemplar_set(assets::find_asset_dir() / "exemplars" / (name + ".txt"));
}

std::string build_generation_prompt(const ExemplarSet& set, const std::string& claim) {
  std::string prompt = set.instruction;
  prompt.push_back('\n');
  for (const auto& exemplar : set.exemplars) {
    prompt += "\n# The claim is that " + exemplar.claim + "\ndef program():\n";
    for (const auto& line : split_lines(exemplar.program_text)) {
      prompt += "    " + line + "\n";
    }
  }
  prompt += "\n# The claim is that " + claim + "\ndef program():";
  return prompt;
}

GeneratedSample sample_from_completion(std::string completion) {
  GeneratedSample sample;
  sample.completion_text = std::move(completion);
  sample.program_text = dsl::extract_program_block(sample.completion_text);
  if (sample.program_text.empty()) {
    sample.diagnostics.push_back({dsl::Severity::SyntaxError, std::nullopt,
                                  "no assignment line found in completion", 1, 1});
    return sample;
  }
  auto parsed = dsl::parse_program(sample.program_text);
  if (parsed.ok()) {
    sample.program = std::move(parsed.program);
  } else {
    sample.diagnostics = std::move(parsed.diagnostics);
  }
  return sample;
}

std::vector<GeneratedSample> generate_programs(const GenerationConfig& config,
                                               handlers::LmClient& client,
                                               const ExemplarSet& set,
                                               const std::string& claim) {
  std::string prompt = build_generation_prompt(set, claim);
  std::vector<GeneratedSample> samples;
  try {
    auto texts = client.complete(prompt, config.num_programs, config.temperature,
                                 config.max_new_tokens, config.stop_sequences);
    samples.reserve(texts.size());
    for (auto& text : texts) {
      samples.push_back(sample_from_completion(std::move(text)));
    }
  } catch (const handlers::HandlerFailure& e) {
    samples.clear();
    for (int i = 0; i < config.num_programs; ++i) {
      GeneratedSample sample;
      sample.transport_error = e.what();
      samples.push_back(std::move(sample));
    }
  }
  return samples;
}

std::vector<GeneratedSample> FixtureProgramGenerator::generate(const ClaimRecord& claim) {
  std::vector<GeneratedSample> samples;
  auto it = programs_.find(claim.claim_id);
  if (it == programs_.end() || it->second.empty()) {
    for (int i = 0; i < num_programs_; ++i) {
      GeneratedSample sample;
      sample.transport_error = "no fixture programs for claim " + claim.claim_id;
      samples.push_back(std::move(sample));
    }
    return samples;
  }
  for (int i = 0; i < num_programs_; ++i) {
    samples.push_back(sample_from_completion(it->second[i % it->second.size()]));
  }
  return samples;
}

}  // namespace progfc::generation
