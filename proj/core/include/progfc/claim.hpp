#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace progfc {

/// Final verdict for a claim. Bijective with bool: true <-> Supported.
enum class VeracityLabel { Supported, Refuted };

inline const char* to_string(VeracityLabel label) {
  return label == VeracityLabel::Supported ? "Supported" : "Refuted";
}

std::optional<VeracityLabel> veracity_from_string(std::string_view text);

inline VeracityLabel label_from_bool(bool value) {
  return value ? VeracityLabel::Supported : VeracityLabel::Refuted;
}

inline bool bool_from_label(VeracityLabel label) {
  return label == VeracityLabel::Supported;
}

/// One dataset row: the claim text plus evaluation metadata.
struct ClaimRecord {
  std::string claim_id;
  std::string text;
  std::optional<VeracityLabel> gold_label;  // present for evaluation records
  std::optional<int> hops;                  // HOVER only (2/3/4)
  std::vector<std::string> gold_evidence_ids;
};

}  // namespace progfc
