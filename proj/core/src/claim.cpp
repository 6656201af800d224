#include "progfc/claim.hpp"

namespace progfc {

std::optional<VeracityLabel> veracity_from_string(std::string_view text) {
  if (text == "Supported") return VeracityLabel::Supported;
  if (text == "Refuted") return VeracityLabel::Refuted;
  return std::nullopt;
}

}  // namespace progfc
