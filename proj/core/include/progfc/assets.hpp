#pragma once

#include <filesystem>
#include <string>

namespace progfc::assets {

/// Resolves the bundled asset directory: $PROGFC_ASSETS when set, then the
/// source-tree assets/ directory, then the installed share/progfc/assets.
/// Throws std::runtime_error when none exists.
std::filesystem::path find_asset_dir();

std::string read_file(const std::filesystem::path& path);

/// Closed-book baseline template (direct, cot, zs_cot, self_ask) with a
/// {CLAIM} slot; one trailing newline is stripped from the file content.
std::string load_prompt_template(const std::string& style);

/// Replaces every {CLAIM} slot with the claim text (terminal punctuation
/// stripped, mirroring the sub-task prompt builders).
std::string render_claim_template(const std::string& template_text,
                                  const std::string& claim);

}  // namespace progfc::assets
