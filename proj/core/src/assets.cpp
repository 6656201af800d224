#include "progfc/assets.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace progfc::assets {

std::filesystem::path find_asset_dir() {
  if (const char* env = std::getenv("PROGFC_ASSETS")) {
    std::filesystem::path p(env);
    if (std::filesystem::is_directory(p)) return p;
    throw std::runtime_error("PROGFC_ASSETS is set but is not a directory: " + std::string(env));
  }
#ifdef PROGFC_SOURCE_ASSET_DIR
  {
    std::filesystem::path p(PROGFC_SOURCE_ASSET_DIR);
    if (std::filesystem::is_directory(p)) return p;
  }
#endif
#ifdef PROGFC_INSTALL_ASSET_DIR
  {
    std::filesystem::path p(PROGFC_INSTALL_ASSET_DIR);
    if (std::filesystem::is_directory(p)) return p;
  }
#endif
  throw std::runtime_error(
      "cannot locate the progfc asset directory; set PROGFC_ASSETS");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open file: " + path.string());
  std::ostringstream buffer;
  buffer << is.rdbuf();
  return buffer.str();
}

std::string load_prompt_template(const std::string& style) {
  auto path = find_asset_dir() / "prompts" / (style + ".txt");
  std::string text = read_file(path);
  if (!text.empty() && text.back() == '\n') text.pop_back();
  return text;
}

std::string render_claim_template(const std::string& template_text,
                                  const std::string& claim) {
  std::string trimmed = claim;
  while (!trimmed.empty() &&
         (trimmed.back() == ' ' || trimmed.back() == '.' || trimmed.back() == '?' ||
          trimmed.back() == '!')) {
    trimmed.pop_back();
  }
  std::string out;
  size_t pos = 0;
  const std::string slot = "{CLAIM}";
  while (true) {
    size_t hit = template_text.find(slot, pos);
    if (hit == std::string::npos) {
      out += template_text.substr(pos);
      return out;
    }
    out += template_text.substr(pos, hit - pos);
    out += trimmed;
    pos = hit + slot.size();
  }
}

}  // namespace progfc::assets
