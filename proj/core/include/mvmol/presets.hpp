#pragma once

#include <string>
#include <utility>
#include <vector>

namespace mvmol {

/// Shipped view prompts: the eight property-prediction dataset descriptions
/// plus the fixed retrieval/captioning prompt. Lookup is total over these
/// names; anything else is a Config error.
const std::vector<std::pair<std::string, std::string>>& view_prompt_presets();

const std::string& preset_prompt(const std::string& name);
bool has_preset(const std::string& name);

}  // namespace mvmol
