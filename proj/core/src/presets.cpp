#include "mvmol/presets.hpp"

#include "mvmol/error.hpp"

namespace mvmol {

const std::vector<std::pair<std::string, std::string>>& view_prompt_presets() {
  static const std::vector<std::pair<std::string, std::string>> presets = {
      {"bbbp", "blood-brain barrier penetration (permeability)"},
      {"tox21",
       "Qualitative toxicity measurements including nuclear receptors and stress response "
       "pathways"},
      {"toxcast", "Qualitative toxicity measurements"},
      {"sider", "adverse drug reactions (ADR) for 27 system organ classes"},
      {"clintox", "Qualitative data of drugs if they failed clinical trials for toxicity reasons"},
      {"muv", "Subset of PubChem BioAssay designed for validation of virtual screening techniques"},
      {"hiv", "Experimentally measured abilities to inhibit HIV replication"},
      {"bace", "Binding results for human beta-secretase 1 (BACE-1)"},
      {"retrieval", "biochemical properties and functions"},
  };
  return presets;
}

const std::string& preset_prompt(const std::string& name) {
  for (const auto& [key, value] : view_prompt_presets())
    if (key == name) return value;
  fail(ErrorKind::Config, "unknown view prompt preset '" + name + "'");
}

bool has_preset(const std::string& name) {
  for (const auto& [key, value] : view_prompt_presets())
    if (key == name) return true;
  return false;
}

}  // namespace mvmol
