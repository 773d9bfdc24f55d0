#include "mvmol/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace mvmol {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      // model
      "d_model", "n_heads", "struct_layers", "qformer_layers", "decoder_layers", "n_queries",
      "d_proj", "max_text_len", "max_atoms", "max_gen_len", "atom_alphabet", "vocab_size",
      "gaussian_sigma",
      // training
      "stage", "steps", "batch_size", "peak_lr", "final_lr", "warmup_steps", "weight_decay",
      "tau", "clip_norm", "seed", "checkpoint_every", "use_cmc", "use_cmm", "use_kge_c", "use_kge_m",
      "use_kgc", "w_moltext", "w_molmol", "w_texttext", "max_epochs", "patience",
  };
  return keys;
}

}  // namespace

ConfigFile ConfigFile::parse_string(const std::string& content) {
  ConfigFile cfg;
  std::istringstream in(content);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::Config,
            "config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    require(!key.empty(), ErrorKind::Config,
            "config line " + std::to_string(line_no) + ": empty key");
    cfg.values[key] = value;
  }
  return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot read config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

std::string ConfigFile::get(const std::string& key, const std::string& fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

int64_t ConfigFile::get_int(const std::string& key, int64_t fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  try {
    return std::stoll(it->second);
  } catch (...) {
    fail(ErrorKind::Config, "config: '" + key + "' is not an integer: " + it->second);
  }
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (...) {
    fail(ErrorKind::Config, "config: '" + key + "' is not a number: " + it->second);
  }
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  fail(ErrorKind::Config, "config: '" + key + "' is not a boolean: " + it->second);
}

void ConfigFile::apply(ModelConfig* model, TrainConfig* train) const {
  for (const auto& [key, value] : values)
    require(known_keys().count(key) > 0, ErrorKind::Config, "config: unknown key '" + key + "'");
  if (model != nullptr) {
    model->d_model = static_cast<int>(get_int("d_model", model->d_model));
    model->n_heads = static_cast<int>(get_int("n_heads", model->n_heads));
    model->struct_layers = static_cast<int>(get_int("struct_layers", model->struct_layers));
    model->qformer_layers = static_cast<int>(get_int("qformer_layers", model->qformer_layers));
    model->decoder_layers = static_cast<int>(get_int("decoder_layers", model->decoder_layers));
    model->n_queries = static_cast<int>(get_int("n_queries", model->n_queries));
    model->d_proj = static_cast<int>(get_int("d_proj", model->d_proj));
    model->max_text_len = static_cast<int>(get_int("max_text_len", model->max_text_len));
    model->max_atoms = static_cast<int>(get_int("max_atoms", model->max_atoms));
    model->max_gen_len = static_cast<int>(get_int("max_gen_len", model->max_gen_len));
    model->atom_alphabet = static_cast<int>(get_int("atom_alphabet", model->atom_alphabet));
    model->vocab_size = static_cast<int>(get_int("vocab_size", model->vocab_size));
    model->gaussian_sigma = get_double("gaussian_sigma", model->gaussian_sigma);
  }
  if (train != nullptr) {
    train->stage = static_cast<int>(get_int("stage", train->stage));
    train->steps = get_int("steps", train->steps);
    train->batch_size = static_cast<int>(get_int("batch_size", train->batch_size));
    train->peak_lr = get_double("peak_lr", train->peak_lr);
    train->final_lr = get_double("final_lr", train->final_lr);
    train->warmup_steps = get_int("warmup_steps", train->warmup_steps);
    train->weight_decay = get_double("weight_decay", train->weight_decay);
    train->tau = get_double("tau", train->tau);
    train->clip_norm = get_double("clip_norm", train->clip_norm);
    train->seed = static_cast<uint64_t>(get_int("seed", static_cast<int64_t>(train->seed)));
    train->checkpoint_every = get_int("checkpoint_every", train->checkpoint_every);
    train->use_cmc = get_bool("use_cmc", train->use_cmc);
    train->use_cmm = get_bool("use_cmm", train->use_cmm);
    train->use_kge_c = get_bool("use_kge_c", train->use_kge_c);
    train->use_kge_m = get_bool("use_kge_m", train->use_kge_m);
    train->use_kgc = get_bool("use_kgc", train->use_kgc);
    train->w_moltext = get_double("w_moltext", train->w_moltext);
    train->w_molmol = get_double("w_molmol", train->w_molmol);
    train->w_texttext = get_double("w_texttext", train->w_texttext);
    train->max_epochs = static_cast<int>(get_int("max_epochs", train->max_epochs));
    train->patience = static_cast<int>(get_int("patience", train->patience));
  }
}

std::string ConfigFile::serialize() const {
  std::ostringstream os;
  for (const auto& [key, value] : values) os << key << "=" << value << "\n";
  return os.str();
}

std::string serialize_model_config(const ModelConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "d_model=" << cfg.d_model << "\n";
  os << "n_heads=" << cfg.n_heads << "\n";
  os << "struct_layers=" << cfg.struct_layers << "\n";
  os << "qformer_layers=" << cfg.qformer_layers << "\n";
  os << "decoder_layers=" << cfg.decoder_layers << "\n";
  os << "n_queries=" << cfg.n_queries << "\n";
  os << "d_proj=" << cfg.d_proj << "\n";
  os << "max_text_len=" << cfg.max_text_len << "\n";
  os << "max_atoms=" << cfg.max_atoms << "\n";
  os << "max_gen_len=" << cfg.max_gen_len << "\n";
  os << "atom_alphabet=" << cfg.atom_alphabet << "\n";
  os << "vocab_size=" << cfg.vocab_size << "\n";
  os << "gaussian_sigma=" << cfg.gaussian_sigma << "\n";
  return os.str();
}

ModelConfig parse_model_config(const std::string& text) {
  ConfigFile cfg = ConfigFile::parse_string(text);
  ModelConfig out;
  cfg.apply(&out, nullptr);
  out.validate();
  return out;
}

}  // namespace mvmol
