#include "mvmol/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>

#include "mvmol/config.hpp"

namespace mvmol {

namespace {

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char bytes[4] = {static_cast<unsigned char>(v & 0xFF),
                            static_cast<unsigned char>((v >> 8) & 0xFF),
                            static_cast<unsigned char>((v >> 16) & 0xFF),
                            static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  require(in.good(), ErrorKind::Parse, "checkpoint: truncated integer");
  return static_cast<uint32_t>(bytes[0]) | static_cast<uint32_t>(bytes[1]) << 8 |
         static_cast<uint32_t>(bytes[2]) << 16 | static_cast<uint32_t>(bytes[3]) << 24;
}

void put_f32(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

float get_f32(std::istream& in) {
  const uint32_t bits = get_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void save_checkpoint(Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::Io, "checkpoint: cannot write " + path);
  out.write(kCheckpointMagic, 6);
  const std::string config = serialize_model_config(model.cfg);
  put_u32(out, static_cast<uint32_t>(config.size()));
  out.write(config.data(), static_cast<std::streamsize>(config.size()));
  for (auto& [name, tensor] : model.named_params()) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<uint32_t>(tensor->shape.size()));
    for (int d : tensor->shape) put_u32(out, static_cast<uint32_t>(d));
    for (float v : tensor->data) put_f32(out, v);
  }
  require(out.good(), ErrorKind::Io, "checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "checkpoint: cannot read " + path);
  char magic[6];
  in.read(magic, 6);
  require(in.good() && std::memcmp(magic, kCheckpointMagic, 6) == 0, ErrorKind::Parse,
          "checkpoint: bad magic in " + path);
  const uint32_t config_len = get_u32(in);
  std::string config(config_len, '\0');
  in.read(config.data(), config_len);
  require(in.good(), ErrorKind::Parse, "checkpoint: truncated config blob");

  Model model;
  model.init(parse_model_config(config), /*seed=*/0);
  auto params = model.named_params();
  std::set<std::string> pending;
  for (auto& [name, tensor] : params) pending.insert(name);

  while (true) {
    const int peek = in.peek();
    if (peek == std::char_traits<char>::eof()) break;
    const uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    require(in.good(), ErrorKind::Parse, "checkpoint: truncated tensor name");
    Tensor* target = nullptr;
    for (auto& [pname, tensor] : params)
      if (pname == name) target = tensor;
    require(target != nullptr, ErrorKind::Validation,
            "checkpoint: tensor '" + name + "' does not exist under this config");
    const uint32_t ndim = get_u32(in);
    std::vector<int> shape;
    for (uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<int>(get_u32(in)));
    require(shape == target->shape, ErrorKind::Validation,
            "checkpoint: shape mismatch for '" + name + "'");
    for (float& v : target->data) v = get_f32(in);
    pending.erase(name);
  }
  if (!pending.empty()) {
    std::string msg = "checkpoint: missing tensors:";
    for (const auto& name : pending) msg += " " + name;
    fail(ErrorKind::Validation, msg);
  }
  return model;
}

}  // namespace mvmol
