#include "mvmol/molecule.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mvmol/rng.hpp"

namespace mvmol {

using nlohmann::json;

void Molecule::validate(bool strict) const {
  require(!atoms.empty(), ErrorKind::Validation, "molecule '" + id + "': atoms must be nonempty");
  require(coords.size() == atoms.size(), ErrorKind::Validation,
          "molecule '" + id + "': coords rows must match atom count");
  for (int a : atoms)
    require(a >= 0, ErrorKind::Validation, "molecule '" + id + "': negative atom type");
  std::set<std::pair<int, int>> seen;
  for (const auto& b : bonds) {
    require(b[0] != b[1], ErrorKind::Validation, "molecule '" + id + "': self-bond");
    require(b[0] >= 0 && b[1] >= 0 && b[0] < atom_count() && b[1] < atom_count(),
            ErrorKind::Validation, "molecule '" + id + "': bond endpoint out of range");
    auto key = std::minmax(b[0], b[1]);
    require(seen.insert(key).second, ErrorKind::Validation,
            "molecule '" + id + "': duplicate bond");
  }
  for (const auto& c : coords)
    for (double x : c)
      require(std::isfinite(x), ErrorKind::Validation, "molecule '" + id + "': non-finite coordinate");
  if (strict)
    require(connected_components() == 1, ErrorKind::Validation,
            "molecule '" + id + "': bond graph is disconnected");
}

int Molecule::connected_components() const {
  std::vector<int> parent(atoms.size());
  for (size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
  std::function<int(int)> find = [&](int x) {
    while (parent[static_cast<size_t>(x)] != x) {
      parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
      x = parent[static_cast<size_t>(x)];
    }
    return x;
  };
  for (const auto& b : bonds) {
    int ra = find(b[0]), rb = find(b[1]);
    if (ra != rb) parent[static_cast<size_t>(ra)] = rb;
  }
  std::set<int> roots;
  for (size_t i = 0; i < parent.size(); ++i) roots.insert(find(static_cast<int>(i)));
  return static_cast<int>(roots.size());
}

int Molecule::ring_count() const {
  return bond_count() - atom_count() + connected_components();
}

std::vector<int> Molecule::degree_sequence_sorted() const {
  std::vector<int> deg(atoms.size(), 0);
  for (const auto& b : bonds) {
    ++deg[static_cast<size_t>(b[0])];
    ++deg[static_cast<size_t>(b[1])];
  }
  std::sort(deg.begin(), deg.end());
  return deg;
}

void DistanceMatrix::validate() const {
  require(static_cast<int>(d.size()) == n * n, ErrorKind::Validation, "distance matrix size");
  for (int i = 0; i < n; ++i)
    require(at(i, i) == 0.0, ErrorKind::Validation, "distance matrix: nonzero diagonal");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      require(at(i, j) >= 0.0, ErrorKind::Validation, "distance matrix: negative entry");
      require(std::fabs(at(i, j) - at(j, i)) <= 1e-6, ErrorKind::Validation,
              "distance matrix: asymmetric");
    }
  // sampled triangle inequality
  Rng rng(12345);
  const int samples = std::min(200, n * n * n);
  for (int s = 0; s < samples; ++s) {
    int i = rng.uniform_int(n), j = rng.uniform_int(n), k = rng.uniform_int(n);
    require(at(i, j) <= at(i, k) + at(k, j) + 1e-5, ErrorKind::Validation,
            "distance matrix: triangle inequality violated");
  }
}

DistanceMatrix distances(const Molecule& m) {
  const int n = m.atom_count();
  DistanceMatrix dm;
  dm.n = n;
  dm.d.assign(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double diff = m.coords[static_cast<size_t>(i)][static_cast<size_t>(k)] -
                            m.coords[static_cast<size_t>(j)][static_cast<size_t>(k)];
        s += diff * diff;
      }
      const double dist = std::sqrt(s);
      dm.d[static_cast<size_t>(i) * n + j] = dist;
      dm.d[static_cast<size_t>(j) * n + i] = dist;
    }
  return dm;
}

uint64_t structural_hash(const Molecule& m) {
  // Histogram as ordered (type, count) pairs so that changing one atom's type
  // moves the hash; degree sequence sorted so labels do not matter.
  int max_type = 0;
  for (int a : m.atoms) max_type = std::max(max_type, a);
  std::vector<int> hist(static_cast<size_t>(max_type) + 1, 0);
  for (int a : m.atoms) ++hist[static_cast<size_t>(a)];
  uint64_t h = 0x9E3779B97F4A7C15ull;
  auto feed = [&h](uint64_t v) { h = detail::mix64(h ^ detail::mix64(v)); };
  for (size_t t = 0; t < hist.size(); ++t) {
    if (hist[t] == 0) continue;
    feed(static_cast<uint64_t>(t) << 32 | static_cast<uint64_t>(hist[t]));
  }
  feed(0xFEEDull);
  for (int d : m.degree_sequence_sorted()) feed(static_cast<uint64_t>(d) + 1);
  feed(0xBEEFull);
  feed(static_cast<uint64_t>(m.ring_count()) + 1);
  return h;
}

Molecule parse_molecule_line(const std::string& line, int line_no, bool strict) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, "molecules line " + std::to_string(line_no) + ": " + e.what());
  }
  Molecule m;
  try {
    m.id = j.at("id").get<std::string>();
    m.atoms = j.at("atoms").get<std::vector<int>>();
    for (const auto& b : j.at("bonds")) {
      require(b.is_array() && b.size() == 2, ErrorKind::Parse,
              "molecules line " + std::to_string(line_no) + ": bond must be a pair");
      m.bonds.push_back({b[0].get<int>(), b[1].get<int>()});
    }
    for (const auto& c : j.at("coords")) {
      require(c.is_array() && c.size() == 3, ErrorKind::Parse,
              "molecules line " + std::to_string(line_no) + ": coord must have 3 entries");
      m.coords.push_back({c[0].get<double>(), c[1].get<double>(), c[2].get<double>()});
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, "molecules line " + std::to_string(line_no) + ": " + e.what());
  }
  m.validate(strict);
  return m;
}

std::vector<Molecule> parse_molecules(const std::string& path, bool strict) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot read " + path);
  std::vector<Molecule> out;
  std::string line;
  int line_no = 0;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Molecule m = parse_molecule_line(line, line_no, strict);
    require(ids.insert(m.id).second, ErrorKind::Validation,
            "molecules line " + std::to_string(line_no) + ": duplicate id '" + m.id + "'");
    out.push_back(std::move(m));
  }
  return out;
}

std::string molecule_to_json(const Molecule& m) {
  // Coordinates at max precision so that parse(serialize(m)) is bit-exact.
  std::ostringstream os;
  os << std::setprecision(17);
  os << "{\"id\":" << json(m.id).dump() << ",\"atoms\":[";
  for (size_t i = 0; i < m.atoms.size(); ++i) os << (i ? "," : "") << m.atoms[i];
  os << "],\"bonds\":[";
  for (size_t i = 0; i < m.bonds.size(); ++i)
    os << (i ? "," : "") << "[" << m.bonds[i][0] << "," << m.bonds[i][1] << "]";
  os << "],\"coords\":[";
  for (size_t i = 0; i < m.coords.size(); ++i) {
    os << (i ? "," : "") << "[";
    for (int k = 0; k < 3; ++k) os << (k ? "," : "") << m.coords[i][static_cast<size_t>(k)];
    os << "]";
  }
  os << "]}";
  return os.str();
}

void write_molecules(const std::vector<Molecule>& mols, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write " + path);
  for (const auto& m : mols) out << molecule_to_json(m) << "\n";
}

std::string to_linear_notation(const Molecule& m) {
  std::ostringstream os;
  for (size_t i = 0; i < m.atoms.size(); ++i) os << (i ? " " : "") << "a" << m.atoms[i];
  std::vector<std::array<int, 2>> bonds = m.bonds;
  for (auto& b : bonds)
    if (b[0] > b[1]) std::swap(b[0], b[1]);
  std::sort(bonds.begin(), bonds.end());
  for (const auto& b : bonds) os << " ; " << b[0] << " - " << b[1];
  return os.str();
}

namespace {
bool parse_int(const std::string& s, int* v) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  try {
    *v = std::stoi(s);
  } catch (...) {
    return false;
  }
  return true;
}
}  // namespace

bool parse_linear_notation(const std::string& text, Molecule* out) {
  std::istringstream is(text);
  std::vector<std::string> toks;
  std::string tok;
  while (is >> tok) toks.push_back(tok);
  if (toks.empty()) return false;

  Molecule m;
  m.id = "generated";
  size_t i = 0;
  while (i < toks.size() && toks[i].size() >= 2 && toks[i][0] == 'a') {
    int type = 0;
    if (!parse_int(toks[i].substr(1), &type)) return false;
    m.atoms.push_back(type);
    ++i;
  }
  if (m.atoms.empty()) return false;
  std::set<std::pair<int, int>> seen;
  while (i < toks.size()) {
    // each bond group is "; <i> - <j>"
    if (toks[i] != ";" || i + 4 > toks.size()) return false;
    int a = 0, b = 0;
    if (!parse_int(toks[i + 1], &a)) return false;
    if (toks[i + 2] != "-") return false;
    if (!parse_int(toks[i + 3], &b)) return false;
    if (a == b || a >= m.atom_count() || b >= m.atom_count()) return false;
    if (!seen.insert(std::minmax(a, b)).second) return false;
    m.bonds.push_back({a, b});
    i += 4;
  }
  m.coords.assign(m.atoms.size(), {0.0, 0.0, 0.0});
  if (out != nullptr) *out = std::move(m);
  return true;
}

}  // namespace mvmol
