#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "mvmol/corpus.hpp"
#include "mvmol/molecule.hpp"
#include "mvmol/rng.hpp"

using namespace mvmol;

namespace {

Molecule permuted(const Molecule& m, const std::vector<int>& perm) {
  // perm[i] = new index of old atom i
  Molecule p;
  p.id = m.id + ":perm";
  p.atoms.resize(m.atoms.size());
  p.coords.resize(m.coords.size());
  for (size_t i = 0; i < m.atoms.size(); ++i) {
    p.atoms[static_cast<size_t>(perm[i])] = m.atoms[i];
    p.coords[static_cast<size_t>(perm[i])] = m.coords[i];
  }
  for (const auto& b : m.bonds) p.bonds.push_back({perm[static_cast<size_t>(b[0])], perm[static_cast<size_t>(b[1])]});
  return p;
}

Molecule sample_molecule() {
  Molecule m;
  m.id = "sample";
  m.atoms = {0, 3, 2, 5, 1, 3};
  m.bonds = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}};
  Rng rng(2024);
  for (int i = 0; i < 6; ++i) m.coords.push_back({rng.normal(), rng.normal(), rng.normal()});
  return m;
}

}  // namespace

TEST_SUITE("mol") {

TEST_CASE("single atom molecule is valid; bad bonds are not") {
  Molecule single = parse_molecule_line(
      R"({"id":"solo","atoms":[2],"bonds":[],"coords":[[0.0,0.0,0.0]]})", 1);
  CHECK(single.atom_count() == 1);

  CHECK_THROWS_AS(parse_molecule_line(
                      R"({"id":"bad","atoms":[0,1],"bonds":[[0,2]],"coords":[[0,0,0],[1,0,0]]})", 1),
                  Error);
  CHECK_THROWS_AS(parse_molecule_line(
                      R"({"id":"self","atoms":[0,1],"bonds":[[1,1]],"coords":[[0,0,0],[1,0,0]]})", 1),
                  Error);
  CHECK_THROWS_AS(parse_molecule_line(R"(not json)", 7), Error);
}

TEST_CASE("serialize then parse is bit exact") {
  Molecule m = sample_molecule();
  Molecule back = parse_molecule_line(molecule_to_json(m), 1);
  CHECK(back.id == m.id);
  CHECK(back.atoms == m.atoms);
  CHECK(back.bonds == m.bonds);
  for (size_t i = 0; i < m.coords.size(); ++i)
    for (int k = 0; k < 3; ++k)
      CHECK(back.coords[i][static_cast<size_t>(k)] == m.coords[i][static_cast<size_t>(k)]);
}

TEST_CASE("molecules.jsonl io with line numbers") {
  auto dir = std::filesystem::temp_directory_path() / "mvmol_mol_io";
  std::filesystem::create_directories(dir);
  Molecule m = sample_molecule();
  write_molecules({m}, (dir / "ok.jsonl").string());
  auto loaded = parse_molecules((dir / "ok.jsonl").string());
  CHECK(loaded.size() == 1);
  CHECK(loaded[0].atoms == m.atoms);

  {
    std::ofstream bad((dir / "bad.jsonl").string());
    bad << molecule_to_json(m) << "\n" << "{broken\n";
  }
  try {
    parse_molecules((dir / "bad.jsonl").string());
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("distances: 3-4-5 and zero diagonal") {
  Molecule m;
  m.id = "two";
  m.atoms = {0, 1};
  m.coords = {{0, 0, 0}, {3, 4, 0}};
  DistanceMatrix dm = distances(m);
  CHECK(dm.at(0, 1) == doctest::Approx(5.0));
  CHECK(dm.at(1, 0) == doctest::Approx(5.0));
  CHECK(dm.at(0, 0) == 0.0);
  CHECK(dm.at(1, 1) == 0.0);
}

TEST_CASE("distances match a direct recomputation and validate") {
  Molecule m = sample_molecule();
  DistanceMatrix dm = distances(m);
  dm.validate();
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) {
        double diff = m.coords[static_cast<size_t>(i)][static_cast<size_t>(k)] -
                      m.coords[static_cast<size_t>(j)][static_cast<size_t>(k)];
        s += diff * diff;
      }
      CHECK(std::fabs(dm.at(i, j) - std::sqrt(s)) <= 1e-6);
    }
}

TEST_CASE("distances are translation invariant and permutation equivariant") {
  Molecule m = sample_molecule();
  DistanceMatrix base = distances(m);

  Molecule shifted = m;
  for (auto& c : shifted.coords)
    for (int k = 0; k < 3; ++k) c[static_cast<size_t>(k)] += 17.5;
  DistanceMatrix ds = distances(shifted);
  for (int i = 0; i < base.n; ++i)
    for (int j = 0; j < base.n; ++j) CHECK(std::fabs(ds.at(i, j) - base.at(i, j)) <= 1e-9);

  std::vector<int> perm = {2, 0, 1, 5, 3, 4};
  DistanceMatrix dp = distances(permuted(m, perm));
  for (int i = 0; i < base.n; ++i)
    for (int j = 0; j < base.n; ++j)
      CHECK(std::fabs(dp.at(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]) -
                      base.at(i, j)) <= 1e-12);
}

TEST_CASE("structural_hash invariances") {
  Molecule m = sample_molecule();
  const uint64_t h = structural_hash(m);

  std::vector<int> perm = {3, 1, 4, 0, 5, 2};
  CHECK(structural_hash(permuted(m, perm)) == h);

  Molecule shifted = m;
  for (auto& c : shifted.coords) c[0] += 123.0;
  CHECK(structural_hash(shifted) == h);

  Molecule retyped = m;
  retyped.atoms[2] = 7;  // one atom type changes
  CHECK(structural_hash(retyped) != h);
}

TEST_CASE("structural_hash type-change collisions are rare on a synthetic corpus") {
  CorpusSpec spec;
  spec.n_molecules = 32;
  spec.seed = 5;
  auto mols = gen_molecules(spec);
  int collisions = 0, trials = 0;
  for (const auto& m : mols) {
    Molecule tweaked = m;
    tweaked.atoms[0] = (tweaked.atoms[0] + 1) % spec.atom_alphabet;
    ++trials;
    if (structural_hash(tweaked) == structural_hash(m)) ++collisions;
  }
  CHECK(trials == 32);
  CHECK(collisions == 0);
}

TEST_CASE("hash partitions the default corpus into enough groups for splitting") {
  CorpusSpec spec;  // default generator settings
  auto mols = gen_molecules(spec);
  std::set<uint64_t> groups;
  for (const auto& m : mols) groups.insert(structural_hash(m));
  CHECK(groups.size() >= 5);
}

TEST_CASE("linear notation round-trip and validity checker") {
  Molecule m = sample_molecule();
  std::string s = to_linear_notation(m);
  Molecule back;
  REQUIRE(parse_linear_notation(s, &back));
  CHECK(back.atoms == m.atoms);
  CHECK(back.bond_count() == m.bond_count());

  CHECK(parse_linear_notation("a1 a2 ; 0 - 1", nullptr));
  CHECK_FALSE(parse_linear_notation("", nullptr));
  CHECK_FALSE(parse_linear_notation("a1 a2 ; 0 - 5", nullptr));   // out of range
  CHECK_FALSE(parse_linear_notation("a1 a2 ; 0 - 0", nullptr));   // self bond
  CHECK_FALSE(parse_linear_notation("x9 a2", nullptr));           // bad atom token
  CHECK_FALSE(parse_linear_notation("a1 a2 ; 0 - 1 ; 0 - 1", nullptr));  // dup bond
}

}  // TEST_SUITE
