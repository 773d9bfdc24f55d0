#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mvmol/error.hpp"

namespace mvmol {

/// Molecular structure: atom types over a small abstract alphabet, an
/// undirected bond list, and 3D coordinates per atom. Immutable value object.
struct Molecule {
  std::string id;
  std::vector<int> atoms;                    // atom-type ids in [0, A)
  std::vector<std::array<int, 2>> bonds;     // deduplicated unordered pairs
  std::vector<std::array<double, 3>> coords; // one row per atom

  int atom_count() const { return static_cast<int>(atoms.size()); }
  int bond_count() const { return static_cast<int>(bonds.size()); }

  /// Throws Validation on any invariant breach; with strict also requires
  /// the bond graph to be connected.
  void validate(bool strict = false) const;

  int connected_components() const;
  /// Cyclomatic number |E| - |V| + components.
  int ring_count() const;
  std::vector<int> degree_sequence_sorted() const;
};

/// Symmetric pairwise Euclidean distances with zero diagonal.
struct DistanceMatrix {
  int n = 0;
  std::vector<double> d;  // row-major n x n

  double at(int i, int j) const { return d[static_cast<size_t>(i) * n + j]; }
  /// Checks the structural invariants (diagonal, symmetry, sampled triangle
  /// inequality); intended for tests and debug paths.
  void validate() const;
};

DistanceMatrix distances(const Molecule& m);

/// 64-bit key over (atom-type histogram, sorted degree sequence, ring count).
/// Invariant under atom relabeling and any change of coordinates; used for
/// scaffold-style split grouping.
uint64_t structural_hash(const Molecule& m);

/// JSON-lines io. One object per line: {"id","atoms","bonds","coords"}.
std::vector<Molecule> parse_molecules(const std::string& path, bool strict = false);
Molecule parse_molecule_line(const std::string& line, int line_no, bool strict = false);
std::string molecule_to_json(const Molecule& m);
void write_molecules(const std::vector<Molecule>& mols, const std::string& path);

/// Linear text notation: atom-type tokens in index order, then bond pairs,
/// e.g. "a3 a1 a0 ; 0 - 1 ; 1 - 2". Coordinates are not represented.
std::string to_linear_notation(const Molecule& m);

/// Total validity checker for generated strings; on success fills atoms and
/// bonds (coords zeroed) and returns true.
bool parse_linear_notation(const std::string& text, Molecule* out);

}  // namespace mvmol
