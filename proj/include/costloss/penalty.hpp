// penalty.hpp
//
// Penalty matrices: the k x k cost matrix applied to misclassifications,
// random error masks for error-location experiments, and hierarchical
// (super-class) cost matrices. All values are immutable after construction
// and safe to share across concurrent runs.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace costloss {

// Non-negative k x k cost matrix; entry (i, j) is the relative cost of
// predicting class j when the true class is i. Diagonal is zero.
struct PenaltyMatrix {
  int k = 0;
  std::vector<double> entries;  // row-major, k*k

  double at(int i, int j) const { return entries[static_cast<size_t>(i) * k + j]; }
  double& at(int i, int j) { return entries[static_cast<size_t>(i) * k + j]; }

  static PenaltyMatrix zero(int k);
};

// Boolean k x k matrix with exactly n true off-diagonal cells.
struct ErrorMask {
  int k = 0;
  int n = 0;
  std::vector<uint8_t> cells;  // row-major, k*k

  bool at(int i, int j) const { return cells[static_cast<size_t>(i) * k + j] != 0; }
  // True cells in row-major order, as (row, col) pairs.
  std::vector<std::pair<int, int>> true_cells() const;
};

// Fine-class -> super-class assignment. Super-class indices are contiguous
// 0..m-1 and every super-class has at least one member.
struct SuperClassMap {
  std::vector<int> assignment;  // size k
  int m = 0;

  int k() const { return static_cast<int>(assignment.size()); }
  int super_of(int fine) const { return assignment[fine]; }

  // Validates contiguity and non-empty super-classes.
  static SuperClassMap from_assignment(std::vector<int> assignment);
  // Block grouping: classes [s*g, (s+1)*g) -> super-class s, g = k/m.
  static SuperClassMap blocks(int k, int m);
};

struct PenaltyViolation {
  int row = 0;
  int col = 0;
  double value = 0.0;
  std::string what;
};

// Uniformly random choice of n distinct off-diagonal cells; deterministic
// for a fixed seed.
ErrorMask random_mask(int k, int n, uint64_t seed);

// cost at masked cells, 0 elsewhere. cost must be > 0.
PenaltyMatrix mask_to_penalty(const ErrorMask& mask, double cost);

// 0 on the diagonal, within_cost for same-super-class pairs, across_cost
// otherwise. Requires 0 <= within_cost <= across_cost.
PenaltyMatrix hierarchical_penalty(const SuperClassMap& map, double within_cost,
                                   double across_cost);

// Reports every negative entry and nonzero diagonal entry; empty means ok.
std::vector<PenaltyViolation> validate_penalty(const PenaltyMatrix& a);

// CSV: k rows of k comma-separated reals, full double precision.
void save_penalty_csv(const PenaltyMatrix& a, const std::string& path);
PenaltyMatrix load_penalty_csv(const std::string& path);

// Map file: one "fine<TAB>super" line per fine class, 0-based, covering
// 0..k-1 exactly once.
SuperClassMap load_super_class_map(const std::string& path);
void save_super_class_map(const SuperClassMap& map, const std::string& path);

}  // namespace costloss
