#include "costloss/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "costloss/rng.hpp"

namespace costloss {

PenaltyMatrix PenaltyMatrix::zero(int k) {
  if (k < 1) throw std::invalid_argument("PenaltyMatrix: class count must be >= 1");
  PenaltyMatrix a;
  a.k = k;
  a.entries.assign(static_cast<size_t>(k) * k, 0.0);
  return a;
}

std::vector<std::pair<int, int>> ErrorMask::true_cells() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(n);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      if (at(i, j)) out.emplace_back(i, j);
  return out;
}

SuperClassMap SuperClassMap::from_assignment(std::vector<int> assignment) {
  if (assignment.empty())
    throw std::invalid_argument("SuperClassMap: assignment must be nonempty");
  const int m = 1 + *std::max_element(assignment.begin(), assignment.end());
  std::vector<int> members(m, 0);
  for (size_t fine = 0; fine < assignment.size(); ++fine) {
    const int s = assignment[fine];
    if (s < 0)
      throw std::invalid_argument("SuperClassMap: negative super-class index for fine class " +
                                  std::to_string(fine));
    ++members[s];
  }
  for (int s = 0; s < m; ++s)
    if (members[s] == 0)
      throw std::invalid_argument("SuperClassMap: super-class " + std::to_string(s) +
                                  " has no members (indices must be contiguous 0..m-1)");
  SuperClassMap map;
  map.assignment = std::move(assignment);
  map.m = m;
  return map;
}

SuperClassMap SuperClassMap::blocks(int k, int m) {
  if (k < 1 || m < 1 || k % m != 0)
    throw std::invalid_argument("SuperClassMap::blocks: k must be a positive multiple of m (k=" +
                                std::to_string(k) + ", m=" + std::to_string(m) + ")");
  const int g = k / m;
  std::vector<int> assignment(k);
  for (int c = 0; c < k; ++c) assignment[c] = c / g;
  return from_assignment(std::move(assignment));
}

ErrorMask random_mask(int k, int n, uint64_t seed) {
  if (k < 1) throw std::invalid_argument("random_mask: class count must be >= 1");
  const long long max_n = static_cast<long long>(k) * (k - 1);
  if (n < 0 || n > max_n)
    throw std::invalid_argument("random_mask: n=" + std::to_string(n) +
                                " out of range [0, k(k-1)=" + std::to_string(max_n) + "]");

  // Seeded shuffle of the off-diagonal cell list; the first n cells win.
  std::vector<int> cells;
  cells.reserve(max_n);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      if (i != j) cells.push_back(i * k + j);
  Rng rng(seed);
  shuffle(cells, rng);

  ErrorMask mask;
  mask.k = k;
  mask.n = n;
  mask.cells.assign(static_cast<size_t>(k) * k, 0);
  for (int t = 0; t < n; ++t) mask.cells[cells[t]] = 1;
  return mask;
}

PenaltyMatrix mask_to_penalty(const ErrorMask& mask, double cost) {
  if (!(cost > 0.0))
    throw std::invalid_argument("mask_to_penalty: cost must be > 0, got " + std::to_string(cost));
  PenaltyMatrix a = PenaltyMatrix::zero(mask.k);
  for (size_t idx = 0; idx < mask.cells.size(); ++idx)
    if (mask.cells[idx]) a.entries[idx] = cost;
  return a;
}

PenaltyMatrix hierarchical_penalty(const SuperClassMap& map, double within_cost,
                                   double across_cost) {
  if (within_cost < 0.0)
    throw std::invalid_argument("hierarchical_penalty: within_cost must be >= 0");
  if (within_cost > across_cost)
    throw std::invalid_argument(
        "hierarchical_penalty: within_cost > across_cost would invert the containment objective");
  const int k = map.k();
  PenaltyMatrix a = PenaltyMatrix::zero(k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      a.at(i, j) = map.super_of(i) == map.super_of(j) ? within_cost : across_cost;
    }
  return a;
}

std::vector<PenaltyViolation> validate_penalty(const PenaltyMatrix& a) {
  std::vector<PenaltyViolation> violations;
  for (int i = 0; i < a.k; ++i)
    for (int j = 0; j < a.k; ++j) {
      const double v = a.at(i, j);
      if (v < 0.0 || !std::isfinite(v))
        violations.push_back({i, j, v, "negative or non-finite entry"});
      else if (i == j && v != 0.0)
        violations.push_back({i, j, v, "nonzero diagonal entry"});
    }
  return violations;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_penalty_csv(const PenaltyMatrix& a, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_penalty_csv: cannot open " + path);
  for (int i = 0; i < a.k; ++i) {
    for (int j = 0; j < a.k; ++j) {
      if (j) out << ',';
      out << format_double(a.at(i, j));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_penalty_csv: write failed for " + path);
}

PenaltyMatrix load_penalty_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_penalty_csv: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      size_t pos = 0;
      const double v = std::stod(field, &pos);
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("load_penalty_csv: empty file " + path);
  const int k = static_cast<int>(rows.size());
  PenaltyMatrix a = PenaltyMatrix::zero(k);
  for (int i = 0; i < k; ++i) {
    if (static_cast<int>(rows[i].size()) != k)
      throw std::runtime_error("load_penalty_csv: row " + std::to_string(i) + " has " +
                               std::to_string(rows[i].size()) + " fields, expected " +
                               std::to_string(k));
    for (int j = 0; j < k; ++j) a.at(i, j) = rows[i][j];
  }
  return a;
}

SuperClassMap load_super_class_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_super_class_map: cannot open " + path);
  std::vector<std::pair<int, int>> pairs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    int fine = -1, super = -1;
    if (!(ss >> fine >> super))
      throw std::runtime_error("load_super_class_map: malformed line " + std::to_string(line_no) +
                               " in " + path);
    pairs.emplace_back(fine, super);
  }
  if (pairs.empty()) throw std::runtime_error("load_super_class_map: empty file " + path);
  const int k = static_cast<int>(pairs.size());
  std::vector<int> assignment(k, -1);
  for (const auto& [fine, super] : pairs) {
    if (fine < 0 || fine >= k)
      throw std::runtime_error("load_super_class_map: fine index " + std::to_string(fine) +
                               " outside 0.." + std::to_string(k - 1));
    if (assignment[fine] != -1)
      throw std::runtime_error("load_super_class_map: duplicate fine index " +
                               std::to_string(fine));
    assignment[fine] = super;
  }
  return SuperClassMap::from_assignment(std::move(assignment));
}

void save_super_class_map(const SuperClassMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_super_class_map: cannot open " + path);
  for (int fine = 0; fine < map.k(); ++fine)
    out << fine << '\t' << map.super_of(fine) << '\n';
  if (!out) throw std::runtime_error("save_super_class_map: write failed for " + path);
}

}  // namespace costloss
