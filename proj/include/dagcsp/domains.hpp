#pragma once

#include "dagcsp/common.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dagcsp {

// Axis-aligned interval domain; the only set representation used anywhere.
struct Box {
  Vec lo;
  Vec hi;

  Box() = default;
  Box(Vec lo_, Vec hi_);

  Index dim() const { return lo.size(); }
  Vec width() const { return hi - lo; }
  Vec midpoint() const { return 0.5 * (lo + hi); }

  static Box unit(Index d);
  // empty (0-dim) box, used as the input domain of root nodes
  static Box empty() { return Box(); }

  // componentwise intersection; dims must match
  Box intersect(const Box& other) const;
  Box concat(const Box& other) const;
  Vec clamp(const Vec& x) const;
};

bool contains(const Box& box, const Vec& point);

// Smallest box containing all rows, each width grown by inflation_fraction
// times the observed range. Zero-range dimensions get an absolute 1e-9 floor.
Box interval_hull(const Mat& points, double inflation_fraction);

Box box_product(std::span<const Box> boxes);
Box box_product(std::initializer_list<Box> boxes);

enum class RoleKind { Param, Input, LiftZ, LiftEps };

// Tags a contiguous column span of a SampleSet: node parameters, edge inputs,
// or coupling-parameter lifts.
struct ColumnRole {
  RoleKind kind = RoleKind::Param;
  int node = -1;       // owning node (Param) or receiving node (Input)
  int from_node = -1;  // source node for Input columns
  Index begin = 0;
  Index count = 0;

  bool operator==(const ColumnRole&) const = default;
};

std::string role_column_name(const ColumnRole& role, Index offset);

// Labeled point set. Label -1 means feasible, +1 infeasible.
// n_evaluations records the constituent-function evaluations spent producing it.
struct SampleSet {
  Mat points;                // K x d
  Eigen::VectorXi labels;    // K
  std::int64_t n_evaluations = 0;
  std::vector<ColumnRole> roles;

  Index size() const { return points.rows(); }
  Index dim() const { return points.cols(); }

  Index feasible_count() const;
  Mat feasible_points() const;

  void validate() const;
};

// Retains the columns whose role satisfies `keep`; labels and provenance carry through.
SampleSet project(const SampleSet& samples, const std::function<bool(const ColumnRole&)>& keep);

// Convenience: project onto the Param columns of one node.
SampleSet project_params(const SampleSet& samples, int node);

void write_csv(const SampleSet& samples, const std::filesystem::path& path);
SampleSet read_csv(const std::filesystem::path& path);

}  // namespace dagcsp
