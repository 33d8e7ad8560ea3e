#include "dagcsp/domains.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace dagcsp {

namespace {
constexpr double kDegenerateFloor = 1e-9;
}

Box::Box(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != hi.size()) throw DimensionMismatch("box lo/hi length mismatch");
  for (Index i = 0; i < lo.size(); ++i)
    if (!(lo[i] <= hi[i])) throw Error("box has lo > hi in dimension " + std::to_string(i));
}

Box Box::unit(Index d) { return Box(Vec::Zero(d), Vec::Ones(d)); }

Box Box::intersect(const Box& other) const {
  if (other.dim() != dim()) throw DimensionMismatch("box intersect dim mismatch");
  Vec l = lo.cwiseMax(other.lo);
  Vec h = hi.cwiseMin(other.hi);
  for (Index i = 0; i < l.size(); ++i)
    if (l[i] > h[i]) h[i] = l[i];  // collapse to a point rather than go empty
  return Box(std::move(l), std::move(h));
}

Box Box::concat(const Box& other) const {
  Vec l(dim() + other.dim()), h(dim() + other.dim());
  l << lo, other.lo;
  h << hi, other.hi;
  return Box(std::move(l), std::move(h));
}

Vec Box::clamp(const Vec& x) const {
  if (x.size() != dim()) throw DimensionMismatch("clamp dim mismatch");
  return x.cwiseMax(lo).cwiseMin(hi);
}

bool contains(const Box& box, const Vec& point) {
  if (point.size() != box.dim()) throw DimensionMismatch("contains: point/box dim mismatch");
  return (point.array() >= box.lo.array()).all() && (point.array() <= box.hi.array()).all();
}

Box interval_hull(const Mat& points, double inflation_fraction) {
  if (points.rows() == 0) throw EmptyPointSet("interval_hull of empty point set");
  if (inflation_fraction < 0) throw Error("negative inflation fraction");
  Vec lo = points.colwise().minCoeff();
  Vec hi = points.colwise().maxCoeff();
  for (Index i = 0; i < lo.size(); ++i) {
    const double range = hi[i] - lo[i];
    const double pad = range > 0 ? 0.5 * inflation_fraction * range : kDegenerateFloor;
    lo[i] -= pad;
    hi[i] += pad;
  }
  return Box(std::move(lo), std::move(hi));
}

Box box_product(std::span<const Box> boxes) {
  if (boxes.empty()) throw Error("box_product of no boxes");
  Index d = 0;
  for (const auto& b : boxes) d += b.dim();
  Vec lo(d), hi(d);
  Index at = 0;
  for (const auto& b : boxes) {
    lo.segment(at, b.dim()) = b.lo;
    hi.segment(at, b.dim()) = b.hi;
    at += b.dim();
  }
  return Box(std::move(lo), std::move(hi));
}

Box box_product(std::initializer_list<Box> boxes) {
  std::vector<Box> v(boxes);
  return box_product(std::span<const Box>(v));
}

std::string role_column_name(const ColumnRole& role, Index offset) {
  switch (role.kind) {
    case RoleKind::Param:
      return "v" + std::to_string(role.node) + "_" + std::to_string(offset);
    case RoleKind::Input:
      return "u" + std::to_string(role.node) + "_f" + std::to_string(role.from_node) + "_" +
             std::to_string(offset);
    case RoleKind::LiftZ:
      return "z_" + std::to_string(offset);
    case RoleKind::LiftEps:
      return "eps_" + std::to_string(offset);
  }
  return "c_" + std::to_string(offset);
}

Index SampleSet::feasible_count() const { return (labels.array() == -1).count(); }

Mat SampleSet::feasible_points() const {
  Mat out(feasible_count(), dim());
  Index at = 0;
  for (Index i = 0; i < size(); ++i)
    if (labels[i] == -1) out.row(at++) = points.row(i);
  return out;
}

void SampleSet::validate() const {
  if (labels.size() != points.rows()) throw Error("sample set labels/points length mismatch");
  if (n_evaluations < size()) throw Error("sample set n_evaluations below sample count");
  Index covered = 0;
  for (const auto& r : roles) {
    if (r.begin != covered) throw Error("sample set roles not contiguous");
    covered += r.count;
  }
  if (covered != dim()) throw Error("sample set roles do not cover all columns");
}

SampleSet project(const SampleSet& samples,
                  const std::function<bool(const ColumnRole&)>& keep) {
  std::vector<ColumnRole> kept;
  std::vector<Index> cols;
  Index at = 0;
  for (const auto& role : samples.roles) {
    if (keep(role)) {
      ColumnRole nr = role;
      nr.begin = at;
      kept.push_back(nr);
      for (Index c = 0; c < role.count; ++c) cols.push_back(role.begin + c);
      at += role.count;
    }
  }
  if (kept.empty()) throw UnknownRole("projection keeps no columns");
  SampleSet out;
  out.points.resize(samples.size(), static_cast<Index>(cols.size()));
  for (Index c = 0; c < static_cast<Index>(cols.size()); ++c)
    out.points.col(c) = samples.points.col(cols[c]);
  out.labels = samples.labels;
  out.n_evaluations = samples.n_evaluations;
  out.roles = std::move(kept);
  return out;
}

SampleSet project_params(const SampleSet& samples, int node) {
  return project(samples, [node](const ColumnRole& r) {
    return r.kind == RoleKind::Param && r.node == node;
  });
}

void write_csv(const SampleSet& samples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  bool first = true;
  for (const auto& role : samples.roles)
    for (Index c = 0; c < role.count; ++c) {
      if (!first) out << ",";
      out << role_column_name(role, c);
      first = false;
    }
  out << ",label\n";
  out.precision(17);
  for (Index i = 0; i < samples.size(); ++i) {
    for (Index c = 0; c < samples.dim(); ++c) out << samples.points(i, c) << ",";
    out << samples.labels[i] << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

ColumnRole parse_role_name(const std::string& name) {
  ColumnRole role;
  auto num_after = [&](std::size_t pos, std::size_t end) {
    int value = 0;
    auto res = std::from_chars(name.data() + pos, name.data() + end, value);
    if (res.ec != std::errc()) throw IoError("bad CSV column name: " + name);
    return value;
  };
  const auto us = name.rfind('_');
  if (us == std::string::npos) throw IoError("bad CSV column name: " + name);
  if (name.starts_with("z_")) {
    role.kind = RoleKind::LiftZ;
  } else if (name.starts_with("eps_")) {
    role.kind = RoleKind::LiftEps;
  } else if (name.starts_with("v")) {
    role.kind = RoleKind::Param;
    role.node = num_after(1, us);
  } else if (name.starts_with("u")) {
    role.kind = RoleKind::Input;
    const auto f = name.find("_f");
    if (f == std::string::npos) throw IoError("bad CSV column name: " + name);
    role.node = num_after(1, f);
    role.from_node = num_after(f + 2, us);
  } else {
    throw IoError("bad CSV column name: " + name);
  }
  return role;
}

}  // namespace

SampleSet read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV " + path.string());

  std::vector<std::string> headers;
  {
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) headers.push_back(item);
  }
  if (headers.empty() || headers.back() != "label")
    throw IoError("CSV missing trailing label column: " + path.string());
  const Index d = static_cast<Index>(headers.size()) - 1;

  SampleSet out;
  for (Index c = 0; c < d; ++c) {
    ColumnRole role = parse_role_name(headers[c]);
    if (!out.roles.empty() && out.roles.back().kind == role.kind &&
        out.roles.back().node == role.node && out.roles.back().from_node == role.from_node) {
      out.roles.back().count += 1;
    } else {
      role.begin = c;
      role.count = 1;
      out.roles.push_back(role);
    }
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string item;
    std::vector<double> row;
    while (std::getline(ss, item, ',')) row.push_back(std::stod(item));
    if (static_cast<Index>(row.size()) != d + 1)
      throw IoError("CSV row width mismatch in " + path.string());
    labels.push_back(static_cast<int>(row.back()));
    row.pop_back();
    rows.push_back(std::move(row));
  }
  out.points.resize(static_cast<Index>(rows.size()), d);
  out.labels.resize(static_cast<Index>(rows.size()));
  for (Index i = 0; i < out.points.rows(); ++i) {
    for (Index c = 0; c < d; ++c) out.points(i, c) = rows[i][c];
    out.labels[i] = labels[i];
  }
  out.n_evaluations = out.size();
  return out;
}

}  // namespace dagcsp
