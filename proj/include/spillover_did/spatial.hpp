#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "spillover_did/errors.hpp"
#include "spillover_did/panel.hpp"

namespace spillover_did {

inline constexpr double kEarthRadiusMiles = 3958.8;
inline constexpr double kInfDistance = std::numeric_limits<double>::infinity();

enum class Metric { planar, haversine };

// Great-circle distance in miles; inputs in degrees.
inline double haversine_miles(double lon1, double lat1, double lon2,
                              double lat2) {
  constexpr double deg = 3.14159265358979323846 / 180.0;
  const double dlat = (lat2 - lat1) * deg;
  const double dlon = (lon2 - lon1) * deg;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * deg) * std::cos(lat2 * deg) *
                       std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusMiles *
         std::asin(std::min(1.0, std::sqrt(a)));
}

// Unit coordinates with a fixed metric. Planar coordinates are interpreted
// as miles; spherical coordinates as (lon, lat) degrees with distances
// reported in miles. Immutable after construction.
class PointSet {
 public:
  PointSet() = default;
  explicit PointSet(Metric metric) : metric_(metric) {}

  Metric metric() const { return metric_; }
  int size() const { return static_cast<int>(ids_.size()); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::string& id(int i) const { return ids_[i]; }
  double x(int i) const { return x_[i]; }
  double y(int i) const { return y_[i]; }

  int index_of(const std::string& id) const {
    auto it = lookup_.find(id);
    return it == lookup_.end() ? -1 : it->second;
  }

  int add(const std::string& id, double x, double y) {
    if (lookup_.count(id))
      fail(errc::duplicate_key, "duplicate coordinates for unit '" + id + "'");
    if (!std::isfinite(x) || !std::isfinite(y))
      fail(errc::invalid_coordinates, "non-finite coordinates for unit '" + id + "'");
    if (metric_ == Metric::haversine) {
      if (y < -90.0 || y > 90.0)
        fail(errc::invalid_coordinates,
             "latitude out of range for unit '" + id + "'");
      if (x < -180.0 || x > 180.0)
        fail(errc::invalid_coordinates,
             "longitude out of range for unit '" + id + "'");
    }
    int idx = static_cast<int>(ids_.size());
    ids_.push_back(id);
    lookup_.emplace(id, idx);
    x_.push_back(x);
    y_.push_back(y);
    return idx;
  }

  double distance(int i, int j) const {
    if (metric_ == Metric::planar) {
      const double dx = x_[i] - x_[j];
      const double dy = y_[i] - y_[j];
      return std::sqrt(dx * dx + dy * dy);
    }
    return haversine_miles(x_[i], y_[i], x_[j], y_[j]);
  }

  double distance(const std::string& a, const std::string& b) const {
    const int i = require(a);
    const int j = require(b);
    return distance(i, j);
  }

  int require(const std::string& id) const {
    const int i = index_of(id);
    if (i < 0) fail(errc::unknown_unit, "unknown unit '" + id + "'");
    return i;
  }

 private:
  Metric metric_ = Metric::planar;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, int> lookup_;
  std::vector<double> x_, y_;
};

inline PointSet load_points(std::istream& in, Metric metric,
                            const std::string& unit_col,
                            const std::string& x_col, const std::string& y_col,
                            char delimiter = ',') {
  std::string header_line;
  if (!std::getline(in, header_line))
    fail(errc::io_error, "empty coordinates input: no header row");
  const auto header = detail::split_line(header_line, delimiter);
  auto column = [&](const std::string& name) {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    fail(errc::missing_column,
         "column '" + name + "' not found in coordinates header");
    return -1;
  };
  const int cu = column(unit_col), cx = column(x_col), cy = column(y_col);

  PointSet pts(metric);
  std::string line;
  long row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto f = detail::split_line(line, delimiter);
    if (static_cast<int>(f.size()) <= std::max({cu, cx, cy}))
      fail(errc::io_error,
           "coordinates row " + std::to_string(row) + ": too few fields");
    double x = 0, y = 0;
    if (!detail::parse_double(f[cx], &x) || !detail::parse_double(f[cy], &y))
      fail(errc::io_error,
           "coordinates row " + std::to_string(row) + ": cannot parse coordinates");
    pts.add(f[cu], x, y);
  }
  return pts;
}

// Minimum distance from unit i to a treated unit other than itself; +inf when
// no such unit exists.
inline double nearest_treated_distance(const PointSet& points,
                                       const std::vector<int>& treated,
                                       int i) {
  if (i < 0 || i >= points.size())
    fail(errc::unknown_unit, "nearest_treated_distance: unit index out of range");
  double best = kInfDistance;
  for (int j : treated) {
    if (j == i) continue;
    best = std::min(best, points.distance(i, j));
  }
  return best;
}

// Uniform-grid bucket index for radius queries. The cell size defaults to the
// query radius in use; correctness never depends on the cell size. For the
// spherical metric cells live in degree space and candidate ranges are
// conservative bounding boxes, with the exact distance applied afterwards.
class SpatialIndex {
 public:
  SpatialIndex(const PointSet& points, double cell_size_miles)
      : points_(&points) {
    if (!(cell_size_miles > 0)) cell_size_miles = 1.0;
    if (points.metric() == Metric::planar) {
      cell_ = cell_size_miles;
    } else {
      cell_ = cell_size_miles / miles_per_degree();
    }
    for (int i = 0; i < points.size(); ++i)
      cells_[key_of(cell_x(i), cell_y(i))].push_back(i);
  }

  // All units j != i with d(i, j) < radius, ascending by index. Matches a
  // brute-force pairwise scan exactly.
  std::vector<int> within(int i, double radius) const {
    if (i < 0 || i >= points_->size())
      fail(errc::unknown_unit, "within: unit index out of range");
    if (radius < 0) fail(errc::negative_radius, "within: negative radius");
    std::vector<int> out;
    if (radius == 0) return out;

    const PointSet& pts = *points_;
    if (pts.metric() == Metric::planar) {
      const int span = static_cast<int>(std::floor(radius / cell_)) + 1;
      const long cx = cell_x(i), cy = cell_y(i);
      for (long gx = cx - span; gx <= cx + span; ++gx)
        for (long gy = cy - span; gy <= cy + span; ++gy)
          scan_cell(gx, gy, i, radius, &out);
    } else {
      const double dlat = radius / miles_per_degree();
      const double lat = pts.y(i);
      const double lat_lo = lat - dlat, lat_hi = lat + dlat;
      // Widest longitude span over the latitude band, with margin.
      const double max_abs_lat =
          std::min(89.9999, std::max(std::abs(lat_lo), std::abs(lat_hi)));
      double dlon;
      const double cos_band = std::cos(max_abs_lat * 3.14159265358979323846 / 180.0);
      if (lat_lo <= -90.0 || lat_hi >= 90.0 || cos_band < 1e-9)
        dlon = 360.0;
      else
        dlon = std::min(360.0, dlat / cos_band * 1.0000001);

      const long cy_lo = static_cast<long>(std::floor(lat_lo / cell_));
      const long cy_hi = static_cast<long>(std::floor(lat_hi / cell_));
      const long cx0 = cell_x(i);
      const long span_x = static_cast<long>(std::floor(dlon / cell_)) + 1;
      const long n_lon_cells = static_cast<long>(std::ceil(360.0 / cell_)) + 1;
      for (long gy = cy_lo; gy <= cy_hi; ++gy) {
        if (2 * span_x + 1 >= n_lon_cells) {
          // Near-polar band: scan every longitude cell in this row.
          for (const auto& kv : cells_)
            if (static_cast<long>(static_cast<std::int32_t>(kv.first & 0xffffffffu)) == gy)
              scan_bucket(kv.second, i, radius, &out);
        } else {
          for (long gx = cx0 - span_x; gx <= cx0 + span_x; ++gx) {
            // Wrap candidate columns into [-180, 180) degree cells.
            long wrapped = gx;
            const long width = static_cast<long>(std::ceil(360.0 / cell_));
            while (wrapped * cell_ < -180.0 - cell_) wrapped += width;
            while (wrapped * cell_ > 180.0 + cell_) wrapped -= width;
            scan_cell(wrapped, gy, i, radius, &out);
            if (wrapped != gx) scan_cell(gx, gy, i, radius, &out);
          }
        }
      }
      std::sort(out.begin(), out.end());
      out.erase(std::unique(out.begin(), out.end()), out.end());
      return out;
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  static double miles_per_degree() {
    return kEarthRadiusMiles * 3.14159265358979323846 / 180.0;
  }

  long cell_x(int i) const {
    return static_cast<long>(std::floor(points_->x(i) / cell_));
  }
  long cell_y(int i) const {
    return static_cast<long>(std::floor(points_->y(i) / cell_));
  }

  static std::uint64_t key_of(long cx, long cy) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(cx)) << 32) |
           static_cast<std::uint64_t>(static_cast<std::uint32_t>(cy));
  }

  void scan_cell(long gx, long gy, int i, double radius,
                 std::vector<int>* out) const {
    auto it = cells_.find(key_of(gx, gy));
    if (it == cells_.end()) return;
    scan_bucket(it->second, i, radius, out);
  }

  void scan_bucket(const std::vector<int>& bucket, int i, double radius,
                   std::vector<int>* out) const {
    for (int j : bucket)
      if (j != i && points_->distance(i, j) < radius) out->push_back(j);
  }

  const PointSet* points_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

// ---------------------------------------------------------------------------
// Distances keyed by panel unit index
// ---------------------------------------------------------------------------

// Exposure construction and spatial covariance both consume pairwise
// distances between panel units; the source can be coordinates or a
// precomputed long-form matrix.
class DistanceProvider {
 public:
  virtual ~DistanceProvider() = default;
  virtual int size() const = 0;
  virtual double between(int unit_a, int unit_b) const = 0;
};

class PointDistance final : public DistanceProvider {
 public:
  PointDistance(const PanelDataset& panel, const PointSet& points)
      : points_(&points) {
    point_of_.resize(panel.n_units());
    for (int u = 0; u < panel.n_units(); ++u) {
      const int p = points.index_of(panel.unit_id(u));
      if (p < 0)
        fail(errc::missing_coordinates,
             "no coordinates for unit '" + panel.unit_id(u) + "'");
      point_of_[u] = p;
    }
  }

  int size() const override { return static_cast<int>(point_of_.size()); }
  double between(int a, int b) const override {
    return points_->distance(point_of_[a], point_of_[b]);
  }
  const PointSet& points() const { return *points_; }
  int point_of(int unit) const { return point_of_[unit]; }

 private:
  const PointSet* points_;
  std::vector<int> point_of_;
};

// Long-form (unit_i, unit_j, distance) input. Pairs are symmetric; absent
// pairs are treated as infinitely far apart, i.e. outside every radius.
class MatrixDistance final : public DistanceProvider {
 public:
  explicit MatrixDistance(const PanelDataset& panel)
      : n_(panel.n_units()), panel_(&panel) {}

  void set(int a, int b, double d) {
    if (!(d >= 0) || !std::isfinite(d))
      fail(errc::invalid_argument, "distances must be finite and non-negative");
    dist_[pair_key(a, b)] = d;
  }

  static MatrixDistance load(std::istream& in, const PanelDataset& panel,
                             char delimiter = ',') {
    MatrixDistance m(panel);
    std::string header_line;
    if (!std::getline(in, header_line))
      fail(errc::io_error, "empty distance input: no header row");
    std::string line;
    long row = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      ++row;
      const auto f = detail::split_line(line, delimiter);
      if (f.size() < 3)
        fail(errc::io_error,
             "distance row " + std::to_string(row) + ": expected unit_i,unit_j,distance");
      const int a = panel.unit_index(f[0]);
      const int b = panel.unit_index(f[1]);
      if (a < 0 || b < 0) continue;  // pairs outside the panel are ignored
      double d = 0;
      if (!detail::parse_double(f[2], &d))
        fail(errc::io_error,
             "distance row " + std::to_string(row) + ": cannot parse distance");
      m.set(a, b, d);
    }
    return m;
  }

  int size() const override { return n_; }
  double between(int a, int b) const override {
    if (a == b) return 0.0;
    auto it = dist_.find(pair_key(a, b));
    return it == dist_.end() ? kInfDistance : it->second;
  }

 private:
  static std::uint64_t pair_key(int a, int b) {
    const std::uint32_t lo = static_cast<std::uint32_t>(std::min(a, b));
    const std::uint32_t hi = static_cast<std::uint32_t>(std::max(a, b));
    return (static_cast<std::uint64_t>(hi) << 32) | lo;
  }

  int n_;
  const PanelDataset* panel_;
  std::unordered_map<std::uint64_t, double> dist_;
};

}  // namespace spillover_did
