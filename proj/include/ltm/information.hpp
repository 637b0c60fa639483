#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "ltm/dataset.hpp"
#include "ltm/error.hpp"
#include "ltm/inference.hpp"
#include "ltm/model.hpp"

namespace ltm {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Smoothed empirical joint P(x, y), row-major |x| x |y|.
inline std::vector<double> empirical_joint(const WeightedDataset& data, int x, int y,
                                           double smoothing = 0.0) {
  const int cx = data.variables()[x].cardinality, cy = data.variables()[y].cardinality;
  std::vector<double> joint(static_cast<std::size_t>(cx) * cy, smoothing);
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    const auto row = data.row(r);
    joint[row[x] * cy + row[y]] += static_cast<double>(data.weight(r));
  }
  const double total = std::accumulate(joint.begin(), joint.end(), 0.0);
  for (double& p : joint) p /= total;
  return joint;
}

// Mutual information (nats) of a joint probability matrix.
inline double mutual_information(const std::vector<double>& joint, int cx, int cy) {
  std::vector<double> px(cx, 0.0), py(cy, 0.0);
  for (int i = 0; i < cx; ++i)
    for (int j = 0; j < cy; ++j) {
      px[i] += joint[i * cy + j];
      py[j] += joint[i * cy + j];
    }
  double mi = 0.0;
  for (int i = 0; i < cx; ++i)
    for (int j = 0; j < cy; ++j) {
      const double p = joint[i * cy + j];
      if (p > 0.0) mi += p * std::log(p / (px[i] * py[j]));
    }
  return std::max(0.0, mi);
}

inline double empirical_mutual_information(const WeightedDataset& data, std::string_view x,
                                           std::string_view y, double smoothing = 0.0) {
  const int ix = data.require_index(x), iy = data.require_index(y);
  return mutual_information(empirical_joint(data, ix, iy, smoothing),
                            data.variables()[ix].cardinality, data.variables()[iy].cardinality);
}

// d(x,y) = -ln(|det J| / sqrt(det Dx det Dy)) for a joint probability matrix
// J. When the cardinalities differ, J is restricted to the most probable
// states of the larger variable so that it is square.
inline double information_distance_from_joint(const std::vector<double>& joint, int cx, int cy) {
  std::vector<double> px(cx, 0.0), py(cy, 0.0);
  for (int i = 0; i < cx; ++i)
    for (int j = 0; j < cy; ++j) {
      px[i] += joint[i * cy + j];
      py[j] += joint[i * cy + j];
    }
  const int k = std::min(cx, cy);
  auto top_states = [k](const std::vector<double>& p) {
    std::vector<int> idx(p.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return p[a] > p[b]; });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
  };
  const auto sx = top_states(px), sy = top_states(py);
  Eigen::MatrixXd j(k, k);
  double log_dx = 0.0, log_dy = 0.0;
  for (int a = 0; a < k; ++a) {
    if (!(px[sx[a]] > 0.0) || !(py[sy[a]] > 0.0))
      throw NumericError("information distance undefined: zero-probability state");
    log_dx += std::log(px[sx[a]]);
    log_dy += std::log(py[sy[a]]);
    for (int b = 0; b < k; ++b) j(a, b) = joint[sx[a] * cy + sy[b]];
  }
  const double det = std::abs(j.partialPivLu().determinant());
  if (!(det > 0.0)) return kInfinity;
  return std::max(0.0, -(std::log(det) - 0.5 * (log_dx + log_dy)));
}

inline double information_distance(const WeightedDataset& data, std::string_view x,
                                   std::string_view y, double smoothing = 0.0) {
  const int ix = data.require_index(x), iy = data.require_index(y);
  return information_distance_from_joint(empirical_joint(data, ix, iy, smoothing),
                                         data.variables()[ix].cardinality,
                                         data.variables()[iy].cardinality);
}

// Population distance between two nodes of a model.
inline double information_distance(const LatentTreeModel& m, int u, int v,
                                   const std::vector<std::vector<double>>& mu) {
  if (u == v) return 0.0;
  return information_distance_from_joint(pairwise_joint(m, u, v, mu), m.cardinality(u),
                                         m.cardinality(v));
}

// Symmetric matrix of pairwise distances over named variables.
struct DistanceMatrix {
  std::vector<std::string> names;
  std::vector<double> values;  // row-major n x n

  std::size_t size() const { return names.size(); }
  double operator()(std::size_t i, std::size_t j) const { return values[i * names.size() + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * names.size() + j]; }
};

inline DistanceMatrix information_distances(const WeightedDataset& data, double smoothing) {
  DistanceMatrix d;
  d.names = data.names();
  const auto n = d.size();
  d.values.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const int ci = data.variables()[i].cardinality, cj = data.variables()[j].cardinality;
      double value;
      try {
        value = information_distance_from_joint(
            empirical_joint(data, static_cast<int>(i), static_cast<int>(j), smoothing), ci, cj);
      } catch (const NumericError&) {
        value = kInfinity;
      }
      d(i, j) = d(j, i) = value;
    }
  return d;
}

inline DistanceMatrix mutual_informations(const WeightedDataset& data, double smoothing) {
  DistanceMatrix d;
  d.names = data.names();
  const auto n = d.size();
  d.values.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      d(i, j) = d(j, i) = mutual_information(
          empirical_joint(data, static_cast<int>(i), static_cast<int>(j), smoothing),
          data.variables()[i].cardinality, data.variables()[j].cardinality);
  return d;
}

inline void write_matrix(std::ostream& out, const DistanceMatrix& d) {
  out << "variable";
  for (const auto& n : d.names) out << '\t' << n;
  out << '\n';
  out << std::setprecision(10);
  for (std::size_t i = 0; i < d.size(); ++i) {
    out << d.names[i];
    for (std::size_t j = 0; j < d.size(); ++j) out << '\t' << d(i, j);
    out << '\n';
  }
}

struct AdditivityCheck {
  double direct = 0.0;
  double path_sum = 0.0;
};

// Compares the distance between two nodes with the sum of distances along the
// tree path joining them, all computed from the model's exact pairwise joints.
inline AdditivityCheck additivity_check(const LatentTreeModel& m, int x, int y) {
  const auto mu = node_marginals(m);
  // Path via parent links to the lowest common ancestor.
  std::vector<int> ax, ay;
  for (int v = x; v >= 0; v = m.parent[v]) ax.push_back(v);
  for (int v = y; v >= 0; v = m.parent[v]) ay.push_back(v);
  while (ax.size() > 1 && ay.size() > 1 && ax[ax.size() - 2] == ay[ay.size() - 2]) {
    ax.pop_back();
    ay.pop_back();
  }
  if (ax.back() != ay.back()) throw ModelError("nodes are not connected");
  std::vector<int> path = ax;
  for (auto it = ay.rbegin() + 1; it != ay.rend(); ++it) path.push_back(*it);
  AdditivityCheck out;
  out.direct = information_distance(m, x, y, mu);
  for (std::size_t k = 1; k < path.size(); ++k)
    out.path_sum += information_distance(m, path[k - 1], path[k], mu);
  return out;
}

inline AdditivityCheck additivity_check(const LatentTreeModel& m, std::string_view x,
                                        std::string_view y) {
  return additivity_check(m, m.require(x), m.require(y));
}

}  // namespace ltm
