#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <json.hpp>

#include "cdmkit/metrics.hpp"

namespace cdm {

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorKind::dimension, "cosine_distance: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) fail(ErrorKind::numeric, "cosine_distance: zero vector");
  const double d = 1.0 - ab / std::sqrt(aa * bb);
  return std::max(d, 0.0);
}

ClusterResult cluster_models(const Matrix& profiles, int n_clusters) {
  require(profiles.rows() >= 2, "cluster_models: need at least two models");
  ClusterResult r;
  r.assignment.assign(static_cast<std::size_t>(profiles.rows()), -1);
  for (Eigen::Index j = 0; j < profiles.rows(); ++j) {
    if (profiles.row(j).isZero(0.0))
      r.warnings.push_back("cluster_models: model row " + std::to_string(j) + " is all zero, excluded");
    else
      r.included.push_back(static_cast<std::size_t>(j));
  }
  const int n = static_cast<int>(r.included.size());
  if (n < 2) fail(ErrorKind::invalid_argument, "cluster_models: fewer than two non-zero model rows");
  require(n_clusters >= 1 && n_clusters <= n, "cluster_models: n_clusters must lie in [1, number of models]");
  r.n_clusters = n_clusters;

  std::vector<Vector> rows;
  for (auto j : r.included) rows.push_back(profiles.row(static_cast<Eigen::Index>(j)).transpose());

  // Active clusters keyed by id; members are positions into `included`.
  std::map<int, std::vector<int>> active;
  for (int i = 0; i < n; ++i) active[i] = {i};
  std::vector<std::vector<double>> leaf(n, std::vector<double>(n, 0.0));
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      const double d = cosine_distance(as_span(rows[a]), as_span(rows[b]));
      leaf[a][b] = leaf[b][a] = d;
    }
  auto average = [&](const std::vector<int>& x, const std::vector<int>& y) {
    double s = 0.0;
    for (int a : x)
      for (int b : y) s += leaf[a][b];
    return s / static_cast<double>(x.size() * y.size());
  };

  int next_id = n;
  // Full dendrogram; the cut uses the first n - n_clusters merges.
  std::vector<std::map<int, std::vector<int>>> snapshots;
  while (active.size() > 1) {
    if (static_cast<int>(active.size()) == n_clusters) snapshots.push_back(active);
    double best = std::numeric_limits<double>::infinity();
    int bl = -1, br = -1;
    for (auto it = active.begin(); it != active.end(); ++it)
      for (auto jt = std::next(it); jt != active.end(); ++jt) {
        const double d = average(it->second, jt->second);
        if (d < best) {  // strict: ties keep the earlier (lower) id pair
          best = d;
          bl = it->first;
          br = jt->first;
        }
      }
    auto merged = active[bl];
    merged.insert(merged.end(), active[br].begin(), active[br].end());
    r.merges.push_back({bl, br, best, static_cast<int>(merged.size())});
    active.erase(bl);
    active.erase(br);
    active[next_id++] = std::move(merged);
  }
  if (n_clusters == 1) snapshots.push_back(active);

  std::vector<std::vector<int>> groups;
  for (auto& [id, members] : snapshots.front()) {
    std::sort(members.begin(), members.end());
    groups.push_back(members);
  }
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (int pos : groups[g]) r.assignment[r.included[static_cast<std::size_t>(pos)]] = static_cast<int>(g);
  return r;
}

std::string to_json(const ClusterResult& r, const std::vector<std::string>& model_ids) {
  using nlohmann::json;
  if (model_ids.size() != r.assignment.size())
    fail(ErrorKind::dimension, "cluster json: model ids do not match assignments");
  json assign = json::array();
  for (std::size_t j = 0; j < model_ids.size(); ++j)
    assign.push_back({{"model_id", model_ids[j]},
                      {"cluster", r.assignment[j] >= 0 ? json(r.assignment[j]) : json(nullptr)}});
  json merges = json::array();
  for (const auto& m : r.merges)
    merges.push_back({{"left", m.left}, {"right", m.right}, {"distance", m.distance}, {"size", m.size}});
  json leaves = json::array();
  for (auto j : r.included) leaves.push_back(model_ids[j]);
  return json{{"format_version", 1},
              {"method", "agglomerative"},
              {"linkage", "average"},
              {"metric", "cosine"},
              {"n_clusters", r.n_clusters},
              {"assignments", assign},
              {"leaves", leaves},
              {"merges", merges},
              {"warnings", r.warnings}}
             .dump(2) +
         "\n";
}

}  // namespace cdm
