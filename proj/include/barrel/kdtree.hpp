#pragma once

#include <cstddef>
#include <vector>

#include "barrel/geom.hpp"

namespace barrel {

struct Neighbor {
  std::size_t index;
  double distance;
};

/// Static 3-d tree over a copied point set. Queries are exact; equidistant
/// candidates resolve to the lowest point index.
class KdTree {
 public:
  explicit KdTree(PointCloud points, std::size_t leaf_size = 8);

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  const PointCloud& points() const { return points_; }

  Neighbor nearest(const Vec3& q) const;
  /// Up to k neighbors sorted by (distance, index).
  std::vector<Neighbor> knn(const Vec3& q, std::size_t k) const;

 private:
  struct Node {
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    std::size_t begin = 0, end = 0;
    int left = -1, right = -1;
  };

  int build(std::size_t begin, std::size_t end);
  template <typename Visitor>
  void search(int node, const Vec3& q, Visitor& visit) const;

  PointCloud points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_;
};

/// For each query point, its exact nearest target point.
std::vector<Neighbor> nearest_neighbors(const PointCloud& query, const PointCloud& target);

}  // namespace barrel
