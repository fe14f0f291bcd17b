#include "barrel/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "barrel/error.hpp"

namespace barrel {

namespace {

struct Candidate {
  double d2;
  std::size_t index;
  bool operator<(const Candidate& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
};

}  // namespace

KdTree::KdTree(PointCloud points, std::size_t leaf_size) : points_(std::move(points)), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
  if (points_.rows() == 0) throw Error(ErrorCode::kEmptyTarget, "kd-tree needs at least one point");
  order_.resize(points_.rows());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  nodes_.reserve(2 * order_.size() / leaf_size_ + 1);
  build(0, order_.size());
}

int KdTree::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= leaf_size_) return id;

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_.row(order_[i]).transpose());
    hi = hi.cwiseMax(points_.row(order_[i]).transpose());
  }
  int axis;
  const double extent = (hi - lo).maxCoeff(&axis);
  if (extent <= 0.0) return id;  // all coincident: keep as a leaf

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t a, std::size_t b) { return points_(a, axis) < points_(b, axis); });
  const double split = points_(order_[mid], axis);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

template <typename Visitor>
void KdTree::search(int node_id, const Vec3& q, Visitor& visit) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      visit.offer({(points_.row(idx).transpose() - q).squaredNorm(), idx});
    }
    return;
  }
  // Left holds coordinates <= split, right holds >= split.
  const double diff = q[node.axis] - node.split;
  const int near = diff <= 0.0 ? node.left : node.right;
  const int far = diff <= 0.0 ? node.right : node.left;
  search(near, q, visit);
  if (diff * diff <= visit.bound()) search(far, q, visit);
}

Neighbor KdTree::nearest(const Vec3& q) const {
  struct Best {
    Candidate best{std::numeric_limits<double>::infinity(), std::numeric_limits<std::size_t>::max()};
    void offer(const Candidate& c) {
      if (c < best) best = c;
    }
    double bound() const { return best.d2; }
  } visit;
  search(0, q, visit);
  return {visit.best.index, std::sqrt(visit.best.d2)};
}

std::vector<Neighbor> KdTree::knn(const Vec3& q, std::size_t k) const {
  struct Heap {
    std::size_t k;
    std::priority_queue<Candidate> heap;  // worst on top
    void offer(const Candidate& c) {
      if (heap.size() < k) {
        heap.push(c);
      } else if (c < heap.top()) {
        heap.pop();
        heap.push(c);
      }
    }
    double bound() const { return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.top().d2; }
  } visit{std::max<std::size_t>(1, k), {}};
  search(0, q, visit);
  std::vector<Neighbor> out(visit.heap.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = {visit.heap.top().index, std::sqrt(visit.heap.top().d2)};
    visit.heap.pop();
  }
  return out;
}

std::vector<Neighbor> nearest_neighbors(const PointCloud& query, const PointCloud& target) {
  if (target.rows() == 0) throw Error(ErrorCode::kEmptyTarget, "nearest_neighbors needs a nonempty target");
  const KdTree tree(target);
  std::vector<Neighbor> out(query.rows());
  for (Eigen::Index i = 0; i < query.rows(); ++i) out[i] = tree.nearest(query.row(i).transpose());
  return out;
}

}  // namespace barrel
