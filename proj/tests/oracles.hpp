#pragma once

// Independent checks shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <vector>

#include "barrel/barrelnet.hpp"
#include "barrel/rng.hpp"

namespace barrel::test {

inline NetConfig small_net(std::uint64_t seed) {
  NetConfig cfg;
  cfg.point_widths = {8, 16};
  cfg.head_widths = {12, 4};
  cfg.n_input_points = 24;
  cfg.seed = seed;
  return cfg;
}

inline std::vector<TrainingExample<double>> random_batch(Rng& rng, std::size_t batch, std::size_t n_points) {
  std::vector<TrainingExample<double>> out;
  for (std::size_t b = 0; b < batch; ++b) {
    Cloud<double> pc(n_points, 3);
    for (Eigen::Index i = 0; i < pc.rows(); ++i) pc.row(i) = rng.in_ball(1.0).transpose();
    Vec3 axis = rng.unit_vector();
    axis.z() = std::abs(axis.z()) + 0.05;
    out.push_back({pc, CylinderPose::make(make_unit_axis(axis), Vec3::Zero(), rng.uniform(0.2, 0.5))});
  }
  return out;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Central differences on n_params random parameters of a randomly
/// initialized small net; relative error |a - f| / max(|a|, |f|, floor).
inline GradCheck gradient_check(std::uint64_t seed, std::size_t n_params, AxisLoss kind, double step = 1e-4,
                                double floor = 1e-6) {
  Rng rng(seed);
  ModelWeights<double> w = ModelWeights<double>::init(small_net(seed));
  // Nonzero biases so every code path carries signal.
  w.for_each_tensor([&](const std::string& name, double* d, Eigen::Index r, Eigen::Index c) {
    if (name.ends_with(".bias"))
      for (Eigen::Index i = 0; i < r * c; ++i) d[i] = 0.1 * rng.normal();
  });
  const auto batch = random_batch(rng, 3, w.config.n_input_points);
  const double lambda = 10.0;
  const ModelWeights<double> g = gradients<double>(w, batch, lambda, nullptr, kind);
  std::vector<double*> params = w.parameter_pointers();
  const std::vector<double*> grads = const_cast<ModelWeights<double>&>(g).parameter_pointers();
  GradCheck out;
  for (std::size_t k = 0; k < n_params; ++k) {
    const std::size_t i = rng.index(params.size());
    const double saved = *params[i];
    *params[i] = saved + step;
    const double up = batch_loss<double>(w, batch, lambda, kind);
    *params[i] = saved - step;
    const double down = batch_loss<double>(w, batch, lambda, kind);
    *params[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = *grads[i];
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    out.max_rel_error = std::max(out.max_rel_error, rel);
    ++out.checked;
  }
  return out;
}

/// Largest |raw difference| of forward over n random permutations of one cloud.
inline double permutation_gap(std::uint64_t seed, std::size_t n_perms) {
  Rng rng(seed);
  NetConfig cfg;
  cfg.point_widths = {32, 64, 128};
  cfg.head_widths = {64, 4};
  cfg.n_input_points = 200;
  cfg.seed = seed;
  const ModelWeights<double> w = ModelWeights<double>::init(cfg);
  Cloud<double> pc(cfg.n_input_points, 3);
  for (Eigen::Index i = 0; i < pc.rows(); ++i) pc.row(i) = rng.in_ball(1.0).transpose();
  const Eigen::Vector4d ref = forward<double>(w, pc).raw;
  double worst = 0.0;
  std::vector<Eigen::Index> idx(pc.rows());
  for (std::size_t p = 0; p < n_perms; ++p) {
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Eigen::Index>(i);
    for (std::size_t i = idx.size(); i-- > 1;) std::swap(idx[i], idx[rng.index(i + 1)]);
    Cloud<double> perm(pc.rows(), 3);
    for (Eigen::Index i = 0; i < pc.rows(); ++i) perm.row(i) = pc.row(idx[i]);
    worst = std::max(worst, (forward<double>(w, perm).raw - ref).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace barrel::test
