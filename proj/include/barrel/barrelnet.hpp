#pragma once

// PointNet-style regressor without the input transform network. A shared
// per-point perceptron is max-pooled into a global feature, and a head
// perceptron maps it to v in R^4: radius = sigmoid(v0), axis = v[1..3]
// normalized into the upper hemisphere.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "barrel/error.hpp"
#include "barrel/geom.hpp"
#include "barrel/rng.hpp"

namespace barrel {

struct NetConfig {
  std::vector<int> point_widths{64, 64, 128, 1024};
  std::vector<int> head_widths{512, 256, 4};
  std::size_t n_input_points = 1024;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct DenseLayer {
  Mat<Scalar> weight;  // out x in
  Vec<Scalar> bias;
};

template <typename Scalar>
struct ModelWeights {
  NetConfig config;
  std::vector<DenseLayer<Scalar>> point_layers;
  std::vector<DenseLayer<Scalar>> head_layers;

  static ModelWeights zeros(const NetConfig& cfg) {
    cfg.validate();
    ModelWeights w;
    w.config = cfg;
    int in = 3;
    for (int width : cfg.point_widths) {
      w.point_layers.push_back({Mat<Scalar>::Zero(width, in), Vec<Scalar>::Zero(width)});
      in = width;
    }
    for (int width : cfg.head_widths) {
      w.head_layers.push_back({Mat<Scalar>::Zero(width, in), Vec<Scalar>::Zero(width)});
      in = width;
    }
    return w;
  }

  /// He-normal weights, zero biases, drawn from config.seed.
  static ModelWeights init(const NetConfig& cfg) {
    ModelWeights w = zeros(cfg);
    Rng rng(derive_seed(cfg.seed, {0x1a1e}));
    w.for_each_tensor([&](const std::string& name, Scalar* data, Eigen::Index rows, Eigen::Index cols) {
      if (name.ends_with(".bias")) return;
      const double stddev = std::sqrt(2.0 / static_cast<double>(cols));
      for (Eigen::Index i = 0; i < rows * cols; ++i) data[i] = static_cast<Scalar>(stddev * rng.normal());
    });
    return w;
  }

  /// Visits every tensor in manifest order: point layers then head layers,
  /// each weight (rows = out, cols = in) before its bias (cols = 1).
  /// f(name, data, rows, cols) sees column-major storage.
  template <typename F>
  void for_each_tensor(F&& f) {
    visit_layers(point_layers, "point", f);
    visit_layers(head_layers, "head", f);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<ModelWeights*>(this)->for_each_tensor(
        [&](const std::string& name, Scalar* data, Eigen::Index rows, Eigen::Index cols) {
          f(name, static_cast<const Scalar*>(data), rows, cols);
        });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_tensor([&](const std::string&, const Scalar*, Eigen::Index r, Eigen::Index c) { n += r * c; });
    return n;
  }

  /// Every scalar parameter, tensors in manifest order.
  std::vector<Scalar*> parameter_pointers() {
    std::vector<Scalar*> out;
    for_each_tensor([&](const std::string&, Scalar* data, Eigen::Index rows, Eigen::Index cols) {
      for (Eigen::Index i = 0; i < rows * cols; ++i) out.push_back(data + i);
    });
    return out;
  }

  template <typename Other>
  ModelWeights<Other> cast() const {
    ModelWeights<Other> out;
    out.config = config;
    for (const auto& l : point_layers) out.point_layers.push_back({l.weight.template cast<Other>(), l.bias.template cast<Other>()});
    for (const auto& l : head_layers) out.head_layers.push_back({l.weight.template cast<Other>(), l.bias.template cast<Other>()});
    return out;
  }

  bool all_finite() const {
    bool ok = true;
    for_each_tensor([&](const std::string&, const Scalar* d, Eigen::Index r, Eigen::Index c) {
      for (Eigen::Index i = 0; i < r * c; ++i) ok = ok && std::isfinite(static_cast<double>(d[i]));
    });
    return ok;
  }

 private:
  template <typename F>
  static void visit_layers(std::vector<DenseLayer<Scalar>>& layers, const char* prefix, F& f) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string base = std::string(prefix) + "." + std::to_string(i);
      // data points at Eigen's column-major storage.
      f(base + ".weight", layers[i].weight.data(), layers[i].weight.rows(), layers[i].weight.cols());
      f(base + ".bias", layers[i].bias.data(), layers[i].bias.rows(), Eigen::Index{1});
    }
  }
};

struct Prediction {
  UnitAxis axis;
  double radius = 0.5;
  Eigen::Vector4d raw = Eigen::Vector4d::Zero();
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// radius = sigmoid(raw[0]); axis = make_unit_axis(raw[1..3]), or +z when
/// raw[1..3] vanishes.
Prediction prediction_from_raw(const Eigen::Vector4d& raw);

/// Axis term of the loss. kSigned is 1 - <a, t> on the canonical (n_z >= 0)
/// axes; kSquared is 1 - <a, t>^2, which ignores the sign and so stays
/// continuous where the canonical axis flips at n_z = 0.
enum class AxisLoss { kSigned, kSquared };

/// axis term + lambda * (radius - truth radius)^2.
double loss(const Prediction& pred, const CylinderPose& truth, double lambda, AxisLoss kind = AxisLoss::kSigned);

/// Loss and its derivative with respect to raw. At n_z = 0 the derivative of
/// the unflipped branch is used; a vanishing axis part contributes no gradient.
double loss_and_raw_gradient(const Eigen::Vector4d& raw, const CylinderPose& truth, double lambda,
                             Eigen::Vector4d* grad, AxisLoss kind = AxisLoss::kSigned);

/// Subsamples (or resamples with replacement) to exactly n points and moves
/// the xy centroid to the origin. Heights and scale are kept. Throws EmptyCloud.
PointCloud normalize_input(const PointCloud& pc, std::size_t n, std::uint64_t seed);

template <typename Scalar>
struct ForwardCache {
  std::vector<Mat<Scalar>> point_acts;  // [0] = stacked input, then each layer's output
  std::vector<Mat<Scalar>> head_acts;   // [0] = pooled features, then hidden outputs
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> argmax;  // batch x features, row into point_acts
};

/// Raw outputs (batch x 4) for clouds that each have exactly n_input_points rows.
template <typename Scalar>
Mat<Scalar> forward_raw(const ModelWeights<Scalar>& w, std::span<const Cloud<Scalar>> clouds,
                        ForwardCache<Scalar>* cache = nullptr) {
  const std::size_t n = w.config.n_input_points;
  const Eigen::Index batch = static_cast<Eigen::Index>(clouds.size());
  Mat<Scalar> x(batch * n, 3);
  for (Eigen::Index b = 0; b < batch; ++b) {
    if (static_cast<std::size_t>(clouds[b].rows()) != n)
      throw Error(ErrorCode::kShapeMismatch,
                  "expected " + std::to_string(n) + " points, got " + std::to_string(clouds[b].rows()));
    x.middleRows(b * n, n) = clouds[b];
  }

  ForwardCache<Scalar> local;
  ForwardCache<Scalar>& c = cache ? *cache : local;
  c.point_acts.clear();
  c.head_acts.clear();
  c.point_acts.push_back(std::move(x));
  for (const auto& layer : w.point_layers) {
    Mat<Scalar> z = c.point_acts.back() * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    c.point_acts.push_back(z.cwiseMax(Scalar(0)));
    if (!cache && c.point_acts.size() > 2) c.point_acts.erase(c.point_acts.begin());
  }

  const Mat<Scalar>& feats = c.point_acts.back();
  const Eigen::Index width = feats.cols();
  Mat<Scalar> pooled(batch, width);
  c.argmax.resize(batch, width);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index j = 0; j < width; ++j) {
      const Scalar* col = feats.col(j).data() + b * n;
      Eigen::Index best = 0;
      for (Eigen::Index i = 1; i < static_cast<Eigen::Index>(n); ++i)
        if (col[i] > col[best]) best = i;
      pooled(b, j) = col[best];
      c.argmax(b, j) = b * n + best;
    }
  }

  c.head_acts.push_back(std::move(pooled));
  for (std::size_t k = 0; k < w.head_layers.size(); ++k) {
    const auto& layer = w.head_layers[k];
    Mat<Scalar> z = c.head_acts.back() * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (k + 1 == w.head_layers.size()) return z;
    c.head_acts.push_back(z.cwiseMax(Scalar(0)));
  }
  return {};  // unreachable: validate() guarantees a head
}

template <typename Scalar>
Prediction forward(const ModelWeights<Scalar>& w, const Cloud<Scalar>& cloud) {
  const Mat<Scalar> raw = forward_raw<Scalar>(w, std::span<const Cloud<Scalar>>(&cloud, 1));
  return prediction_from_raw(raw.row(0).transpose().template cast<double>());
}

/// Backpropagates d(loss)/d(raw) (batch x 4) through a cached forward pass.
template <typename Scalar>
ModelWeights<Scalar> backward(const ModelWeights<Scalar>& w, const ForwardCache<Scalar>& c,
                              const Mat<Scalar>& draw) {
  ModelWeights<Scalar> g = ModelWeights<Scalar>::zeros(w.config);
  Mat<Scalar> dz = draw;
  for (std::size_t k = w.head_layers.size(); k-- > 0;) {
    const Mat<Scalar>& in = c.head_acts[k];
    g.head_layers[k].weight.noalias() = dz.transpose() * in;
    g.head_layers[k].bias = dz.colwise().sum().transpose();
    Mat<Scalar> din = dz * w.head_layers[k].weight;
    if (k > 0) din = din.cwiseProduct((in.array() > Scalar(0)).template cast<Scalar>().matrix());
    dz = std::move(din);
  }
  // dz now holds d(loss)/d(pooled); route it to the winning rows.
  const Mat<Scalar>& feats = c.point_acts.back();
  Mat<Scalar> dfeat = Mat<Scalar>::Zero(feats.rows(), feats.cols());
  for (Eigen::Index b = 0; b < dz.rows(); ++b)
    for (Eigen::Index j = 0; j < dz.cols(); ++j) dfeat(c.argmax(b, j), j) += dz(b, j);

  for (std::size_t l = w.point_layers.size(); l-- > 0;) {
    const Mat<Scalar>& out = c.point_acts[l + 1];
    const Mat<Scalar>& in = c.point_acts[l];
    dfeat = dfeat.cwiseProduct((out.array() > Scalar(0)).template cast<Scalar>().matrix());
    g.point_layers[l].weight.noalias() = dfeat.transpose() * in;
    g.point_layers[l].bias = dfeat.colwise().sum().transpose();
    if (l > 0) dfeat = dfeat * w.point_layers[l].weight;
  }
  return g;
}

template <typename Scalar>
struct TrainingExample {
  Cloud<Scalar> cloud;  // already normalized
  CylinderPose truth;
};

/// Mean batch loss and exact gradients. Throws NonFiniteGradient.
template <typename Scalar>
ModelWeights<Scalar> gradients(const ModelWeights<Scalar>& w, std::span<const TrainingExample<Scalar>> batch,
                               double lambda, double* mean_loss = nullptr, AxisLoss kind = AxisLoss::kSigned) {
  if (batch.empty()) throw Error(ErrorCode::kInvalidArgument, "empty batch");
  std::vector<Cloud<Scalar>> clouds;
  clouds.reserve(batch.size());
  for (const auto& ex : batch) clouds.push_back(ex.cloud);
  ForwardCache<Scalar> cache;
  const Mat<Scalar> raw = forward_raw<Scalar>(w, clouds, &cache);
  Mat<Scalar> draw(raw.rows(), 4);
  double total = 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (Eigen::Index b = 0; b < raw.rows(); ++b) {
    Eigen::Vector4d grad;
    total += loss_and_raw_gradient(raw.row(b).transpose().template cast<double>(), batch[b].truth, lambda, &grad, kind);
    draw.row(b) = (grad * scale).transpose().template cast<Scalar>();
  }
  ModelWeights<Scalar> g = backward(w, cache, draw);
  if (!g.all_finite() || !std::isfinite(total))
    throw Error(ErrorCode::kNonFiniteGradient, "gradient or loss is not finite");
  if (mean_loss) *mean_loss = total * scale;
  return g;
}

template <typename Scalar>
double batch_loss(const ModelWeights<Scalar>& w, std::span<const TrainingExample<Scalar>> batch, double lambda,
                  AxisLoss kind = AxisLoss::kSigned) {
  std::vector<Cloud<Scalar>> clouds;
  for (const auto& ex : batch) clouds.push_back(ex.cloud);
  const Mat<Scalar> raw = forward_raw<Scalar>(w, clouds);
  double total = 0.0;
  for (Eigen::Index b = 0; b < raw.rows(); ++b)
    total += loss_and_raw_gradient(raw.row(b).transpose().template cast<double>(), batch[b].truth, lambda, nullptr, kind);
  return total / static_cast<double>(batch.size());
}

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  /// Final learning rate as a fraction of the initial one (cosine schedule); 1 = constant.
  double final_lr_fraction = 1.0;
  double radius_loss_weight = 10.0;
  AxisLoss axis_loss = AxisLoss::kSquared;
  /// Rescales a batch gradient whose global L2 norm exceeds this; 0 disables.
  double max_grad_norm = 1.0;
  bool augment_z_rotations = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  ModelWeights<float> weights;
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

struct LabeledCloud {
  const PointCloud* cloud;
  CylinderPose truth;
};

/// Mini-batch Adam on the mean loss. Deterministic per (net seed, train seed).
/// Throws DivergedTraining on a non-finite loss.
TrainResult train(std::span<const LabeledCloud> data, const NetConfig& net_cfg, const TrainConfig& cfg,
                  const std::function<void(std::size_t epoch, double loss)>& on_epoch = {});

/// normalize_input then forward.
Prediction predict(const ModelWeights<float>& w, const PointCloud& pc, std::uint64_t seed = 0);

/// Weights file: one line of JSON manifest, then little-endian float32
/// parameters in manifest order (weights row-major).
void save_weights(const std::string& path, const ModelWeights<float>& w);
ModelWeights<float> load_weights(const std::string& path);

}  // namespace barrel
