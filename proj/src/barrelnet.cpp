#include "barrel/barrelnet.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numbers>

#include "json.hpp"

namespace barrel {

void NetConfig::validate() const {
  if (point_widths.empty() || head_widths.empty())
    throw Error(ErrorCode::kInvalidArgument, "network needs point and head layers");
  if (head_widths.back() != 4) throw Error(ErrorCode::kInvalidArgument, "last head width must be 4");
  for (int w : point_widths)
    if (w < 1) throw Error(ErrorCode::kInvalidArgument, "layer widths must be positive");
  for (int w : head_widths)
    if (w < 1) throw Error(ErrorCode::kInvalidArgument, "layer widths must be positive");
  if (n_input_points < 8) throw Error(ErrorCode::kInvalidArgument, "n_input_points must be >= 8");
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || !(learning_rate > 0.0) || !(radius_loss_weight >= 0.0) ||
      !(max_grad_norm >= 0.0) ||
      !(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "invalid training configuration");
}

Prediction prediction_from_raw(const Eigen::Vector4d& raw) {
  Prediction p;
  p.raw = raw;
  // Saturated logits would otherwise round to exactly 0 or 1.
  p.radius = std::clamp(sigmoid(raw[0]), 1e-9, 1.0 - 1e-9);
  const Vec3 u = raw.tail<3>();
  p.axis = u.norm() > 1e-12 && u.allFinite() ? make_unit_axis(u) : UnitAxis();
  return p;
}

double loss(const Prediction& pred, const CylinderPose& truth, double lambda, AxisLoss kind) {
  const double dr = pred.radius - truth.radius;
  const double c = pred.axis.vec().dot(truth.axis.vec());
  return (kind == AxisLoss::kSigned ? 1.0 - c : 1.0 - c * c) + lambda * dr * dr;
}

double loss_and_raw_gradient(const Eigen::Vector4d& raw, const CylinderPose& truth, double lambda,
                             Eigen::Vector4d* grad, AxisLoss kind) {
  const Prediction pred = prediction_from_raw(raw);
  const double value = loss(pred, truth, lambda, kind);
  if (grad) {
    grad->setZero();
    const double r = pred.radius;
    (*grad)[0] = 2.0 * lambda * (r - truth.radius) * r * (1.0 - r);
    const Vec3 u = raw.tail<3>();
    const double norm = u.norm();
    if (norm > 1e-12) {
      const Vec3 unit = u / norm;
      const Vec3& t = truth.axis.vec();
      const double c = unit.dot(t);
      const Vec3 dc = (t - c * unit) / norm;  // d<unit, t>/du
      if (kind == AxisLoss::kSigned)
        grad->tail<3>() = -(unit.z() < 0.0 ? -1.0 : 1.0) * dc;
      else
        grad->tail<3>() = -2.0 * c * dc;
    }
  }
  return value;
}

PointCloud normalize_input(const PointCloud& pc, std::size_t n, std::uint64_t seed) {
  const std::size_t m = static_cast<std::size_t>(pc.rows());
  if (m == 0) throw Error(ErrorCode::kEmptyCloud, "cannot normalize an empty cloud");
  Rng rng(seed);
  std::vector<std::size_t> rows(n);
  if (m >= n) {
    std::vector<std::size_t> pool(m);
    for (std::size_t i = 0; i < m; ++i) pool[i] = i;
    for (std::size_t j = 0; j < n; ++j) {
      std::swap(pool[j], pool[j + rng.index(m - j)]);
      rows[j] = pool[j];
    }
  } else {
    for (auto& r : rows) r = rng.index(m);
  }
  PointCloud out = select_rows(pc, rows);
  const Eigen::RowVector2d xy = out.leftCols<2>().colwise().mean();
  out.leftCols<2>().rowwise() -= xy;
  return out;
}

namespace {

Cloud<float> rotate_z(const PointCloud& pc, double angle) {
  Mat3 rot = Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
  return (pc * rot.transpose()).cast<float>();
}

}  // namespace

TrainResult train(std::span<const LabeledCloud> data, const NetConfig& net_cfg, const TrainConfig& cfg,
                  const std::function<void(std::size_t, double)>& on_epoch) {
  net_cfg.validate();
  cfg.validate();
  if (data.empty()) throw Error(ErrorCode::kInvalidArgument, "training set is empty");

  TrainResult result{ModelWeights<float>::init(net_cfg), {}};
  ModelWeights<float>& w = result.weights;
  std::vector<float*> params = w.parameter_pointers();
  std::vector<float> m1(params.size(), 0.0f), m2(params.size(), 0.0f);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  std::size_t step = 0;

  const std::size_t n = data.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle(derive_seed(cfg.seed, {0, epoch}));
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i-- > 1;) std::swap(order[i], order[shuffle.index(i + 1)]);

    double epoch_total = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      std::vector<TrainingExample<float>> batch;
      batch.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const LabeledCloud& item = data[idx];
        const PointCloud norm = normalize_input(*item.cloud, net_cfg.n_input_points, derive_seed(cfg.seed, {1, epoch, idx}));
        CylinderPose truth = item.truth;
        double angle = 0.0;
        if (cfg.augment_z_rotations) {
          Rng aug(derive_seed(cfg.seed, {2, epoch, idx}));
          angle = aug.uniform(0.0, 2.0 * std::numbers::pi);
          truth.axis = make_unit_axis(Eigen::AngleAxisd(angle, Vec3::UnitZ()) * truth.axis.vec());
        }
        batch.push_back({rotate_z(norm, angle), truth});
      }
      double batch_mean = 0.0;
      ModelWeights<float> g;
      try {
        g = gradients<float>(w, batch, cfg.radius_loss_weight, &batch_mean, cfg.axis_loss);
      } catch (const Error& e) {
        throw Error(ErrorCode::kDivergedTraining, std::string("training diverged: ") + e.what());
      }
      epoch_total += batch_mean * static_cast<double>(batch.size());

      ++step;
      const double progress = static_cast<double>(step - 1) / static_cast<double>(std::max<std::size_t>(1, total_steps - 1));
      const double lr = cfg.learning_rate *
                        (cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      const std::vector<float*> grads = g.parameter_pointers();
      double clip = 1.0;
      if (cfg.max_grad_norm > 0.0) {
        double sq = 0.0;
        for (const float* gp : grads) sq += static_cast<double>(*gp) * *gp;
        if (std::sqrt(sq) > cfg.max_grad_norm) clip = cfg.max_grad_norm / std::sqrt(sq);
      }
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double gi = *grads[i] * clip;
        m1[i] = static_cast<float>(kBeta1 * m1[i] + (1.0 - kBeta1) * gi);
        m2[i] = static_cast<float>(kBeta2 * m2[i] + (1.0 - kBeta2) * gi * gi);
        *params[i] -= static_cast<float>(lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + kEps));
      }
    }
    const double epoch_loss = epoch_total / static_cast<double>(n);
    if (!std::isfinite(epoch_loss) || !w.all_finite())
      throw Error(ErrorCode::kDivergedTraining, "loss became non-finite at epoch " + std::to_string(epoch));
    result.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return result;
}

Prediction predict(const ModelWeights<float>& w, const PointCloud& pc, std::uint64_t seed) {
  const Cloud<float> input = normalize_input(pc, w.config.n_input_points, seed).cast<float>();
  return forward<float>(w, input);
}

namespace {

constexpr int kWeightsFormatVersion = 1;

nlohmann::json manifest_of(const ModelWeights<float>& w) {
  nlohmann::json layers = nlohmann::json::array();
  std::size_t total = 0;
  w.for_each_tensor([&](const std::string& name, const float*, Eigen::Index rows, Eigen::Index cols) {
    layers.push_back({{"name", name}, {"shape", {rows, cols}}});
    total += rows * cols;
  });
  return {{"schema_version", 1},
          {"format", "barrelnet-weights"},
          {"format_version", kWeightsFormatVersion},
          {"byte_order", "little"},
          {"dtype", "float32"},
          {"net_config",
           {{"point_widths", w.config.point_widths},
            {"head_widths", w.config.head_widths},
            {"n_input_points", w.config.n_input_points},
            {"seed", w.config.seed}}},
          {"layers", layers},
          {"payload_floats", total}};
}

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

}  // namespace

void save_weights(const std::string& path, const ModelWeights<float>& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << manifest_of(w).dump() << '\n';
  w.for_each_tensor([&](const std::string&, const float* data, Eigen::Index rows, Eigen::Index cols) {
    // Row-major on disk.
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        const std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(data[c * rows + r]));
        out.write(reinterpret_cast<const char*>(&bits), 4);
      }
    }
  });
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path);
}

ModelWeights<float> load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw Error(ErrorCode::kSchemaError, "missing weights header");
  nlohmann::json manifest;
  NetConfig cfg;
  try {
    manifest = nlohmann::json::parse(header);
    if (manifest.at("format") != "barrelnet-weights" || manifest.at("format_version") != kWeightsFormatVersion)
      throw Error(ErrorCode::kSchemaError, "unsupported weights format");
    const auto& nc = manifest.at("net_config");
    cfg.point_widths = nc.at("point_widths").get<std::vector<int>>();
    cfg.head_widths = nc.at("head_widths").get<std::vector<int>>();
    cfg.n_input_points = nc.at("n_input_points").get<std::size_t>();
    cfg.seed = nc.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("bad weights manifest: ") + e.what());
  }
  ModelWeights<float> w = ModelWeights<float>::zeros(cfg);
  if (manifest.at("layers") != manifest_of(w).at("layers"))
    throw Error(ErrorCode::kShapeMismatch, "layer manifest does not match net_config");

  w.for_each_tensor([&](const std::string& name, float* data, Eigen::Index rows, Eigen::Index cols) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        std::uint32_t bits;
        if (!in.read(reinterpret_cast<char*>(&bits), 4))
          throw Error(ErrorCode::kShapeMismatch, "payload ends inside " + name);
        data[c * rows + r] = std::bit_cast<float>(to_little(bits));
      }
    }
  });
  if (in.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::kShapeMismatch, "trailing bytes after payload");
  if (!w.all_finite()) throw Error(ErrorCode::kSchemaError, "non-finite weights");
  return w;
}

}  // namespace barrel
