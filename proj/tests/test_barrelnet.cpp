#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "barrel/barrelnet.hpp"
#include "barrel/synthgen.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace barrel;
namespace fs = std::filesystem;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "barrel_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Prediction, RawMapping) {
  EXPECT_NEAR(prediction_from_raw(Eigen::Vector4d(0, 1, 0, 0)).radius, 0.5, 1e-15);
  const Prediction p = prediction_from_raw(Eigen::Vector4d(0, 0, 0, -3));
  EXPECT_EQ(p.axis.vec(), Vec3(0, 0, 1));
  EXPECT_EQ(prediction_from_raw(Eigen::Vector4d::Zero()).axis.vec(), Vec3::UnitZ());
}

TEST(Prediction, InvariantsForAnyWeights) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::Vector4d raw;
    for (int i = 0; i < 4; ++i) raw[i] = 30.0 * rng.normal();
    const Prediction p = prediction_from_raw(raw);
    EXPECT_GT(p.radius, 0.0);
    EXPECT_LT(p.radius, 1.0);
    EXPECT_NEAR(p.axis.vec().norm(), 1.0, 1e-9);
    EXPECT_GE(p.axis.z(), 0.0);
  }
}

TEST(Loss, ReferenceValues) {
  const CylinderPose truth = CylinderPose::make(UnitAxis(), Vec3::Zero(), 0.3);
  Prediction p;
  p.radius = 0.3;
  EXPECT_NEAR(loss(p, truth, 10.0), 0.0, 1e-15);
  p.axis = make_unit_axis(Vec3(1, 0, 0));
  EXPECT_NEAR(loss(p, truth, 10.0), 1.0, 1e-15);
  EXPECT_NEAR(loss(p, truth, 10.0, AxisLoss::kSquared), 1.0, 1e-15);
  p.axis = UnitAxis();
  p.radius = 0.4;
  EXPECT_NEAR(loss(p, truth, 10.0), 0.1, 1e-12);
}

TEST(Loss, RawGradientMatchesFiniteDifferences) {
  Rng rng(6);
  for (AxisLoss kind : {AxisLoss::kSigned, AxisLoss::kSquared})
    for (int trial = 0; trial < 20; ++trial) {
      const CylinderPose truth = test::random_pose(rng);
      Eigen::Vector4d raw(rng.normal(), rng.normal(), rng.normal(), rng.normal());
      if (std::abs(raw[3]) < 0.05) raw[3] = 0.5;  // keep away from the flip
      Eigen::Vector4d g;
      loss_and_raw_gradient(raw, truth, 10.0, &g, kind);
      for (int i = 0; i < 4; ++i) {
        Eigen::Vector4d up = raw, down = raw;
        up[i] += 1e-6;
        down[i] -= 1e-6;
        const double fd = (loss_and_raw_gradient(up, truth, 10.0, nullptr, kind) -
                           loss_and_raw_gradient(down, truth, 10.0, nullptr, kind)) / 2e-6;
        EXPECT_NEAR(g[i], fd, 1e-7);
      }
    }
}

TEST(Loss, ZeroAxisOutputHasNoAxisGradient) {
  Eigen::Vector4d g;
  loss_and_raw_gradient(Eigen::Vector4d(logit(0.4), 0, 0, 0), CylinderPose{}, 10.0, &g);
  EXPECT_TRUE(g.allFinite());
  EXPECT_EQ(g.tail<3>(), Eigen::Vector3d::Zero());
}

TEST(NormalizeInput, CardinalityAndCentering) {
  Rng rng(1);
  PointCloud big(5000, 3);
  for (Eigen::Index i = 0; i < big.rows(); ++i) big.row(i) = (rng.in_ball(1.0) + Vec3(3, -2, 0.4)).transpose();
  const PointCloud out = normalize_input(big, 1024, 7);
  EXPECT_EQ(out.rows(), 1024);
  EXPECT_LT(out.leftCols<2>().colwise().mean().norm(), 1e-9);
  // z values are copied through.
  for (Eigen::Index i = 0; i < out.rows(); ++i) EXPECT_TRUE((big.col(2).array() == out(i, 2)).any());

  const PointCloud small = big.topRows(10);
  const PointCloud up = normalize_input(small, 1024, 7);
  EXPECT_EQ(up.rows(), 1024);
  for (Eigen::Index i = 0; i < up.rows(); ++i) EXPECT_TRUE((small.col(2).array() == up(i, 2)).any());
  EXPECT_ERROR_CODE(normalize_input(PointCloud(0, 3), 16, 1), ErrorCode::kEmptyCloud);
}

TEST(Forward, PermutationInvariant) { EXPECT_LE(test::permutation_gap(3, 20), 1e-12); }

TEST(Forward, ShapeMismatch) {
  const auto w = ModelWeights<double>::init(test::small_net(1));
  EXPECT_ERROR_CODE(forward<double>(w, Cloud<double>::Zero(5, 3)), ErrorCode::kShapeMismatch);
}

TEST(Forward, BatchMatchesSingle) {
  Rng rng(2);
  const auto w = ModelWeights<double>::init(test::small_net(2));
  const auto batch = test::random_batch(rng, 4, w.config.n_input_points);
  std::vector<Cloud<double>> clouds;
  for (const auto& ex : batch) clouds.push_back(ex.cloud);
  const Mat<double> raw = forward_raw<double>(w, clouds);
  for (std::size_t b = 0; b < batch.size(); ++b)
    EXPECT_LT((raw.row(b).transpose() - forward<double>(w, batch[b].cloud).raw).norm(), 1e-13);
}

TEST(Gradients, MatchFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed)
    for (AxisLoss kind : {AxisLoss::kSigned, AxisLoss::kSquared}) {
      const test::GradCheck r = test::gradient_check(seed, 50, kind);
      EXPECT_EQ(r.checked, 50u);
      EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed;
    }
}

TEST(Gradients, FiniteAtZeroWeights) {
  Rng rng(3);
  const auto w = ModelWeights<double>::zeros(test::small_net(0));
  const auto batch = test::random_batch(rng, 2, w.config.n_input_points);
  EXPECT_TRUE(gradients<double>(w, batch, 10.0).all_finite());
}

TEST(Gradients, DuplicatedSampleEqualsSingle) {
  Rng rng(4);
  const auto w = ModelWeights<double>::init(test::small_net(4));
  const auto one = test::random_batch(rng, 1, w.config.n_input_points);
  const std::vector<TrainingExample<double>> two{one[0], one[0]};
  const auto g1 = gradients<double>(w, one, 10.0);
  const auto g2 = gradients<double>(w, two, 10.0);
  auto p1 = const_cast<ModelWeights<double>&>(g1).parameter_pointers();
  auto p2 = const_cast<ModelWeights<double>&>(g2).parameter_pointers();
  for (std::size_t i = 0; i < p1.size(); ++i) EXPECT_NEAR(*p1[i], *p2[i], 1e-14);
}

TEST(Train, LossDecreasesAndIsDeterministic) {
  GenConfig gen;
  gen.n_cylinders = 40;
  gen.views_per_cylinder = 5;
  gen.seed = 3;
  const auto samples = generate_dataset(gen);
  std::vector<LabeledCloud> data;
  for (const auto& s : samples) data.push_back({&s.cloud, s.truth});
  NetConfig net;
  net.point_widths = {16, 32, 64};
  net.head_widths = {32, 4};
  net.n_input_points = 64;
  TrainConfig cfg;
  cfg.epochs = 50;
  const TrainResult a = train(data, net, cfg);
  ASSERT_EQ(a.epoch_loss.size(), 50u);
  EXPECT_LT(a.epoch_loss.back(), a.epoch_loss.front());
  cfg.epochs = 3;
  const TrainResult b = train(data, net, cfg), c = train(data, net, cfg);
  EXPECT_EQ(b.epoch_loss, c.epoch_loss);
  EXPECT_EQ(b.weights.head_layers.back().weight, c.weights.head_layers.back().weight);
  EXPECT_ERROR_CODE(train({}, net, cfg), ErrorCode::kInvalidArgument);
}

TEST(Predict, Deterministic) {
  NetConfig net = test::small_net(5);
  const auto w = ModelWeights<float>::init(net);
  const PointCloud pc = sample_cylinder_surface(CylinderPose{}, 100, 20, 1);
  const Prediction a = predict(w, pc, 11), b = predict(w, pc, 11);
  EXPECT_EQ(a.raw, b.raw);
  EXPECT_ERROR_CODE(predict(w, PointCloud(0, 3)), ErrorCode::kEmptyCloud);
}

TEST(Weights, RoundTrip) {
  NetConfig net = test::small_net(6);
  const auto w = ModelWeights<float>::init(net);
  const fs::path path = temp_file("weights.bin");
  save_weights(path.string(), w);
  const auto r = load_weights(path.string());
  EXPECT_TRUE(r.config == net);
  ASSERT_EQ(r.parameter_count(), w.parameter_count());
  for (std::size_t i = 0; i < w.point_layers.size(); ++i) EXPECT_EQ(r.point_layers[i].weight, w.point_layers[i].weight);
  for (std::size_t i = 0; i < w.head_layers.size(); ++i) EXPECT_EQ(r.head_layers[i].bias, w.head_layers[i].bias);
}

TEST(Weights, RejectsDamage) {
  const auto w = ModelWeights<float>::init(test::small_net(7));
  const fs::path path = temp_file("weights_damaged.bin");
  save_weights(path.string(), w);
  const auto size = fs::file_size(path);
  fs::resize_file(path, size - 4);
  EXPECT_ERROR_CODE(load_weights(path.string()), ErrorCode::kShapeMismatch);
  save_weights(path.string(), w);
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << "xx";
  }
  EXPECT_ERROR_CODE(load_weights(path.string()), ErrorCode::kShapeMismatch);

  // Manifest says 12 wide, tensor says otherwise.
  save_weights(path.string(), w);
  std::string text;
  {
    std::ifstream in(path, std::ios::binary);
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto pos = text.find("[12,16]");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 7, "[13,16]");
  {
    std::ofstream out(path, std::ios::binary);
    out << text;
  }
  EXPECT_ERROR_CODE(load_weights(path.string()), ErrorCode::kShapeMismatch);
  EXPECT_ERROR_CODE(load_weights((path.parent_path() / "missing.bin").string()), ErrorCode::kIoError);
}

TEST(Config, Validation) {
  NetConfig net;
  net.head_widths = {8, 3};
  EXPECT_ERROR_CODE(net.validate(), ErrorCode::kInvalidArgument);
  net = NetConfig{};
  net.n_input_points = 4;
  EXPECT_ERROR_CODE(net.validate(), ErrorCode::kInvalidArgument);
  TrainConfig t;
  t.learning_rate = 0.0;
  EXPECT_ERROR_CODE(t.validate(), ErrorCode::kInvalidArgument);
}
