#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "barrel/barrelnet.hpp"
#include "barrel/classical.hpp"
#include "barrel/icp.hpp"
#include "barrel/scene.hpp"
#include "barrel/synthgen.hpp"

namespace barrel {

/// Everything the harness needs, loadable from one JSON file. Missing keys
/// keep their defaults.
struct BenchConfig {
  GenConfig gen;
  NetConfig net;
  TrainConfig train;
  ClassicalConfig classical;
  IcpConfig icp;
  ExtractConfig extract;
  std::size_t burial_samples = kDefaultBurialSamples;
  /// Give ICP the sample's camera so the predicted cloud is occluded the same way.
  bool icp_use_camera = true;
  std::uint64_t eval_seed = 0;
};

BenchConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BenchConfig& cfg);
BenchConfig load_config(const std::string& path);

/// Sets every seed in the config from one value.
void override_seed(BenchConfig& cfg, std::uint64_t seed);

// ------------------------------------------------------------ datasets

/// One binary PLY per sample plus manifest.json. Returns generation stats.
GenStats write_dataset(const std::string& dir, const GenConfig& cfg);
std::vector<LabeledSample> read_dataset(const std::string& dir);

// ------------------------------------------------------------ evaluation

enum class Method { kClassical, kBarrelNet };
std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct EvalRecord {
  std::size_t cyl_id = 0;
  std::size_t view_id = 0;
  std::string method;
  bool ok = true;
  std::string failure;  // error code name when !ok
  double cosine_sim = 0.0;
  double burial_pred = 0.0;
  double burial_true = 0.0;
  double burial_abs_err = 0.0;
  double radius_err = 0.0;
  double runtime_ms = 0.0;
};

struct Quantiles {
  double p10 = 0.0, p50 = 0.0, p90 = 0.0;
};

struct EvalSummary {
  std::string method;
  std::size_t n_samples = 0;
  std::size_t n_failed = 0;
  double mean_cosine = 0.0;
  double mean_burial_err = 0.0;
  Quantiles cosine_q;
  Quantiles burial_err_q;
  /// Means of per-cylinder means, for comparison with per-cloud means.
  double per_cylinder_mean_cosine = 0.0;
  double per_cylinder_mean_burial_err = 0.0;
};

/// Linear-interpolated quantile of unsorted values.
double quantile(std::vector<double> values, double q);
EvalSummary summarize(const std::string& method, const std::vector<EvalRecord>& records);
nlohmann::json to_json(const EvalSummary& s);

struct MethodOutput {
  CylinderPose pose;
  double burial = 0.0;
};
using Estimator = std::function<MethodOutput(const LabeledSample&)>;

/// Runs an estimator on every sample; failures become flagged records.
std::vector<EvalRecord> evaluate(const std::string& method, const std::vector<LabeledSample>& samples,
                                 const Estimator& estimator);

Estimator classical_estimator(const BenchConfig& cfg);
Estimator barrelnet_estimator(const ModelWeights<float>& w, const BenchConfig& cfg);

/// BarrelNet axis and radius, ICP centroid, Monte Carlo burial.
MethodOutput barrelnet_fit(const ModelWeights<float>& w, const PointCloud& observed, std::span<const CameraView> cams,
                           const BenchConfig& cfg, std::uint64_t seed, CentroidEstimate* icp_out = nullptr);

/// ICP centroid and Monte Carlo burial for a given axis and radius.
MethodOutput fit_from_prediction(const Prediction& pred, const PointCloud& observed, std::span<const CameraView> cams,
                                 const BenchConfig& cfg, std::uint64_t seed, CentroidEstimate* icp_out = nullptr);

/// BarrelNet on each camera's z-buffered view of the cloud, the way training
/// clouds are rendered. Radii are averaged and the axis is the dominant
/// direction of the per-view axes. Uses the whole cloud when no camera sees
/// min_points of it.
Prediction predict_multiview(const ModelWeights<float>& w, const PointCloud& pc, std::span<const CameraView> cams,
                             std::uint64_t seed, std::size_t min_points = 32);

std::pair<std::vector<EvalRecord>, EvalSummary> eval_method(Method method, const std::vector<LabeledSample>& samples,
                                                            const ModelWeights<float>* weights,
                                                            const BenchConfig& cfg);

// ------------------------------------------------------------ CSV

inline constexpr const char* kCsvHeader =
    "cyl_id,view_id,method,status,cosine_sim,burial_pred,burial_true,burial_abs_err,radius_err,runtime_ms";

std::string records_to_csv(const std::vector<EvalRecord>& records);
std::vector<EvalRecord> records_from_csv(const std::string& text);
/// Writes the CSV and a "<path>.summary.json" sidecar with per-method summaries.
void report_csv(const std::string& path, const std::vector<EvalRecord>& records);

/// Recomputes summaries from records and checks them against `summaries`
/// within tol. Throws InvalidArgument on mismatch.
void check_summaries(const std::vector<EvalRecord>& records, const std::vector<EvalSummary>& summaries,
                     double tol = 1e-9);

// ------------------------------------------------------------ pipelines

struct TrainOutcome {
  ModelWeights<float> weights;
  std::vector<double> epoch_loss;
};
TrainOutcome train_on_samples(const std::vector<LabeledSample>& samples, const BenchConfig& cfg,
                              const std::function<void(std::size_t, double)>& on_epoch = {});

struct SceneReport {
  CylinderPose pose;  // floor frame
  BurialResult burial;
  SceneExtraction extraction;
  CentroidEstimate icp;
  Prediction prediction;
};

/// extract_scene, predict_multiview, estimate_centroid, burial. Writes result.json,
/// fitted_cylinder.ply and observed_barrel.ply into out_dir when non-empty.
SceneReport run_scene(const std::string& scene_dir, const ModelWeights<float>& w, const BenchConfig& cfg,
                      const std::string& out_dir);
SceneReport run_scene(const ScenePackage& pkg, const ModelWeights<float>& w, const BenchConfig& cfg);
nlohmann::json to_json(const SceneReport& report);

/// Random pose, n_views cameras around it and a random input frame, all drawn from seed.
SyntheticScene random_scene(const GenConfig& cfg, std::uint64_t seed, std::size_t n_views = 4);

/// Dense surface sample of a fitted cylinder for overlays.
PointCloud fitted_cylinder_cloud(const CylinderPose& pose, std::size_t n_side = 4000, std::size_t n_cap = 800);

}  // namespace barrel
