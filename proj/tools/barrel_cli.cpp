// barrel_cli: dataset generation, training, evaluation and scene runs.

#include <malloc.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "barrel/bench.hpp"
#include "barrel/error.hpp"
#include "barrel/io.hpp"

namespace fs = std::filesystem;
using namespace barrel;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool full_scale = false;
};

BenchConfig resolve(const Common& c) {
  BenchConfig cfg = c.config.empty() ? config_from_json(json::object()) : load_config(c.config);
  if (c.seed) override_seed(cfg, *c.seed);
  if (c.full_scale) {
    cfg.gen.n_cylinders = 1000;
    cfg.gen.views_per_cylinder = 20;
  }
  return cfg;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Master seed; overrides every seed in the config");
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kSchemaError:
    case ErrorCode::kIoError:
    case ErrorCode::kMalformedPly:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kInvalidAlphas:
    case ErrorCode::kShapeMismatch:
      return 2;
    default:
      return 1;
  }
}

int print_summaries(const std::vector<EvalRecord>& records) {
  std::size_t failed = 0;
  for (const EvalRecord& r : records) failed += r.ok ? 0 : 1;
  for (const std::string m : {"barrelnet", "classical"}) {
    const EvalSummary s = summarize(m, records);
    if (s.n_samples == 0) continue;
    std::printf("%-10s n=%zu failed=%zu mean_cos=%.4f mean_burial_err=%.4f cos_p50=%.4f burial_err_p90=%.4f\n",
                m.c_str(), s.n_samples, s.n_failed, s.mean_cosine, s.mean_burial_err, s.cosine_q.p50,
                s.burial_err_q.p90);
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  // Training reallocates the same multi-megabyte activation buffers every
  // step; keep them on the heap instead of mapping fresh pages each time.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  CLI::App app{"Pose, radius and burial estimation for partially buried cylinders"};
  app.require_subcommand(1);
  Common common;
  std::string out, data, weights, method = "both", cloud_path, camera_path, scene_dir, csv_path;
  std::size_t n_views = 4;

  auto* gen = app.add_subcommand("gen", "Generate a labelled synthetic dataset");
  add_common(gen, common);
  gen->add_flag("--full-scale", common.full_scale, "1000 cylinders x 20 views");
  gen->add_option("--out", out, "Dataset directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train BarrelNet on a dataset");
  add_common(train_cmd, common);
  train_cmd->add_option("--data", data, "Dataset directory")->required();
  train_cmd->add_option("--out", out, "Weights file")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate methods on a dataset and write the record CSV");
  add_common(eval, common);
  eval->add_option("--data", data, "Dataset directory")->required();
  eval->add_option("--weights", weights, "BarrelNet weights file");
  eval->add_option("--method", method, "classical, barrelnet or both")
      ->check(CLI::IsMember({"classical", "barrelnet", "both"}));
  eval->add_option("--out", out, "CSV path")->required();

  auto* fit = app.add_subcommand("fit", "Fit one cloud (floor frame, z = 0 is the floor)");
  add_common(fit, common);
  fit->add_option("--cloud", cloud_path, "PLY file")->required();
  fit->add_option("--weights", weights, "BarrelNet weights (omit for the classical method)");
  fit->add_option("--camera", camera_path, "Camera JSON used for occlusion during ICP");
  fit->add_option("--out", out, "result.json path");

  auto* scene = app.add_subcommand("scene", "Run the full pipeline on a scene package");
  add_common(scene, common);
  scene->add_option("--scene", scene_dir, "Scene package directory")->required();
  scene->add_option("--weights", weights, "BarrelNet weights")->required();
  scene->add_option("--out", out, "Output directory")->required();

  auto* make_scene = app.add_subcommand("make-scene", "Write a synthetic scene package with known truth");
  add_common(make_scene, common);
  make_scene->add_option("--views", n_views, "Number of camera views");
  make_scene->add_option("--out", out, "Scene package directory")->required();

  auto* report = app.add_subcommand("report", "Recompute and print summaries from a record CSV");
  report->add_option("--csv", csv_path, "Record CSV")->required()->check(CLI::ExistingFile);
  report->add_option("--out", out, "Summary JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      const BenchConfig cfg = resolve(common);
      const GenStats stats = write_dataset(out, cfg.gen);
      std::printf("wrote %zu samples (%zu redraws, %zu skipped) to %s\n", stats.n_samples, stats.n_redraws,
                  stats.n_skipped, out.c_str());
      return 0;
    }
    if (*train_cmd) {
      const BenchConfig cfg = resolve(common);
      const std::vector<LabeledSample> samples = read_dataset(data);
      const TrainOutcome result = train_on_samples(samples, cfg, [](std::size_t epoch, double loss) {
        std::fprintf(stderr, "epoch %zu loss %.6f\n", epoch, loss);
      });
      save_weights(out, result.weights);
      return 0;
    }
    if (*eval) {
      const BenchConfig cfg = resolve(common);
      const std::vector<LabeledSample> samples = read_dataset(data);
      std::vector<EvalRecord> records;
      if (method != "classical") {
        if (weights.empty()) throw Error(ErrorCode::kInvalidArgument, "--weights is required for barrelnet");
        const ModelWeights<float> w = load_weights(weights);
        auto [r, s] = eval_method(Method::kBarrelNet, samples, &w, cfg);
        records.insert(records.end(), r.begin(), r.end());
      }
      if (method != "barrelnet") {
        auto [r, s] = eval_method(Method::kClassical, samples, nullptr, cfg);
        records.insert(records.end(), r.begin(), r.end());
      }
      report_csv(out, records);
      return print_summaries(records);
    }
    if (*fit) {
      const BenchConfig cfg = resolve(common);
      const PointCloud pc = read_ply(cloud_path);
      json result = {{"schema_version", 1}};
      if (weights.empty()) {
        const ClassicalFit f = classical_pipeline(pc, cfg.classical);
        result["method"] = "classical";
        result["pose"] = to_json(f.pose);
        result["burial"] = f.burial.fraction;
      } else {
        const ModelWeights<float> w = load_weights(weights);
        std::vector<CameraView> cams;
        if (!camera_path.empty()) cams.push_back(camera_from_json(read_json(camera_path)));
        const MethodOutput m = barrelnet_fit(w, pc, cams, cfg, cfg.eval_seed);
        result["method"] = "barrelnet";
        result["pose"] = to_json(m.pose);
        result["burial"] = m.burial;
      }
      if (out.empty())
        std::cout << result.dump(2) << "\n";
      else
        write_json(out, result);
      return 0;
    }
    if (*scene) {
      const BenchConfig cfg = resolve(common);
      const ModelWeights<float> w = load_weights(weights);
      const SceneReport r = run_scene(scene_dir, w, cfg, out);
      std::printf("burial %.4f  axis (%.4f, %.4f, %.4f)  radius %.4f\n", r.burial.fraction, r.pose.axis.vec().x(),
                  r.pose.axis.vec().y(), r.pose.axis.vec().z(), r.pose.radius);
      return 0;
    }
    if (*make_scene) {
      const BenchConfig cfg = resolve(common);
      const SyntheticScene s = random_scene(cfg.gen, cfg.eval_seed, n_views);
      write_scene_package(out, s.package);
      write_json((fs::path(out) / "truth.json").string(),
                 {{"schema_version", 1},
                  {"pose", to_json(s.truth)},
                  {"burial", s.burial_truth},
                  {"input_from_floor", to_json(s.input_from_floor)}});
      std::printf("wrote scene with burial %.4f to %s\n", s.burial_truth, out.c_str());
      return 0;
    }
    if (*report) {
      std::ifstream in(csv_path, std::ios::binary);
      std::stringstream buf;
      buf << in.rdbuf();
      const std::vector<EvalRecord> records = records_from_csv(buf.str());
      if (!out.empty()) {
        json list = json::array();
        for (const std::string m : {"barrelnet", "classical"})
          if (summarize(m, records).n_samples > 0) list.push_back(to_json(summarize(m, records)));
        write_json(out, {{"schema_version", 1}, {"summaries", list}});
      }
      return print_summaries(records);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", std::string(to_string(e.code())).c_str(), e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
