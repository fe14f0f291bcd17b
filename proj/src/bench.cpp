#include "barrel/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <type_traits>

#include <Eigen/Eigenvalues>

#include "barrel/error.hpp"
#include "barrel/io.hpp"

namespace barrel {

namespace fs = std::filesystem;
using nlohmann::json;

// ------------------------------------------------------------ config

namespace {

json range_json(const Range& r) { return {r.lo, r.hi}; }

Range range_from(const json& j, const Range& def) {
  if (j.is_null()) return def;
  if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::kSchemaError, "ranges are [lo, hi] pairs");
  return {j[0].get<double>(), j[1].get<double>()};
}

bool non_negative_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

template <typename T>
void read_into(const json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>)
    if (!non_negative_integer(v)) throw Error(ErrorCode::kSchemaError, std::string(key) + " must be a non-negative integer");
  field = v.get<T>();
}

}  // namespace

BenchConfig config_from_json(const json& j) {
  BenchConfig c;
  try {
    if (j.contains("schema_version") && j.at("schema_version").get<int>() != 1)
      throw Error(ErrorCode::kSchemaError, "unsupported config schema_version");
    if (j.contains("gen")) {
      const json& g = j.at("gen");
      read_into(g, "n_cylinders", c.gen.n_cylinders);
      read_into(g, "views_per_cylinder", c.gen.views_per_cylinder);
      c.gen.radius_range = range_from(g.value("radius_range", json()), c.gen.radius_range);
      c.gen.burial_range = range_from(g.value("burial_range", json()), c.gen.burial_range);
      read_into(g, "axis_min_z", c.gen.axis_min_z);
      c.gen.camera_distance_range = range_from(g.value("camera_distance_range", json()), c.gen.camera_distance_range);
      c.gen.camera_elevation_deg = range_from(g.value("camera_elevation_deg", json()), c.gen.camera_elevation_deg);
      read_into(g, "render_resolution", c.gen.render_resolution);
      read_into(g, "fov_deg", c.gen.fov_deg);
      read_into(g, "centroid_xy_extent", c.gen.centroid_xy_extent);
      read_into(g, "points_per_cloud_min", c.gen.points_per_cloud_min);
      read_into(g, "jitter_sigma", c.gen.jitter_sigma);
      read_into(g, "seed", c.gen.seed);
    }
    if (j.contains("net")) {
      const json& n = j.at("net");
      read_into(n, "point_widths", c.net.point_widths);
      read_into(n, "head_widths", c.net.head_widths);
      read_into(n, "n_input_points", c.net.n_input_points);
      read_into(n, "seed", c.net.seed);
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      read_into(t, "epochs", c.train.epochs);
      read_into(t, "batch_size", c.train.batch_size);
      read_into(t, "learning_rate", c.train.learning_rate);
      read_into(t, "final_lr_fraction", c.train.final_lr_fraction);
      read_into(t, "radius_loss_weight", c.train.radius_loss_weight);
      read_into(t, "max_grad_norm", c.train.max_grad_norm);
      if (t.contains("axis_loss")) {
        const std::string kind = t.at("axis_loss").get<std::string>();
        if (kind == "signed")
          c.train.axis_loss = AxisLoss::kSigned;
        else if (kind == "squared")
          c.train.axis_loss = AxisLoss::kSquared;
        else
          throw Error(ErrorCode::kSchemaError, "axis_loss must be \"signed\" or \"squared\"");
      }
      read_into(t, "augment_z_rotations", c.train.augment_z_rotations);
      read_into(t, "seed", c.train.seed);
    }
    if (j.contains("classical")) {
      const json& k = j.at("classical");
      read_into(k, "k_neighbors", c.classical.k_neighbors);
      read_into(k, "n_iterations", c.classical.mlesac.n_iterations);
      read_into(k, "inlier_sigma", c.classical.mlesac.inlier_sigma);
      read_into(k, "min_sample", c.classical.mlesac.min_sample);
      read_into(k, "em_iterations", c.classical.mlesac.em_iterations);
      read_into(k, "seed", c.classical.mlesac.seed);
    }
    if (j.contains("icp")) {
      const json& i = j.at("icp");
      read_into(i, "max_iterations", c.icp.max_iterations);
      read_into(i, "convergence_tol", c.icp.convergence_tol);
      read_into(i, "n_starts", c.icp.n_starts);
      read_into(i, "init_sphere_radius", c.icp.init_sphere_radius);
      read_into(i, "resynthesis_rounds", c.icp.resynthesis_rounds);
      read_into(i, "seed", c.icp.seed);
      read_into(i, "use_camera", c.icp_use_camera);
    }
    if (j.contains("extract")) {
      const json& e = j.at("extract");
      read_into(e, "alpha1", c.extract.alpha1);
      read_into(e, "alpha2", c.extract.alpha2);
      if (e.contains("barrel_merge")) {
        const std::string rule = e.at("barrel_merge").get<std::string>();
        if (rule == "any")
          c.extract.barrel_merge = MergeRule::kAnyView;
        else if (rule == "all")
          c.extract.barrel_merge = MergeRule::kAllViews;
        else
          throw Error(ErrorCode::kSchemaError, "barrel_merge must be \"any\" or \"all\"");
      }
    }
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      read_into(e, "burial_samples", c.burial_samples);
      read_into(e, "seed", c.eval_seed);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("bad config: ") + e.what());
  }
  c.classical.burial_samples = c.burial_samples;
  c.gen.validate();
  c.net.validate();
  c.train.validate();
  c.classical.mlesac.validate();
  c.icp.validate();
  return c;
}

json to_json(const BenchConfig& c) {
  return {{"schema_version", 1},
          {"gen",
           {{"n_cylinders", c.gen.n_cylinders},
            {"views_per_cylinder", c.gen.views_per_cylinder},
            {"radius_range", range_json(c.gen.radius_range)},
            {"burial_range", range_json(c.gen.burial_range)},
            {"axis_min_z", c.gen.axis_min_z},
            {"camera_distance_range", range_json(c.gen.camera_distance_range)},
            {"camera_elevation_deg", range_json(c.gen.camera_elevation_deg)},
            {"render_resolution", c.gen.render_resolution},
            {"fov_deg", c.gen.fov_deg},
            {"centroid_xy_extent", c.gen.centroid_xy_extent},
            {"points_per_cloud_min", c.gen.points_per_cloud_min},
            {"jitter_sigma", c.gen.jitter_sigma},
            {"seed", c.gen.seed}}},
          {"net",
           {{"point_widths", c.net.point_widths},
            {"head_widths", c.net.head_widths},
            {"n_input_points", c.net.n_input_points},
            {"seed", c.net.seed}}},
          {"train",
           {{"epochs", c.train.epochs},
            {"batch_size", c.train.batch_size},
            {"learning_rate", c.train.learning_rate},
            {"final_lr_fraction", c.train.final_lr_fraction},
            {"radius_loss_weight", c.train.radius_loss_weight},
            {"max_grad_norm", c.train.max_grad_norm},
            {"axis_loss", c.train.axis_loss == AxisLoss::kSigned ? "signed" : "squared"},
            {"augment_z_rotations", c.train.augment_z_rotations},
            {"seed", c.train.seed}}},
          {"classical",
           {{"k_neighbors", c.classical.k_neighbors},
            {"n_iterations", c.classical.mlesac.n_iterations},
            {"inlier_sigma", c.classical.mlesac.inlier_sigma},
            {"min_sample", c.classical.mlesac.min_sample},
            {"em_iterations", c.classical.mlesac.em_iterations},
            {"seed", c.classical.mlesac.seed}}},
          {"icp",
           {{"max_iterations", c.icp.max_iterations},
            {"convergence_tol", c.icp.convergence_tol},
            {"n_starts", c.icp.n_starts},
            {"init_sphere_radius", c.icp.init_sphere_radius},
            {"resynthesis_rounds", c.icp.resynthesis_rounds},
            {"seed", c.icp.seed},
            {"use_camera", c.icp_use_camera}}},
          {"extract",
           {{"alpha1", c.extract.alpha1},
            {"alpha2", c.extract.alpha2},
            {"barrel_merge", c.extract.barrel_merge == MergeRule::kAnyView ? "any" : "all"}}},
          {"eval", {{"burial_samples", c.burial_samples}, {"seed", c.eval_seed}}}};
}

BenchConfig load_config(const std::string& path) { return config_from_json(read_json(path)); }

void override_seed(BenchConfig& cfg, std::uint64_t seed) {
  cfg.gen.seed = derive_seed(seed, {1});
  cfg.net.seed = derive_seed(seed, {2});
  cfg.train.seed = derive_seed(seed, {3});
  cfg.classical.mlesac.seed = derive_seed(seed, {4});
  cfg.icp.seed = derive_seed(seed, {5});
  cfg.eval_seed = derive_seed(seed, {6});
}

// ------------------------------------------------------------ datasets

namespace {

json gen_config_json(const GenConfig& g) {
  BenchConfig c;
  c.gen = g;
  return to_json(c).at("gen");
}

}  // namespace

GenStats write_dataset(const std::string& dir, const GenConfig& cfg) {
  fs::create_directories(dir);
  json samples = json::array();
  const GenStats stats = generate_dataset(cfg, [&](LabeledSample&& s) {
    char name[64];
    std::snprintf(name, sizeof(name), "sample_%06zu_%03zu.ply", s.cyl_id, s.view_id);
    write_ply((fs::path(dir) / name).string(), s.cloud);
    samples.push_back({{"file", name},
                       {"cyl_id", s.cyl_id},
                       {"view_id", s.view_id},
                       {"truth", to_json(s.truth)},
                       {"burial_truth", s.burial_truth},
                       {"camera", to_json(s.camera)},
                       {"sample_seed", s.sample_seed},
                       {"attempt", s.attempt},
                       {"n_points", s.cloud.rows()}});
  });
  const json manifest = {{"schema_version", 1},
                         {"gen_config", gen_config_json(cfg)},
                         {"stats", {{"n_samples", stats.n_samples}, {"n_redraws", stats.n_redraws}, {"n_skipped", stats.n_skipped}}},
                         {"samples", samples}};
  write_json((fs::path(dir) / "manifest.json").string(), manifest);
  return stats;
}

std::vector<LabeledSample> read_dataset(const std::string& dir) {
  const json manifest = read_json((fs::path(dir) / "manifest.json").string());
  if (manifest.value("schema_version", 0) != 1) throw Error(ErrorCode::kSchemaError, "unsupported dataset manifest");
  std::vector<LabeledSample> out;
  try {
    for (const json& e : manifest.at("samples")) {
      LabeledSample s;
      s.cloud = read_ply((fs::path(dir) / e.at("file").get<std::string>()).string());
      s.truth = pose_from_json(e.at("truth"));
      s.burial_truth = e.at("burial_truth").get<double>();
      s.cyl_id = e.at("cyl_id").get<std::size_t>();
      s.view_id = e.at("view_id").get<std::size_t>();
      s.camera = camera_from_json(e.at("camera"));
      s.sample_seed = e.at("sample_seed").get<std::uint64_t>();
      s.attempt = e.value("attempt", std::size_t{0});
      out.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("bad dataset manifest: ") + e.what());
  }
  return out;
}

// ------------------------------------------------------------ evaluation

std::string to_string(Method m) { return m == Method::kClassical ? "classical" : "barrelnet"; }

Method method_from_string(const std::string& s) {
  if (s == "classical") return Method::kClassical;
  if (s == "barrelnet") return Method::kBarrelNet;
  throw Error(ErrorCode::kInvalidArgument, "unknown method '" + s + "'");
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(values.size() - 1, lo + 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

EvalSummary summarize(const std::string& method, const std::vector<EvalRecord>& records) {
  EvalSummary s;
  s.method = method;
  std::vector<double> cos, bur;
  std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> per_cyl;
  for (const EvalRecord& r : records) {
    if (r.method != method) continue;
    ++s.n_samples;
    if (!r.ok) {
      ++s.n_failed;
      continue;
    }
    cos.push_back(r.cosine_sim);
    bur.push_back(r.burial_abs_err);
    per_cyl[r.cyl_id].first.push_back(r.cosine_sim);
    per_cyl[r.cyl_id].second.push_back(r.burial_abs_err);
  }
  auto mean = [](const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
  };
  s.mean_cosine = mean(cos);
  s.mean_burial_err = mean(bur);
  s.cosine_q = {quantile(cos, 0.1), quantile(cos, 0.5), quantile(cos, 0.9)};
  s.burial_err_q = {quantile(bur, 0.1), quantile(bur, 0.5), quantile(bur, 0.9)};
  std::vector<double> cyl_cos, cyl_bur;
  for (const auto& [id, v] : per_cyl) {
    cyl_cos.push_back(mean(v.first));
    cyl_bur.push_back(mean(v.second));
  }
  s.per_cylinder_mean_cosine = mean(cyl_cos);
  s.per_cylinder_mean_burial_err = mean(cyl_bur);
  return s;
}

json to_json(const EvalSummary& s) {
  return {{"method", s.method},
          {"n_samples", s.n_samples},
          {"n_failed", s.n_failed},
          {"mean_cosine", s.mean_cosine},
          {"mean_burial_err", s.mean_burial_err},
          {"cosine_quantiles", {{"p10", s.cosine_q.p10}, {"p50", s.cosine_q.p50}, {"p90", s.cosine_q.p90}}},
          {"burial_err_quantiles", {{"p10", s.burial_err_q.p10}, {"p50", s.burial_err_q.p50}, {"p90", s.burial_err_q.p90}}},
          {"per_cylinder_mean_cosine", s.per_cylinder_mean_cosine},
          {"per_cylinder_mean_burial_err", s.per_cylinder_mean_burial_err}};
}

std::vector<EvalRecord> evaluate(const std::string& method, const std::vector<LabeledSample>& samples,
                                 const Estimator& estimator) {
  std::vector<EvalRecord> out;
  out.reserve(samples.size());
  for (const LabeledSample& s : samples) {
    EvalRecord r;
    r.cyl_id = s.cyl_id;
    r.view_id = s.view_id;
    r.method = method;
    r.burial_true = s.burial_truth;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const MethodOutput m = estimator(s);
      r.cosine_sim = cosine_similarity(m.pose.axis.vec(), s.truth.axis.vec());
      r.burial_pred = m.burial;
      r.burial_abs_err = std::abs(m.burial - s.burial_truth);
      r.radius_err = std::abs(m.pose.radius - s.truth.radius);
    } catch (const Error& e) {
      r.ok = false;
      r.failure = std::string(to_string(e.code()));
    }
    r.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  }
  return out;
}

Estimator classical_estimator(const BenchConfig& cfg) {
  return [cfg](const LabeledSample& s) {
    ClassicalConfig c = cfg.classical;
    c.mlesac.seed = derive_seed(cfg.classical.mlesac.seed, {s.cyl_id, s.view_id});
    c.burial_seed = derive_seed(cfg.eval_seed, {s.cyl_id, s.view_id, 1});
    const ClassicalFit fit = classical_pipeline(s.cloud, c);
    return MethodOutput{fit.pose, fit.burial.fraction};
  };
}

MethodOutput fit_from_prediction(const Prediction& pred, const PointCloud& observed, std::span<const CameraView> cams,
                                 const BenchConfig& cfg, std::uint64_t seed, CentroidEstimate* icp_out) {
  IcpConfig icp = cfg.icp;
  icp.seed = derive_seed(cfg.icp.seed, {seed});
  const CentroidEstimate est = estimate_centroid(pred, observed, cams, icp);
  const CylinderPose pose = CylinderPose::make(pred.axis, est.centroid, pred.radius);
  const BurialResult burial = burial_fraction_mc(pose, cfg.burial_samples, derive_seed(seed, {1}));
  if (icp_out) *icp_out = est;
  return {pose, burial.fraction};
}

MethodOutput barrelnet_fit(const ModelWeights<float>& w, const PointCloud& observed, std::span<const CameraView> cams,
                           const BenchConfig& cfg, std::uint64_t seed, CentroidEstimate* icp_out) {
  return fit_from_prediction(predict(w, observed, derive_seed(seed, {0})), observed, cams, cfg, seed, icp_out);
}

Prediction predict_multiview(const ModelWeights<float>& w, const PointCloud& pc, std::span<const CameraView> cams,
                             std::uint64_t seed, std::size_t min_points) {
  Mat3 scatter = Mat3::Zero();
  double radius = 0.0;
  Eigen::Vector4d raw = Eigen::Vector4d::Zero();
  std::size_t used = 0;
  for (std::size_t v = 0; v < cams.size(); ++v) {
    const std::vector<std::size_t> rows = zbuffer_visible(pc, cams[v]);
    if (rows.size() < min_points) continue;
    const Prediction p = predict(w, select_rows(pc, rows), derive_seed(seed, {v}));
    scatter += p.axis.vec() * p.axis.vec().transpose();
    radius += p.radius;
    raw += p.raw;
    ++used;
  }
  if (used == 0) return predict(w, pc, seed);
  const Eigen::SelfAdjointEigenSolver<Mat3> es(scatter);
  Prediction out;
  out.axis = make_unit_axis(es.eigenvectors().col(2));
  out.radius = radius / static_cast<double>(used);
  out.raw = raw / static_cast<double>(used);
  return out;
}

Estimator barrelnet_estimator(const ModelWeights<float>& w, const BenchConfig& cfg) {
  return [&w, cfg](const LabeledSample& s) {
    const std::uint64_t seed = derive_seed(cfg.eval_seed, {s.cyl_id, s.view_id});
    if (cfg.icp_use_camera) return barrelnet_fit(w, s.cloud, std::span<const CameraView>(&s.camera, 1), cfg, seed);
    return barrelnet_fit(w, s.cloud, {}, cfg, seed);
  };
}

std::pair<std::vector<EvalRecord>, EvalSummary> eval_method(Method method, const std::vector<LabeledSample>& samples,
                                                            const ModelWeights<float>* weights,
                                                            const BenchConfig& cfg) {
  if (samples.empty()) throw Error(ErrorCode::kInvalidArgument, "evaluation set is empty");
  const std::string name = to_string(method);
  std::vector<EvalRecord> records;
  if (method == Method::kClassical) {
    records = evaluate(name, samples, classical_estimator(cfg));
  } else {
    if (!weights) throw Error(ErrorCode::kInvalidArgument, "barrelnet evaluation needs weights");
    records = evaluate(name, samples, barrelnet_estimator(*weights, cfg));
  }
  EvalSummary summary = summarize(name, records);
  return {std::move(records), summary};
}

// ------------------------------------------------------------ CSV

std::string records_to_csv(const std::vector<EvalRecord>& records) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const EvalRecord& r : records) {
    out += std::to_string(r.cyl_id) + "," + std::to_string(r.view_id) + "," + r.method + ",";
    out += r.ok ? std::string("ok") : "failed:" + r.failure;
    if (r.ok) {
      for (double v : {r.cosine_sim, r.burial_pred, r.burial_true, r.burial_abs_err, r.radius_err})
        out += "," + format_double(v);
    } else {
      out += ",,," + format_double(r.burial_true) + ",,";
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), ",%.3f\n", r.runtime_ms);
    out += buf;
  }
  return out;
}

std::vector<EvalRecord> records_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw Error(ErrorCode::kSchemaError, "unexpected CSV header");
  std::vector<EvalRecord> out;
  std::size_t line_no = 1;
  auto num = [&](const std::string& cell) {
    try {
      std::size_t used = 0;
      const double v = std::stod(cell, &used);
      if (used != cell.size()) throw std::invalid_argument(cell);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorCode::kSchemaError, "bad number '" + cell + "' on CSV line " + std::to_string(line_no));
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() != 10) throw Error(ErrorCode::kSchemaError, "CSV line " + std::to_string(line_no) + " has wrong width");
    EvalRecord r;
    r.cyl_id = static_cast<std::size_t>(num(cells[0]));
    r.view_id = static_cast<std::size_t>(num(cells[1]));
    r.method = cells[2];
    r.ok = cells[3] == "ok";
    if (!r.ok) {
      if (!cells[3].starts_with("failed:")) throw Error(ErrorCode::kSchemaError, "bad status on line " + std::to_string(line_no));
      r.failure = cells[3].substr(7);
    } else {
      r.cosine_sim = num(cells[4]);
      r.burial_pred = num(cells[5]);
      r.burial_abs_err = num(cells[7]);
      r.radius_err = num(cells[8]);
    }
    r.burial_true = num(cells[6]);
    r.runtime_ms = num(cells[9]);
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::vector<std::string> methods_in(const std::vector<EvalRecord>& records) {
  std::vector<std::string> out;
  for (const EvalRecord& r : records)
    if (std::find(out.begin(), out.end(), r.method) == out.end()) out.push_back(r.method);
  return out;
}

}  // namespace

void check_summaries(const std::vector<EvalRecord>& records, const std::vector<EvalSummary>& summaries, double tol) {
  for (const EvalSummary& s : summaries) {
    const EvalSummary r = summarize(s.method, records);
    const bool same = r.n_samples == s.n_samples && r.n_failed == s.n_failed &&
                      std::abs(r.mean_cosine - s.mean_cosine) <= tol &&
                      std::abs(r.mean_burial_err - s.mean_burial_err) <= tol &&
                      std::abs(r.per_cylinder_mean_cosine - s.per_cylinder_mean_cosine) <= tol &&
                      std::abs(r.per_cylinder_mean_burial_err - s.per_cylinder_mean_burial_err) <= tol;
    if (!same) throw Error(ErrorCode::kInvalidArgument, "summary for " + s.method + " is not recomputable from records");
  }
}

void report_csv(const std::string& path, const std::vector<EvalRecord>& records) {
  const std::string text = records_to_csv(records);
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
    out << text;
  }
  std::vector<EvalSummary> summaries;
  json list = json::array();
  for (const std::string& m : methods_in(records)) {
    summaries.push_back(summarize(m, records));
    list.push_back(to_json(summaries.back()));
  }
  // Self-check: the written file must reproduce the summaries.
  check_summaries(records_from_csv(text), summaries);
  write_json(path + ".summary.json", {{"schema_version", 1}, {"summaries", list}});
}

// ------------------------------------------------------------ pipelines

TrainOutcome train_on_samples(const std::vector<LabeledSample>& samples, const BenchConfig& cfg,
                              const std::function<void(std::size_t, double)>& on_epoch) {
  std::vector<LabeledCloud> data;
  data.reserve(samples.size());
  for (const LabeledSample& s : samples) data.push_back({&s.cloud, s.truth});
  TrainResult r = train(data, cfg.net, cfg.train, on_epoch);
  return {std::move(r.weights), std::move(r.epoch_loss)};
}

SceneReport run_scene(const ScenePackage& pkg, const ModelWeights<float>& w, const BenchConfig& cfg) {
  SceneReport report;
  report.extraction = extract_scene(pkg, cfg.extract);
  const std::uint64_t seed = derive_seed(cfg.eval_seed, {0x5ce9e});
  const std::span<const CameraView> cams(report.extraction.views);
  report.prediction = predict_multiview(w, report.extraction.barrel, cams, derive_seed(seed, {0}));
  const MethodOutput out = fit_from_prediction(report.prediction, report.extraction.barrel,
                                               cfg.icp_use_camera ? cams : std::span<const CameraView>(), cfg, seed,
                                               &report.icp);
  report.pose = out.pose;
  report.burial = burial_fraction_mc(out.pose, cfg.burial_samples, derive_seed(seed, {1}));
  return report;
}

json to_json(const SceneReport& r) {
  return {{"schema_version", 1},
          {"pose", to_json(r.pose)},
          {"burial", {{"fraction", r.burial.fraction}, {"n_samples", r.burial.n_samples}, {"n_below", r.burial.n_below}}},
          {"to_floor", to_json(r.extraction.to_floor)},
          {"diagnostics",
           {{"n_barrel_points", r.extraction.barrel.rows()},
            {"n_floor_points", r.extraction.floor.rows()},
            {"floor_normal_input_frame", to_json(r.extraction.plane.normal)},
            {"raw_output", {r.prediction.raw[0], r.prediction.raw[1], r.prediction.raw[2], r.prediction.raw[3]}},
            {"icp_final_cost", r.icp.icp.final_cost},
            {"icp_iterations", r.icp.icp.iterations_used},
            {"icp_start_index", r.icp.icp.start_index}}}};
}

PointCloud fitted_cylinder_cloud(const CylinderPose& pose, std::size_t n_side, std::size_t n_cap) {
  return sample_cylinder_surface(pose, n_side, n_cap, 0x0f17);
}

SceneReport run_scene(const std::string& scene_dir, const ModelWeights<float>& w, const BenchConfig& cfg,
                      const std::string& out_dir) {
  const ScenePackage pkg = read_scene_package(scene_dir);
  SceneReport report = run_scene(pkg, w, cfg);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_json((fs::path(out_dir) / "result.json").string(), to_json(report));
    write_ply((fs::path(out_dir) / "fitted_cylinder.ply").string(), fitted_cylinder_cloud(report.pose));
    write_ply((fs::path(out_dir) / "observed_barrel.ply").string(), report.extraction.barrel);
  }
  return report;
}

SyntheticScene random_scene(const GenConfig& cfg, std::uint64_t seed, std::size_t n_views) {
  if (n_views == 0) throw Error(ErrorCode::kInvalidArgument, "a scene needs at least one view");
  Rng rng(derive_seed(seed, {0}));
  const CylinderPose truth = sample_pose(rng, cfg);
  const Vec3 target(truth.centroid.x(), truth.centroid.y(), 0.25);
  std::vector<CameraView> views;
  for (std::size_t v = 0; v < n_views; ++v) {
    Rng cam_rng(derive_seed(seed, {1, v}));
    views.push_back(sample_camera(cam_rng, cfg, target));
  }
  Rng frame_rng(derive_seed(seed, {2}));
  RigidTransform input_from_floor;
  input_from_floor.rotation = Eigen::AngleAxisd(frame_rng.uniform(0.0, 2.0 * M_PI), frame_rng.unit_vector()).toRotationMatrix();
  input_from_floor.translation = frame_rng.in_ball(3.0);
  return synthesize_scene(truth, views, input_from_floor);
}

}  // namespace barrel
