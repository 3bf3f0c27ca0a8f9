#include "vpoc/detector.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <fstream>
#include <memory>
#include <unordered_map>

#include "json.hpp"
#include "vpoc/color.hpp"
#include "vpoc/errors.hpp"
#include "vpoc/rng.hpp"
#include "vpoc/svg.hpp"

namespace vpoc::detector {

double iou(const BoundingBox& a, const BoundingBox& b) {
  const long long ix = std::max(
      0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const long long iy = std::max(
      0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const long long inter = ix * iy;
  const long long uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::uint64_t pose_noise_seed(const scene::PlantScene& sc,
                              const scene::CameraPose& pose,
                              std::size_t berry_index) {
  std::uint64_t h = rng::derive(sc.seed, "oracle-noise");
  h = rng::hash_combine(h, std::bit_cast<std::uint64_t>(pose.theta));
  h = rng::hash_combine(h, std::bit_cast<std::uint64_t>(pose.phi));
  h = rng::hash_combine(h, std::bit_cast<std::uint64_t>(pose.radius));
  return rng::hash_combine(h, berry_index);
}

}  // namespace

std::vector<OracleCandidate> oracle_candidates(
    const scene::PlantScene& sc, const scene::CameraPose& pose,
    const scene::CameraIntrinsics& intr, const OracleConfig& cfg) {
  std::vector<OracleCandidate> out;
  for (std::size_t i = 0; i < sc.berries.size(); ++i) {
    const auto& b = sc.berries[i];
    const auto box = scene::project_sphere(b, pose, intr);
    if (!box) continue;
    const double vis =
        scene::visible_fraction(sc, i, pose, cfg.visibility_samples);
    if (vis < cfg.v_min) continue;
    const auto ext = scene::silhouette_extent(b, pose, intr);
    OracleCandidate c;
    c.box = *box;
    c.cls = b.ripeness;
    c.vis = vis;
    c.diam_px = std::max(ext->u_max - ext->u_min, ext->v_max - ext->v_min);
    rng::Stream noise(pose_noise_seed(sc, pose, i));
    c.noise_z = noise.normal();
    out.push_back(c);
  }
  return out;
}

double oracle_confidence(const OracleCandidate& c, const OracleConfig& cfg) {
  const double logit =
      cfg.alpha * std::log(c.diam_px) + cfg.beta * c.vis + cfg.gamma0;
  return std::clamp(sigmoid(logit) + cfg.noise_scale * c.noise_z, 0.0, 1.0);
}

std::vector<Detection> oracle_detect(const scene::PlantScene& sc,
                                     const scene::CameraPose& pose,
                                     const scene::CameraIntrinsics& intr,
                                     const OracleConfig& cfg) {
  std::vector<Detection> out;
  for (const auto& c : oracle_candidates(sc, pose, intr, cfg))
    out.push_back({c.box, c.cls, oracle_confidence(c, cfg)});
  return out;
}

std::vector<double> grid_cell_features(const scene::Frame& frame, int grid,
                                       int cx, int cy,
                                       const dataset::HueRange& range) {
  const int x0 = cx * frame.width / grid;
  const int x1 = (cx + 1) * frame.width / grid;
  const int y0 = cy * frame.height / grid;
  const int y1 = (cy + 1) * frame.height / grid;
  std::vector<double> f(kGridFeatureDim, 0.0);
  const double n = static_cast<double>(x1 - x0) * (y1 - y0);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const std::uint8_t* p = frame.at(x, y);
      f[0] += p[0] / 255.0;
      f[1] += p[1] / 255.0;
      f[2] += p[2] / 255.0;
      const Hsv hsv = rgb_to_hsv(p[0], p[1], p[2]);
      int bin = static_cast<int>(hsv.h / 45.0);
      bin = std::clamp(bin, 0, 7);
      f[3 + static_cast<std::size_t>(bin)] += 1.0;
      if (range.contains(hsv.h, hsv.s, hsv.v)) f[11] += 1.0;
    }
  }
  for (auto& v : f) v /= n;
  return f;
}

std::vector<Detection> grid_detect(const scene::Frame& frame,
                                   const GridParams& params,
                                   const GridConfig& cfg) {
  if (!params.trained)
    throw LifecycleError("grid detector used before training");
  const int g = params.grid_size;
  std::vector<Detection> out;
  for (int cls = 0; cls < 2; ++cls) {
    const auto ripeness =
        cls == 0 ? scene::Ripeness::Ripe : scene::Ripeness::Unripe;
    const auto& range = params.hue.range_for(ripeness);
    std::vector<double> prob(static_cast<std::size_t>(g) * g, 0.0);
    for (int cy = 0; cy < g; ++cy) {
      for (int cx = 0; cx < g; ++cx) {
        const auto f = grid_cell_features(frame, g, cx, cy, range);
        double z = params.bias[static_cast<std::size_t>(cls)];
        for (int i = 0; i < kGridFeatureDim; ++i)
          z += params.weights[static_cast<std::size_t>(cls) * kGridFeatureDim +
                              i] *
               f[static_cast<std::size_t>(i)];
        prob[static_cast<std::size_t>(cy) * g + cx] = sigmoid(z);
      }
    }
    // 4-connected components of cells above threshold become boxes.
    std::vector<char> seen(static_cast<std::size_t>(g) * g, 0);
    for (int cy = 0; cy < g; ++cy) {
      for (int cx = 0; cx < g; ++cx) {
        const std::size_t idx = static_cast<std::size_t>(cy) * g + cx;
        if (seen[idx] || prob[idx] < cfg.cell_threshold) continue;
        int min_x = cx, max_x = cx, min_y = cy, max_y = cy;
        double conf = 0.0;
        std::deque<std::pair<int, int>> queue{{cx, cy}};
        seen[idx] = 1;
        while (!queue.empty()) {
          const auto [qx, qy] = queue.front();
          queue.pop_front();
          conf = std::max(conf, prob[static_cast<std::size_t>(qy) * g + qx]);
          min_x = std::min(min_x, qx);
          max_x = std::max(max_x, qx);
          min_y = std::min(min_y, qy);
          max_y = std::max(max_y, qy);
          const int dx[4] = {1, -1, 0, 0};
          const int dy[4] = {0, 0, 1, -1};
          for (int k = 0; k < 4; ++k) {
            const int nx = qx + dx[k], ny = qy + dy[k];
            if (nx < 0 || nx >= g || ny < 0 || ny >= g) continue;
            const std::size_t ni = static_cast<std::size_t>(ny) * g + nx;
            if (seen[ni] || prob[ni] < cfg.cell_threshold) continue;
            seen[ni] = 1;
            queue.emplace_back(nx, ny);
          }
        }
        Detection d;
        d.box = {min_x * frame.width / g, min_y * frame.height / g,
                 (max_x + 1) * frame.width / g,
                 (max_y + 1) * frame.height / g};
        d.cls = ripeness;
        d.confidence = conf;
        out.push_back(d);
      }
    }
  }
  return out;
}

GridParams train_grid(const std::vector<dataset::AnnotatedFrame>& train,
                      const dataset::OcclusionConfig& hue,
                      const GridTrainConfig& cfg, int grid_size) {
  if (train.empty()) throw ConfigError("grid training set is empty");
  if (grid_size < 1) throw ConfigError("grid size must be >= 1");

  GridParams params;
  params.grid_size = grid_size;
  params.hue = hue;
  params.weights.assign(2 * kGridFeatureDim, 0.0f);
  params.bias.assign(2, 0.0f);

  for (int cls = 0; cls < 2; ++cls) {
    const auto ripeness =
        cls == 0 ? scene::Ripeness::Ripe : scene::Ripeness::Unripe;
    const auto& range = params.hue.range_for(ripeness);

    // Flatten every cell of every frame into one sample set.
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    for (const auto& af : train) {
      std::vector<char> positive(
          static_cast<std::size_t>(grid_size) * grid_size, 0);
      for (const auto& a : af.annotations) {
        if (a.cls != ripeness) continue;
        const double bx = 0.5 * (a.box.x_min + a.box.x_max);
        const double by = 0.5 * (a.box.y_min + a.box.y_max);
        const int cx = std::clamp(
            static_cast<int>(bx * grid_size / af.frame.width), 0,
            grid_size - 1);
        const int cy = std::clamp(
            static_cast<int>(by * grid_size / af.frame.height), 0,
            grid_size - 1);
        positive[static_cast<std::size_t>(cy) * grid_size + cx] = 1;
      }
      for (int cy = 0; cy < grid_size; ++cy) {
        for (int cx = 0; cx < grid_size; ++cx) {
          xs.push_back(grid_cell_features(af.frame, grid_size, cx, cy, range));
          ys.push_back(
              positive[static_cast<std::size_t>(cy) * grid_size + cx] ? 1.0
                                                                      : 0.0);
        }
      }
    }

    double n_pos = 0.0;
    for (double y : ys) n_pos += y;
    // Positive cells are rare; reweighting keeps the classifier from
    // collapsing to "always background".
    const double pos_weight =
        n_pos > 0.0
            ? std::clamp((static_cast<double>(ys.size()) - n_pos) / n_pos, 1.0,
                         50.0)
            : 1.0;

    // One dense layer trained with the shared engine: logit = w . x + b.
    nets::TrunkSpec trunk;
    trunk.conv = false;
    trunk.feat_dim = kGridFeatureDim;
    const nets::NetSpec spec = nets::make_net_spec(
        trunk, {}, 0, 1, nets::Activation::Linear, 1.0);
    rng::Stream init(rng::derive(cfg.seed, "grid-init",
                                 static_cast<std::uint64_t>(cls)));
    auto net = nets::build_network<float>(spec, init);
    auto opt = nets::AdamState<float>::init_like(net, cfg.lr);

    rng::Stream shuffle(rng::derive(cfg.seed, "grid-shuffle",
                                    static_cast<std::uint64_t>(cls)));
    std::vector<std::size_t> order(xs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t batch = 256;
    nets::Tensor<float> x({kGridFeatureDim});
    const nets::Tensor<float> no_aux;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (std::size_t i = order.size() - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(
            shuffle.uniform_int(0, static_cast<std::int64_t>(i)));
        std::swap(order[i], order[j]);
      }
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t stop = std::min(start + batch, order.size());
        auto grads = nets::Gradients<float>::zeros_like(net);
        for (std::size_t k = start; k < stop; ++k) {
          const auto& feat = xs[order[k]];
          const double y = ys[order[k]];
          for (int i = 0; i < kGridFeatureDim; ++i)
            x.data[static_cast<std::size_t>(i)] =
                static_cast<float>(feat[static_cast<std::size_t>(i)]);
          nets::ForwardCache<float> cache;
          const auto z = nets::forward(net, x, no_aux, &cache);
          const double p = sigmoid(z.data[0]);
          // d(BCE)/d(logit) with positive-class weighting.
          const double dz =
              (-pos_weight * y * (1.0 - p) + (1.0 - y) * p) /
              static_cast<double>(stop - start);
          nets::Tensor<float> dout({1});
          dout.data[0] = static_cast<float>(dz);
          nets::backward(net, cache, dout, grads);
        }
        nets::adam_step(opt, net.params, grads.params);
      }
    }
    for (int i = 0; i < kGridFeatureDim; ++i)
      params.weights[static_cast<std::size_t>(cls) * kGridFeatureDim + i] =
          net.params[0].data[static_cast<std::size_t>(i)];
    params.bias[static_cast<std::size_t>(cls)] = net.params[1].data[0];
  }
  params.trained = true;
  return params;
}

void save_grid(const std::filesystem::path& path, const GridParams& params) {
  nets::Checkpoint ck;
  nlohmann::json meta;
  meta["kind"] = "grid-detector";
  meta["grid_size"] = params.grid_size;
  meta["hue"] = {
      {"ripe",
       {params.hue.ripe.hue_lo, params.hue.ripe.hue_hi, params.hue.ripe.min_sat,
        params.hue.ripe.min_val}},
      {"unripe",
       {params.hue.unripe.hue_lo, params.hue.unripe.hue_hi,
        params.hue.unripe.min_sat, params.hue.unripe.min_val}},
      {"min_fraction", params.hue.min_fraction},
      {"min_pixels", params.hue.min_pixels}};
  ck.metadata = meta.dump();
  nets::Tensor<float> w({2, kGridFeatureDim});
  w.data.assign(params.weights.begin(), params.weights.end());
  nets::Tensor<float> b({2});
  b.data.assign(params.bias.begin(), params.bias.end());
  ck.tensors.push_back(std::move(w));
  ck.tensors.push_back(std::move(b));
  nets::save_checkpoint(path, ck);
}

GridParams load_grid(const std::filesystem::path& path) {
  const nets::Checkpoint ck = nets::load_checkpoint(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ck.metadata);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("grid metadata: ") + e.what());
  }
  if (meta.value("kind", "") != "grid-detector")
    throw ShapeError("checkpoint is not a grid detector");
  if (ck.tensors.size() != 2 ||
      ck.tensors[0].size() != 2 * kGridFeatureDim ||
      ck.tensors[1].size() != 2)
    throw ShapeError("grid detector tensor layout mismatch");
  GridParams params;
  params.grid_size = meta.at("grid_size").get<int>();
  const auto& hue = meta.at("hue");
  auto load_range = [&](const char* key) {
    const auto& r = hue.at(key);
    return dataset::HueRange{r.at(0), r.at(1), r.at(2), r.at(3)};
  };
  params.hue.ripe = load_range("ripe");
  params.hue.unripe = load_range("unripe");
  params.hue.min_fraction = hue.at("min_fraction").get<double>();
  params.hue.min_pixels = hue.at("min_pixels").get<int>();
  params.weights.assign(ck.tensors[0].data.begin(), ck.tensors[0].data.end());
  params.bias.assign(ck.tensors[1].data.begin(), ck.tensors[1].data.end());
  params.trained = true;
  return params;
}

std::vector<double> default_iou_grid() {
  std::vector<double> out;
  for (int i = 1; i <= 9; ++i) out.push_back(i / 10.0);
  return out;
}

std::vector<double> default_conf_grid() {
  std::vector<double> out;
  for (int i = 1; i <= 100; ++i) out.push_back(i / 100.0);
  return out;
}

namespace {

struct MatchCounts {
  long long tp = 0, fp = 0, fn = 0;
};

// Greedy confidence-descending matching for one frame at one IOU threshold.
// Each detection may claim at most one unmatched same-class truth box.
MatchCounts match_frame(const std::vector<Detection>& dets_sorted,
                        const std::vector<dataset::Annotation>& truth,
                        double iou_t, double conf_t) {
  MatchCounts mc;
  std::vector<char> used(truth.size(), 0);
  for (const auto& d : dets_sorted) {
    if (d.confidence < conf_t) continue;
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < truth.size(); ++g) {
      if (used[g] || truth[g].cls != d.cls) continue;
      const double v = iou(d.box, truth[g].box);
      if (v >= iou_t && v > best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = 1;
      ++mc.tp;
    } else {
      ++mc.fp;
    }
  }
  for (char u : used)
    if (!u) ++mc.fn;
  return mc;
}

}  // namespace

std::vector<PrPoint> pr_curve(const std::vector<FrameEval>& frames,
                              const std::vector<double>& iou_thresholds,
                              const std::vector<double>& conf_thresholds) {
  std::vector<FrameEval> sorted = frames;
  for (auto& fe : sorted) {
    std::stable_sort(fe.detections.begin(), fe.detections.end(),
                     [](const Detection& a, const Detection& b) {
                       return a.confidence > b.confidence;
                     });
  }
  std::vector<PrPoint> out;
  out.reserve(iou_thresholds.size() * conf_thresholds.size());
  for (double iou_t : iou_thresholds) {
    for (double conf_t : conf_thresholds) {
      MatchCounts total;
      for (const auto& fe : sorted) {
        const MatchCounts mc =
            match_frame(fe.detections, fe.truth, iou_t, conf_t);
        total.tp += mc.tp;
        total.fp += mc.fp;
        total.fn += mc.fn;
      }
      PrPoint p;
      p.iou_t = iou_t;
      p.conf_t = conf_t;
      p.tp = total.tp;
      p.fp = total.fp;
      p.fn = total.fn;
      p.precision = (total.tp + total.fp) > 0
                        ? static_cast<double>(total.tp) /
                              static_cast<double>(total.tp + total.fp)
                        : 1.0;
      p.recall = (total.tp + total.fn) > 0
                     ? static_cast<double>(total.tp) /
                           static_cast<double>(total.tp + total.fn)
                     : 1.0;
      out.push_back(p);
    }
  }
  return out;
}

std::vector<PrPoint> pr_curve(const std::vector<dataset::AnnotatedFrame>& set,
                              const DetectFn& fn,
                              const std::vector<double>& iou_thresholds,
                              const std::vector<double>& conf_thresholds) {
  std::vector<FrameEval> evals;
  evals.reserve(set.size());
  for (const auto& af : set) evals.push_back({fn(af), af.annotations});
  return pr_curve(evals, iou_thresholds, conf_thresholds);
}

DetectFn make_oracle_fn(const OracleConfig& cfg,
                        const scene::GeneratorConfig& gen,
                        const scene::CameraIntrinsics& intr) {
  auto cache = std::make_shared<
      std::unordered_map<std::uint64_t, scene::PlantScene>>();
  return [cfg, gen, intr, cache](const dataset::AnnotatedFrame& af) {
    auto it = cache->find(af.plant_seed);
    if (it == cache->end())
      it = cache->emplace(af.plant_seed,
                          scene::generate_plant(af.plant_seed, gen))
               .first;
    return oracle_detect(it->second, af.pose, intr, cfg);
  };
}

DetectFn make_grid_fn(const GridParams& params, const GridConfig& cfg) {
  return [params, cfg](const dataset::AnnotatedFrame& af) {
    return grid_detect(af.frame, params, cfg);
  };
}

const PrPoint& pr_at(const std::vector<PrPoint>& rows, double iou_t,
                     double conf_t) {
  for (const auto& r : rows) {
    if (std::abs(r.iou_t - iou_t) < 1e-9 && std::abs(r.conf_t - conf_t) < 1e-9)
      return r;
  }
  throw ConfigError("requested operating point not on the evaluated grid");
}

CalibrationResult calibrate_gamma0(
    const std::vector<dataset::AnnotatedFrame>& frames,
    const scene::GeneratorConfig& gen, const scene::CameraIntrinsics& intr,
    OracleConfig cfg, double target_precision) {
  // Candidates do not depend on gamma0; trace them once.
  std::unordered_map<std::uint64_t, scene::PlantScene> scenes;
  std::vector<std::vector<OracleCandidate>> cands;
  cands.reserve(frames.size());
  for (const auto& af : frames) {
    auto it = scenes.find(af.plant_seed);
    if (it == scenes.end())
      it = scenes.emplace(af.plant_seed,
                          scene::generate_plant(af.plant_seed, gen))
               .first;
    cands.push_back(oracle_candidates(it->second, af.pose, intr, cfg));
  }
  CalibrationResult best;
  double best_err = 1e9;
  for (int step = 0; step <= 160; ++step) {
    const double g0 = -6.0 + 0.05 * step;
    cfg.gamma0 = g0;
    std::vector<FrameEval> evals;
    evals.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
      FrameEval fe;
      fe.truth = frames[i].annotations;
      for (const auto& c : cands[i])
        fe.detections.push_back({c.box, c.cls, oracle_confidence(c, cfg)});
      evals.push_back(std::move(fe));
    }
    const auto rows = pr_curve(evals, {0.5}, {0.6});
    const auto& p = rows.front();
    const double err = std::abs(p.precision - target_precision);
    if (err < best_err - 1e-12 ||
        (std::abs(err - best_err) <= 1e-12 && p.recall > best.recall)) {
      best_err = err;
      best = {g0, p.precision, p.recall};
    }
  }
  return best;
}

void write_pr_csv(const std::filesystem::path& path,
                  const std::vector<PrPoint>& rows) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw StorageError("cannot open for writing: " + path.string());
  f << "iou,confidence,precision,recall,tp,fp,fn\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f,%.6f,%.6f,%lld,%lld,%lld\n",
                  r.iou_t, r.conf_t, r.precision, r.recall, r.tp, r.fp, r.fn);
    f << buf;
  }
  if (!f) throw StorageError("short write: " + path.string());
}

std::string pr_curve_svg(const std::vector<PrPoint>& rows) {
  const double w = 480, h = 420, mx = 60, my = 40;
  const double pw = w - 2 * mx, ph = h - 2 * my;
  svg::Doc doc(w, h);
  auto X = [&](double recall) { return mx + recall * pw; };
  auto Y = [&](double precision) { return my + (1.0 - precision) * ph; };
  doc.line(mx, my + ph, mx + pw, my + ph, "#000", 1.0);
  doc.line(mx, my, mx, my + ph, "#000", 1.0);
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    doc.text(X(v), my + ph + 16, std::to_string(i * 2 / 10) + "." +
                                       std::to_string((i * 2) % 10),
             10, "#000", "middle");
    doc.text(mx - 8, Y(v) + 4, std::to_string(i * 2 / 10) + "." +
                                     std::to_string((i * 2) % 10),
             10, "#000", "end");
  }
  doc.text(mx + pw / 2, h - 6, "recall", 12, "#000", "middle");
  doc.text(14, my + ph / 2, "precision", 12, "#000", "middle");

  std::vector<double> ious;
  for (const auto& r : rows)
    if (ious.empty() || std::abs(ious.back() - r.iou_t) > 1e-9) {
      bool known = false;
      for (double v : ious) known = known || std::abs(v - r.iou_t) < 1e-9;
      if (!known) ious.push_back(r.iou_t);
    }
  const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                           "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                           "#bcbd22"};
  int ci = 0;
  for (double iou_t : ious) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : rows)
      if (std::abs(r.iou_t - iou_t) < 1e-9)
        pts.emplace_back(X(r.recall), Y(r.precision));
    const std::string color = palette[ci % 9];
    doc.polyline(pts, color, 1.5);
    char label[32];
    std::snprintf(label, sizeof(label), "IOU %.1f", iou_t);
    doc.text(mx + pw - 70, my + 14 + 14 * ci, label, 10, color);
    ++ci;
  }
  return doc.str();
}

}  // namespace vpoc::detector
