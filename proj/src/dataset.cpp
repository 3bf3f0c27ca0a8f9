#include "vpoc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "vpoc/color.hpp"
#include "vpoc/errors.hpp"
#include "vpoc/rng.hpp"

namespace vpoc::dataset {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

bool HueRange::contains(double h, double s, double v) const {
  if (s < min_sat || v < min_val) return false;
  if (hue_lo <= hue_hi) return h >= hue_lo && h <= hue_hi;
  return h >= hue_lo || h <= hue_hi;  // interval wraps through 0
}

long long in_range_pixel_count(const scene::Frame& frame,
                               const BoundingBox& box, const HueRange& range) {
  const BoundingBox b = box.clipped(frame.width, frame.height);
  long long count = 0;
  for (int y = b.y_min; y < b.y_max; ++y) {
    for (int x = b.x_min; x < b.x_max; ++x) {
      const std::uint8_t* p = frame.at(x, y);
      const Hsv hsv = rgb_to_hsv(p[0], p[1], p[2]);
      if (range.contains(hsv.h, hsv.s, hsv.v)) ++count;
    }
  }
  return count;
}

bool occlusion_check(const scene::Frame& frame, const BoundingBox& box,
                     scene::Ripeness cls, const OcclusionConfig& cfg) {
  const BoundingBox b = box.clipped(frame.width, frame.height);
  if (b.empty()) throw GeometryError("occlusion check on an empty box");
  const long long count = in_range_pixel_count(frame, b, cfg.range_for(cls));
  const double needed = std::max(static_cast<double>(cfg.min_pixels),
                                 cfg.min_fraction * b.area());
  return static_cast<double>(count) >= needed;
}

void CollectConfig::validate() const {
  generator.validate();
  if (num_plants < 1 || num_views < 1)
    throw ConfigError("collect needs at least one plant and one view");
  if (intrinsics.width < 1 || intrinsics.height < 1)
    throw ConfigError("frame dimensions must be positive");
  if (!(intrinsics.fov > 0.0) || intrinsics.fov >= kPi)
    throw ConfigError("fov must lie in (0, pi)");
  if (hemisphere_radius <= 0.0)
    throw ConfigError("hemisphere radius must be positive");
  if (!(phi_min > 0.0) || !(phi_max > phi_min) || phi_max >= kPi / 2.0)
    throw ConfigError("phi range must satisfy 0 < phi_min < phi_max < pi/2");
  if (occlusion.min_fraction < 0.0 || occlusion.min_fraction > 1.0)
    throw ConfigError("occlusion min_fraction outside [0, 1]");
  if (occlusion.min_pixels < 1)
    throw ConfigError("occlusion min_pixels must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

std::uint64_t plant_seed_for(std::uint64_t seed, int index) {
  return rng::derive(seed, "plant", static_cast<std::uint64_t>(index));
}

namespace {

std::vector<AnnotatedFrame> collect_plant(const CollectConfig& cfg,
                                          int plant_index) {
  const std::uint64_t pseed = plant_seed_for(cfg.seed, plant_index);
  const scene::PlantScene sc = scene::generate_plant(pseed, cfg.generator);
  rng::Stream poses(rng::derive(cfg.seed, "view-poses",
                                static_cast<std::uint64_t>(plant_index)));
  std::vector<AnnotatedFrame> out;
  out.reserve(static_cast<std::size_t>(cfg.num_views));
  for (int v = 0; v < cfg.num_views; ++v) {
    AnnotatedFrame af;
    af.plant_seed = pseed;
    af.plant_index = plant_index;
    af.view_index = v;
    af.pose.theta = poses.uniform(0.0, 2.0 * kPi);
    af.pose.phi = poses.uniform(cfg.phi_min, cfg.phi_max);
    af.pose.radius = cfg.hemisphere_radius;
    af.frame = scene::render(sc, af.pose, cfg.intrinsics);
    for (const auto& berry : sc.berries) {
      const auto box = scene::project_sphere(berry, af.pose, cfg.intrinsics);
      if (!box) continue;
      if (occlusion_check(af.frame, *box, berry.ripeness, cfg.occlusion))
        af.annotations.push_back({*box, berry.ripeness});
    }
    out.push_back(std::move(af));
  }
  return out;
}

}  // namespace

std::vector<AnnotatedFrame> collect(const CollectConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<AnnotatedFrame>> per_plant(
      static_cast<std::size_t>(cfg.num_plants));
  const int workers = std::min(cfg.workers, cfg.num_plants);
  if (workers <= 1) {
    for (int i = 0; i < cfg.num_plants; ++i)
      per_plant[static_cast<std::size_t>(i)] = collect_plant(cfg, i);
  } else {
    // Plants are mutually independent; striping by index keeps the merge
    // order (and therefore the serialized bytes) independent of scheduling.
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    std::vector<std::exception_ptr> errors(
        static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int i = w; i < cfg.num_plants; i += workers)
            per_plant[static_cast<std::size_t>(i)] = collect_plant(cfg, i);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::vector<AnnotatedFrame> out;
  out.reserve(static_cast<std::size_t>(cfg.num_plants) * cfg.num_views);
  for (auto& plant : per_plant)
    for (auto& af : plant) out.push_back(std::move(af));
  return out;
}

std::pair<std::vector<AnnotatedFrame>, std::vector<AnnotatedFrame>> split(
    const std::vector<AnnotatedFrame>& frames, double train_fraction,
    std::uint64_t seed) {
  if (train_fraction < 0.0 || train_fraction > 1.0)
    throw ConfigError("train_fraction outside [0, 1]");
  std::vector<std::uint64_t> plants;
  for (const auto& af : frames) plants.push_back(af.plant_seed);
  std::sort(plants.begin(), plants.end());
  plants.erase(std::unique(plants.begin(), plants.end()), plants.end());
  if (plants.size() < 2)
    throw ConfigError("split by plant needs at least two distinct plants");

  rng::Stream rs(rng::derive(seed, "split-shuffle"));
  for (std::size_t i = plants.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(
        rs.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(plants[i], plants[j]);
  }
  const auto n = static_cast<long long>(plants.size());
  long long n_train = std::llround(train_fraction * static_cast<double>(n));
  n_train = std::clamp(n_train, 1LL, n - 1);

  std::vector<std::uint64_t> train_plants(
      plants.begin(), plants.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::sort(train_plants.begin(), train_plants.end());
  auto is_train = [&](std::uint64_t p) {
    return std::binary_search(train_plants.begin(), train_plants.end(), p);
  };

  std::pair<std::vector<AnnotatedFrame>, std::vector<AnnotatedFrame>> out;
  for (const auto& af : frames) {
    (is_train(af.plant_seed) ? out.first : out.second).push_back(af);
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, const scene::Frame& frame) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw StorageError("cannot open for writing: " + path.string());
  f << "P6\n" << frame.width << " " << frame.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(frame.pixels.data()),
          static_cast<std::streamsize>(frame.pixels.size()));
  if (!f) throw StorageError("short write: " + path.string());
}

scene::Frame read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw StorageError("cannot open for reading: " + path.string());
  std::string magic;
  f >> magic;
  if (magic != "P6") throw FormatError("not a P6 ppm: " + path.string());
  int w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  if (!f || w < 1 || h < 1 || maxval != 255)
    throw FormatError("bad ppm header: " + path.string());
  f.get();  // single whitespace byte before the raster
  scene::Frame frame;
  frame.width = w;
  frame.height = h;
  frame.pixels.resize(static_cast<std::size_t>(3) * w * h);
  f.read(reinterpret_cast<char*>(frame.pixels.data()),
         static_cast<std::streamsize>(frame.pixels.size()));
  if (f.gcount() != static_cast<std::streamsize>(frame.pixels.size()))
    throw FormatError("truncated ppm raster: " + path.string());
  return frame;
}

namespace {

std::string frame_filename(const AnnotatedFrame& af) {
  return std::to_string(af.plant_index) + "_" + std::to_string(af.view_index) +
         ".ppm";
}

const char* class_name(scene::Ripeness r) {
  return r == scene::Ripeness::Ripe ? "ripe" : "unripe";
}

scene::Ripeness class_from_name(const std::string& s) {
  if (s == "ripe") return scene::Ripeness::Ripe;
  if (s == "unripe") return scene::Ripeness::Unripe;
  throw FormatError("unknown class name: " + s);
}

}  // namespace

void save_dataset(const std::filesystem::path& dir,
                  const std::vector<AnnotatedFrame>& frames) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "frames", ec);
  if (ec) throw StorageError("cannot create " + (dir / "frames").string());
  std::ofstream ann(dir / "annotations.jsonl", std::ios::binary);
  if (!ann)
    throw StorageError("cannot open " + (dir / "annotations.jsonl").string());
  for (const auto& af : frames) {
    const std::string rel = "frames/" + frame_filename(af);
    write_ppm(dir / rel, af.frame);
    nlohmann::json j;
    j["plant_seed"] = af.plant_seed;
    j["plant"] = af.plant_index;
    j["view"] = af.view_index;
    j["theta"] = af.pose.theta;
    j["phi"] = af.pose.phi;
    j["radius"] = af.pose.radius;
    j["frame"] = rel;
    auto& ja = j["annotations"] = nlohmann::json::array();
    for (const auto& a : af.annotations) {
      ja.push_back({{"box", {a.box.x_min, a.box.y_min, a.box.x_max,
                             a.box.y_max}},
                    {"class", class_name(a.cls)}});
    }
    ann << j.dump() << "\n";
  }
  if (!ann) throw StorageError("short write: annotations.jsonl");
}

std::vector<AnnotatedFrame> load_dataset(const std::filesystem::path& dir) {
  std::ifstream ann(dir / "annotations.jsonl", std::ios::binary);
  if (!ann)
    throw StorageError("cannot open " + (dir / "annotations.jsonl").string());
  std::vector<AnnotatedFrame> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ann, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      AnnotatedFrame af;
      af.plant_seed = j.at("plant_seed").get<std::uint64_t>();
      af.plant_index = j.at("plant").get<int>();
      af.view_index = j.at("view").get<int>();
      af.pose.theta = j.at("theta").get<double>();
      af.pose.phi = j.at("phi").get<double>();
      af.pose.radius = j.at("radius").get<double>();
      af.frame = read_ppm(dir / j.at("frame").get<std::string>());
      for (const auto& ja : j.at("annotations")) {
        Annotation a;
        const auto& b = ja.at("box");
        a.box = {b.at(0), b.at(1), b.at(2), b.at(3)};
        a.cls = class_from_name(ja.at("class").get<std::string>());
        af.annotations.push_back(a);
      }
      out.push_back(std::move(af));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(
          "annotations.jsonl line " + std::to_string(lineno) + ": " + e.what(),
          lineno);
    }
  }
  return out;
}

}  // namespace vpoc::dataset
