#include "support.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vpoc/errors.hpp"
#include "vpoc/rng.hpp"

namespace vpoc::testsup {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<unsigned> counter{0};
  const auto base = fs::temp_directory_path();
  path_ = base / ("vpoc-test-" + tag + "-" +
                  std::to_string(::getpid()) + "-" +
                  std::to_string(counter.fetch_add(1)));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw StorageError("cannot open " + p.string());
  std::ostringstream out;
  out << f.rdbuf();
  return out.str();
}

double rel_err(double a, double b, double floor_mag) {
  const double m = std::max(std::abs(a), std::abs(b));
  return std::abs(a - b) / std::max(m, floor_mag);
}

double central_diff(const std::function<double()>& f, double& x, double h) {
  const double x0 = x;
  x = x0 + h;
  const double fp = f();
  x = x0 - h;
  const double fm = f();
  x = x0;
  return (fp - fm) / (2.0 * h);
}

double ScalarAdam::step(double w, double g) {
  ++t;
  m = beta1 * m + (1.0 - beta1) * g;
  v = beta2 * v + (1.0 - beta2) * g * g;
  const double m_hat = m / (1.0 - std::pow(beta1, static_cast<double>(t)));
  const double v_hat = v / (1.0 - std::pow(beta2, static_cast<double>(t)));
  return w - lr * m_hat / (std::sqrt(v_hat) + eps);
}

namespace {

struct V3 {
  double x, y, z;
};
V3 sub(const V3& a, const V3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
V3 add(const V3& a, const V3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
V3 mul(const V3& a, double s) { return {a.x * s, a.y * s, a.z * s}; }
double dot(const V3& a, const V3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
double norm(const V3& a) { return std::sqrt(dot(a, a)); }

V3 from(const geom::Vec3& v) { return {v.x, v.y, v.z}; }

// Smallest positive root of |o + t d - c|^2 = r^2 beyond t_min.
std::optional<double> sphere_hit(const V3& o, const V3& d, const V3& c,
                                 double r, double t_min) {
  const V3 oc = sub(o, c);
  const double b = 2.0 * dot(oc, d);
  const double cc = dot(oc, oc) - r * r;
  const double disc = b * b - 4.0 * cc;
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  const double t1 = (-b - s) / 2.0;
  const double t2 = (-b + s) / 2.0;
  if (t1 > t_min) return t1;
  if (t2 > t_min) return t2;
  return std::nullopt;
}

// Plane hit inside the ellipse spanned by the disk's two derived axes. The
// axis construction mirrors the documented convention: axes come from an
// orthonormal basis of the normal.
std::optional<double> disk_hit(const V3& o, const V3& d, const V3& c,
                               const V3& n, double ax, double ay,
                               double t_min) {
  const double denom = dot(d, n);
  if (std::abs(denom) < 1e-12) return std::nullopt;
  const double t = dot(sub(c, o), n) / denom;
  if (t <= t_min) return std::nullopt;
  const V3 p = sub(add(o, mul(d, t)), c);
  // Build the same in-plane basis the production geometry derives.
  geom::Vec3 e1, e2;
  geom::orthonormal_basis({n.x, n.y, n.z}, e1, e2);
  const double u = dot(p, from(e1)) / ax;
  const double v = dot(p, from(e2)) / ay;
  if (u * u + v * v > 1.0) return std::nullopt;
  return t;
}

bool segment_blocked_mc(const scene::PlantScene& sc, const V3& from_p,
                        const V3& to_p, std::ptrdiff_t skip_berry) {
  const V3 d_full = sub(to_p, from_p);
  const double len = norm(d_full);
  const V3 d = mul(d_full, 1.0 / len);
  const double t_max = len - 1e-9;
  for (std::size_t i = 0; i < sc.berries.size(); ++i) {
    if (static_cast<std::ptrdiff_t>(i) == skip_berry) continue;
    const auto& b = sc.berries[i];
    if (auto t = sphere_hit(from_p, d, from(b.center), b.radius, 1e-7);
        t && *t < t_max)
      return true;
  }
  for (const auto& l : sc.leaves) {
    if (auto t = disk_hit(from_p, d, from(l.center), from(l.normal),
                          l.semi_axes[0], l.semi_axes[1], 1e-7);
        t && *t < t_max)
      return true;
  }
  return false;
}

}  // namespace

double mc_visible_fraction(const scene::PlantScene& sc,
                           std::size_t berry_index,
                           const scene::CameraPose& pose, int samples,
                           std::uint64_t seed) {
  const auto& berry = sc.berries.at(berry_index);
  const V3 cam = from(pose.position());
  const V3 center = from(berry.center);
  const V3 to_cam = sub(cam, center);
  const double dist = norm(to_cam);
  const V3 w = mul(to_cam, 1.0 / dist);
  geom::Vec3 ge1, ge2;
  geom::orthonormal_basis({w.x, w.y, w.z}, ge1, ge2);
  const V3 e1 = from(ge1), e2 = from(ge2);

  rng::Stream rs(seed);
  int unblocked = 0;
  for (int i = 0; i < samples; ++i) {
    // Uniform over the camera-facing hemisphere: area element is uniform in
    // cos(psi), matching the production lattice's measure.
    const double cos_psi = rs.uniform();
    const double sin_psi = std::sqrt(std::max(0.0, 1.0 - cos_psi * cos_psi));
    const double az = rs.uniform(0.0, 2.0 * kPi);
    const V3 n = add(mul(w, cos_psi),
                     add(mul(e1, std::cos(az) * sin_psi),
                         mul(e2, std::sin(az) * sin_psi)));
    const V3 p = add(center, mul(n, berry.radius));
    if (!segment_blocked_mc(sc, p, cam,
                            static_cast<std::ptrdiff_t>(berry_index)))
      ++unblocked;
  }
  return static_cast<double>(unblocked) / samples;
}

std::optional<BoundingBox> raster_sphere_box(
    const scene::Berry& berry, const scene::CameraPose& pose,
    const scene::CameraIntrinsics& intr) {
  const auto cam = scene::pose_to_world(pose);
  int x_min = intr.width, x_max = -1, y_min = intr.height, y_max = -1;
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const geom::Ray ray = cam.pixel_ray(x, y, intr);
      if (sphere_hit(from(ray.origin), from(ray.dir), from(berry.center),
                     berry.radius, 1e-9)) {
        x_min = std::min(x_min, x);
        x_max = std::max(x_max, x);
        y_min = std::min(y_min, y);
        y_max = std::max(y_max, y);
      }
    }
  }
  if (x_max < 0) return std::nullopt;
  return BoundingBox{x_min, y_min, x_max + 1, y_max + 1};
}

env::Observation ToyBandEnv::observe() const {
  env::Observation obs;
  const double scaled = 2.0 * x_ - 1.0;
  obs.pose_features = {0.0, 0.0, scaled};
  obs.detection_features = {scaled, 0.0, 0.0, 0.0, 0.0};
  return obs;
}

env::Observation ToyBandEnv::reset() {
  x_ = cfg_.start;
  t_ = 0;
  done_ = false;
  return observe();
}

env::Transition ToyBandEnv::step(const env::Action& a) {
  if (done_) throw LifecycleError("toy env stepped after done");
  env::Transition tr;
  tr.obs = observe();
  const double move =
      std::clamp(a.d_phi, -cfg_.action_limit, cfg_.action_limit);
  tr.action = {a.d_theta, move};
  x_ = std::clamp(x_ + move, 0.0, 1.0);
  const double dist =
      std::max({0.0, cfg_.band_lo - x_, x_ - cfg_.band_hi});
  tr.reward = -dist;
  ++t_;
  if (t_ >= cfg_.horizon) {
    done_ = true;
    tr.timeout = true;
    tr.done = true;
  }
  tr.next_obs = observe();
  return tr;
}

env::EnvConfig toy_env_config(const ToyBandEnv::Cfg& cfg) {
  env::EnvConfig ec;
  ec.obs_mode = env::ObsMode::Features;
  ec.top_k = 1;
  ec.action_limit = cfg.action_limit;
  ec.horizon = cfg.horizon;
  return ec;
}

std::vector<detector::FrameEval> pr_fixture() {
  using scene::Ripeness;
  const auto det = [](int x0, int y0, int x1, int y1, double conf,
                      Ripeness cls) {
    return detector::Detection{{x0, y0, x1, y1}, cls, conf};
  };
  const auto gt = [](int x0, int y0, int x1, int y1, Ripeness cls) {
    return dataset::Annotation{{x0, y0, x1, y1}, cls};
  };

  std::vector<detector::FrameEval> frames(5);
  // IOU(a1, A) = 85/100.
  frames[0].truth = {gt(0, 0, 10, 10, Ripeness::Ripe)};
  frames[0].detections = {det(0, 0, 10, 8.5, 0.9, Ripeness::Ripe)};
  // IOU(b1, B) = 80/120; b2 lies inside B (IOU 0.36) but B is taken first.
  frames[1].truth = {gt(20, 20, 30, 30, Ripeness::Ripe)};
  frames[1].detections = {det(22, 20, 32, 30, 0.8, Ripeness::Ripe),
                          det(20, 20, 26, 26, 0.7, Ripeness::Ripe)};
  // Ripe detection over unripe truth never matches; c2 is same-class.
  frames[2].truth = {gt(0, 0, 10, 10, Ripeness::Unripe)};
  frames[2].detections = {det(0, 0, 10, 10, 0.9, Ripeness::Ripe),
                          det(0, 0, 10, 5.5, 0.55, Ripeness::Unripe)};
  // Exact-overlap detection below the 0.5 confidence cut.
  frames[3].truth = {gt(5, 5, 15, 15, Ripeness::Ripe)};
  frames[3].detections = {det(5, 5, 15, 15, 0.3, Ripeness::Ripe)};
  // Pure false positive frame.
  frames[4].detections = {det(1, 1, 5, 5, 0.95, Ripeness::Ripe)};
  return frames;
}

}  // namespace vpoc::testsup
