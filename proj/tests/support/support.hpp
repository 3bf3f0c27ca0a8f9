// Shared helpers for the test suites: scratch directories, finite-difference
// utilities, an independent scalar Adam recurrence, brute-force geometric
// oracles, and a tiny one-dimensional control task.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vpoc/box.hpp"
#include "vpoc/detector.hpp"
#include "vpoc/env.hpp"
#include "vpoc/scene.hpp"

namespace vpoc::testsup {

// Unique directory under the system temp root, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& p);

// |a - b| relative to the larger magnitude, floored to keep near-zero pairs
// from exploding.
double rel_err(double a, double b, double floor_mag = 1e-8);

// Central finite difference of f with respect to x (restores x afterwards).
double central_diff(const std::function<double()>& f, double& x, double h);

// Textbook Adam recurrence on one scalar, kept deliberately separate from
// the production optimizer.
struct ScalarAdam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long t = 0;
  double m = 0.0, v = 0.0;

  double step(double w, double g);
};

// Monte-Carlo estimate of the camera-facing visible surface fraction of one
// berry, with its own ray geometry; reference for the lattice estimator.
double mc_visible_fraction(const scene::PlantScene& sc,
                           std::size_t berry_index,
                           const scene::CameraPose& pose, int samples,
                           std::uint64_t seed);

// Pixel box of the berry silhouette found by testing every pixel center ray
// against the sphere, ignoring occluders. nullopt when nothing hits.
std::optional<BoundingBox> raster_sphere_box(const scene::Berry& berry,
                                             const scene::CameraPose& pose,
                                             const scene::CameraIntrinsics& i);

// One-dimensional band-seeking task. A point slides on [0, 1] under the
// d_phi action component; reward is the negative distance from the target
// band after the move. Observations reuse the production encoding with
// top_k = 1: the scaled position fills the leading detection slot and the
// last pose feature. The band sits a short transit from the start and is
// wide relative to the exploration noise, so converged training returns
// reflect the policy rather than the noise jitter.
class ToyBandEnv {
 public:
  struct Cfg {
    double band_lo = 0.45;
    double band_hi = 0.62;
    double start = 0.30;
    double action_limit = 0.1;
    int horizon = 40;
  };

  ToyBandEnv() : ToyBandEnv(Cfg{}) {}
  explicit ToyBandEnv(Cfg cfg) : cfg_(cfg) {}

  const Cfg& cfg() const { return cfg_; }
  env::Observation reset();
  env::Transition step(const env::Action& a);
  bool done() const { return done_; }
  double x() const { return x_; }

 private:
  env::Observation observe() const;

  Cfg cfg_;
  double x_ = 0.0;
  int t_ = 0;
  bool done_ = true;
};

// Environment configuration matching ToyBandEnv observations.
env::EnvConfig toy_env_config(const ToyBandEnv::Cfg& cfg);

// Five frames of hand-placed boxes whose pairwise IOUs (0.85, 2/3, 0.36,
// 0.55, 1.0) sit safely between the evaluation thresholds. With the 0.5
// confidence cut the expected aggregate counts per IOU threshold are
//   0.1-0.5 -> tp 3 fp 3 fn 1,  0.6 -> 2/4/2,  0.7-0.8 -> 1/5/3,
//   0.9 -> 0/6/4;
// dropping the cut to 0.25 admits one extra exact-overlap detection,
// shifting every row by one tp/fn.
std::vector<detector::FrameEval> pr_fixture();

}  // namespace vpoc::testsup
