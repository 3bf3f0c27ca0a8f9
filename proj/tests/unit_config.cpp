#include <cstdlib>
#include <fstream>
#include <functional>
#include <string>

#include "doctest.h"
#include "support/support.hpp"
#include "vpoc/config.hpp"
#include "vpoc/errors.hpp"

using namespace vpoc;

namespace {

std::string error_message(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("toml subset parses scalars sections and arrays") {
    const std::string text =
        "seed = 7\n"
        "out_dir = \"runs/a b\"  # trailing comment\n"
        "\n"
        "[env]\n"
        "action_limit = 0.15\n"
        "horizon = 100\n"
        "flag = true\n"
        "\n"
        "[detector.train]\n"
        "lr = 5e-2\n"
        "\n"
        "[nets]\n"
        "hidden = [200, 200]\n"
        "empty = []\n"
        "note = \"a#b\\n\\\"q\\\"\"\n";
    const auto t = config::parse_toml(text);
    CHECK(t.at("seed").kind == config::Value::Kind::Int);
    CHECK(t.at("seed").i == 7);
    CHECK(t.at("out_dir").s == "runs/a b");
    CHECK(t.at("env.action_limit").kind == config::Value::Kind::Float);
    CHECK(t.at("env.action_limit").f == 0.15);
    CHECK(t.at("env.horizon").i == 100);
    CHECK(t.at("env.flag").b == true);
    CHECK(t.at("detector.train.lr").f == 0.05);
    REQUIRE(t.at("nets.hidden").kind == config::Value::Kind::Array);
    REQUIRE(t.at("nets.hidden").array.size() == 2);
    CHECK(t.at("nets.hidden").array[0].i == 200);
    CHECK(t.at("nets.empty").array.empty());
    CHECK(t.at("nets.note").s == "a#b\n\"q\"");
  }

  TEST_CASE("crlf and blank lines are tolerated") {
    const auto t = config::parse_toml("seed = 3\r\n\r\n[env]\r\nhorizon = 5\r\n");
    CHECK(t.at("seed").i == 3);
    CHECK(t.at("env.horizon").i == 5);
  }

  TEST_CASE("negative numbers parse with their sign") {
    const auto t = config::parse_toml("a = -4\nb = -0.25\n");
    CHECK(t.at("a").i == -4);
    CHECK(t.at("b").f == -0.25);
  }

  TEST_CASE("parse errors carry the offending line number") {
    CHECK(error_message([] {
            config::parse_toml("a = 1\nb = 2\nb = 3\n");
          }).find("line 3") != std::string::npos);
    CHECK(error_message([] {
            config::parse_toml("a = 1\nnot a kv pair\n");
          }).find("line 2") != std::string::npos);
    CHECK_THROWS_AS(config::parse_toml("a = \"unterminated\n"), FormatError);
    CHECK_THROWS_AS(config::parse_toml("a = [1, 2\n"), FormatError);
    CHECK_THROWS_AS(config::parse_toml("a = 1 2\n"), FormatError);
    CHECK_THROWS_AS(config::parse_toml("a = @bad\n"), FormatError);
    CHECK_THROWS_AS(config::parse_toml("[unclosed\na = 1\n"), FormatError);
    CHECK_THROWS_AS(config::parse_toml("[]\n"), FormatError);
    CHECK_THROWS_AS(config::parse_toml("a = \"x\\q\"\n"), FormatError);
    CHECK_THROWS_AS(config::parse_toml("a b = 1\n"), FormatError);
  }

  TEST_CASE("duplicate keys across section repeats are rejected") {
    CHECK_THROWS_AS(
        config::parse_toml("[env]\nhorizon = 1\n[scene]\nx = 2\n"
                           "[env]\nhorizon = 2\n"),
        FormatError);
  }

  TEST_CASE("file loading reports missing files as storage errors") {
    CHECK_THROWS_AS(config::load_toml_file("/nonexistent/vpoc.toml"),
                    StorageError);
    testsup::TempDir tmp("config");
    const auto p = tmp.path() / "c.toml";
    std::ofstream(p) << "seed = 9\n";
    CHECK(config::load_toml_file(p).at("seed").i == 9);
  }

  TEST_CASE("overrides replace values using the literal grammar") {
    auto t = config::parse_toml("seed = 1\n[env]\nhorizon = 100\n");
    config::apply_override(t, "env.horizon=25");
    CHECK(t.at("env.horizon").i == 25);
    config::apply_override(t, "env.action_limit=0.1");
    CHECK(t.at("env.action_limit").f == 0.1);
    config::apply_override(t, "nets.hidden=[8, 4]");
    REQUIRE(t.at("nets.hidden").array.size() == 2);
    CHECK(t.at("nets.hidden").array[1].i == 4);
    // Unquoted words coming from a shell arrive as strings.
    config::apply_override(t, "detector.kind=grid");
    CHECK(t.at("detector.kind").kind == config::Value::Kind::String);
    CHECK(t.at("detector.kind").s == "grid");
    CHECK_THROWS_AS(config::apply_override(t, "no-equals-sign"), ConfigError);
    CHECK_THROWS_AS(config::apply_override(t, "bad key!=1"), ConfigError);
  }

  TEST_CASE("an empty table yields the default run configuration") {
    const auto cfg = config::parse_run_config({});
    CHECK(cfg.seed == 1);
    CHECK(cfg.horizon == 100);
    CHECK(cfg.top_k == 3);
    CHECK(cfg.action_limit == 0.15);
    CHECK(cfg.obs_mode == env::ObsMode::Features);
    CHECK(cfg.detector_kind == env::DetectorKind::Oracle);
    CHECK(cfg.agent.hidden == std::vector<int>{200, 200});
    CHECK(cfg.train_episodes == 1000);
    CHECK(cfg.evaluation.episodes == 100);
    CHECK(cfg.workspace.phi_min == doctest::Approx(10.0 * kPi / 180.0));
    CHECK(cfg.workspace.phi_max == doctest::Approx(80.0 * kPi / 180.0));
    CHECK(cfg.spawn_phi == doctest::Approx(30.0 * kPi / 180.0));
  }

  TEST_CASE("degree settings convert to radians in derived configs") {
    auto t = config::parse_toml(
        "[env]\nphi_min_deg = 15.0\nphi_max_deg = 75.0\n"
        "spawn_phi_deg = 45.0\nspawn_theta_deg = 90.0\n"
        "[policies]\nphi_star_deg = 50.0\n");
    const auto cfg = config::parse_run_config(t);
    CHECK(cfg.workspace.phi_min == 15.0 * kPi / 180.0);
    CHECK(cfg.workspace.phi_max == 75.0 * kPi / 180.0);
    CHECK(cfg.spawn_phi == 45.0 * kPi / 180.0);
    CHECK(cfg.spawn_theta == 90.0 * kPi / 180.0);
    CHECK(cfg.baselines.phi_star == 50.0 * kPi / 180.0);

    const auto env_cfg = config::env_config(cfg);
    CHECK(env_cfg.workspace.phi_min == cfg.workspace.phi_min);
    CHECK(env_cfg.spawn_phi == cfg.spawn_phi);
    CHECK(env_cfg.spawn_theta == cfg.spawn_theta);
  }

  TEST_CASE("baseline step and servo gains default to the action limit") {
    auto t = config::parse_toml("[env]\naction_limit = 0.12\n");
    const auto cfg = config::parse_run_config(t);
    CHECK(cfg.baselines.action_limit == 0.12);
    CHECK(cfg.baselines.step == 0.12);
    CHECK(cfg.baselines.k_theta == 0.12);
    CHECK(cfg.baselines.k_phi == 0.12);

    config::apply_override(t, "policies.step=0.05");
    const auto cfg2 = config::parse_run_config(t);
    CHECK(cfg2.baselines.step == 0.05);
    CHECK(cfg2.baselines.k_theta == 0.12);
  }

  TEST_CASE("unknown keys are rejected by name") {
    auto t = config::parse_toml("[env]\nhorizon = 50\nhorizons = 2\n");
    const auto msg = error_message([&] { config::parse_run_config(t); });
    CHECK(msg.find("unknown config keys") != std::string::npos);
    CHECK(msg.find("env.horizons") != std::string::npos);
  }

  TEST_CASE("type mismatches are rejected") {
    CHECK_THROWS_AS(
        config::parse_run_config(config::parse_toml("seed = \"abc\"\n")),
        ConfigError);
    CHECK_THROWS_AS(
        config::parse_run_config(config::parse_toml("[env]\nhorizon = 1.5\n")),
        ConfigError);
    CHECK_THROWS_AS(
        config::parse_run_config(
            config::parse_toml("[nets]\nhidden = [200, 1.5]\n")),
        ConfigError);
    CHECK_THROWS_AS(
        config::parse_run_config(
            config::parse_toml("[agent]\nnoise = \"perlin\"\n")),
        ConfigError);
    CHECK_THROWS_AS(
        config::parse_run_config(
            config::parse_toml("[detector]\nkind = \"yolo\"\n")),
        ConfigError);
  }

  TEST_CASE("schema validation catches cross-field violations") {
    CHECK_THROWS_AS(config::parse_run_config(
                        config::parse_toml("[env]\nphi_min_deg = 80.0\n"
                                           "phi_max_deg = 10.0\n")),
                    ConfigError);
    CHECK_THROWS_AS(config::parse_run_config(
                        config::parse_toml("[env]\nspawn_phi_deg = 5.0\n")),
                    ConfigError);
    CHECK_THROWS_AS(config::parse_run_config(
                        config::parse_toml("seed = -3\n")),
                    ConfigError);
    CHECK_THROWS_AS(config::parse_run_config(
                        config::parse_toml("[camera]\nfov_deg = 190.0\n")),
                    ConfigError);
  }

  TEST_CASE("the resolved config is a serialization fixed point") {
    auto t = config::parse_toml(
        "seed = 17\n[env]\nphi_min_deg = 12.5\nhorizon = 64\n"
        "[nets]\nhidden = [32, 16]\n[agent]\nepisodes = 10\n");
    const auto cfg = config::parse_run_config(t);
    const auto text = config::resolved_toml(cfg);

    const auto cfg2 = config::parse_run_config(config::parse_toml(text));
    const auto text2 = config::resolved_toml(cfg2);
    CHECK(text == text2);
    // Bit-identical radians after the round trip, not merely close.
    CHECK(cfg2.workspace.phi_min == cfg.workspace.phi_min);
    CHECK(cfg2.workspace.phi_max == cfg.workspace.phi_max);
    CHECK(cfg2.spawn_phi == cfg.spawn_phi);
    CHECK(cfg2.baselines.phi_star == cfg.baselines.phi_star);
    CHECK(cfg2.camera.fov == cfg.camera.fov);
    CHECK(cfg2.seed == 17);
    CHECK(cfg2.horizon == 64);
    CHECK(cfg2.agent.hidden == std::vector<int>{32, 16});
    CHECK(cfg2.train_episodes == 10);
  }

  TEST_CASE("the default configuration is also a fixed point") {
    const auto cfg = config::parse_run_config({});
    const auto text = config::resolved_toml(cfg);
    const auto cfg2 = config::parse_run_config(config::parse_toml(text));
    CHECK(config::resolved_toml(cfg2) == text);
  }

  TEST_CASE("output root resolution prefers explicit then environment") {
    auto cfg = config::parse_run_config({});
    cfg.out_dir = "/tmp/explicit";
    CHECK(config::resolve_out_dir(cfg) == "/tmp/explicit");

    cfg.out_dir.clear();
    ::setenv("VPOC_OUT", "/tmp/from-env", 1);
    CHECK(config::resolve_out_dir(cfg) == "/tmp/from-env");
    ::unsetenv("VPOC_OUT");
    CHECK(config::resolve_out_dir(cfg) == "runs");
  }

  TEST_CASE("derived configs copy the shared settings") {
    auto t = config::parse_toml(
        "[env]\nhorizon = 42\ntop_k = 2\naction_limit = 0.1\n"
        "[dataset]\nnum_plants = 12\nnum_views = 3\nworkers = 2\n"
        "[detector]\ngrid_size = 4\n[detector.train]\nepochs = 9\nlr = 0.125\n");
    const auto cfg = config::parse_run_config(t);

    const auto env_cfg = config::env_config(cfg);
    CHECK(env_cfg.horizon == 42);
    CHECK(env_cfg.top_k == 2);
    CHECK(env_cfg.action_limit == 0.1);
    CHECK(env_cfg.detector_kind == env::DetectorKind::Oracle);

    const auto col = config::collect_config(cfg);
    CHECK(col.num_plants == 12);
    CHECK(col.num_views == 3);
    CHECK(col.workers == 2);

    const auto gt = config::grid_train_config(cfg);
    CHECK(gt.epochs == 9);
    CHECK(gt.lr == 0.125);
  }
}
