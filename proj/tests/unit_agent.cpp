#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "support/support.hpp"
#include "vpoc/agent.hpp"
#include "vpoc/env.hpp"
#include "vpoc/errors.hpp"
#include "vpoc/rng.hpp"

using namespace vpoc;

namespace {

// Synthetic feature-mode observation with values inside the contract ranges.
env::Observation random_obs(rng::Stream& rs, int top_k = 3) {
  env::Observation obs;
  const double th = rs.uniform(0.0, 2.0 * 3.14159265358979);
  obs.pose_features = {std::sin(th), std::cos(th), rs.uniform(-1.0, 1.0)};
  obs.detection_features.assign(static_cast<std::size_t>(top_k) * 5, 0.0);
  for (int k = 0; k < top_k; ++k) {
    double* slot = obs.detection_features.data() + 5 * k;
    slot[0] = rs.uniform(-1.0, 1.0);
    slot[1] = rs.uniform(-1.0, 1.0);
    slot[2] = rs.uniform(0.0, 0.5);
    slot[3] = rs.uniform(0.0, 0.5);
    slot[4] = rs.uniform(0.0, 1.0);
  }
  return obs;
}

env::Transition tagged_transition(double tag, rng::Stream& rs) {
  env::Transition t;
  t.obs = random_obs(rs);
  t.next_obs = random_obs(rs);
  t.action = {rs.uniform(-0.15, 0.15), rs.uniform(-0.15, 0.15)};
  t.reward = tag;
  t.p_max = rs.uniform(0.0, 1.0);
  return t;
}

env::EnvConfig small_env_config() {
  env::EnvConfig cfg;
  cfg.obs_mode = env::ObsMode::Features;
  return cfg;
}

agent::AgentConfig small_agent_config() {
  agent::AgentConfig cfg;
  cfg.hidden = {16, 16};
  cfg.batch_size = 4;
  cfg.replay_capacity = 64;
  cfg.warmup = 0;
  return cfg;
}

}  // namespace

TEST_SUITE("agent") {
  TEST_CASE("replay buffer evicts the oldest entry once full") {
    agent::ReplayBuffer buf(3);
    rng::Stream rs(11);
    for (int i = 1; i <= 4; ++i) buf.push(tagged_transition(i, rs));
    CHECK(buf.capacity() == 3);
    CHECK(buf.size() == 3);
    CHECK(buf.total_pushed() == 4);

    std::set<int> seen;
    rng::Stream draw(5);
    for (const auto& t : buf.sample(300, draw))
      seen.insert(static_cast<int>(t.reward));
    CHECK(seen == std::set<int>{2, 3, 4});
  }

  TEST_CASE("replay buffer rejects zero capacity") {
    CHECK_THROWS_AS(agent::ReplayBuffer(0), ConfigError);
  }

  TEST_CASE("sampling an empty buffer fails") {
    agent::ReplayBuffer buf(8);
    rng::Stream rs(1);
    CHECK_THROWS_AS(buf.sample(1, rs), LifecycleError);
  }

  TEST_CASE("a single stored transition is sampled with certainty") {
    agent::ReplayBuffer buf(8);
    rng::Stream rs(2);
    auto t = tagged_transition(7.0, rs);
    t.action = {0.01, -0.02};
    t.p_max = 0.33;
    buf.push(t);
    const auto batch = buf.sample(5, rs);
    REQUIRE(batch.size() == 5);
    for (const auto& b : batch) {
      CHECK(b.reward == 7.0);
      CHECK(b.action.d_theta == 0.01);
      CHECK(b.action.d_phi == -0.02);
      CHECK(b.p_max == 0.33);
    }
  }

  TEST_CASE("sampling is uniform with replacement over the contents") {
    agent::ReplayBuffer buf(100);
    rng::Stream rs(3);
    for (int i = 0; i < 100; ++i) buf.push(tagged_transition(i, rs));

    std::array<int, 100> counts{};
    rng::Stream draw(17);
    for (const auto& t : buf.sample(10000, draw))
      ++counts[static_cast<std::size_t>(t.reward)];
    // Binomial(10000, 1/100): mean 100, sd ~9.95; [60, 140] is a 4-sigma
    // window per element.
    for (int c : counts) {
      CHECK(c >= 60);
      CHECK(c <= 140);
    }
  }

  TEST_CASE("ou noise follows its relaxation recurrence") {
    const double theta = 0.3, sigma = 0.5;
    agent::NoiseProcess noise(agent::NoiseKind::OrnsteinUhlenbeck, theta,
                              sigma, 77);
    rng::Stream replica(77);
    std::array<double, 2> state{};
    for (int step = 0; step < 20; ++step) {
      const auto got = noise.sample();
      for (auto& x : state) x += theta * (0.0 - x) + sigma * replica.normal();
      CHECK(got[0] == state[0]);
      CHECK(got[1] == state[1]);
    }
  }

  TEST_CASE("ou noise with zero sigma stays at zero") {
    agent::NoiseProcess noise(agent::NoiseKind::OrnsteinUhlenbeck, 0.15, 0.0,
                              9);
    for (int i = 0; i < 10; ++i) {
      const auto s = noise.sample();
      CHECK(s[0] == 0.0);
      CHECK(s[1] == 0.0);
    }
  }

  TEST_CASE("noise reset clears the state but not the stream") {
    const double theta = 0.15, sigma = 0.2;
    agent::NoiseProcess noise(agent::NoiseKind::OrnsteinUhlenbeck, theta,
                              sigma, 41);
    rng::Stream replica(41);
    std::array<double, 2> state{};
    for (int step = 0; step < 5; ++step) {
      noise.sample();
      for (auto& x : state) x += theta * (0.0 - x) + sigma * replica.normal();
    }
    noise.reset();
    state = {0.0, 0.0};
    for (int step = 0; step < 5; ++step) {
      const auto got = noise.sample();
      for (auto& x : state) x += theta * (0.0 - x) + sigma * replica.normal();
      CHECK(got[0] == state[0]);
      CHECK(got[1] == state[1]);
    }
  }

  TEST_CASE("gaussian noise is stateless") {
    const double sigma = 0.03;
    agent::NoiseProcess noise(agent::NoiseKind::Gaussian, 0.15, sigma, 23);
    rng::Stream replica(23);
    for (int i = 0; i < 10; ++i) {
      const auto got = noise.sample();
      CHECK(got[0] == sigma * replica.normal());
      CHECK(got[1] == sigma * replica.normal());
    }
  }

  TEST_CASE("feature observations encode as detection trunk plus pose aux") {
    env::Observation obs;
    obs.pose_features = {0.1, 0.2, 0.3};
    obs.detection_features.resize(15);
    for (std::size_t i = 0; i < 15; ++i)
      obs.detection_features[i] = 0.01 * static_cast<double>(i + 1);

    nets::Tensor<double> trunk, aux;
    agent::encode_obs(obs, env::ObsMode::Features, trunk, aux);
    REQUIRE(aux.shape == std::vector<int>{3});
    CHECK(aux.data[0] == 0.1);
    CHECK(aux.data[1] == 0.2);
    CHECK(aux.data[2] == 0.3);
    REQUIRE(trunk.shape == std::vector<int>{15});
    for (std::size_t i = 0; i < 15; ++i)
      CHECK(trunk.data[i] == obs.detection_features[i]);
  }

  TEST_CASE("pixel observations encode as normalized channel planes") {
    env::Observation obs;
    obs.pose_features = {0.0, 1.0, 0.0};
    scene::Frame frame;
    frame.width = 4;
    frame.height = 3;
    frame.pixels.resize(3 * 4 * 3);
    for (int y = 0; y < 3; ++y) {
      for (int x = 0; x < 4; ++x) {
        std::uint8_t* p = frame.at(x, y);
        p[0] = static_cast<std::uint8_t>(10 * x);
        p[1] = static_cast<std::uint8_t>(20 * y);
        p[2] = static_cast<std::uint8_t>(30 * (x + y));
      }
    }
    obs.frame = frame;

    nets::Tensor<double> trunk, aux;
    agent::encode_obs(obs, env::ObsMode::Pixels, trunk, aux);
    REQUIRE(trunk.shape == std::vector<int>{3, 3, 4});
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 4; ++x) {
          const double want = frame.at(x, y)[c] / 255.0;
          CHECK(trunk.data[(static_cast<std::size_t>(c) * 3 + y) * 4 + x] ==
                want);
        }
      }
    }
  }

  TEST_CASE("pixel encoding without a frame fails") {
    env::Observation obs;
    obs.detection_features.resize(15, 0.0);
    nets::Tensor<float> trunk, aux;
    CHECK_THROWS_AS(
        agent::encode_obs(obs, env::ObsMode::Pixels, trunk, aux),
        LifecycleError);
  }

  TEST_CASE("actions stay inside the action box with and without noise") {
    const auto env_cfg = small_env_config();
    agent::Agent ag(env_cfg, small_agent_config(), 99);
    rng::Stream rs(4);
    for (int i = 0; i < 50; ++i) {
      const auto obs = random_obs(rs);
      for (bool explore : {false, true}) {
        const auto a = ag.act(obs, explore);
        CHECK(std::abs(a.d_theta) <= env_cfg.action_limit);
        CHECK(std::abs(a.d_phi) <= env_cfg.action_limit);
      }
    }
  }

  TEST_CASE("agents built from the same seed act identically") {
    const auto env_cfg = small_env_config();
    agent::Agent a(env_cfg, small_agent_config(), 1234);
    agent::Agent b(env_cfg, small_agent_config(), 1234);
    rng::Stream rs(6);
    for (int i = 0; i < 10; ++i) {
      const auto obs = random_obs(rs);
      const auto ga = a.act(obs, false);
      const auto gb = b.act(obs, false);
      CHECK(ga.d_theta == gb.d_theta);
      CHECK(ga.d_phi == gb.d_phi);
      const auto na = a.act(obs, true);
      const auto nb = b.act(obs, true);
      CHECK(na.d_theta == nb.d_theta);
      CHECK(na.d_phi == nb.d_phi);
    }
  }

  TEST_CASE("training waits for a full batch then counts steps") {
    agent::Agent ag(small_env_config(), small_agent_config(), 5);
    rng::Stream rs(8);
    for (int i = 0; i < 3; ++i) ag.store(tagged_transition(-0.1, rs));
    CHECK_FALSE(ag.train_step().has_value());
    CHECK(ag.train_steps() == 0);

    ag.store(tagged_transition(1.0, rs));
    const auto diag = ag.train_step();
    REQUIRE(diag.has_value());
    CHECK(std::isfinite(diag->critic_loss));
    CHECK(std::isfinite(diag->mean_q));
    CHECK(std::isfinite(diag->actor_objective));
    CHECK(diag->critic_loss >= 0.0);
    CHECK(ag.train_steps() == 1);
    CHECK(ag.env_steps() == 4);
  }

  TEST_CASE("checkpoint round trip restores behavior and counters") {
    testsup::TempDir tmp("agent");
    const auto path = tmp.path() / "agent.ckpt";
    const auto env_cfg = small_env_config();

    agent::Agent a(env_cfg, small_agent_config(), 21);
    rng::Stream rs(9);
    for (int i = 0; i < 20; ++i) a.store(tagged_transition(-0.1, rs));
    for (int i = 0; i < 5; ++i) REQUIRE(a.train_step().has_value());
    a.set_episodes_completed(7);
    a.save(path);

    agent::Agent b(env_cfg, small_agent_config(), 999);
    b.load(path);
    CHECK(b.train_steps() == a.train_steps());
    CHECK(b.episodes_completed() == 7);
    for (int i = 0; i < 5; ++i) {
      const auto obs = random_obs(rs);
      const auto ga = a.act(obs, false);
      const auto gb = b.act(obs, false);
      CHECK(ga.d_theta == gb.d_theta);
      CHECK(ga.d_phi == gb.d_phi);
    }
  }

  TEST_CASE("actor snapshots reproduce the live greedy policy") {
    agent::Agent ag(small_env_config(), small_agent_config(), 31);
    const auto snap = ag.snapshot_actor();
    rng::Stream rs(10);
    for (int i = 0; i < 5; ++i) {
      const auto obs = random_obs(rs);
      const auto live = ag.act(obs, false);
      const auto from_snap = ag.act_with(*snap, obs, false);
      CHECK(live.d_theta == from_snap.d_theta);
      CHECK(live.d_phi == from_snap.d_phi);
    }
  }

  TEST_CASE("checkpoints refuse a different architecture") {
    testsup::TempDir tmp("agent");
    const auto path = tmp.path() / "agent.ckpt";
    agent::Agent a(small_env_config(), small_agent_config(), 21);
    a.save(path);

    auto other = small_agent_config();
    other.hidden = {8};
    agent::Agent b(small_env_config(), other, 22);
    CHECK_THROWS_AS(b.load(path), ShapeError);
  }

  TEST_CASE("agent config validation rejects out-of-range values") {
    const auto base = small_agent_config();
    auto bad = base;
    bad.gamma = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = base;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = base;
    bad.tau = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = base;
    bad.replay_capacity = 2;  // below batch_size 4
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = base;
    bad.hidden.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = base;
    bad.critic_weight_decay = -0.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}
