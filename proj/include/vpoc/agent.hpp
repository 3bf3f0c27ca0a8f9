#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "vpoc/env.hpp"
#include "vpoc/nets.hpp"
#include "vpoc/rng.hpp"

namespace vpoc::agent {

// Uniform-sampling FIFO ring. Thread safe for one producer and one consumer;
// sampling is linearizable against pushes.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(env::Transition t);
  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  std::uint64_t total_pushed() const;
  // Uniform with replacement over current contents.
  std::vector<env::Transition> sample(std::size_t batch,
                                      rng::Stream& rs) const;

 private:
  mutable std::mutex mu_;
  std::size_t capacity_;
  std::vector<env::Transition> ring_;
  std::size_t head_ = 0;
  std::uint64_t total_ = 0;
};

enum class NoiseKind { OrnsteinUhlenbeck, Gaussian };

// Per-dimension exploration noise. The OU state relaxes toward zero and is
// reset at each episode start; the Gaussian variant is stateless.
class NoiseProcess {
 public:
  NoiseProcess(NoiseKind kind, double theta, double sigma,
               std::uint64_t seed);

  void reset();
  std::array<double, 2> sample();

 private:
  NoiseKind kind_;
  double theta_, sigma_;
  std::array<double, 2> state_{};
  rng::Stream rs_;
};

struct AgentConfig {
  double gamma = 0.99;
  int batch_size = 16;
  double tau = 1e-3;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double critic_weight_decay = 1e-2;
  std::size_t replay_capacity = 100000;
  int warmup = 500;
  std::vector<int> hidden = {200, 200};
  NoiseKind noise_kind = NoiseKind::OrnsteinUhlenbeck;
  double ou_theta = 0.15;
  double noise_sigma_scale = 0.2;  // sigma = scale * action_limit
  // Evaluate the target policy at the pre-step state when forming targets
  // instead of the successor state.
  bool literal_target_state = false;
  // Treat horizon expiry as non-terminal for bootstrapping.
  bool bootstrap_on_timeout = true;

  void validate() const;  // throws ConfigError
};

// Observation encoding shared by actor and critic: the trunk sees detections
// (or pixels), the auxiliary input carries the pose features.
template <class T>
void encode_obs(const env::Observation& obs, env::ObsMode mode,
                nets::Tensor<T>& trunk, nets::Tensor<T>& aux);

template <class T>
env::Action greedy_action(const nets::Network<T>& actor, env::ObsMode mode,
                          double action_limit, const env::Observation& obs);

struct Diagnostics {
  double critic_loss = 0.0;      // batch MSE before the update
  double mean_q = 0.0;           // mean online Q over the batch
  double actor_objective = 0.0;  // mean Q(s, pi(s)) before the actor step
};

// Online and target networks plus optimizers: one gradient step of each per
// train call. Templated so gradient tests can run the identical arithmetic
// in double.
template <class T>
struct DdpgCore {
  nets::Network<T> actor, critic, target_actor, target_critic;
  nets::AdamState<T> actor_opt, critic_opt;
  env::ObsMode obs_mode = env::ObsMode::Features;
  double action_limit = env::kDefaultActionLimit;
  double gamma = 0.99, tau = 1e-3, critic_weight_decay = 1e-2;
  bool literal_target_state = false;
  bool bootstrap_on_timeout = true;

  static DdpgCore make(const env::EnvConfig& env_cfg, const AgentConfig& cfg,
                       rng::Stream& init);

  Diagnostics train_batch(const std::vector<env::Transition>& batch);
};

class Agent {
 public:
  Agent(const env::EnvConfig& env_cfg, AgentConfig cfg, std::uint64_t seed);

  // Greedy policy plus optional exploration noise, clipped to the action box.
  env::Action act(const env::Observation& obs, bool explore);
  // Same, through an explicitly provided actor (parameter snapshots).
  env::Action act_with(const nets::Network<float>& actor,
                       const env::Observation& obs, bool explore);

  void store(env::Transition t) { buffer_.push(std::move(t)); }
  void reset_noise() { noise_.reset(); }

  // One DDPG update on a uniform batch; nullopt while the buffer holds fewer
  // than batch_size transitions.
  std::optional<Diagnostics> train_step();

  const AgentConfig& config() const { return cfg_; }
  ReplayBuffer& buffer() { return buffer_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  DdpgCore<float>& core() { return core_; }
  const DdpgCore<float>& core() const { return core_; }
  std::shared_ptr<const nets::Network<float>> snapshot_actor() const;

  long long episodes_completed() const { return episodes_completed_; }
  void set_episodes_completed(long long n) { episodes_completed_ = n; }
  std::uint64_t env_steps() const { return buffer_.total_pushed(); }
  long long train_steps() const { return core_.critic_opt.step; }

  void save(const std::filesystem::path& path) const;
  // Restores networks, optimizer state, and counters. The replay buffer is
  // not serialized; a resumed run refills it from new experience.
  void load(const std::filesystem::path& path);

 private:
  AgentConfig cfg_;
  env::ObsMode obs_mode_;
  double action_limit_;
  DdpgCore<float> core_;
  ReplayBuffer buffer_;
  NoiseProcess noise_;
  rng::Stream sample_rs_;
  long long episodes_completed_ = 0;
};

}  // namespace vpoc::agent
