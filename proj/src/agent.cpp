#include "vpoc/agent.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "vpoc/errors.hpp"

namespace vpoc::agent {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ < 1) throw ConfigError("replay capacity must be >= 1");
  ring_.reserve(std::min<std::size_t>(capacity_, 4096));
}

void ReplayBuffer::push(env::Transition t) {
  std::lock_guard<std::mutex> lock(mu_);
  if (ring_.size() < capacity_) {
    ring_.push_back(std::move(t));
  } else {
    ring_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }
  ++total_;
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return ring_.size();
}

std::uint64_t ReplayBuffer::total_pushed() const {
  std::lock_guard<std::mutex> lock(mu_);
  return total_;
}

std::vector<env::Transition> ReplayBuffer::sample(std::size_t batch,
                                                  rng::Stream& rs) const {
  std::lock_guard<std::mutex> lock(mu_);
  if (ring_.empty()) throw LifecycleError("sampling an empty replay buffer");
  std::vector<env::Transition> out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto idx = static_cast<std::size_t>(
        rs.uniform_int(0, static_cast<std::int64_t>(ring_.size()) - 1));
    out.push_back(ring_[idx]);
  }
  return out;
}

NoiseProcess::NoiseProcess(NoiseKind kind, double theta, double sigma,
                           std::uint64_t seed)
    : kind_(kind), theta_(theta), sigma_(sigma), rs_(seed) {}

void NoiseProcess::reset() { state_ = {0.0, 0.0}; }

std::array<double, 2> NoiseProcess::sample() {
  if (kind_ == NoiseKind::Gaussian)
    return {sigma_ * rs_.normal(), sigma_ * rs_.normal()};
  for (auto& x : state_) x += theta_ * (0.0 - x) + sigma_ * rs_.normal();
  return state_;
}

void AgentConfig::validate() const {
  if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("gamma must be in [0, 1)");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (tau <= 0.0 || tau > 1.0) throw ConfigError("tau must be in (0, 1]");
  if (actor_lr <= 0.0 || critic_lr <= 0.0)
    throw ConfigError("learning rates must be positive");
  if (critic_weight_decay < 0.0)
    throw ConfigError("weight decay must be non-negative");
  if (replay_capacity < static_cast<std::size_t>(batch_size))
    throw ConfigError("replay capacity below batch size");
  if (warmup < 0) throw ConfigError("warmup must be non-negative");
  if (hidden.empty()) throw ConfigError("at least one hidden layer required");
  if (ou_theta < 0.0 || noise_sigma_scale < 0.0)
    throw ConfigError("noise parameters must be non-negative");
}

template <class T>
void encode_obs(const env::Observation& obs, env::ObsMode mode,
                nets::Tensor<T>& trunk, nets::Tensor<T>& aux) {
  aux = nets::Tensor<T>({3});
  for (int i = 0; i < 3; ++i)
    aux.data[static_cast<std::size_t>(i)] =
        static_cast<T>(obs.pose_features[static_cast<std::size_t>(i)]);
  if (mode == env::ObsMode::Features) {
    trunk =
        nets::Tensor<T>({static_cast<int>(obs.detection_features.size())});
    for (std::size_t i = 0; i < obs.detection_features.size(); ++i)
      trunk.data[i] = static_cast<T>(obs.detection_features[i]);
    return;
  }
  if (!obs.frame)
    throw LifecycleError("pixel-mode observation carries no frame");
  const auto& f = *obs.frame;
  trunk = nets::Tensor<T>({3, f.height, f.width});
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      const std::uint8_t* p = f.at(x, y);
      for (int c = 0; c < 3; ++c)
        trunk.data[(static_cast<std::size_t>(c) * f.height + y) * f.width +
                   x] = static_cast<T>(p[c] / 255.0);
    }
  }
}

template <class T>
env::Action greedy_action(const nets::Network<T>& actor, env::ObsMode mode,
                          double action_limit, const env::Observation& obs) {
  nets::Tensor<T> trunk, aux;
  encode_obs(obs, mode, trunk, aux);
  const auto out = nets::forward(actor, trunk, aux);
  if (out.size() != 2) throw ShapeError("actor must emit two components");
  return {std::clamp(static_cast<double>(out.data[0]), -action_limit,
                     action_limit),
          std::clamp(static_cast<double>(out.data[1]), -action_limit,
                     action_limit)};
}

template void encode_obs<float>(const env::Observation&, env::ObsMode,
                                nets::Tensor<float>&, nets::Tensor<float>&);
template void encode_obs<double>(const env::Observation&, env::ObsMode,
                                 nets::Tensor<double>&,
                                 nets::Tensor<double>&);
template env::Action greedy_action<float>(const nets::Network<float>&,
                                          env::ObsMode, double,
                                          const env::Observation&);
template env::Action greedy_action<double>(const nets::Network<double>&,
                                           env::ObsMode, double,
                                           const env::Observation&);

namespace {

// Critic auxiliary input: pose features then the action scaled to unit
// range. Without the scaling the action pathway carries values an order of
// magnitude smaller than the pose features, and critic weight decay prunes
// it first, starving the actor of its gradient.
template <class T>
nets::Tensor<T> critic_aux(const nets::Tensor<T>& pose_aux,
                           const env::Action& a, double limit) {
  nets::Tensor<T> out({5});
  for (int i = 0; i < 3; ++i)
    out.data[static_cast<std::size_t>(i)] =
        pose_aux.data[static_cast<std::size_t>(i)];
  out.data[3] = static_cast<T>(a.d_theta / limit);
  out.data[4] = static_cast<T>(a.d_phi / limit);
  return out;
}

}  // namespace

template <class T>
DdpgCore<T> DdpgCore<T>::make(const env::EnvConfig& env_cfg,
                              const AgentConfig& cfg, rng::Stream& init) {
  nets::TrunkSpec trunk;
  if (env_cfg.obs_mode == env::ObsMode::Pixels) {
    trunk.conv = true;
    trunk.in_c = 3;
    trunk.in_h = env_cfg.intrinsics.height;
    trunk.in_w = env_cfg.intrinsics.width;
  } else {
    trunk.conv = false;
    trunk.feat_dim = static_cast<int>(env_cfg.detection_feature_dim());
  }
  DdpgCore<T> core;
  core.obs_mode = env_cfg.obs_mode;
  core.action_limit = env_cfg.action_limit;
  core.gamma = cfg.gamma;
  core.tau = cfg.tau;
  core.critic_weight_decay = cfg.critic_weight_decay;
  core.literal_target_state = cfg.literal_target_state;
  core.bootstrap_on_timeout = cfg.bootstrap_on_timeout;
  const auto actor_spec =
      nets::make_net_spec(trunk, cfg.hidden, 3, 2, nets::Activation::Tanh,
                          env_cfg.action_limit);
  const auto critic_spec =
      nets::make_net_spec(trunk, cfg.hidden, 5, 1, nets::Activation::Linear,
                          1.0);
  core.actor = nets::build_network<T>(actor_spec, init);
  core.critic = nets::build_network<T>(critic_spec, init);
  core.target_actor = core.actor;
  core.target_critic = core.critic;
  core.actor_opt = nets::AdamState<T>::init_like(core.actor, cfg.actor_lr);
  core.critic_opt = nets::AdamState<T>::init_like(core.critic, cfg.critic_lr);
  return core;
}

template <class T>
Diagnostics DdpgCore<T>::train_batch(
    const std::vector<env::Transition>& batch) {
  if (batch.empty()) throw LifecycleError("empty training batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Diagnostics diag;

  // Critic regression toward one-step bootstrapped targets.
  auto critic_grads = nets::Gradients<T>::zeros_like(critic);
  std::vector<nets::Tensor<T>> trunks(batch.size()), poses(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& tr = batch[i];
    encode_obs(tr.obs, obs_mode, trunks[i], poses[i]);

    nets::Tensor<T> next_trunk, next_pose;
    encode_obs(tr.next_obs, obs_mode, next_trunk, next_pose);
    const auto& act_trunk = literal_target_state ? trunks[i] : next_trunk;
    const auto& act_pose = literal_target_state ? poses[i] : next_pose;
    const auto a_next_t =
        nets::forward(target_actor, act_trunk, act_pose);
    const env::Action a_next{static_cast<double>(a_next_t.data[0]),
                             static_cast<double>(a_next_t.data[1])};
    const auto q_next = nets::forward(
        target_critic, next_trunk,
        critic_aux(next_pose, a_next, action_limit));

    const bool terminal = tr.done && !(tr.timeout && bootstrap_on_timeout);
    const double y =
        tr.reward +
        (terminal ? 0.0 : gamma * static_cast<double>(q_next.data[0]));

    nets::ForwardCache<T> cache;
    const auto q = nets::forward(
        critic, trunks[i], critic_aux(poses[i], tr.action, action_limit),
        &cache);
    const double err = static_cast<double>(q.data[0]) - y;
    diag.critic_loss += err * err * inv_b;
    diag.mean_q += static_cast<double>(q.data[0]) * inv_b;
    nets::Tensor<T> dq({1});
    dq.data[0] = static_cast<T>(2.0 * err * inv_b);
    nets::backward(critic, cache, dq, critic_grads);
  }
  nets::add_weight_decay(critic_grads, critic, critic_weight_decay);
  nets::adam_step(critic_opt, critic.params, critic_grads.params);

  // Policy-gradient ascent on the batch-mean critic value of actor actions,
  // chained through the critic's action input.
  auto actor_grads = nets::Gradients<T>::zeros_like(actor);
  auto critic_scratch = nets::Gradients<T>::zeros_like(critic);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    nets::ForwardCache<T> actor_cache;
    const auto a_pi =
        nets::forward(actor, trunks[i], poses[i], &actor_cache);
    const env::Action a{static_cast<double>(a_pi.data[0]),
                        static_cast<double>(a_pi.data[1])};
    nets::ForwardCache<T> critic_cache;
    const auto q =
        nets::forward(critic, trunks[i],
                      critic_aux(poses[i], a, action_limit), &critic_cache);
    diag.actor_objective += static_cast<double>(q.data[0]) * inv_b;

    // Ascend by descending -J; the action gradient is the tail of the
    // critic's auxiliary-input gradient. That tail is taken with respect to
    // the unit-scaled action, so it is divided by the limit before chaining
    // into the actor, whose outputs are in raw action units.
    const T prev3 = critic_scratch.aux_in.data[3];
    const T prev4 = critic_scratch.aux_in.data[4];
    nets::Tensor<T> dq({1});
    dq.data[0] = static_cast<T>(-inv_b);
    nets::backward(critic, critic_cache, dq, critic_scratch);
    const T inv_limit = static_cast<T>(1.0 / action_limit);
    nets::Tensor<T> da({2});
    da.data[0] = (critic_scratch.aux_in.data[3] - prev3) * inv_limit;
    da.data[1] = (critic_scratch.aux_in.data[4] - prev4) * inv_limit;
    nets::backward(actor, actor_cache, da, actor_grads);
  }
  nets::adam_step(actor_opt, actor.params, actor_grads.params);

  nets::polyak_update(target_actor, actor, tau);
  nets::polyak_update(target_critic, critic, tau);
  return diag;
}

template struct DdpgCore<float>;
template struct DdpgCore<double>;

Agent::Agent(const env::EnvConfig& env_cfg, AgentConfig cfg,
             std::uint64_t seed)
    : cfg_(std::move(cfg)),
      obs_mode_(env_cfg.obs_mode),
      action_limit_(env_cfg.action_limit),
      core_([&] {
        cfg_.validate();
        rng::Stream init(rng::derive(seed, "net-init"));
        return DdpgCore<float>::make(env_cfg, cfg_, init);
      }()),
      buffer_(cfg_.replay_capacity),
      noise_(cfg_.noise_kind, cfg_.ou_theta,
             cfg_.noise_sigma_scale * env_cfg.action_limit,
             rng::derive(seed, "noise")),
      sample_rs_(rng::derive(seed, "replay-sample")) {}

env::Action Agent::act(const env::Observation& obs, bool explore) {
  return act_with(core_.actor, obs, explore);
}

env::Action Agent::act_with(const nets::Network<float>& actor,
                            const env::Observation& obs, bool explore) {
  env::Action a = greedy_action(actor, obs_mode_, action_limit_, obs);
  if (explore) {
    const auto n = noise_.sample();
    a.d_theta = std::clamp(a.d_theta + n[0], -action_limit_, action_limit_);
    a.d_phi = std::clamp(a.d_phi + n[1], -action_limit_, action_limit_);
  }
  return a;
}

std::optional<Diagnostics> Agent::train_step() {
  if (buffer_.size() < static_cast<std::size_t>(cfg_.batch_size))
    return std::nullopt;
  const auto batch =
      buffer_.sample(static_cast<std::size_t>(cfg_.batch_size), sample_rs_);
  return core_.train_batch(batch);
}

std::shared_ptr<const nets::Network<float>> Agent::snapshot_actor() const {
  return std::make_shared<nets::Network<float>>(core_.actor);
}

namespace {

void append_params(std::vector<nets::Tensor<float>>& out,
                   const std::vector<nets::Tensor<float>>& params) {
  out.insert(out.end(), params.begin(), params.end());
}

void take_params(std::vector<nets::Tensor<float>>& dst,
                 const std::vector<nets::Tensor<float>>& src,
                 std::size_t& pos) {
  for (auto& d : dst) {
    if (pos >= src.size() || src[pos].shape != d.shape)
      throw ShapeError("checkpoint tensor layout mismatch");
    d = src[pos++];
  }
}

}  // namespace

void Agent::save(const std::filesystem::path& path) const {
  nets::Checkpoint ck;
  nlohmann::json meta;
  meta["kind"] = "ddpg-agent";
  meta["actor_sig"] = core_.actor.spec.signature();
  meta["critic_sig"] = core_.critic.spec.signature();
  meta["actor_step"] = core_.actor_opt.step;
  meta["critic_step"] = core_.critic_opt.step;
  meta["episodes"] = episodes_completed_;
  meta["env_steps"] = buffer_.total_pushed();
  ck.metadata = meta.dump();
  append_params(ck.tensors, core_.actor.params);
  append_params(ck.tensors, core_.critic.params);
  append_params(ck.tensors, core_.target_actor.params);
  append_params(ck.tensors, core_.target_critic.params);
  append_params(ck.tensors, core_.actor_opt.m);
  append_params(ck.tensors, core_.actor_opt.v);
  append_params(ck.tensors, core_.critic_opt.m);
  append_params(ck.tensors, core_.critic_opt.v);
  nets::save_checkpoint(path, ck);
}

void Agent::load(const std::filesystem::path& path) {
  const nets::Checkpoint ck = nets::load_checkpoint(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ck.metadata);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("agent metadata: ") + e.what());
  }
  if (meta.value("kind", "") != "ddpg-agent")
    throw ShapeError("checkpoint is not an agent checkpoint");
  if (meta.value("actor_sig", "") != core_.actor.spec.signature() ||
      meta.value("critic_sig", "") != core_.critic.spec.signature())
    throw ShapeError("checkpoint architecture does not match this agent");
  std::size_t pos = 0;
  take_params(core_.actor.params, ck.tensors, pos);
  take_params(core_.critic.params, ck.tensors, pos);
  take_params(core_.target_actor.params, ck.tensors, pos);
  take_params(core_.target_critic.params, ck.tensors, pos);
  take_params(core_.actor_opt.m, ck.tensors, pos);
  take_params(core_.actor_opt.v, ck.tensors, pos);
  take_params(core_.critic_opt.m, ck.tensors, pos);
  take_params(core_.critic_opt.v, ck.tensors, pos);
  if (pos != ck.tensors.size())
    throw ShapeError("checkpoint holds unexpected extra tensors");
  core_.actor_opt.step = meta.value("actor_step", 0LL);
  core_.critic_opt.step = meta.value("critic_step", 0LL);
  episodes_completed_ = meta.value("episodes", 0LL);
}

}  // namespace vpoc::agent
