#include "relearn/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "relearn/csv_io.hpp"
#include "relearn/error.hpp"
#include "relearn/serialize.hpp"

namespace relearn::rl {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double softplus(double x) noexcept { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// log |d/du (scale * tanh u)|, stable for large |u|.
double log_squash_jacobian(double u) noexcept {
  return std::log(kActionScale) + 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u));
}

double gaussian_log_prob(double u, double mu, double log_std) noexcept {
  const double z = (u - mu) / std::exp(log_std);
  return -0.5 * z * z - log_std - kHalfLog2Pi;
}

nn::LayerStack make_mlp(std::size_t in, std::size_t hidden, std::uint64_t seed, double head_scale) {
  nn::LayerStack s;
  s.add(nn::DenseLayer(in, hidden, nn::Activation::tanh));
  s.add(nn::DenseLayer(hidden, hidden, nn::Activation::tanh));
  s.add(nn::DenseLayer(hidden, 1, nn::Activation::identity));
  s.initialize(seed);
  for (double& w : std::get<nn::DenseLayer>(s.layer(2)).weights()) w *= head_scale;
  return s;
}

double forward_scalar(const nn::LayerStack& stack, std::span<const double> obs, nn::Tape& tape, Tensor2& input) {
  input.resize(1, obs.size());
  std::copy(obs.begin(), obs.end(), input.row(0).begin());
  nn::forward(stack, input, tape);
  return tape.output()[0];
}

}  // namespace

void validate(const PPOConfig& cfg) {
  if (!(cfg.clip > 0.0 && cfg.clip < 1.0)) throw ConfigError("clip must lie in (0, 1)");
  if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (!(cfg.lambda > 0.0 && cfg.lambda <= 1.0)) throw ConfigError("lambda must lie in (0, 1]");
  if (!(cfg.lr > 0.0)) throw ConfigError("ppo lr must be positive");
  if (cfg.n_envs == 0 || cfg.horizon == 0 || cfg.epochs == 0 || cfg.minibatch == 0 || cfg.hidden == 0) {
    throw ConfigError("n_envs, horizon, epochs, minibatch and hidden must be positive");
  }
  if (!(cfg.max_grad_norm > 0.0)) throw ConfigError("max_grad_norm must be positive");
  if (cfg.entropy_coef < 0.0) throw ConfigError("entropy_coef must be non-negative");
}

std::uint64_t config_hash(const PPOConfig& cfg) {
  std::ostringstream os;
  os << data::format_double(cfg.clip) << '|' << data::format_double(cfg.lr) << '|' << cfg.total_steps << '|'
     << cfg.n_envs << '|' << data::format_double(cfg.gamma) << '|' << data::format_double(cfg.lambda) << '|'
     << cfg.epochs << '|' << cfg.minibatch << '|' << cfg.horizon << '|' << data::format_double(cfg.max_grad_norm)
     << '|' << data::format_double(cfg.entropy_coef) << '|' << data::format_double(cfg.init_log_std) << '|'
     << cfg.hidden << '|' << cfg.seed;
  return nn::fnv1a(os.str());
}

double ppo_clip_objective(double ratio, double adv, double eps) noexcept {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * adv, clipped * adv);
}

ActorCritic make_actor_critic(std::size_t obs_size, const PPOConfig& cfg) {
  ActorCritic ac;
  ac.policy.mean = make_mlp(obs_size, cfg.hidden, cfg.seed * 2 + 1, 0.01);
  ac.policy.log_std = {cfg.init_log_std};
  ac.value.net = make_mlp(obs_size, cfg.hidden, cfg.seed * 2 + 2, 1.0);
  return ac;
}

double squash(double u) noexcept { return kActionScale * std::tanh(u); }

double squashed_log_prob(double u, double mu, double log_std) noexcept {
  return gaussian_log_prob(u, mu, log_std) - log_squash_jacobian(u);
}

double policy_mean(const Policy& policy, std::span<const double> obs, nn::Tape& tape) {
  Tensor2 input;
  const double mu = forward_scalar(policy.mean, obs, tape, input);
  if (!std::isfinite(mu)) throw NumericError("policy mean is not finite");
  return mu;
}

double value_of(const ValueFunction& value, std::span<const double> obs, nn::Tape& tape) {
  Tensor2 input;
  const double v = forward_scalar(value.net, obs, tape, input);
  if (!std::isfinite(v)) throw NumericError("value estimate is not finite");
  return v;
}

ActionSample action_from_noise(const Policy& policy, std::span<const double> obs, double z, nn::Tape& tape) {
  const double mu = policy_mean(policy, obs, tape);
  const double log_std = policy.log_std.at(0);
  const double u = mu + std::exp(log_std) * z;
  if (!std::isfinite(u)) throw NumericError("sampled action is not finite");
  return {squash(u), u, squashed_log_prob(u, mu, log_std)};
}

ActionSample sample_action(const Policy& policy, std::span<const double> obs, std::mt19937_64& rng,
                           bool deterministic) {
  nn::Tape tape;
  if (deterministic) return action_from_noise(policy, obs, 0.0, tape);
  std::normal_distribution<double> normal(0.0, 1.0);
  return action_from_noise(policy, obs, normal(rng), tape);
}

AdvantageResult compute_advantages(std::span<const double> rewards, std::span<const double> values,
                                   std::span<const std::uint8_t> dones, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n + 1 || dones.size() != n) throw ShapeError("compute_advantages: inconsistent lengths");
  AdvantageResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] != 0 ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * values[k + 1] * live - values[k];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[k] = next_adv;
    out.returns[k] = next_adv + values[k];
  }
  return out;
}

void compute_advantages(RolloutBuffer& buffer, double gamma, double lambda) {
  const std::size_t n = buffer.size();
  buffer.advantages.assign(n, 0.0);
  buffer.returns.assign(n, 0.0);
  std::vector<double> vals(buffer.horizon + 1);
  for (std::size_t e = 0; e < buffer.segments; ++e) {
    const std::size_t base = e * buffer.horizon;
    std::copy_n(buffer.values.begin() + static_cast<std::ptrdiff_t>(base), buffer.horizon, vals.begin());
    vals[buffer.horizon] = buffer.bootstrap[e];
    const auto seg = compute_advantages(std::span(buffer.rewards).subspan(base, buffer.horizon), vals,
                                        std::span(buffer.dones).subspan(base, buffer.horizon), gamma, lambda);
    std::copy(seg.advantages.begin(), seg.advantages.end(), buffer.advantages.begin() + static_cast<std::ptrdiff_t>(base));
    std::copy(seg.returns.begin(), seg.returns.end(), buffer.returns.begin() + static_cast<std::ptrdiff_t>(base));
  }
}

void normalize_advantages(RolloutBuffer& buffer) {
  auto& a = buffer.advantages;
  if (a.empty()) return;
  const double n = static_cast<double>(a.size());
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double var = 0.0;
  for (double v : a) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  for (double& v : a) v -= mean;
  if (sd > 1e-12) {
    for (double& v : a) v /= sd;
    // A second pass removes the rounding left by the first.
    const double m2 = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double v2 = 0.0;
    for (double& v : a) {
      v -= m2;
      v2 += v * v;
    }
    const double sd2 = std::sqrt(v2 / n);
    for (double& v : a) v /= sd2;
  }
}

EnvPool::EnvPool(const EnvFactory& factory, std::size_t n_envs, std::uint64_t seed) {
  if (n_envs == 0) throw ConfigError("environment pool needs at least one environment");
  envs_.reserve(n_envs);
  for (std::size_t i = 0; i < n_envs; ++i) {
    Slot s;
    s.env = factory(i);
    if (!s.env) throw InputError("environment factory returned null");
    s.rng.seed(seed * 1000003ULL + i);
    s.obs = s.env->reset(s.rng);
    envs_.push_back(std::move(s));
  }
}

void EnvPool::run_segment(Slot& slot, std::size_t segment, const ActorCritic& ac, RolloutBuffer& buf) {
  nn::Tape tape;
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t obs_size = buf.obs_size;
  for (std::size_t k = 0; k < buf.horizon; ++k) {
    const std::size_t i = segment * buf.horizon + k;
    if (slot.obs.size() != obs_size) throw ShapeError("observation size changed");
    std::copy(slot.obs.begin(), slot.obs.end(), buf.observations.begin() + static_cast<std::ptrdiff_t>(i * obs_size));
    const ActionSample a = action_from_noise(ac.policy, slot.obs, normal(slot.rng), tape);
    buf.values[i] = value_of(ac.value, slot.obs, tape);
    buf.actions[i] = a.action;
    buf.raw_actions[i] = a.raw;
    buf.log_probs[i] = a.log_prob;
    Transition tr = slot.env->step(a.action);
    buf.rewards[i] = tr.reward;
    buf.dones[i] = tr.done ? 1 : 0;
    slot.episode_return += tr.reward;
    if (tr.done) {
      slot.finished.push_back(slot.episode_return);
      slot.episode_return = 0.0;
      slot.obs = slot.env->reset(slot.rng);
    } else {
      slot.obs = std::move(tr.observation);
    }
  }
  buf.bootstrap[segment] = value_of(ac.value, slot.obs, tape);
}

RolloutBuffer EnvPool::collect(const ActorCritic& ac, std::size_t horizon, std::size_t threads) {
  if (horizon == 0) throw ConfigError("rollout horizon must be positive");
  RolloutBuffer buf;
  buf.obs_size = envs_.front().env->observation_size();
  buf.segments = envs_.size();
  buf.horizon = horizon;
  buf.generation = ac.generation;
  const std::size_t n = buf.segments * horizon;
  buf.observations.assign(n * buf.obs_size, 0.0);
  buf.actions.assign(n, 0.0);
  buf.raw_actions.assign(n, 0.0);
  buf.log_probs.assign(n, 0.0);
  buf.rewards.assign(n, 0.0);
  buf.values.assign(n, 0.0);
  buf.dones.assign(n, 0);
  buf.bootstrap.assign(buf.segments, 0.0);

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, envs_.size());
  if (workers == 1) {
    for (std::size_t e = 0; e < envs_.size(); ++e) run_segment(envs_[e], e, ac, buf);
    return buf;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t e = w; e < envs_.size(); e += workers) run_segment(envs_[e], e, ac, buf);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return buf;
}

std::vector<double> EnvPool::take_finished_returns() {
  std::vector<double> out;
  for (auto& s : envs_) {
    out.insert(out.end(), s.finished.begin(), s.finished.end());
    s.finished.clear();
  }
  return out;
}

PPOOptimizers::PPOOptimizers(double lr) {
  for (auto* s : {&policy, &value}) {
    s->config.rule = nn::UpdateRule::adam;
    s->config.decay = nn::LrDecay::constant;
    s->config.base_lr = lr;
  }
}

UpdateStats update(ActorCritic& ac, RolloutBuffer& buffer, const PPOConfig& cfg, PPOOptimizers& opt,
                   std::mt19937_64& rng) {
  if (buffer.generation != ac.generation) {
    throw UsageError("rollout buffer from generation " + std::to_string(buffer.generation) +
                     " cannot update parameters of generation " + std::to_string(ac.generation));
  }
  const std::size_t n = buffer.size();
  if (n == 0) throw InputError("empty rollout buffer");
  if (buffer.advantages.size() != n) compute_advantages(buffer, cfg.gamma, cfg.lambda);
  normalize_advantages(buffer);

  const ActorCritic backup = ac;
  const nn::OptimizerState backup_pi = opt.policy;
  const nn::OptimizerState backup_v = opt.value;
  auto abort = [&](const std::string& what) {
    ac = backup;
    opt.policy = backup_pi;
    opt.value = backup_v;
    throw NumericError("PPO update aborted: " + what);
  };

  auto& mean_net = ac.policy.mean;
  auto& value_net = ac.value.net;
  nn::Gradients g_pi = nn::Gradients::zeros_like(mean_net);
  nn::Gradients g_v = nn::Gradients::zeros_like(value_net);
  std::vector<double> g_logstd(ac.policy.log_std.size());
  nn::Tape tape_pi;
  nn::Tape tape_v;
  Tensor2 input;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  UpdateStats stats;
  double sum_pl = 0.0, sum_vl = 0.0, sum_ratio = 0.0;
  std::size_t clipped = 0, seen = 0, batches = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t lo = 0; lo < n; lo += cfg.minibatch) {
      const std::size_t hi = std::min(n, lo + cfg.minibatch);
      const double inv = 1.0 / static_cast<double>(hi - lo);
      g_pi.zero();
      g_v.zero();
      std::fill(g_logstd.begin(), g_logstd.end(), 0.0);
      const double log_std = ac.policy.log_std[0];
      const double var = std::exp(2.0 * log_std);
      double pl = 0.0, vl = 0.0;
      for (std::size_t k = lo; k < hi; ++k) {
        const std::size_t i = order[k];
        const auto obs = buffer.observation(i);
        const double adv = buffer.advantages[i];
        const double u = buffer.raw_actions[i];

        const double mu = forward_scalar(mean_net, obs, tape_pi, input);
        const double logp = squashed_log_prob(u, mu, log_std);
        const double ratio = std::exp(logp - buffer.log_probs[i]);
        const double obj = ppo_clip_objective(ratio, adv, cfg.clip);
        pl -= obj;
        sum_ratio += ratio;
        if (std::abs(ratio - 1.0) > cfg.clip) ++clipped;
        // The unclipped branch carries the gradient unless the ratio is past
        // the bound in the direction the advantage favours.
        const bool active = !((adv > 0.0 && ratio > 1.0 + cfg.clip) || (adv < 0.0 && ratio < 1.0 - cfg.clip));
        if (active) {
          const double d_logp = -ratio * adv * inv;
          const double d_mu = d_logp * (u - mu) / var;
          nn::backward(mean_net, tape_pi, std::span<const double>(&d_mu, 1), g_pi);
          const double z2 = (u - mu) * (u - mu) / var;
          g_logstd[0] += d_logp * (z2 - 1.0);
        }
        g_logstd[0] -= cfg.entropy_coef * inv;

        const double v = forward_scalar(value_net, obs, tape_v, input);
        const double err = v - buffer.returns[i];
        vl += err * err;
        const double d_v = 2.0 * err * inv;
        nn::backward(value_net, tape_v, std::span<const double>(&d_v, 1), g_v);
      }
      pl *= inv;
      vl *= inv;
      if (!std::isfinite(pl) || !std::isfinite(vl)) abort("non-finite loss");
      if (!g_pi.all_finite() || !g_v.all_finite()) abort("non-finite gradient");
      for (double g : g_logstd) {
        if (!std::isfinite(g)) abort("non-finite gradient");
      }

      std::vector<std::vector<double>*> pi_refs;
      for (auto& g : g_pi.per_layer) pi_refs.push_back(&g);
      pi_refs.push_back(&g_logstd);
      nn::clip_gradient_norm(pi_refs, cfg.max_grad_norm);
      nn::clip_gradient_norm(g_v, cfg.max_grad_norm);

      std::vector<nn::ParamBlock> blocks;
      for (std::size_t l = 0; l < mean_net.size(); ++l) blocks.push_back({nn::parameters(mean_net.layer(l)), g_pi.per_layer[l]});
      blocks.push_back({ac.policy.log_std, g_logstd});
      nn::optimizer_step(blocks, opt.policy);
      nn::optimizer_step(value_net, g_v, opt.value);

      sum_pl += pl;
      sum_vl += vl;
      seen += hi - lo;
      ++batches;
    }
  }
  for (double ls : ac.policy.log_std) {
    if (!std::isfinite(ls)) abort("non-finite log-std");
  }
  stats.policy_loss = sum_pl / static_cast<double>(batches);
  stats.value_loss = sum_vl / static_cast<double>(batches);
  stats.clip_fraction = static_cast<double>(clipped) / static_cast<double>(seen);
  stats.mean_ratio = sum_ratio / static_cast<double>(seen);
  ac.generation += 1;
  return stats;
}

TrainResult train(const EnvFactory& factory, const PPOConfig& cfg, std::optional<ActorCritic> initial) {
  validate(cfg);
  TrainResult result;
  const std::size_t per_iter = cfg.n_envs * cfg.horizon;
  const std::size_t iterations = (cfg.total_steps + per_iter - 1) / per_iter;
  if (iterations == 0) {
    if (initial) {
      result.model = std::move(*initial);
    } else {
      auto probe = factory(0);
      result.model = make_actor_critic(probe->observation_size(), cfg);
    }
    return result;
  }
  EnvPool pool(factory, cfg.n_envs, cfg.seed);
  const std::size_t obs_size = factory(0)->observation_size();
  result.model = initial ? std::move(*initial) : make_actor_critic(obs_size, cfg);
  PPOOptimizers opt(cfg.lr);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t it = 0; it < iterations; ++it) {
    RolloutBuffer buf = pool.collect(result.model, cfg.horizon, cfg.threads);
    compute_advantages(buf, cfg.gamma, cfg.lambda);
    const UpdateStats st = update(result.model, buf, cfg, opt, rng);
    const auto returns = pool.take_finished_returns();
    IterationLog row;
    row.iteration = it + 1;
    row.mean_episode_reward =
        returns.empty() ? nan : std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
    row.clip_fraction = st.clip_fraction;
    row.policy_loss = st.policy_loss;
    row.value_loss = st.value_loss;
    result.log.push_back(row);
    result.steps += per_iter;
  }
  return result;
}

EpisodeStats evaluate_policy(const Policy& policy, Environment& env, std::size_t episodes, std::uint64_t seed,
                             bool deterministic) {
  EpisodeStats st;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  nn::Tape tape;
  for (std::size_t e = 0; e < episodes; ++e) {
    auto obs = env.reset(rng);
    double total = 0.0;
    for (;;) {
      const double z = deterministic ? 0.0 : normal(rng);
      const ActionSample a = action_from_noise(policy, obs, z, tape);
      Transition tr = env.step(a.action);
      total += tr.reward;
      if (tr.done) break;
      obs = std::move(tr.observation);
    }
    st.returns.push_back(total);
  }
  if (!st.returns.empty()) {
    const double n = static_cast<double>(st.returns.size());
    st.mean = std::accumulate(st.returns.begin(), st.returns.end(), 0.0) / n;
    double var = 0.0;
    for (double r : st.returns) var += (r - st.mean) * (r - st.mean);
    st.stddev = st.returns.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  }
  return st;
}

void write_train_log(std::ostream& out, std::span<const IterationLog> log) {
  using data::format_double;
  out << kTrainLogHeader << '\n';
  for (const auto& r : log) {
    out << r.iteration << ',' << format_double(r.mean_episode_reward) << ',' << format_double(r.clip_fraction) << ','
        << format_double(r.policy_loss) << ',' << format_double(r.value_loss) << '\n';
  }
}

void save_actor_critic(const std::filesystem::path& dir, const ActorCritic& ac, const PPOConfig& cfg) {
  std::filesystem::create_directories(dir);
  const std::string hash = nn::to_hex(config_hash(cfg));
  nn::Checkpoint pi{ac.policy.mean, {}};
  pi.metadata["kind"] = "policy";
  pi.metadata["log_std"] = nlohmann::json(ac.policy.log_std).dump();
  pi.metadata["generation"] = std::to_string(ac.generation);
  pi.metadata["config_hash"] = hash;
  nn::save_checkpoint(dir / "policy.json", pi);
  nn::Checkpoint v{ac.value.net, {}};
  v.metadata["kind"] = "value";
  v.metadata["generation"] = std::to_string(ac.generation);
  v.metadata["config_hash"] = hash;
  nn::save_checkpoint(dir / "value.json", v);
}

ActorCritic load_actor_critic(const std::filesystem::path& dir) {
  const nn::Checkpoint pi = nn::load_checkpoint(dir / "policy.json");
  const nn::Checkpoint v = nn::load_checkpoint(dir / "value.json");
  auto meta = [](const nn::Checkpoint& c, const std::string& key) {
    const auto it = c.metadata.find(key);
    if (it == c.metadata.end()) throw SchemaError("checkpoint metadata lacks '" + key + "'");
    return it->second;
  };
  if (meta(pi, "kind") != "policy" || meta(v, "kind") != "value") throw SchemaError("not a policy/value checkpoint pair");
  ActorCritic ac;
  ac.policy.mean = pi.stack;
  ac.value.net = v.stack;
  try {
    ac.policy.log_std = nlohmann::json::parse(meta(pi, "log_std")).get<std::vector<double>>();
    ac.generation = std::stoull(meta(pi, "generation"));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad policy metadata: ") + e.what());
  } catch (const std::logic_error& e) {
    throw SchemaError(std::string("bad policy metadata: ") + e.what());
  }
  if (ac.policy.log_std.size() != 1 || ac.policy.mean.output_size() != 1 || ac.value.net.output_size() != 1 ||
      ac.policy.mean.input_size() != ac.value.net.input_size()) {
    throw SchemaError("policy and value networks have inconsistent shapes");
  }
  return ac;
}

std::uint64_t checksum(const ActorCritic& ac) {
  std::uint64_t h = nn::checksum(ac.policy.mean);
  const auto* bytes = reinterpret_cast<const unsigned char*>(ac.policy.log_std.data());
  h = nn::fnv1a(std::span(bytes, ac.policy.log_std.size() * sizeof(double)), h);
  const std::uint64_t hv = nn::checksum(ac.value.net);
  return nn::fnv1a(std::span(reinterpret_cast<const unsigned char*>(&hv), sizeof(hv)), h);
}

}  // namespace relearn::rl
