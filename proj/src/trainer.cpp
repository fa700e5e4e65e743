#include "sdar/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "sdar/errors.hpp"

namespace sdar {

std::string to_string(Mode m) {
    switch (m) {
        case Mode::sdar: return "sdar";
        case Mode::sac: return "sac";
        case Mode::nrep: return "nrep";
        case Mode::coupled: return "coupled";
    }
    return "?";
}

std::string to_string(BetaUpdate u) {
    switch (u) {
        case BetaUpdate::exact: return "exact";
        case BetaUpdate::sampled: return "sampled";
        case BetaUpdate::automatic: return "auto";
    }
    return "?";
}

std::string to_string(Precision p) { return p == Precision::f64 ? "f64" : "f32"; }

Mode parse_mode(const std::string& s) {
    if (s == "sdar") return Mode::sdar;
    if (s == "sac") return Mode::sac;
    if (s == "nrep") return Mode::nrep;
    if (s == "coupled") return Mode::coupled;
    throw ConfigError("unknown mode '" + s + "' (expected sdar, sac, nrep or coupled)");
}

BetaUpdate parse_beta_update(const std::string& s) {
    if (s == "exact") return BetaUpdate::exact;
    if (s == "sampled") return BetaUpdate::sampled;
    if (s == "auto") return BetaUpdate::automatic;
    throw ConfigError("unknown beta_update '" + s + "' (expected exact, sampled or auto)");
}

Precision parse_precision(const std::string& s) {
    if (s == "f64" || s == "double") return Precision::f64;
    if (s == "f32" || s == "float") return Precision::f32;
    throw ConfigError("unknown precision '" + s + "' (expected f64 or f32)");
}

void TrainConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(lr_pi, "lr_pi");
    positive(lr_beta, "lr_beta");
    positive(lr_q, "lr_q");
    positive(lr_alpha, "lr_alpha");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in [0, 1]");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
    if (!std::isfinite(init_log_alpha_beta) || !std::isfinite(init_log_alpha_pi))
        throw ConfigError("initial log temperatures must be finite");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (policy_delay < 1) throw ConfigError("policy_delay must be >= 1");
    if (sample_count < 1) throw ConfigError("sample_count must be >= 1");
    if (nrep < 1) throw ConfigError("nrep must be >= 1");
    if (enum_cap < 1 || enum_cap > 20) throw ConfigError("enum_cap must lie in [1, 20]");
    if (auto_exact_max_dim < 0) throw ConfigError("auto_exact_max_dim must be >= 0");
    if (total_steps < 0 || warmup_steps < 0) throw ConfigError("step counts must be >= 0");
    if (replay_capacity == 0) throw ConfigError("replay_capacity must be >= 1");
    if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
    if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
    for (auto h : hidden)
        if (h == 0) throw ConfigError("hidden widths must be >= 1");
    MaskConstant check{xi};
    (void)check;
}

BetaUpdate TrainConfig::resolved_beta_update(std::size_t act_dim) const {
    if (beta_update != BetaUpdate::automatic) return beta_update;
    return switch_count(act_dim) <= static_cast<std::size_t>(auto_exact_max_dim) ? BetaUpdate::exact
                                                                                  : BetaUpdate::sampled;
}

double TemperatureState::alpha_beta() const { return std::exp(log_alpha_beta); }
double TemperatureState::alpha_pi() const { return std::exp(log_alpha_pi); }

TemperatureState TemperatureState::make(std::size_t act_dim, std::size_t switches, const TrainConfig& cfg) {
    TemperatureState t;
    t.log_alpha_beta = cfg.init_log_alpha_beta;
    t.log_alpha_pi = cfg.init_log_alpha_pi;
    t.target_beta = cfg.lambda * static_cast<double>(switches) * std::numbers::ln2;
    t.target_pi = -static_cast<double>(act_dim);
    return t;
}

template <typename T>
Agent<T> Agent<T>::init(const EnvSpec& spec, const TrainConfig& cfg, Rng& init_rng) {
    PolicyLayout layout;
    layout.obs_dim = spec.obs_dim;
    layout.act_dim = spec.act_dim;
    layout.hidden = cfg.hidden;
    layout.coupled = cfg.mode == Mode::coupled;
    layout.xi = MaskConstant(cfg.xi);
    Agent a;
    a.policy = PolicyNets<T>::init(layout, init_rng);
    a.critics = CriticPair<T>::init(spec.obs_dim, spec.act_dim, cfg.hidden, init_rng);
    a.opt_beta = AdamState<T>::for_params(a.policy.beta);
    a.opt_pi = AdamState<T>::for_params(a.policy.pi);
    a.opt_q1 = AdamState<T>::for_params(a.critics.q1);
    a.opt_q2 = AdamState<T>::for_params(a.critics.q2);
    a.temps = TemperatureState::make(spec.act_dim, layout.switch_count(), cfg);
    return a;
}

UpdateOptions UpdateOptions::from(const TrainConfig& cfg) {
    UpdateOptions o;
    o.selection = cfg.uses_selection();
    o.soft_target_entropy = cfg.soft_target_entropy;
    o.mask_pi_entropy = cfg.mask_pi_entropy;
    o.gamma = cfg.gamma;
    return o;
}

template <typename T>
T update_critics(Agent<T>& agent, const Batch<T>& batch, const UpdateOptions& opts, double lr, Rng& rng) {
    TargetOptions to;
    to.gamma = opts.gamma;
    to.alpha_beta = agent.temps.alpha_beta();
    to.alpha_pi = agent.temps.alpha_pi();
    to.soft_target_entropy = opts.soft_target_entropy;
    to.mask_pi_entropy = opts.mask_pi_entropy;
    to.force_all_act = !opts.selection;
    const Vector<T> y = bellman_targets(batch, agent.policy, agent.critics, to, rng);
    const auto loss = critic_loss_and_grads(agent.critics, batch, y);
    adam_step(agent.opt_q1, agent.critics.q1, loss.grad_q1, lr);
    adam_step(agent.opt_q2, agent.critics.q2, loss.grad_q2, lr);
    return loss.loss;
}

namespace {

// Clipped double-Q at (obs, action) with the gradient of sum_j w_j minQ_j w.r.t. the action.
template <typename T>
struct MinQ {
    Matrix<T> value;       // 1 x B
    Matrix<T> action_grad; // act x B, filled only when requested
};

template <typename T>
MinQ<T> min_q(const CriticPair<T>& critics, const Matrix<T>& obs, const Matrix<T>& action, const Matrix<T>* weights) {
    MinQ<T> out;
    ForwardCache<T> c1;
    ForwardCache<T> c2;
    const Matrix<T> q1 = q_values(critics.q1, obs, action, weights ? &c1 : nullptr);
    const Matrix<T> q2 = q_values(critics.q2, obs, action, weights ? &c2 : nullptr);
    out.value = q1.cwiseMin(q2);
    if (weights) {
        // Gradient follows the argmin critic; ties go to q1.
        Matrix<T> up1 = Matrix<T>::Zero(1, q1.cols());
        Matrix<T> up2 = Matrix<T>::Zero(1, q1.cols());
        for (Eigen::Index j = 0; j < q1.cols(); ++j) {
            if (q1(0, j) <= q2(0, j)) {
                up1(0, j) = (*weights)(0, j);
            } else {
                up2(0, j) = (*weights)(0, j);
            }
        }
        const auto n = action.rows();
        out.action_grad = backprop(critics.q1, c1, up1, false).input_grad.bottomRows(n) +
                          backprop(critics.q2, c2, up2, false).input_grad.bottomRows(n);
    }
    return out;
}

std::size_t schema_index(const SchemaBatch& b, Eigen::Index col, std::size_t switch_count) {
    std::size_t k = 0;
    for (std::size_t s = 0; s < switch_count; ++s) {
        const auto row = static_cast<Eigen::Index>(switch_count == 1 ? 0 : s);
        if (b(row, col)) k |= std::size_t{1} << s;
    }
    return k;
}

template <typename T>
void require_finite(T v, const char* what) {
    if (!std::isfinite(static_cast<double>(v))) throw NumericalError(std::string(what) + ": non-finite objective");
}

}  // namespace

template <typename T>
ActionDraw<T> draw_action_inputs(const Agent<T>& agent, const Batch<T>& batch, const UpdateOptions& opts, Rng& rng) {
    const auto n = static_cast<Eigen::Index>(agent.policy.layout.act_dim);
    ActionDraw<T> d;
    if (opts.selection) {
        d.schema = sample_schema(selection_probs(agent.policy, batch.obs, batch.a_prev), rng);
    } else {
        d.schema = SchemaBatch::Ones(n, batch.size());
    }
    d.noise = normal_matrix<T>(n, batch.size(), rng);
    return d;
}

template <typename T>
ObjectiveGrad<T> action_policy_gradient(const Agent<T>& agent, const Batch<T>& batch, const UpdateOptions& opts,
                                        const ActionDraw<T>& draw, PolicyDraws<T>* draws_out) {
    const auto& policy = agent.policy;
    const Eigen::Index B = batch.size();
    const SchemaBatch& b = draw.schema;

    Vector<T> log_beta = Vector<T>::Zero(B);
    if (opts.selection) log_beta = schema_log_prob(selection_probs(policy, batch.obs, batch.a_prev), b);

    const T ab = static_cast<T>(agent.temps.alpha_beta());
    const T ap = static_cast<T>(agent.temps.alpha_pi());
    const T inv_b = T(1) / static_cast<T>(B);

    const Matrix<T> mix = premix(b, batch.a_prev, static_cast<T>(policy.layout.xi.value()));
    const auto g = gaussian_action(policy, batch.obs, mix, draw.noise, opts.mask_pi_entropy ? &b : nullptr);
    const Matrix<T> a = postmix(b, batch.a_prev, g.a_hat);

    // d(-J)/d minQ_j = -1/B
    const Matrix<T> w = Matrix<T>::Constant(1, B, -inv_b);
    const auto q = min_q(agent.critics, batch.obs, a, &w);

    ObjectiveGrad<T> out;
    T total = T(0);
    for (Eigen::Index j = 0; j < B; ++j) total += q.value(0, j) - ab * log_beta(j) - ap * g.log_pi(j);
    out.objective = total * inv_b;
    require_finite(out.objective, "action policy update");

    // postmix passes the gradient only to acting dimensions.
    const Matrix<T> d_a_hat = (b.array() != 0).select(q.action_grad, Matrix<T>::Zero(q.action_grad.rows(), B));
    const Vector<T> d_log_pi = Vector<T>::Constant(B, ap * inv_b);
    const Matrix<T> raw_grad = gaussian_backward(g, d_a_hat, d_log_pi);
    out.grad = backprop(policy.pi, g.cache, raw_grad, true).grads;

    if (draws_out) {
        draws_out->log_beta = log_beta;
        draws_out->log_pi = g.log_pi;
    }
    return out;
}

template <typename T>
SchemaNoise<T> draw_schema_noise(const Agent<T>& agent, Eigen::Index batch, Rng& rng) {
    const auto sw = agent.policy.layout.switch_count();
    const auto n = static_cast<Eigen::Index>(agent.policy.layout.act_dim);
    SchemaNoise<T> noise;
    noise.reserve(std::size_t{1} << sw);
    for (std::size_t k = 0; k < (std::size_t{1} << sw); ++k) noise.push_back(normal_matrix<T>(n, batch, rng));
    return noise;
}

template <typename T>
ObjectiveGrad<T> selection_exact_gradient(const Agent<T>& agent, const Batch<T>& batch, const UpdateOptions& opts,
                                          const SchemaNoise<T>& noise) {
    const auto& policy = agent.policy;
    const std::size_t n = policy.layout.act_dim;
    const std::size_t sw = policy.layout.switch_count();
    if (sw > 20) throw ConfigError("exact selection update: too many switches to enumerate; use beta_update=sampled");
    const std::size_t count = std::size_t{1} << sw;
    if (noise.size() != count) throw ConfigError("exact selection update: need one noise matrix per schema");
    const Eigen::Index B = batch.size();
    const T ab = static_cast<T>(agent.temps.alpha_beta());
    const T ap = static_cast<T>(agent.temps.alpha_pi());
    const T xi = static_cast<T>(policy.layout.xi.value());

    ForwardCache<T> cache;
    const auto sel = selection_probs(policy, batch.obs, batch.a_prev, &cache);
    Matrix<T> d_logits = Matrix<T>::Zero(static_cast<Eigen::Index>(sw), B);
    T total = T(0);
    for (std::size_t k = 0; k < count; ++k) {
        const SchemaBatch b = enumerate_schema(k, n, sw, static_cast<std::size_t>(B));
        const Vector<T> lb = schema_log_prob(sel, b);
        const Matrix<T> glb = schema_log_prob_grad(sel, b);
        const auto g = gaussian_action(policy, batch.obs, premix(b, batch.a_prev, xi), noise[k],
                                       opts.mask_pi_entropy ? &b : nullptr);
        const auto q = min_q(agent.critics, batch.obs, postmix(b, batch.a_prev, g.a_hat), static_cast<const Matrix<T>*>(nullptr));
        for (Eigen::Index j = 0; j < B; ++j) {
            const T w = std::exp(lb(j));
            const T bracket = q.value(0, j) - ab * lb(j) - ap * g.log_pi(j);
            total += w * bracket;
            // d/dl [ w (T_b - ab log w) ] = w (bracket - ab) dlog w/dl
            d_logits.col(j) += (w * (bracket - ab)) * glb.col(j);
        }
    }
    const T inv_b = T(1) / static_cast<T>(B);
    ObjectiveGrad<T> out;
    out.objective = total * inv_b;
    require_finite(out.objective, "exact selection update");
    out.grad = backprop(policy.beta, cache, Matrix<T>(-inv_b * d_logits), true).grads;
    return out;
}

template <typename T>
ObjectiveGrad<T> selection_sampled_gradient(const Agent<T>& agent, const Batch<T>& batch,
                                            const UpdateOptions& opts, int sample_count, Rng& rng,
                                            const SchemaNoise<T>* pinned) {
    if (sample_count < 1) throw ConfigError("sampled selection update: sample_count must be >= 1");
    const auto& policy = agent.policy;
    const auto n = static_cast<Eigen::Index>(policy.layout.act_dim);
    const std::size_t sw = policy.layout.switch_count();
    if (pinned && pinned->size() != (std::size_t{1} << sw))
        throw ConfigError("sampled selection update: need one pinned noise matrix per schema");
    const Eigen::Index B = batch.size();
    const T ab = static_cast<T>(agent.temps.alpha_beta());
    const T ap = static_cast<T>(agent.temps.alpha_pi());
    const T xi = static_cast<T>(policy.layout.xi.value());

    ForwardCache<T> cache;
    const auto sel = selection_probs(policy, batch.obs, batch.a_prev, &cache);
    Matrix<T> d_logits = Matrix<T>::Zero(static_cast<Eigen::Index>(sw), B);
    T total = T(0);
    for (int k = 0; k < sample_count; ++k) {
        const SchemaBatch b = sample_schema_clamped(sel, rng);
        Matrix<T> noise(n, B);
        if (pinned) {
            for (Eigen::Index j = 0; j < B; ++j) noise.col(j) = (*pinned)[schema_index(b, j, sw)].col(j);
        } else {
            noise = normal_matrix<T>(n, B, rng);
        }
        // beta_old is this same network, detached: the ratio is exp(lb - lb_old) = 1 in value.
        const Vector<T> lb_old = schema_log_prob(sel, b);
        const Matrix<T> glb = schema_log_prob_grad(sel, b);
        const auto g = gaussian_action(policy, batch.obs, premix(b, batch.a_prev, xi), noise,
                                       opts.mask_pi_entropy ? &b : nullptr);
        const auto q = min_q(agent.critics, batch.obs, postmix(b, batch.a_prev, g.a_hat), static_cast<const Matrix<T>*>(nullptr));
        for (Eigen::Index j = 0; j < B; ++j) {
            const T ratio = std::exp(lb_old(j) - lb_old(j));
            const T bracket = q.value(0, j) - ab * lb_old(j) - ap * g.log_pi(j);
            total += bracket * ratio;
            d_logits.col(j) += (bracket * ratio) * glb.col(j);
        }
    }
    const T inv = T(1) / (static_cast<T>(B) * static_cast<T>(sample_count));
    ObjectiveGrad<T> out;
    out.objective = total * inv;
    require_finite(out.objective, "sampled selection update");
    out.grad = backprop(policy.beta, cache, Matrix<T>(-inv * d_logits), true).grads;
    return out;
}

template <typename T>
double mean_log_prob(const Vector<T>& logp) {
    if (logp.size() == 0) throw PreconditionError("temperature update: no log-probability draws");
    double acc = 0.0;
    for (Eigen::Index j = 0; j < logp.size(); ++j) acc += static_cast<double>(logp(j));
    return acc / static_cast<double>(logp.size());
}

template <typename T>
std::pair<double, double> update_temperatures(TemperatureState& temps, const PolicyDraws<T>& draws, double lr,
                                              bool update_beta) {
    auto grad = [](const Vector<T>& logp, double target) { return -(mean_log_prob(logp) + target); };
    const double g_pi = grad(draws.log_pi, temps.target_pi);
    double g_beta = 0.0;
    if (update_beta) g_beta = grad(draws.log_beta, temps.target_beta);
    if (!std::isfinite(g_pi) || !std::isfinite(g_beta))
        throw NumericalError("temperature update: non-finite gradient");
    temps.opt_pi.apply(temps.log_alpha_pi, g_pi, lr);
    if (update_beta) temps.opt_beta.apply(temps.log_alpha_beta, g_beta, lr);
    return {temps.alpha_beta(), temps.alpha_pi()};
}

namespace {

ActOptions act_options(Mode mode, int nrep, std::int64_t episode_step, std::size_t act_dim) {
    ActOptions o;
    const auto n = static_cast<Eigen::Index>(act_dim);
    switch (mode) {
        case Mode::sac: o.force_all_act = true; break;
        case Mode::nrep:
            o.fixed_schema = episode_step % nrep == 0 ? Schema::Ones(n) : Schema::Zero(n);
            break;
        case Mode::sdar:
        case Mode::coupled: o.force_all_act = episode_step == 0; break;
    }
    return o;
}

template <typename T>
Vector<T> to_vector(const std::vector<double>& v) {
    Vector<T> out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = static_cast<T>(v[i]);
    return out;
}

template <typename T>
std::vector<double> to_doubles(const Vector<T>& v) {
    std::vector<double> out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<double>(v(i));
    return out;
}

}  // namespace

template <typename T>
std::vector<EpisodeTrace> evaluate(const PolicyNets<T>& policy, Env& env, int episodes, const EvalOptions& opts,
                                   Rng& rng) {
    if (episodes < 1) throw PreconditionError("evaluate: episodes must be >= 1");
    const std::size_t n = policy.layout.act_dim;
    if (env.spec().act_dim != n || env.spec().obs_dim != policy.layout.obs_dim)
        throw ConfigError("evaluate: environment and policy dimensions differ");
    std::vector<EpisodeTrace> traces;
    traces.reserve(static_cast<std::size_t>(episodes));
    for (int e = 0; e < episodes; ++e) {
        EpisodeTrace tr;
        tr.initial_action.assign(n, 0.0);
        std::vector<double> obs = env.reset(rng.next_u64());
        std::vector<double> a_prev = tr.initial_action;
        for (std::int64_t t = 0;; ++t) {
            ActOptions o = act_options(opts.mode, opts.nrep, t, n);
            o.deterministic = opts.deterministic;
            o.mask_pi_entropy = opts.mask_pi_entropy;
            const auto out = act(policy, to_vector<T>(obs), to_vector<T>(a_prev), o, rng);
            std::vector<double> action = to_doubles(out.action);
            const StepResult res = env.step(action);
            tr.schemas.emplace_back(out.schema.data(), out.schema.data() + out.schema.size());
            tr.actions.push_back(action);
            tr.rewards.push_back(res.reward);
            a_prev = std::move(action);
            obs = res.obs;
            if (res.terminated || res.truncated) break;
        }
        traces.push_back(std::move(tr));
    }
    return traces;
}

EvalSummary summarize(const std::vector<EpisodeTrace>& traces) {
    EvalSummary s;
    s.episodes = static_cast<int>(traces.size());
    if (traces.empty()) return s;
    double sum = 0.0;
    for (const auto& t : traces) sum += t.episode_return();
    s.return_mean = sum / static_cast<double>(traces.size());
    if (traces.size() > 1) {
        double ss = 0.0;
        for (const auto& t : traces) ss += (t.episode_return() - s.return_mean) * (t.episode_return() - s.return_mean);
        const double var = ss / static_cast<double>(traces.size() - 1);
        s.return_stderr = std::sqrt(var / static_cast<double>(traces.size()));
    }
    s.apr = apr(traces);
    s.afr = afr(traces);
    return s;
}

template <typename T>
Trainer<T>::Trainer(TrainConfig cfg, EnvFactory factory)
    : cfg_(std::move(cfg)), factory_(std::move(factory)), replay_(1, 1, 1) {
    cfg_.validate();
    if (!factory_) throw ConfigError("trainer: missing environment factory");
    env_ = factory_();
    if (!env_) throw ConfigError("trainer: environment factory returned nothing");
    const EnvSpec& spec = env_->spec();
    spec.validate();
    if (cfg_.uses_selection() && cfg_.resolved_beta_update(spec.act_dim) == BetaUpdate::exact &&
        cfg_.switch_count(spec.act_dim) > static_cast<std::size_t>(cfg_.enum_cap))
        throw ConfigError("exact selection update over " + std::to_string(cfg_.switch_count(spec.act_dim)) +
                          " switches exceeds enum_cap " + std::to_string(cfg_.enum_cap) +
                          "; use beta_update=sampled");
    Rng init_rng(derive_seed(cfg_.seed, Stream::init));
    agent_ = Agent<T>::init(spec, cfg_, init_rng);
    replay_ = ReplayBuffer(spec.obs_dim, spec.act_dim, cfg_.replay_capacity);
    env_rng_ = Rng(derive_seed(cfg_.seed, Stream::env));
    policy_rng_ = Rng(derive_seed(cfg_.seed, Stream::policy));
    replay_rng_ = Rng(derive_seed(cfg_.seed, Stream::replay));
    last_schema_ = Schema::Ones(static_cast<Eigen::Index>(spec.act_dim));
}

template <typename T>
Transition Trainer<T>::collect_step() {
    const std::size_t n = env_->spec().act_dim;
    auto& c = collector_;
    if (c.need_reset) {
        c.obs = env_->reset(env_rng_.next_u64());
        c.a_prev.assign(n, 0.0);
        c.episode_step = 0;
        c.episode_return = 0.0;
        c.need_reset = false;
    }

    std::vector<double> action(n);
    Schema schema;
    if (step_ < cfg_.warmup_steps) {
        for (auto& a : action) a = static_cast<double>(static_cast<T>(policy_rng_.uniform(-1.0, 1.0)));
        schema = Schema::Ones(static_cast<Eigen::Index>(n));
    } else {
        ActOptions o = act_options(cfg_.mode, cfg_.nrep, c.episode_step, n);
        o.mask_pi_entropy = cfg_.mask_pi_entropy;
        const auto out = act(agent_.policy, to_vector<T>(c.obs), to_vector<T>(c.a_prev), o, policy_rng_);
        action = to_doubles(out.action);
        schema = out.schema;
    }

    const StepResult res = env_->step(action);
    Transition tr;
    tr.obs = c.obs;
    tr.a_prev = c.a_prev;
    tr.action = action;
    tr.reward = res.reward;
    tr.next_obs = res.obs;
    tr.terminal = res.terminated;
    tr.truncated = res.truncated;
    replay_.push(tr);

    last_schema_ = std::move(schema);
    c.obs = res.obs;
    c.a_prev = std::move(action);
    ++c.episode_step;
    c.episode_return += res.reward;
    if (res.terminated || res.truncated) {
        c.need_reset = true;
        ++c.episodes;
        c.finished_return_sum += c.episode_return;
        ++c.finished_count;
    }
    ++step_;
    return tr;
}

template <typename T>
void Trainer<T>::update_from_replay(std::int64_t t) {
    if (replay_.empty()) throw PreconditionError("update: replay buffer is empty");
    const UpdateOptions opts = UpdateOptions::from(cfg_);
    const Batch<T> batch = replay_.template sample<T>(cfg_.batch_size, replay_rng_);
    last_critic_loss_ = static_cast<double>(update_critics(agent_, batch, opts, cfg_.lr_q, policy_rng_));
    if (t % cfg_.policy_delay != 0) return;

    const auto draw = draw_action_inputs(agent_, batch, opts, policy_rng_);
    PolicyDraws<T> draws;
    const auto actor = action_policy_gradient(agent_, batch, opts, draw, &draws);
    adam_step(agent_.opt_pi, agent_.policy.pi, actor.grad, cfg_.lr_pi);
    last_actor_objective_ = static_cast<double>(actor.objective);

    if (opts.selection) {
        ObjectiveGrad<T> sel;
        if (cfg_.resolved_beta_update(agent_.policy.layout.act_dim) == BetaUpdate::exact) {
            sel = selection_exact_gradient(agent_, batch, opts, draw_schema_noise(agent_, batch.size(), policy_rng_));
        } else {
            sel = selection_sampled_gradient(agent_, batch, opts, cfg_.sample_count, policy_rng_);
        }
        adam_step(agent_.opt_beta, agent_.policy.beta, sel.grad, cfg_.lr_beta);
        last_selection_objective_ = static_cast<double>(sel.objective);
    }

    update_temperatures(agent_.temps, draws, cfg_.lr_alpha, opts.selection);
    soft_update(agent_.critics.q1_targ, agent_.critics.q1, cfg_.tau);
    soft_update(agent_.critics.q2_targ, agent_.critics.q2, cfg_.tau);
}

template <typename T>
void Trainer<T>::train_step(const RecordSink& sink) {
    collect_step();
    try {
        if (step_ > cfg_.warmup_steps) update_from_replay(step_);
    } catch (const NumericalError& e) {
        throw NumericalError("step " + std::to_string(step_) + ": " + e.what());
    }
    if (sink && cfg_.eval_every > 0 && step_ % cfg_.eval_every == 0) sink(evaluate_now());
}

template <typename T>
void Trainer<T>::train(const RecordSink& sink, std::int64_t until) {
    const std::int64_t end = until < 0 ? cfg_.total_steps : until;
    while (step_ < end) train_step(sink);
}

template <typename T>
EvalRecord Trainer<T>::evaluate_now() {
    auto env = factory_();
    Rng rng(derive_seed(derive_seed(cfg_.seed, Stream::eval), static_cast<std::uint64_t>(step_)));
    EvalOptions eo;
    eo.mode = cfg_.mode;
    eo.nrep = cfg_.nrep;
    eo.deterministic = !cfg_.stochastic_eval;
    eo.mask_pi_entropy = cfg_.mask_pi_entropy;
    EvalRecord r;
    r.step = step_;
    r.eval = summarize(evaluate(agent_.policy, *env, cfg_.eval_episodes, eo, rng));
    r.alpha_beta = agent_.temps.alpha_beta();
    r.alpha_pi = agent_.temps.alpha_pi();
    r.critic_loss = last_critic_loss_;
    r.actor_objective = last_actor_objective_;
    r.selection_objective = last_selection_objective_;
    r.train_episodes = collector_.episodes;
    if (collector_.finished_count > 0)
        r.train_return_mean = collector_.finished_return_sum / static_cast<double>(collector_.finished_count);
    collector_.finished_return_sum = 0.0;
    collector_.finished_count = 0;
    return r;
}

template <typename T>
void Trainer<T>::set_last_losses(double critic, double actor, double selection) {
    last_critic_loss_ = critic;
    last_actor_objective_ = actor;
    last_selection_objective_ = selection;
}

#define SDAR_INSTANTIATE(T)                                                                                       \
    template struct Agent<T>;                                                                                    \
    template class Trainer<T>;                                                                                   \
    template T update_critics(Agent<T>&, const Batch<T>&, const UpdateOptions&, double, Rng&);                    \
    template ActionDraw<T> draw_action_inputs(const Agent<T>&, const Batch<T>&, const UpdateOptions&, Rng&);     \
    template ObjectiveGrad<T> action_policy_gradient(const Agent<T>&, const Batch<T>&, const UpdateOptions&,      \
                                                     const ActionDraw<T>&, PolicyDraws<T>*);                     \
    template SchemaNoise<T> draw_schema_noise(const Agent<T>&, Eigen::Index, Rng&);                              \
    template ObjectiveGrad<T> selection_exact_gradient(const Agent<T>&, const Batch<T>&, const UpdateOptions&,    \
                                                       const SchemaNoise<T>&);                                   \
    template ObjectiveGrad<T> selection_sampled_gradient(const Agent<T>&, const Batch<T>&, const UpdateOptions&,  \
                                                         int, Rng&, const SchemaNoise<T>*);                      \
    template std::pair<double, double> update_temperatures(TemperatureState&, const PolicyDraws<T>&, double, bool); \
    template double mean_log_prob(const Vector<T>&);                                                           \
    template std::vector<EpisodeTrace> evaluate(const PolicyNets<T>&, Env&, int, const EvalOptions&, Rng&);

SDAR_INSTANTIATE(float)
SDAR_INSTANTIATE(double)

#undef SDAR_INSTANTIATE

}  // namespace sdar
