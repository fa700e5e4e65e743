#pragma once

// Off-policy training loop for the two-stage act-or-repeat agent and its
// degenerate baselines.
//
// Per environment step t (1-based, counted after the step is taken):
//   collect one transition (uniform random all-act actions while t <= warmup);
//   if t > warmup: sample a batch, update both critics;
//     if t % policy_delay == 0: update pi, update beta, update temperatures,
//                               Polyak-update the target critics.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sdar/approximator.hpp"
#include "sdar/critic.hpp"
#include "sdar/envs.hpp"
#include "sdar/metrics.hpp"
#include "sdar/policy.hpp"
#include "sdar/replay.hpp"
#include "sdar/rng.hpp"

namespace sdar {

enum class Mode { sdar, sac, nrep, coupled };
enum class BetaUpdate { exact, sampled, automatic };
enum class Precision { f64, f32 };

std::string to_string(Mode m);
std::string to_string(BetaUpdate u);
std::string to_string(Precision p);
Mode parse_mode(const std::string& s);
BetaUpdate parse_beta_update(const std::string& s);
Precision parse_precision(const std::string& s);

struct TrainConfig {
    Mode mode = Mode::sdar;
    int nrep = 4;  // repeat length for Mode::nrep
    BetaUpdate beta_update = BetaUpdate::automatic;
    int sample_count = 10;        // schema draws per state for the sampled selection update
    int enum_cap = 10;            // largest switch count the exact update accepts
    int auto_exact_max_dim = 3;   // automatic picks exact when switch count <= this
    std::size_t batch_size = 256;
    double gamma = 0.99;
    double lr_pi = 3e-4;
    double lr_beta = 3e-4;
    double lr_q = 1e-3;
    double lr_alpha = 1e-3;
    int policy_delay = 2;
    double tau = 0.005;
    double lambda = 0.5;
    double init_log_alpha_beta = 0.0;
    double init_log_alpha_pi = 0.0;
    std::vector<std::size_t> hidden = {256, 256};
    std::int64_t total_steps = 100000;
    std::int64_t warmup_steps = 5000;
    std::size_t replay_capacity = 1000000;
    std::int64_t eval_every = 5000;
    int eval_episodes = 5;
    bool stochastic_eval = false;
    std::uint64_t seed = 0;
    bool soft_target_entropy = true;
    bool mask_pi_entropy = false;
    double xi = kDefaultMask;
    Precision precision = Precision::f64;

    void validate() const;
    bool uses_selection() const { return mode == Mode::sdar || mode == Mode::coupled; }
    std::size_t switch_count(std::size_t act_dim) const { return mode == Mode::coupled ? 1 : act_dim; }
    /// exact or sampled; automatic resolves by switch count.
    BetaUpdate resolved_beta_update(std::size_t act_dim) const;
};

/// Learned log-temperatures with fixed target entropies:
///   H_beta = lambda * switches * log 2,  H_pi = -act_dim.
/// Loss L = -log a_beta (log beta + H_beta) - log a_pi (log pi + H_pi) averaged over draws,
/// so dL/dlog a = -mean(log p + H): when the measured entropy -E[log p] is below the
/// target this gradient is negative and the descent step raises alpha.
struct TemperatureState {
    double log_alpha_beta = 0.0;
    double log_alpha_pi = 0.0;
    double target_beta = 0.0;
    double target_pi = 0.0;
    ScalarAdam opt_beta;
    ScalarAdam opt_pi;

    double alpha_beta() const;
    double alpha_pi() const;
    static TemperatureState make(std::size_t act_dim, std::size_t switches, const TrainConfig& cfg);
};

template <typename T>
struct Agent {
    PolicyNets<T> policy;
    CriticPair<T> critics;
    AdamState<T> opt_beta;
    AdamState<T> opt_pi;
    AdamState<T> opt_q1;
    AdamState<T> opt_q2;
    TemperatureState temps;

    /// Init order from rng: beta, pi, q1, q2.
    static Agent init(const EnvSpec& spec, const TrainConfig& cfg, Rng& init_rng);
};

struct UpdateOptions {
    bool selection = true;  // false for sac / nrep: every schema is all-act and beta is untouched
    bool soft_target_entropy = true;
    bool mask_pi_entropy = false;
    double gamma = 0.99;

    static UpdateOptions from(const TrainConfig& cfg);
};

/// Critic step: targets (detached) then one Adam step per critic. Returns the loss.
template <typename T>
T update_critics(Agent<T>& agent, const Batch<T>& batch, const UpdateOptions& opts, double lr, Rng& rng);

/// Fresh per-sample log-probabilities drawn during the action-policy update; reused
/// by the temperature update of the same step.
template <typename T>
struct PolicyDraws {
    Vector<T> log_beta;
    Vector<T> log_pi;
};

template <typename T>
struct ObjectiveGrad {
    T objective{};     // estimate of J (to be maximized)
    GradSet<T> grad;   // gradient of -J (descent direction input)
};

/// Pinned inputs for the action-policy objective: schema and normals per sample.
template <typename T>
struct ActionDraw {
    SchemaBatch schema;
    Matrix<T> noise;
};

/// J = mean_j [ min_k Q_k(s, postmix(b, a_prev, a_hat)) - a_beta log beta(b) - a_pi log pi(a_hat) ]
/// with b detached; gradient w.r.t. the pi parameters only.
template <typename T>
ObjectiveGrad<T> action_policy_gradient(const Agent<T>& agent, const Batch<T>& batch, const UpdateOptions& opts,
                                        const ActionDraw<T>& draw, PolicyDraws<T>* draws_out = nullptr);

/// Draws: schema uniforms (selection modes only) then act x B normals.
template <typename T>
ActionDraw<T> draw_action_inputs(const Agent<T>& agent, const Batch<T>& batch, const UpdateOptions& opts, Rng& rng);

/// Per-schema pinned normals: noise[k] is act x B, used for schema k (see enumerate_schema).
template <typename T>
using SchemaNoise = std::vector<Matrix<T>>;

/// Exact enumeration over every schema:
///   J = mean_j sum_b beta(b) [ minQ(s, a(b)) - a_beta log beta(b) - a_pi log pi(a_hat_b) ]
/// Q and log pi are constants w.r.t. the beta parameters.
template <typename T>
ObjectiveGrad<T> selection_exact_gradient(const Agent<T>& agent, const Batch<T>& batch, const UpdateOptions& opts,
                                          const SchemaNoise<T>& noise);

/// Importance-sampled estimate with beta_old = current beta (detached):
///   J = mean_{j,k} bracket(b_k) * beta(b_k) / beta_old(b_k),  b_k ~ beta_old
///   bracket = minQ - a_beta log beta_old(b) - a_pi log pi(a_hat), fully detached.
/// Draws per k: switch uniforms, then act x B normals unless pinned noise is supplied.
template <typename T>
ObjectiveGrad<T> selection_sampled_gradient(const Agent<T>& agent, const Batch<T>& batch,
                                            const UpdateOptions& opts, int sample_count, Rng& rng,
                                            const SchemaNoise<T>* pinned = nullptr);

template <typename T>
SchemaNoise<T> draw_schema_noise(const Agent<T>& agent, Eigen::Index batch, Rng& rng);

/// Sample mean in double; the measured entropy is its negation.
template <typename T>
double mean_log_prob(const Vector<T>& logp);

/// One descent step on each log-temperature. Returns (alpha_beta, alpha_pi).
/// update_beta = false leaves the selection temperature alone (degenerate modes).
template <typename T>
std::pair<double, double> update_temperatures(TemperatureState& temps, const PolicyDraws<T>& draws, double lr,
                                              bool update_beta);

struct EvalOptions {
    Mode mode = Mode::sdar;
    int nrep = 4;
    bool deterministic = true;
    bool mask_pi_entropy = false;
};

/// Rollouts with the given policy snapshot. Reset seeds come from rng.
template <typename T>
std::vector<EpisodeTrace> evaluate(const PolicyNets<T>& policy, Env& env, int episodes, const EvalOptions& opts,
                                   Rng& rng);

struct EvalSummary {
    double return_mean = 0.0;
    double return_stderr = 0.0;
    AprResult apr;
    double afr = 0.0;
    int episodes = 0;
};

EvalSummary summarize(const std::vector<EpisodeTrace>& traces);

/// Metric record written at every evaluation.
struct EvalRecord {
    std::int64_t step = 0;
    EvalSummary eval;
    double alpha_beta = 0.0;
    double alpha_pi = 0.0;
    double critic_loss = 0.0;
    double actor_objective = 0.0;
    double selection_objective = 0.0;
    std::int64_t train_episodes = 0;
    double train_return_mean = 0.0;  // episodes finished since the previous record
};

using RecordSink = std::function<void(const EvalRecord&)>;

/// Episode bookkeeping of the collection loop (part of checkpoints).
struct CollectorState {
    std::vector<double> obs;
    std::vector<double> a_prev;
    std::int64_t episode_step = 0;
    bool need_reset = true;
    std::int64_t episodes = 0;
    double episode_return = 0.0;
    double finished_return_sum = 0.0;  // since the last evaluation record
    std::int64_t finished_count = 0;
};

template <typename T>
class Trainer {
public:
    Trainer(TrainConfig cfg, EnvFactory factory);

    /// Takes one environment step, stores the transition and returns it.
    Transition collect_step();
    /// Update round for step t: critics, then (t % policy_delay == 0) pi, beta, alphas, targets.
    void update_from_replay(std::int64_t t);
    /// collect_step + updates + evaluation for one step.
    void train_step(const RecordSink& sink);
    /// Runs until step() == until (or total_steps when until < 0).
    void train(const RecordSink& sink, std::int64_t until = -1);

    EvalRecord evaluate_now();

    const TrainConfig& config() const { return cfg_; }
    const EnvSpec& env_spec() const { return env_->spec(); }
    std::int64_t step() const { return step_; }
    const Schema& last_schema() const { return last_schema_; }

    Agent<T>& agent() { return agent_; }
    const Agent<T>& agent() const { return agent_; }
    ReplayBuffer& replay() { return replay_; }
    const ReplayBuffer& replay() const { return replay_; }
    Env& env() { return *env_; }
    Rng& env_rng() { return env_rng_; }
    Rng& policy_rng() { return policy_rng_; }
    Rng& replay_rng() { return replay_rng_; }
    CollectorState& collector() { return collector_; }
    const CollectorState& collector() const { return collector_; }
    void set_step(std::int64_t step) { step_ = step; }
    double last_critic_loss() const { return last_critic_loss_; }
    double last_actor_objective() const { return last_actor_objective_; }
    double last_selection_objective() const { return last_selection_objective_; }
    void set_last_losses(double critic, double actor, double selection);

private:
    TrainConfig cfg_;
    EnvFactory factory_;
    std::unique_ptr<Env> env_;
    Agent<T> agent_;
    ReplayBuffer replay_;
    Rng env_rng_;
    Rng policy_rng_;
    Rng replay_rng_;
    CollectorState collector_;
    std::int64_t step_ = 0;
    Schema last_schema_;
    double last_critic_loss_ = 0.0;
    double last_actor_objective_ = 0.0;
    double last_selection_objective_ = 0.0;
};

}  // namespace sdar
