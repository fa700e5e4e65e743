#pragma once

// Twin soft Q-functions with Polyak-averaged targets (clipped double-Q).

#include "sdar/approximator.hpp"
#include "sdar/policy.hpp"
#include "sdar/replay.hpp"

namespace sdar {

template <typename T>
struct CriticPair {
    ParamSet<T> q1, q2;
    ParamSet<T> q1_targ, q2_targ;

    /// Online nets from rng; targets start as exact copies.
    static CriticPair init(std::size_t obs_dim, std::size_t act_dim, const std::vector<std::size_t>& hidden, Rng& rng);
};

template <typename T>
T q_value(const ParamSet<T>& q, const Vector<T>& obs, const Vector<T>& action);

/// 1 x B row of Q(s, a).
template <typename T>
Matrix<T> q_values(const ParamSet<T>& q, const Matrix<T>& obs, const Matrix<T>& action,
                   ForwardCache<T>* cache = nullptr);

struct TargetOptions {
    double gamma = 0.99;
    double alpha_beta = 1.0;
    double alpha_pi = 1.0;
    bool soft_target_entropy = true;
    bool mask_pi_entropy = false;
    /// Degenerate modes: every next-state decision is all-act and no schema is drawn.
    bool force_all_act = false;
};

/// y = r + gamma (1 - terminal) [ min_k Q_k,targ(s', a') - alpha_beta log beta' - alpha_pi log pi' ]
/// with (a', b') ~ policy(s', a). Truncated-only transitions bootstrap.
/// Draws: switch uniforms for every sample (unless force_all_act), then an act x B normal matrix.
template <typename T>
Vector<T> bellman_targets(const Batch<T>& batch, const PolicyNets<T>& policy, const CriticPair<T>& critics,
                          const TargetOptions& opts, Rng& rng);

template <typename T>
struct CriticLoss {
    T loss{};      // mean over batch and over both critics
    T loss_q1{};   // per-critic mean squared error
    T loss_q2{};
    GradSet<T> grad_q1;
    GradSet<T> grad_q2;
};

/// Targets are constants here: no gradient reaches target nets or the policy.
template <typename T>
CriticLoss<T> critic_loss_and_grads(const CriticPair<T>& critics, const Batch<T>& batch, const Vector<T>& targets);

}  // namespace sdar
