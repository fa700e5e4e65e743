#include "sdar/critic.hpp"

#include <cmath>
#include <string>

#include "sdar/errors.hpp"

namespace sdar {

template <typename T>
CriticPair<T> CriticPair<T>::init(std::size_t obs_dim, std::size_t act_dim, const std::vector<std::size_t>& hidden,
                                  Rng& rng) {
    std::vector<std::size_t> sizes{obs_dim + act_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    CriticPair c;
    c.q1 = ParamSet<T>::init_uniform(sizes, rng);
    c.q2 = ParamSet<T>::init_uniform(sizes, rng);
    c.q1_targ = c.q1;
    c.q2_targ = c.q2;
    return c;
}

template <typename T>
Matrix<T> q_values(const ParamSet<T>& q, const Matrix<T>& obs, const Matrix<T>& action, ForwardCache<T>* cache) {
    const Matrix<T> input = concat_rows(obs, action);
    return cache ? mlp_forward(q, input, *cache) : mlp_forward(q, input);
}

template <typename T>
T q_value(const ParamSet<T>& q, const Vector<T>& obs, const Vector<T>& action) {
    return q_values(q, Matrix<T>(obs), Matrix<T>(action))(0, 0);
}

template <typename T>
Vector<T> bellman_targets(const Batch<T>& batch, const PolicyNets<T>& policy, const CriticPair<T>& critics,
                          const TargetOptions& opts, Rng& rng) {
    const Eigen::Index B = batch.size();
    const auto n = static_cast<Eigen::Index>(policy.layout.act_dim);

    // The executed action a is the previous action at s'.
    SchemaBatch b;
    Vector<T> log_beta = Vector<T>::Zero(B);
    if (opts.force_all_act) {
        b = SchemaBatch::Ones(n, B);
    } else {
        const auto sel = selection_probs(policy, batch.next_obs, batch.action);
        b = sample_schema(sel, rng);
        for (Eigen::Index j = 0; j < B; ++j)
            if (batch.episode_start_next[static_cast<std::size_t>(j)]) b.col(j).setOnes();
        const Vector<T> lb = schema_log_prob(sel, b);
        for (Eigen::Index j = 0; j < B; ++j)
            log_beta(j) = batch.episode_start_next[static_cast<std::size_t>(j)] ? T(0) : lb(j);
    }
    const Matrix<T> noise = normal_matrix<T>(n, B, rng);
    const Matrix<T> mix = premix(b, batch.action, static_cast<T>(policy.layout.xi.value()));
    const auto g = gaussian_action(policy, batch.next_obs, mix, noise, opts.mask_pi_entropy ? &b : nullptr);
    const Matrix<T> next_action = postmix(b, batch.action, g.a_hat);

    const Matrix<T> q1 = q_values(critics.q1_targ, batch.next_obs, next_action);
    const Matrix<T> q2 = q_values(critics.q2_targ, batch.next_obs, next_action);

    const T gamma = static_cast<T>(opts.gamma);
    const T ab = static_cast<T>(opts.alpha_beta);
    const T ap = static_cast<T>(opts.alpha_pi);
    Vector<T> y(B);
    for (Eigen::Index j = 0; j < B; ++j) {
        T next_v = std::min(q1(0, j), q2(0, j));
        if (opts.soft_target_entropy) next_v = next_v - (ab * log_beta(j) + ap * g.log_pi(j));
        const T live = batch.terminal[static_cast<std::size_t>(j)] ? T(0) : T(1);
        y(j) = batch.reward(j) + gamma * live * next_v;
        if (!std::isfinite(static_cast<double>(y(j))))
            throw NumericalError("bellman_targets: non-finite target for sample " + std::to_string(j));
    }
    return y;
}

template <typename T>
CriticLoss<T> critic_loss_and_grads(const CriticPair<T>& critics, const Batch<T>& batch, const Vector<T>& targets) {
    const Eigen::Index B = batch.size();
    if (targets.size() != B) throw ConfigError("critic_loss_and_grads: target count mismatch");
    CriticLoss<T> out;
    const T inv_b = T(1) / static_cast<T>(B);
    auto one = [&](const ParamSet<T>& q, T& loss, GradSet<T>& grad) {
        ForwardCache<T> cache;
        const Matrix<T> pred = q_values(q, batch.obs, batch.action, &cache);
        const Matrix<T> err = pred - targets.transpose();
        loss = err.squaredNorm() * inv_b;
        // d/dQ_k of (1 / 2B) sum_k sum_j (Q_k - y)^2
        const Matrix<T> upstream = err * inv_b;
        grad = backprop(q, cache, upstream, true).grads;
    };
    one(critics.q1, out.loss_q1, out.grad_q1);
    one(critics.q2, out.loss_q2, out.grad_q2);
    out.loss = (out.loss_q1 + out.loss_q2) * T(0.5);
    return out;
}

#define SDAR_INSTANTIATE(T)                                                                                  \
    template struct CriticPair<T>;                                                                          \
    template T q_value(const ParamSet<T>&, const Vector<T>&, const Vector<T>&);                              \
    template Matrix<T> q_values(const ParamSet<T>&, const Matrix<T>&, const Matrix<T>&, ForwardCache<T>*);   \
    template Vector<T> bellman_targets(const Batch<T>&, const PolicyNets<T>&, const CriticPair<T>&,          \
                                       const TargetOptions&, Rng&);                                         \
    template CriticLoss<T> critic_loss_and_grads(const CriticPair<T>&, const Batch<T>&, const Vector<T>&);

SDAR_INSTANTIATE(float)
SDAR_INSTANTIATE(double)

#undef SDAR_INSTANTIATE

}  // namespace sdar
