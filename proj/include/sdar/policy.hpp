#pragma once

// Two-stage act-or-repeat policy.
//
//   selection:  b_i ~ Bernoulli(sigmoid(beta_net(s ++ a_prev))_i), 1 = act, 0 = repeat
//   pre-mix:    a_mix = (1 - b) * a_prev + b * xi
//   action:     (mu, log_std) = pi_net(s ++ a_mix), a_hat = tanh(mu + std * n)
//   post-mix:   a = (1 - b) * a_prev + b * a_hat
//
// All batch functions take one column per sample.

#include <cstdint>
#include <optional>
#include <vector>

#include "sdar/approximator.hpp"
#include "sdar/rng.hpp"

namespace sdar {

using SchemaBatch = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;
using Schema = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>;

inline constexpr double kDefaultMask = -2.0;
inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kLogitClamp = 15.0;
inline constexpr double kSquashEps = 1e-6;

/// Mask constant xi. Must lie outside the legal action range [-1, 1].
class MaskConstant {
public:
    explicit MaskConstant(double value = kDefaultMask);
    double value() const { return value_; }

private:
    double value_;
};

struct PolicyLayout {
    std::size_t obs_dim = 0;
    std::size_t act_dim = 0;
    std::vector<std::size_t> hidden = {256, 256};
    /// One switch shared by every dimension instead of one per dimension.
    bool coupled = false;
    MaskConstant xi{};

    /// Number of independent Bernoulli switches: act_dim, or 1 when coupled.
    std::size_t switch_count() const { return coupled ? 1 : act_dim; }
    std::vector<std::size_t> beta_sizes() const;
    std::vector<std::size_t> pi_sizes() const;
    void validate() const;
};

template <typename T>
struct PolicyNets {
    PolicyLayout layout;
    ParamSet<T> beta;  // (obs + act) -> hidden -> switch_count logits
    ParamSet<T> pi;    // (obs + act) -> hidden -> act means ++ act log-stds

    static PolicyNets init(const PolicyLayout& layout, Rng& rng);
};

template <typename T>
struct SelectionOutput {
    Matrix<T> logits;  // switch_count x B, unclamped
    Matrix<T> probs;   // act_dim x B, sigmoid(logits) broadcast over dims sharing a switch
};

/// Rows: obs then a_prev.
template <typename T>
Matrix<T> concat_rows(const Matrix<T>& top, const Matrix<T>& bottom);

template <typename T>
SelectionOutput<T> selection_probs(const PolicyNets<T>& nets, const Matrix<T>& obs, const Matrix<T>& a_prev,
                                   ForwardCache<T>* cache = nullptr);

/// Independent Bernoulli draw per switch (column-major order of switches x samples),
/// broadcast to the dimensions the switch governs.
template <typename T>
SchemaBatch sample_schema(const SelectionOutput<T>& sel, Rng& rng);

/// Same as sample_schema but draws with the clamped-logit probabilities used by
/// schema_log_prob, so importance ratios stay unbiased.
template <typename T>
SchemaBatch sample_schema_clamped(const SelectionOutput<T>& sel, Rng& rng);

/// log beta(b | s, a_prev) per sample: sum over switches of b log p + (1 - b) log(1 - p),
/// with logits clamped to +-15.
template <typename T>
Vector<T> schema_log_prob(const SelectionOutput<T>& sel, const SchemaBatch& b);

/// d log beta(b) / d logit, per switch and sample (b - sigmoid(l), zero where the clamp is active).
template <typename T>
Matrix<T> schema_log_prob_grad(const SelectionOutput<T>& sel, const SchemaBatch& b);

/// Per-switch schema bits of b (first governed dimension for coupled layouts).
SchemaBatch switch_bits(const SchemaBatch& b, std::size_t switch_count);

/// Every schema of switch_count bits broadcast to act_dim; schema k has bit s = (k >> s) & 1.
SchemaBatch enumerate_schema(std::size_t k, std::size_t act_dim, std::size_t switch_count, std::size_t batch);

/// (1 - b) * a_prev + b * xi.
template <typename T>
Matrix<T> premix(const SchemaBatch& b, const Matrix<T>& a_prev, T xi);

/// (1 - b) * a_prev + b * a_hat. Repeat dimensions are copied bitwise.
template <typename T>
Matrix<T> postmix(const SchemaBatch& b, const Matrix<T>& a_prev, const Matrix<T>& a_hat);

template <typename T>
struct GaussianSample {
    Matrix<T> mean;      // act x B
    Matrix<T> log_std;   // act x B, clamped
    Matrix<T> std;
    Matrix<T> noise;
    Matrix<T> a_hat;     // tanh(mean + std * noise)
    Vector<T> log_pi;    // per sample
    Matrix<T> raw;       // network output before clamping
    Matrix<T> entropy_mask;  // act x B, 1 where the dim contributes to log_pi
    ForwardCache<T> cache;
};

/// Squashed Gaussian with the tanh log-density correction:
///   log_pi = sum_i [ -n_i^2 / 2 - log std_i - log(2 pi) / 2 - log(1 - a_hat_i^2 + 1e-6) ]
/// If entropy_mask is given only dimensions with mask 1 contribute to log_pi.
template <typename T>
GaussianSample<T> gaussian_action(const PolicyNets<T>& nets, const Matrix<T>& obs, const Matrix<T>& a_mix,
                                  const Matrix<T>& noise, const SchemaBatch* entropy_mask = nullptr);

/// Gradient w.r.t. the pi network output for upstream d/d a_hat and d/d log_pi (per sample).
template <typename T>
Matrix<T> gaussian_backward(const GaussianSample<T>& sample, const Matrix<T>& d_a_hat, const Vector<T>& d_log_pi);

/// Standard normal matrix filled in column-major order.
template <typename T>
Matrix<T> normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng);

template <typename T>
struct ActOutput {
    Vector<T> action;
    Schema schema;
    T log_beta{};  // 0 when the schema was forced
    T log_pi{};
};

struct ActOptions {
    bool force_all_act = false;
    /// Mean action and thresholded schema (act iff probability > 0.5).
    bool deterministic = false;
    bool mask_pi_entropy = false;
    /// Overrides the selection stage with a fixed schema (N-Rep schedule).
    std::optional<Schema> fixed_schema;
};

/// Full two-stage decision for one state. Random draws: switch uniforms (if sampled),
/// then act_dim normals (always, unless deterministic).
template <typename T>
ActOutput<T> act(const PolicyNets<T>& nets, const Vector<T>& obs, const Vector<T>& a_prev, const ActOptions& opts,
                 Rng& rng);

}  // namespace sdar
