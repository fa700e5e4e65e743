#include "sdar/policy.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "sdar/errors.hpp"

namespace sdar {

namespace {

template <typename T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

// log(1 + exp(x)) without overflow.
template <typename T>
T softplus(T x) {
    return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
T clamp_logit(T l) {
    return std::clamp(l, static_cast<T>(-kLogitClamp), static_cast<T>(kLogitClamp));
}

std::size_t switch_of(std::size_t dim, std::size_t switch_count) { return switch_count == 1 ? 0 : dim; }

}  // namespace

MaskConstant::MaskConstant(double value) : value_(value) {
    if (!std::isfinite(value) || (value >= -1.0 && value <= 1.0))
        throw ConfigError("mask constant must be finite and outside [-1, 1]");
}

std::vector<std::size_t> PolicyLayout::beta_sizes() const {
    std::vector<std::size_t> sizes{obs_dim + act_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(switch_count());
    return sizes;
}

std::vector<std::size_t> PolicyLayout::pi_sizes() const {
    std::vector<std::size_t> sizes{obs_dim + act_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2 * act_dim);
    return sizes;
}

void PolicyLayout::validate() const {
    if (obs_dim == 0 || act_dim == 0) throw ConfigError("policy layout: obs_dim and act_dim must be >= 1");
    for (auto h : hidden)
        if (h == 0) throw ConfigError("policy layout: hidden width must be >= 1");
}

template <typename T>
PolicyNets<T> PolicyNets<T>::init(const PolicyLayout& layout, Rng& rng) {
    layout.validate();
    PolicyNets nets;
    nets.layout = layout;
    const auto bs = layout.beta_sizes();
    const auto ps = layout.pi_sizes();
    nets.beta = ParamSet<T>::init_uniform(bs, rng);
    nets.pi = ParamSet<T>::init_uniform(ps, rng);
    return nets;
}

template <typename T>
Matrix<T> concat_rows(const Matrix<T>& top, const Matrix<T>& bottom) {
    if (top.cols() != bottom.cols()) throw ConfigError("concat_rows: column count mismatch");
    Matrix<T> out(top.rows() + bottom.rows(), top.cols());
    out.topRows(top.rows()) = top;
    out.bottomRows(bottom.rows()) = bottom;
    return out;
}

template <typename T>
SelectionOutput<T> selection_probs(const PolicyNets<T>& nets, const Matrix<T>& obs, const Matrix<T>& a_prev,
                                   ForwardCache<T>* cache) {
    const auto& layout = nets.layout;
    if (obs.rows() != static_cast<Eigen::Index>(layout.obs_dim) ||
        a_prev.rows() != static_cast<Eigen::Index>(layout.act_dim))
        throw ConfigError("selection_probs: observation/action dimension mismatch");
    const Matrix<T> input = concat_rows(obs, a_prev);
    SelectionOutput<T> out;
    out.logits = cache ? mlp_forward(nets.beta, input, *cache) : mlp_forward(nets.beta, input);
    if (!out.logits.allFinite()) throw NumericalError("selection_probs: non-finite selection logits");
    const auto dims = static_cast<Eigen::Index>(layout.act_dim);
    const auto sw = layout.switch_count();
    out.probs.resize(dims, out.logits.cols());
    for (Eigen::Index j = 0; j < out.logits.cols(); ++j)
        for (Eigen::Index i = 0; i < dims; ++i)
            out.probs(i, j) = sigmoid(out.logits(static_cast<Eigen::Index>(switch_of(i, sw)), j));
    return out;
}

namespace {

template <typename T>
SchemaBatch draw_schema(const SelectionOutput<T>& sel, Rng& rng, bool clamped) {
    const Eigen::Index sw = sel.logits.rows();
    const Eigen::Index dims = sel.probs.rows();
    SchemaBatch b(dims, sel.logits.cols());
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(sw));
    for (Eigen::Index j = 0; j < sel.logits.cols(); ++j) {
        for (Eigen::Index s = 0; s < sw; ++s) {
            const T l = clamped ? clamp_logit(sel.logits(s, j)) : sel.logits(s, j);
            const double p = static_cast<double>(sigmoid(l));
            bits[static_cast<std::size_t>(s)] = rng.uniform() < p ? 1 : 0;
        }
        for (Eigen::Index i = 0; i < dims; ++i)
            b(i, j) = bits[switch_of(static_cast<std::size_t>(i), static_cast<std::size_t>(sw))];
    }
    return b;
}

}  // namespace

template <typename T>
SchemaBatch sample_schema(const SelectionOutput<T>& sel, Rng& rng) {
    return draw_schema(sel, rng, false);
}

template <typename T>
SchemaBatch sample_schema_clamped(const SelectionOutput<T>& sel, Rng& rng) {
    return draw_schema(sel, rng, true);
}

SchemaBatch switch_bits(const SchemaBatch& b, std::size_t switch_count) {
    if (switch_count == static_cast<std::size_t>(b.rows())) return b;
    if (switch_count != 1) throw ConfigError("switch_bits: unsupported switch layout");
    for (Eigen::Index j = 0; j < b.cols(); ++j)
        for (Eigen::Index i = 1; i < b.rows(); ++i)
            if (b(i, j) != b(0, j)) throw ConfigError("switch_bits: coupled schema must be all-act or all-repeat");
    return b.topRows(1);
}

SchemaBatch enumerate_schema(std::size_t k, std::size_t act_dim, std::size_t switch_count, std::size_t batch) {
    SchemaBatch b(static_cast<Eigen::Index>(act_dim), static_cast<Eigen::Index>(batch));
    for (std::size_t i = 0; i < act_dim; ++i) {
        const std::uint8_t bit = (k >> switch_of(i, switch_count)) & 1U;
        b.row(static_cast<Eigen::Index>(i)).setConstant(bit);
    }
    return b;
}

template <typename T>
Vector<T> schema_log_prob(const SelectionOutput<T>& sel, const SchemaBatch& b) {
    const SchemaBatch bits = switch_bits(b, static_cast<std::size_t>(sel.logits.rows()));
    if (bits.cols() != sel.logits.cols()) throw ConfigError("schema_log_prob: batch size mismatch");
    Vector<T> out(sel.logits.cols());
    for (Eigen::Index j = 0; j < sel.logits.cols(); ++j) {
        T acc = T(0);
        for (Eigen::Index s = 0; s < sel.logits.rows(); ++s) {
            const T l = clamp_logit(sel.logits(s, j));
            // log sigmoid(l) = -softplus(-l), log(1 - sigmoid(l)) = -softplus(l)
            acc += bits(s, j) ? -softplus(-l) : -softplus(l);
        }
        out(j) = acc;
    }
    return out;
}

template <typename T>
Matrix<T> schema_log_prob_grad(const SelectionOutput<T>& sel, const SchemaBatch& b) {
    const SchemaBatch bits = switch_bits(b, static_cast<std::size_t>(sel.logits.rows()));
    Matrix<T> g(sel.logits.rows(), sel.logits.cols());
    for (Eigen::Index j = 0; j < g.cols(); ++j)
        for (Eigen::Index s = 0; s < g.rows(); ++s) {
            const T l = sel.logits(s, j);
            if (std::abs(l) > static_cast<T>(kLogitClamp)) {
                g(s, j) = T(0);
            } else {
                g(s, j) = static_cast<T>(bits(s, j)) - sigmoid(l);
            }
        }
    return g;
}

template <typename T>
Matrix<T> premix(const SchemaBatch& b, const Matrix<T>& a_prev, T xi) {
    if (b.rows() != a_prev.rows() || b.cols() != a_prev.cols()) throw ConfigError("premix: shape mismatch");
    // Equal to (1 - b) * a_prev + b * xi for b in {0, 1}; select keeps repeat dims bitwise.
    return (b.array() != 0).select(Matrix<T>::Constant(a_prev.rows(), a_prev.cols(), xi), a_prev);
}

template <typename T>
Matrix<T> postmix(const SchemaBatch& b, const Matrix<T>& a_prev, const Matrix<T>& a_hat) {
    if (b.rows() != a_prev.rows() || b.cols() != a_prev.cols() || a_hat.rows() != a_prev.rows() ||
        a_hat.cols() != a_prev.cols())
        throw ConfigError("postmix: shape mismatch");
    return (b.array() != 0).select(a_hat, a_prev);
}

template <typename T>
GaussianSample<T> gaussian_action(const PolicyNets<T>& nets, const Matrix<T>& obs, const Matrix<T>& a_mix,
                                  const Matrix<T>& noise, const SchemaBatch* entropy_mask) {
    const auto n = static_cast<Eigen::Index>(nets.layout.act_dim);
    if (noise.rows() != n || noise.cols() != obs.cols() || a_mix.rows() != n)
        throw ConfigError("gaussian_action: noise/action shape mismatch");
    GaussianSample<T> out;
    out.raw = mlp_forward(nets.pi, concat_rows(obs, a_mix), out.cache);
    if (!out.raw.allFinite()) throw NumericalError("gaussian_action: non-finite action head output");
    out.mean = out.raw.topRows(n);
    out.log_std = out.raw.bottomRows(n).cwiseMax(static_cast<T>(kLogStdMin)).cwiseMin(static_cast<T>(kLogStdMax));
    out.std = out.log_std.array().exp();
    out.noise = noise;
    out.a_hat = (out.mean.array() + out.std.array() * noise.array()).tanh();
    if (entropy_mask) {
        out.entropy_mask = entropy_mask->template cast<T>();
    } else {
        out.entropy_mask = Matrix<T>::Ones(n, obs.cols());
    }

    const T half_log_2pi = static_cast<T>(0.5 * std::log(2.0 * std::numbers::pi));
    const T eps = static_cast<T>(kSquashEps);
    out.log_pi.resize(obs.cols());
    for (Eigen::Index j = 0; j < obs.cols(); ++j) {
        T acc = T(0);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (out.entropy_mask(i, j) == T(0)) continue;
            const T nz = noise(i, j);
            const T ah = out.a_hat(i, j);
            acc += -T(0.5) * nz * nz - out.log_std(i, j) - half_log_2pi - std::log(T(1) - ah * ah + eps);
        }
        out.log_pi(j) = acc;
    }
    return out;
}

template <typename T>
Matrix<T> gaussian_backward(const GaussianSample<T>& s, const Matrix<T>& d_a_hat, const Vector<T>& d_log_pi) {
    const Eigen::Index n = s.mean.rows();
    const Eigen::Index batch = s.mean.cols();
    const T eps = static_cast<T>(kSquashEps);
    Matrix<T> grad(2 * n, batch);
    for (Eigen::Index j = 0; j < batch; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const T ah = s.a_hat(i, j);
            const T dtanh = T(1) - ah * ah;  // d a_hat / d u
            // d log_pi / d u from the squash correction term.
            const T dcorr_du = s.entropy_mask(i, j) * (T(2) * ah * dtanh / (dtanh + eps));
            const T du = d_a_hat(i, j) * dtanh + d_log_pi(j) * dcorr_du;
            // u = mean + exp(log_std) * noise; log_pi also has a direct -log_std term.
            grad(i, j) = du;
            T dlog_std = du * s.std(i, j) * s.noise(i, j) - d_log_pi(j) * s.entropy_mask(i, j);
            const T raw = s.raw(n + i, j);
            if (raw < static_cast<T>(kLogStdMin) || raw > static_cast<T>(kLogStdMax)) dlog_std = T(0);
            grad(n + i, j) = dlog_std;
        }
    }
    return grad;
}

template <typename T>
Matrix<T> normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix<T> m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<T>(rng.normal());
    return m;
}

template <typename T>
ActOutput<T> act(const PolicyNets<T>& nets, const Vector<T>& obs, const Vector<T>& a_prev, const ActOptions& opts,
                 Rng& rng) {
    const auto n = static_cast<Eigen::Index>(nets.layout.act_dim);
    if (a_prev.size() != n || obs.size() != static_cast<Eigen::Index>(nets.layout.obs_dim))
        throw ConfigError("act: observation/action dimension mismatch");
    const Matrix<T> s = obs;
    const Matrix<T> ap = a_prev;

    ActOutput<T> out;
    SchemaBatch b;
    if (opts.force_all_act) {
        b = SchemaBatch::Ones(n, 1);
        out.log_beta = T(0);
    } else if (opts.fixed_schema) {
        if (opts.fixed_schema->size() != n) throw ConfigError("act: fixed schema length mismatch");
        b = *opts.fixed_schema;
        out.log_beta = T(0);
    } else {
        const auto sel = selection_probs(nets, s, ap);
        if (opts.deterministic) {
            b.resize(n, 1);
            for (Eigen::Index i = 0; i < n; ++i) b(i, 0) = sel.probs(i, 0) > T(0.5) ? 1 : 0;
        } else {
            b = sample_schema(sel, rng);
        }
        out.log_beta = schema_log_prob(sel, b)(0);
    }

    const Matrix<T> mix = premix(b, ap, static_cast<T>(nets.layout.xi.value()));
    const Matrix<T> noise = opts.deterministic ? Matrix<T>::Zero(n, 1) : normal_matrix<T>(n, 1, rng);
    const auto g = gaussian_action(nets, s, mix, noise, opts.mask_pi_entropy ? &b : nullptr);
    out.action = postmix(b, ap, g.a_hat).col(0);
    out.schema = b.col(0);
    out.log_pi = g.log_pi(0);
    return out;
}

#define SDAR_INSTANTIATE(T)                                                                                     \
    template struct PolicyNets<T>;                                                                             \
    template Matrix<T> concat_rows(const Matrix<T>&, const Matrix<T>&);                                        \
    template SelectionOutput<T> selection_probs(const PolicyNets<T>&, const Matrix<T>&, const Matrix<T>&,      \
                                                ForwardCache<T>*);                                             \
    template SchemaBatch sample_schema(const SelectionOutput<T>&, Rng&);                                       \
    template SchemaBatch sample_schema_clamped(const SelectionOutput<T>&, Rng&);                               \
    template Vector<T> schema_log_prob(const SelectionOutput<T>&, const SchemaBatch&);                         \
    template Matrix<T> schema_log_prob_grad(const SelectionOutput<T>&, const SchemaBatch&);                    \
    template Matrix<T> premix(const SchemaBatch&, const Matrix<T>&, T);                                        \
    template Matrix<T> postmix(const SchemaBatch&, const Matrix<T>&, const Matrix<T>&);                        \
    template GaussianSample<T> gaussian_action(const PolicyNets<T>&, const Matrix<T>&, const Matrix<T>&,       \
                                               const Matrix<T>&, const SchemaBatch*);                          \
    template Matrix<T> gaussian_backward(const GaussianSample<T>&, const Matrix<T>&, const Vector<T>&);        \
    template Matrix<T> normal_matrix<T>(Eigen::Index, Eigen::Index, Rng&);                                     \
    template ActOutput<T> act(const PolicyNets<T>&, const Vector<T>&, const Vector<T>&, const ActOptions&, Rng&);

SDAR_INSTANTIATE(float)
SDAR_INSTANTIATE(double)

#undef SDAR_INSTANTIATE

}  // namespace sdar
