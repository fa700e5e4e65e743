#include "sdar/approximator.hpp"

#include <cmath>
#include <string>

#include "sdar/errors.hpp"

namespace sdar {

template <typename T>
std::vector<std::size_t> ParamSet<T>::layer_sizes() const {
    std::vector<std::size_t> sizes;
    if (weights.empty()) return sizes;
    sizes.push_back(static_cast<std::size_t>(weights.front().cols()));
    for (const auto& w : weights) sizes.push_back(static_cast<std::size_t>(w.rows()));
    return sizes;
}

template <typename T>
std::size_t ParamSet<T>::input_dim() const {
    return weights.empty() ? 0 : static_cast<std::size_t>(weights.front().cols());
}

template <typename T>
std::size_t ParamSet<T>::output_dim() const {
    return weights.empty() ? 0 : static_cast<std::size_t>(weights.back().rows());
}

template <typename T>
std::size_t ParamSet<T>::num_params() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < weights.size(); ++k)
        n += static_cast<std::size_t>(weights[k].size() + biases[k].size());
    return n;
}

template <typename T>
void ParamSet<T>::validate() const {
    if (weights.empty() || weights.size() != biases.size())
        throw ConfigError("ParamSet: weights/biases layer count mismatch");
    for (std::size_t k = 0; k < weights.size(); ++k) {
        if (weights[k].rows() != biases[k].size())
            throw ConfigError("ParamSet: layer " + std::to_string(k) + " bias length mismatch");
        if (k + 1 < weights.size() && weights[k].rows() != weights[k + 1].cols())
            throw ConfigError("ParamSet: layer " + std::to_string(k) + " output does not chain into layer " +
                              std::to_string(k + 1));
    }
    if (!all_finite()) throw NumericalError("ParamSet: non-finite entry");
}

template <typename T>
bool ParamSet<T>::all_finite() const {
    for (std::size_t k = 0; k < weights.size(); ++k)
        if (!weights[k].allFinite() || !biases[k].allFinite()) return false;
    return true;
}

template <typename T>
bool ParamSet<T>::same_shape(const ParamSet& other) const {
    if (weights.size() != other.weights.size() || biases.size() != other.biases.size()) return false;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        if (weights[k].rows() != other.weights[k].rows() || weights[k].cols() != other.weights[k].cols())
            return false;
        if (biases[k].size() != other.biases[k].size()) return false;
    }
    return true;
}

template <typename T>
std::vector<T> ParamSet<T>::flatten() const {
    std::vector<T> flat;
    flat.reserve(num_params());
    for (std::size_t k = 0; k < weights.size(); ++k) {
        flat.insert(flat.end(), weights[k].data(), weights[k].data() + weights[k].size());
        flat.insert(flat.end(), biases[k].data(), biases[k].data() + biases[k].size());
    }
    return flat;
}

template <typename T>
void ParamSet<T>::assign_flat(std::span<const T> flat) {
    if (flat.size() != num_params()) throw ConfigError("ParamSet::assign_flat: size mismatch");
    std::size_t at = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        std::copy_n(flat.data() + at, weights[k].size(), weights[k].data());
        at += static_cast<std::size_t>(weights[k].size());
        std::copy_n(flat.data() + at, biases[k].size(), biases[k].data());
        at += static_cast<std::size_t>(biases[k].size());
    }
}

template <typename T>
T& ParamSet<T>::entry(std::size_t i) {
    for (std::size_t k = 0; k < weights.size(); ++k) {
        const auto nw = static_cast<std::size_t>(weights[k].size());
        if (i < nw) return weights[k].data()[i];
        i -= nw;
        const auto nb = static_cast<std::size_t>(biases[k].size());
        if (i < nb) return biases[k].data()[i];
        i -= nb;
    }
    throw ConfigError("ParamSet::entry: index out of range");
}

template <typename T>
T ParamSet<T>::entry(std::size_t i) const {
    return const_cast<ParamSet*>(this)->entry(i);
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros_like() const {
    ParamSet out;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        out.weights.push_back(Matrix<T>::Zero(weights[k].rows(), weights[k].cols()));
        out.biases.push_back(Vector<T>::Zero(biases[k].size()));
    }
    return out;
}

template <typename T>
ParamSet<T>& ParamSet<T>::operator+=(const ParamSet& other) {
    if (!same_shape(other)) throw ConfigError("ParamSet::operator+=: shape mismatch");
    for (std::size_t k = 0; k < weights.size(); ++k) {
        weights[k] += other.weights[k];
        biases[k] += other.biases[k];
    }
    return *this;
}

template <typename T>
ParamSet<T>& ParamSet<T>::operator*=(T scale) {
    for (std::size_t k = 0; k < weights.size(); ++k) {
        weights[k] *= scale;
        biases[k] *= scale;
    }
    return *this;
}

template <typename T>
bool ParamSet<T>::operator==(const ParamSet& other) const {
    if (!same_shape(other)) return false;
    for (std::size_t k = 0; k < weights.size(); ++k)
        if (weights[k] != other.weights[k] || biases[k] != other.biases[k]) return false;
    return true;
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros(std::span<const std::size_t> sizes) {
    if (sizes.size() < 2) throw ConfigError("ParamSet::zeros: need at least input and output size");
    ParamSet out;
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
        if (sizes[k] == 0 || sizes[k + 1] == 0) throw ConfigError("ParamSet::zeros: zero layer size");
        out.weights.push_back(Matrix<T>::Zero(static_cast<Eigen::Index>(sizes[k + 1]),
                                              static_cast<Eigen::Index>(sizes[k])));
        out.biases.push_back(Vector<T>::Zero(static_cast<Eigen::Index>(sizes[k + 1])));
    }
    return out;
}

template <typename T>
ParamSet<T> ParamSet<T>::init_uniform(std::span<const std::size_t> sizes, Rng& rng) {
    ParamSet out = zeros(sizes);
    for (auto& w : out.weights) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
    return out;
}

namespace {

template <typename T>
void check_input(const ParamSet<T>& params, Eigen::Index rows) {
    if (params.weights.empty()) throw ConfigError("mlp_forward: empty network");
    if (rows != params.weights.front().cols())
        throw ConfigError("mlp_forward: input dim " + std::to_string(rows) + " != network input dim " +
                          std::to_string(params.weights.front().cols()));
}

}  // namespace

template <typename T>
Matrix<T> mlp_forward(const ParamSet<T>& params, const Matrix<T>& input, ForwardCache<T>& cache) {
    check_input(params, input.rows());
    const std::size_t layers = params.num_layers();
    cache.inputs.resize(layers);
    cache.inputs[0] = input;
    Matrix<T> z;
    for (std::size_t k = 0; k < layers; ++k) {
        z.noalias() = params.weights[k] * cache.inputs[k];
        z.colwise() += params.biases[k];
        if (k + 1 < layers) cache.inputs[k + 1] = z.cwiseMax(T(0));
    }
    return z;
}

template <typename T>
Matrix<T> mlp_forward(const ParamSet<T>& params, const Matrix<T>& input) {
    check_input(params, input.rows());
    Matrix<T> x = input;
    Matrix<T> z;
    for (std::size_t k = 0; k < params.num_layers(); ++k) {
        z.noalias() = params.weights[k] * x;
        z.colwise() += params.biases[k];
        if (k + 1 < params.num_layers()) x = z.cwiseMax(T(0));
    }
    return z;
}

template <typename T>
Vector<T> mlp_forward(const ParamSet<T>& params, const Vector<T>& input) {
    const Matrix<T> out = mlp_forward(params, Matrix<T>(input));
    return out.col(0);
}

template <typename T>
BackpropResult<T> backprop(const ParamSet<T>& params, const ForwardCache<T>& cache,
                           const Matrix<T>& upstream, bool want_param_grads) {
    const std::size_t layers = params.num_layers();
    if (cache.inputs.size() != layers) throw ConfigError("backprop: cache does not match network");
    if (upstream.rows() != static_cast<Eigen::Index>(params.output_dim()) ||
        upstream.cols() != cache.inputs[0].cols())
        throw ConfigError("backprop: upstream gradient shape mismatch");

    BackpropResult<T> result;
    if (want_param_grads) result.grads = params.zeros_like();
    Matrix<T> delta = upstream;  // gradient w.r.t. the pre-activation of layer k
    for (std::size_t k = layers; k-- > 0;) {
        if (!delta.allFinite())
            throw NumericalError("backprop: non-finite gradient at layer " + std::to_string(k));
        if (want_param_grads) {
            result.grads.weights[k].noalias() = delta * cache.inputs[k].transpose();
            result.grads.biases[k] = delta.rowwise().sum();
        }
        Matrix<T> dx;
        dx.noalias() = params.weights[k].transpose() * delta;
        if (k > 0) {
            // inputs[k] is the ReLU output of layer k-1: positive exactly where the unit was active.
            delta = (cache.inputs[k].array() > T(0)).select(dx, T(0));
        } else {
            result.input_grad = std::move(dx);
        }
    }
    if (!result.input_grad.allFinite()) throw NumericalError("backprop: non-finite input gradient at layer 0");
    return result;
}

template <typename T>
BackpropResult<T> backprop(const ParamSet<T>& params, const Vector<T>& input, const Vector<T>& upstream) {
    ForwardCache<T> cache;
    mlp_forward(params, Matrix<T>(input), cache);
    return backprop(params, cache, Matrix<T>(upstream), true);
}

template <typename T>
AdamState<T> AdamState<T>::for_params(const ParamSet<T>& params, AdamHyper hyper) {
    AdamState s;
    s.m = params.zeros_like();
    s.v = params.zeros_like();
    s.hyper = hyper;
    return s;
}

template <typename T>
void adam_step(AdamState<T>& state, ParamSet<T>& params, const GradSet<T>& grads, double lr) {
    if (!params.same_shape(grads) || !params.same_shape(state.m) || !params.same_shape(state.v))
        throw ConfigError("adam_step: shape mismatch");
    if (!grads.all_finite()) throw NumericalError("adam_step: non-finite gradient, update rejected");

    const std::int64_t t = state.step + 1;
    const T b1 = static_cast<T>(state.hyper.beta1);
    const T b2 = static_cast<T>(state.hyper.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(state.hyper.beta1, static_cast<double>(t)));
    const T c2 = static_cast<T>(1.0 - std::pow(state.hyper.beta2, static_cast<double>(t)));
    const T step_lr = static_cast<T>(lr);
    const T eps = static_cast<T>(state.hyper.eps);

    auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
        m.array() = b1 * m.array() + (T(1) - b1) * g.array();
        v.array() = b2 * v.array() + (T(1) - b2) * g.array().square();
        p.array() -= step_lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    for (std::size_t k = 0; k < params.num_layers(); ++k) {
        update(params.weights[k], state.m.weights[k], state.v.weights[k], grads.weights[k]);
        update(params.biases[k], state.m.biases[k], state.v.biases[k], grads.biases[k]);
    }
    state.step = t;
}

void ScalarAdam::apply(double& param, double grad, double lr) {
    if (!std::isfinite(grad)) throw NumericalError("ScalarAdam: non-finite gradient, update rejected");
    const std::int64_t t = step + 1;
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * grad;
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * grad * grad;
    const double m_hat = m / (1.0 - std::pow(hyper.beta1, static_cast<double>(t)));
    const double v_hat = v / (1.0 - std::pow(hyper.beta2, static_cast<double>(t)));
    param -= lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    step = t;
}

template <typename T>
void soft_update(ParamSet<T>& target, const ParamSet<T>& online, double tau) {
    if (!target.same_shape(online)) throw ConfigError("soft_update: shape mismatch");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("soft_update: tau must lie in [0, 1]");
    const T a = static_cast<T>(1.0 - tau);
    const T b = static_cast<T>(tau);
    for (std::size_t k = 0; k < target.num_layers(); ++k) {
        target.weights[k] = a * target.weights[k] + b * online.weights[k];
        target.biases[k] = a * target.biases[k] + b * online.biases[k];
    }
}

#define SDAR_INSTANTIATE(T)                                                                              \
    template struct ParamSet<T>;                                                                        \
    template struct AdamState<T>;                                                                       \
    template Matrix<T> mlp_forward(const ParamSet<T>&, const Matrix<T>&);                               \
    template Matrix<T> mlp_forward(const ParamSet<T>&, const Matrix<T>&, ForwardCache<T>&);             \
    template Vector<T> mlp_forward(const ParamSet<T>&, const Vector<T>&);                               \
    template BackpropResult<T> backprop(const ParamSet<T>&, const ForwardCache<T>&, const Matrix<T>&,   \
                                        bool);                                                          \
    template BackpropResult<T> backprop(const ParamSet<T>&, const Vector<T>&, const Vector<T>&);        \
    template void adam_step(AdamState<T>&, ParamSet<T>&, const GradSet<T>&, double);                    \
    template void soft_update(ParamSet<T>&, const ParamSet<T>&, double);

SDAR_INSTANTIATE(float)
SDAR_INSTANTIATE(double)

#undef SDAR_INSTANTIATE

}  // namespace sdar
