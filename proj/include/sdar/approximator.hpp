#pragma once

// Minimal differentiable MLP substrate: ReLU hidden layers, linear output,
// hand-written backprop, Adam and Polyak target updates. Every learnable
// object in the agent (selection net, action net, twin critics) is a ParamSet.
//
// Batches are column-major: a matrix with one column per sample.

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sdar/rng.hpp"

namespace sdar {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct ParamSet {
    std::vector<Matrix<T>> weights;  // layer k: out_k x in_k
    std::vector<Vector<T>> biases;   // layer k: out_k

    /// [in_0, out_0, out_1, ..., out_last]
    std::vector<std::size_t> layer_sizes() const;
    std::size_t num_layers() const { return weights.size(); }
    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t num_params() const;

    /// Throws ConfigError on broken chaining, NumericalError on non-finite entries.
    void validate() const;
    bool all_finite() const;
    bool same_shape(const ParamSet& other) const;

    /// Concatenation of (W_0 column-major, b_0, W_1, b_1, ...).
    std::vector<T> flatten() const;
    void assign_flat(std::span<const T> flat);
    /// Mutable access to flat entry i in flatten() order.
    T& entry(std::size_t i);
    T entry(std::size_t i) const;

    ParamSet zeros_like() const;
    ParamSet& operator+=(const ParamSet& other);
    ParamSet& operator*=(T scale);
    bool operator==(const ParamSet& other) const;

    static ParamSet zeros(std::span<const std::size_t> sizes);
    /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero.
    static ParamSet init_uniform(std::span<const std::size_t> sizes, Rng& rng);
};

/// Gradients share the parameter layout.
template <typename T>
using GradSet = ParamSet<T>;

/// Layer inputs recorded by a forward pass; inputs[k] feeds layer k.
template <typename T>
struct ForwardCache {
    std::vector<Matrix<T>> inputs;
};

template <typename T>
Matrix<T> mlp_forward(const ParamSet<T>& params, const Matrix<T>& input);
template <typename T>
Matrix<T> mlp_forward(const ParamSet<T>& params, const Matrix<T>& input, ForwardCache<T>& cache);
template <typename T>
Vector<T> mlp_forward(const ParamSet<T>& params, const Vector<T>& input);

template <typename T>
struct BackpropResult {
    GradSet<T> grads;        // summed over the batch; empty when not requested
    Matrix<T> input_grad;    // one column per sample
};

/// Gradients of sum_j <upstream_j, output_j> with respect to params and inputs.
template <typename T>
BackpropResult<T> backprop(const ParamSet<T>& params, const ForwardCache<T>& cache,
                           const Matrix<T>& upstream, bool want_param_grads = true);
template <typename T>
BackpropResult<T> backprop(const ParamSet<T>& params, const Vector<T>& input,
                           const Vector<T>& upstream);

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    ParamSet<T> m;
    ParamSet<T> v;
    std::int64_t step = 0;
    AdamHyper hyper;

    static AdamState for_params(const ParamSet<T>& params, AdamHyper hyper = {});
};

/// Bias-corrected Adam. Non-finite grads throw NumericalError and leave
/// params and state untouched.
template <typename T>
void adam_step(AdamState<T>& state, ParamSet<T>& params, const GradSet<T>& grads, double lr);

/// Adam on a single scalar (used for the log-temperatures).
struct ScalarAdam {
    double m = 0.0;
    double v = 0.0;
    std::int64_t step = 0;
    AdamHyper hyper;

    void apply(double& param, double grad, double lr);
};

/// target <- (1 - tau) * target + tau * online, entrywise.
template <typename T>
void soft_update(ParamSet<T>& target, const ParamSet<T>& online, double tau);

}  // namespace sdar
