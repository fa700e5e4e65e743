#pragma once

#include <cstdint>
#include <vector>

#include "sdar/approximator.hpp"
#include "sdar/rng.hpp"

namespace sdar {

/// One environment step with the previous action attached.
struct Transition {
    std::vector<double> obs;
    std::vector<double> a_prev;
    std::vector<double> action;
    double reward = 0.0;
    std::vector<double> next_obs;
    bool terminal = false;
    bool truncated = false;
    /// next_obs starts a fresh episode, so the target action there is forced all-act.
    bool episode_start_next = false;

    bool operator==(const Transition&) const = default;
};

/// Column-wise batch, one column per sampled transition.
template <typename T>
struct Batch {
    Matrix<T> obs;
    Matrix<T> a_prev;
    Matrix<T> action;
    Vector<T> reward;
    Matrix<T> next_obs;
    std::vector<std::uint8_t> terminal;
    std::vector<std::uint8_t> truncated;
    std::vector<std::uint8_t> episode_start_next;

    Eigen::Index size() const { return obs.cols(); }
};

template <typename T>
Batch<T> make_batch(const std::vector<Transition>& rows);

/// Fixed-capacity FIFO buffer. Storage is flat per field and grows lazily up to capacity.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t obs_dim, std::size_t act_dim, std::size_t capacity);

    void push(const Transition& t);
    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    std::size_t obs_dim() const { return obs_dim_; }
    std::size_t act_dim() const { return act_dim_; }
    bool empty() const { return size_ == 0; }

    /// i-th oldest stored transition.
    Transition at(std::size_t i) const;

    /// Uniform with replacement; draws batch_size indices from rng in order.
    template <typename T>
    Batch<T> sample(std::size_t batch_size, Rng& rng) const;

    /// Raw slot access for checkpointing.
    std::size_t head() const { return head_; }
    void restore(std::vector<Transition> ordered);

private:
    std::size_t slot(std::size_t i) const;
    Transition read_slot(std::size_t s) const;

    std::size_t obs_dim_;
    std::size_t act_dim_;
    std::size_t capacity_;
    std::size_t size_ = 0;
    std::size_t head_ = 0;  // next write slot once full

    std::vector<double> obs_, a_prev_, action_, reward_, next_obs_;
    std::vector<std::uint8_t> terminal_, truncated_, start_next_;
};

}  // namespace sdar
