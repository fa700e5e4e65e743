#include "sdar/replay.hpp"

#include <algorithm>

#include "sdar/errors.hpp"

namespace sdar {

ReplayBuffer::ReplayBuffer(std::size_t obs_dim, std::size_t act_dim, std::size_t capacity)
    : obs_dim_(obs_dim), act_dim_(act_dim), capacity_(capacity) {
    if (capacity == 0) throw ConfigError("ReplayBuffer: capacity must be >= 1");
    if (obs_dim == 0 || act_dim == 0) throw ConfigError("ReplayBuffer: dims must be >= 1");
}

void ReplayBuffer::push(const Transition& t) {
    if (t.obs.size() != obs_dim_ || t.next_obs.size() != obs_dim_ || t.a_prev.size() != act_dim_ ||
        t.action.size() != act_dim_)
        throw ConfigError("ReplayBuffer::push: transition dimension mismatch");

    auto write = [](std::vector<double>& dst, const std::vector<double>& src, std::size_t s) {
        const std::size_t w = src.size();
        if (dst.size() < (s + 1) * w) dst.resize((s + 1) * w);
        std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(s * w));
    };
    const std::size_t s = size_ < capacity_ ? size_ : head_;
    write(obs_, t.obs, s);
    write(a_prev_, t.a_prev, s);
    write(action_, t.action, s);
    write(next_obs_, t.next_obs, s);
    if (reward_.size() <= s) {
        reward_.resize(s + 1);
        terminal_.resize(s + 1);
        truncated_.resize(s + 1);
        start_next_.resize(s + 1);
    }
    reward_[s] = t.reward;
    terminal_[s] = t.terminal;
    truncated_[s] = t.truncated;
    start_next_[s] = t.episode_start_next;

    if (size_ < capacity_) {
        ++size_;
        if (size_ == capacity_) head_ = 0;
    } else {
        head_ = (head_ + 1) % capacity_;
    }
}

std::size_t ReplayBuffer::slot(std::size_t i) const {
    if (i >= size_) throw PreconditionError("ReplayBuffer::at: index out of range");
    return size_ < capacity_ ? i : (head_ + i) % capacity_;
}

Transition ReplayBuffer::read_slot(std::size_t s) const {
    auto read = [](const std::vector<double>& src, std::size_t s, std::size_t w) {
        const auto first = src.begin() + static_cast<std::ptrdiff_t>(s * w);
        return std::vector<double>(first, first + static_cast<std::ptrdiff_t>(w));
    };
    Transition t;
    t.obs = read(obs_, s, obs_dim_);
    t.a_prev = read(a_prev_, s, act_dim_);
    t.action = read(action_, s, act_dim_);
    t.reward = reward_[s];
    t.next_obs = read(next_obs_, s, obs_dim_);
    t.terminal = terminal_[s] != 0;
    t.truncated = truncated_[s] != 0;
    t.episode_start_next = start_next_[s] != 0;
    return t;
}

Transition ReplayBuffer::at(std::size_t i) const { return read_slot(slot(i)); }

void ReplayBuffer::restore(std::vector<Transition> ordered) {
    if (ordered.size() > capacity_) throw ConfigError("ReplayBuffer::restore: more transitions than capacity");
    size_ = 0;
    head_ = 0;
    obs_.clear();
    a_prev_.clear();
    action_.clear();
    reward_.clear();
    next_obs_.clear();
    terminal_.clear();
    truncated_.clear();
    start_next_.clear();
    for (const auto& t : ordered) push(t);
}

template <typename T>
Batch<T> ReplayBuffer::sample(std::size_t batch_size, Rng& rng) const {
    if (size_ == 0) throw PreconditionError("ReplayBuffer::sample: buffer is empty");
    if (batch_size == 0) throw PreconditionError("ReplayBuffer::sample: batch size must be >= 1");
    const auto B = static_cast<Eigen::Index>(batch_size);
    const auto od = static_cast<Eigen::Index>(obs_dim_);
    const auto ad = static_cast<Eigen::Index>(act_dim_);
    Batch<T> b;
    b.obs.resize(od, B);
    b.a_prev.resize(ad, B);
    b.action.resize(ad, B);
    b.next_obs.resize(od, B);
    b.reward.resize(B);
    b.terminal.resize(batch_size);
    b.truncated.resize(batch_size);
    b.episode_start_next.resize(batch_size);
    for (Eigen::Index j = 0; j < B; ++j) {
        const std::size_t s = slot(rng.index(size_));
        for (Eigen::Index i = 0; i < od; ++i) {
            b.obs(i, j) = static_cast<T>(obs_[s * obs_dim_ + static_cast<std::size_t>(i)]);
            b.next_obs(i, j) = static_cast<T>(next_obs_[s * obs_dim_ + static_cast<std::size_t>(i)]);
        }
        for (Eigen::Index i = 0; i < ad; ++i) {
            b.a_prev(i, j) = static_cast<T>(a_prev_[s * act_dim_ + static_cast<std::size_t>(i)]);
            b.action(i, j) = static_cast<T>(action_[s * act_dim_ + static_cast<std::size_t>(i)]);
        }
        b.reward(j) = static_cast<T>(reward_[s]);
        const auto uj = static_cast<std::size_t>(j);
        b.terminal[uj] = terminal_[s];
        b.truncated[uj] = truncated_[s];
        b.episode_start_next[uj] = start_next_[s];
    }
    return b;
}

template <typename T>
Batch<T> make_batch(const std::vector<Transition>& rows) {
    if (rows.empty()) throw PreconditionError("make_batch: no transitions");
    Batch<T> b;
    const auto B = static_cast<Eigen::Index>(rows.size());
    const auto od = static_cast<Eigen::Index>(rows.front().obs.size());
    const auto ad = static_cast<Eigen::Index>(rows.front().action.size());
    b.obs.resize(od, B);
    b.a_prev.resize(ad, B);
    b.action.resize(ad, B);
    b.next_obs.resize(od, B);
    b.reward.resize(B);
    for (Eigen::Index j = 0; j < B; ++j) {
        const auto& t = rows[static_cast<std::size_t>(j)];
        if (static_cast<Eigen::Index>(t.obs.size()) != od || static_cast<Eigen::Index>(t.next_obs.size()) != od ||
            static_cast<Eigen::Index>(t.action.size()) != ad || static_cast<Eigen::Index>(t.a_prev.size()) != ad)
            throw ConfigError("make_batch: transition dimension mismatch");
        for (Eigen::Index i = 0; i < od; ++i) {
            b.obs(i, j) = static_cast<T>(t.obs[static_cast<std::size_t>(i)]);
            b.next_obs(i, j) = static_cast<T>(t.next_obs[static_cast<std::size_t>(i)]);
        }
        for (Eigen::Index i = 0; i < ad; ++i) {
            b.a_prev(i, j) = static_cast<T>(t.a_prev[static_cast<std::size_t>(i)]);
            b.action(i, j) = static_cast<T>(t.action[static_cast<std::size_t>(i)]);
        }
        b.reward(j) = static_cast<T>(t.reward);
        b.terminal.push_back(t.terminal);
        b.truncated.push_back(t.truncated);
        b.episode_start_next.push_back(t.episode_start_next);
    }
    return b;
}

template Batch<float> ReplayBuffer::sample<float>(std::size_t, Rng&) const;
template Batch<double> ReplayBuffer::sample<double>(std::size_t, Rng&) const;
template Batch<float> make_batch<float>(const std::vector<Transition>&);
template Batch<double> make_batch<double>(const std::vector<Transition>&);

}  // namespace sdar
