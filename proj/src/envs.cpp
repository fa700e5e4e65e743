#include "sdar/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sdar/errors.hpp"
#include "sdar/rng.hpp"

namespace sdar {

void EnvSpec::validate() const {
    if (obs_dim < 1 || act_dim < 1) throw ConfigError("EnvSpec: obs_dim and act_dim must be >= 1");
    if (max_episode_steps < 1) throw ConfigError("EnvSpec: max_episode_steps must be >= 1");
}

void Env::restore(const EnvSnapshot&) { throw ConfigError(spec().name + ": environment state cannot be restored"); }

BuiltinEnv::BuiltinEnv(EnvSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

std::vector<double> BuiltinEnv::reset(std::uint64_t seed) {
    state_ = initial_state(seed);
    steps_ = 0;
    done_ = false;
    started_ = true;
    return observe(state_, steps_);
}

StepResult BuiltinEnv::step(std::span<const double> action) {
    if (!started_) throw ProtocolError(spec_.name + ": step before reset");
    if (done_) throw ProtocolError(spec_.name + ": step after episode end without reset");
    if (action.size() != spec_.act_dim) throw ProtocolError(spec_.name + ": action dimension mismatch");
    std::vector<double> a(action.begin(), action.end());
    for (auto& x : a) {
        if (std::isnan(x)) throw ProtocolError(spec_.name + ": NaN action");
        if (x < -1.0 || x > 1.0) {
            x = std::clamp(x, -1.0, 1.0);
            ++clamp_count_;
        }
    }
    Tick tick = dynamics(state_, a, steps_);
    state_ = std::move(tick.state);
    ++steps_;
    StepResult r;
    r.obs = observe(state_, steps_);
    r.reward = tick.reward;
    r.terminated = tick.terminated;
    r.truncated = steps_ >= spec_.max_episode_steps;
    done_ = r.terminated || r.truncated;
    return r;
}

std::optional<EnvSnapshot> BuiltinEnv::snapshot() const { return EnvSnapshot{state_, steps_, done_}; }

void BuiltinEnv::restore(const EnvSnapshot& snap) {
    state_ = snap.state;
    steps_ = snap.steps;
    done_ = snap.done;
    started_ = true;
}

void BuiltinEnv::set_state(std::vector<double> state, std::int64_t steps) {
    state_ = std::move(state);
    steps_ = steps;
    done_ = false;
    started_ = true;
}

// ---- mountain car ----

MountainCar::MountainCar() : BuiltinEnv(EnvSpec{"mountain_car", 2, 1, 999, -0.1, 100.0}) {}

std::vector<double> MountainCar::initial_state(std::uint64_t seed) const {
    Rng rng(seed);
    return {rng.uniform(-0.6, -0.4), 0.0};
}

BuiltinEnv::Tick MountainCar::dynamics(const std::vector<double>& s, std::span<const double> a,
                                       std::int64_t) const {
    const double force = std::clamp(a[0], -1.0, 1.0);
    double position = s[0];
    double velocity = s[1];
    velocity += force * kPower - kGravity * std::cos(3.0 * position);
    velocity = std::clamp(velocity, -kMaxSpeed, kMaxSpeed);
    position += velocity;
    position = std::clamp(position, kMinPosition, kMaxPosition);
    if (position == kMinPosition && velocity < 0.0) velocity = 0.0;
    const bool success = position >= kGoalPosition && velocity >= kGoalVelocity;
    Tick t;
    t.state = {position, velocity};
    t.terminated = success;
    t.reward = (success ? 100.0 : 0.0) - 0.1 * a[0] * a[0];
    return t;
}

std::vector<double> MountainCar::observe(const std::vector<double>& s, std::int64_t) const { return s; }

// ---- pendulum ----

namespace {

double angle_normalize(double x) {
    constexpr double pi = std::numbers::pi;
    double r = std::fmod(x + pi, 2.0 * pi);
    if (r < 0.0) r += 2.0 * pi;
    return r - pi;
}

}  // namespace

Pendulum::Pendulum() : BuiltinEnv(EnvSpec{"pendulum", 3, 1, 200, -16.2736044, 0.0}) {}

std::vector<double> Pendulum::initial_state(std::uint64_t seed) const {
    Rng rng(seed);
    const double th = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double thdot = rng.uniform(-1.0, 1.0);
    return {th, thdot};
}

BuiltinEnv::Tick Pendulum::dynamics(const std::vector<double>& s, std::span<const double> a, std::int64_t) const {
    const double th = s[0];
    const double thdot = s[1];
    const double u = std::clamp(kMaxTorque * a[0], -kMaxTorque, kMaxTorque);
    const double norm_th = angle_normalize(th);
    const double cost = norm_th * norm_th + 0.1 * thdot * thdot + 0.001 * u * u;
    double newthdot =
        thdot + (3.0 * kG / (2.0 * kLength) * std::sin(th) + 3.0 / (kMass * kLength * kLength) * u) * kDt;
    newthdot = std::clamp(newthdot, -kMaxSpeed, kMaxSpeed);
    const double newth = th + newthdot * kDt;
    Tick t;
    t.state = {newth, newthdot};
    t.reward = -cost;
    return t;
}

std::vector<double> Pendulum::observe(const std::vector<double>& s, std::int64_t) const {
    return {std::cos(s[0]), std::sin(s[0]), s[1]};
}

// ---- multi-rate point mass ----
// state layout: p(0..1) v(2..3) goal(4..5) trim_applied(6..7) last_cmd(8..9)

MultiRatePointMass::MultiRatePointMass() : BuiltinEnv(EnvSpec{"point_mass", 9, 4, 300, -10.0, 0.0}) {}

std::vector<double> MultiRatePointMass::initial_state(std::uint64_t seed) const {
    Rng rng(seed);
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return {0.0, 0.0, 0.0, 0.0, std::cos(theta), std::sin(theta), 0.0, 0.0, 0.0, 0.0};
}

BuiltinEnv::Tick MultiRatePointMass::dynamics(const std::vector<double>& s, std::span<const double> a,
                                              std::int64_t step_index) const {
    std::vector<double> n = s;
    double latch_cost = 0.0;
    for (int i = 0; i < 2; ++i) {
        if (a[2 + i] != s[8 + i]) latch_cost += kLatchCost;
        n[8 + i] = a[2 + i];
    }
    if (step_index % kHold == 0) {
        n[6] = a[2];
        n[7] = a[3];
    }
    for (int i = 0; i < 2; ++i) {
        const double force = kThrustGain * a[i] + kTrimGain * n[6 + i] - kDrag * s[2 + i];
        n[2 + i] = s[2 + i] + kDt * force;
        n[i] = s[i] + kDt * n[2 + i];
    }
    const double dx = n[0] - n[4];
    const double dy = n[1] - n[5];
    const double thrust_cost = kThrustCost * (a[0] * a[0] + a[1] * a[1]);
    Tick t;
    t.state = std::move(n);
    t.reward = -std::sqrt(dx * dx + dy * dy) - thrust_cost - latch_cost;
    return t;
}

std::vector<double> MultiRatePointMass::observe(const std::vector<double>& s, std::int64_t steps) const {
    const double phase = static_cast<double>(steps % kHold) / static_cast<double>(kHold);
    return {s[0], s[1], s[2], s[3], s[4], s[5], s[6], s[7], phase};
}

std::unique_ptr<Env> make_builtin_env(std::string_view name) {
    if (name == "mountain_car") return std::make_unique<MountainCar>();
    if (name == "pendulum") return std::make_unique<Pendulum>();
    if (name == "point_mass") return std::make_unique<MultiRatePointMass>();
    throw ConfigError("unknown built-in environment '" + std::string(name) + "'");
}

std::vector<std::string> builtin_env_names() { return {"mountain_car", "pendulum", "point_mass"}; }

}  // namespace sdar
