#pragma once

// Environment interface shared by the built-in tasks and the subprocess bridge.
// Actions are normalized to [-1, 1]^act_dim on this interface.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sdar {

struct EnvSpec {
    std::string name;
    std::size_t obs_dim = 0;
    std::size_t act_dim = 0;
    int max_episode_steps = 1;
    double reward_min = -1e300;  // informative only
    double reward_max = 1e300;

    void validate() const;
};

struct StepResult {
    std::vector<double> obs;
    double reward = 0.0;
    bool terminated = false;
    bool truncated = false;
};

/// Full internal state of a built-in environment.
struct EnvSnapshot {
    std::vector<double> state;
    std::int64_t steps = 0;
    bool done = false;
};

class Env {
public:
    virtual ~Env() = default;
    virtual const EnvSpec& spec() const = 0;
    virtual std::vector<double> reset(std::uint64_t seed) = 0;
    virtual StepResult step(std::span<const double> action) = 0;

    /// nullopt when the environment cannot be captured (external processes).
    virtual std::optional<EnvSnapshot> snapshot() const { return std::nullopt; }
    virtual void restore(const EnvSnapshot& snap);
    /// Number of action components clamped into [-1, 1] so far.
    virtual std::size_t clamp_count() const { return 0; }
};

using EnvFactory = std::function<std::unique_ptr<Env>()>;

/// Shared bookkeeping for built-in tasks: step counting, truncation, action clamping,
/// and the protocol check against stepping a finished episode. Subclasses provide
/// pure dynamics over an explicit state vector.
class BuiltinEnv : public Env {
public:
    explicit BuiltinEnv(EnvSpec spec);

    const EnvSpec& spec() const override { return spec_; }
    std::vector<double> reset(std::uint64_t seed) override;
    StepResult step(std::span<const double> action) override;
    std::optional<EnvSnapshot> snapshot() const override;
    void restore(const EnvSnapshot& snap) override;
    std::size_t clamp_count() const override { return clamp_count_; }

    const std::vector<double>& state() const { return state_; }
    std::int64_t steps() const { return steps_; }

    /// Start from an explicit state (tests, hand-evaluated dynamics).
    void set_state(std::vector<double> state, std::int64_t steps = 0);

protected:
    struct Tick {
        std::vector<double> state;
        double reward = 0.0;
        bool terminated = false;
    };
    virtual std::vector<double> initial_state(std::uint64_t seed) const = 0;
    virtual Tick dynamics(const std::vector<double>& state, std::span<const double> action,
                          std::int64_t step_index) const = 0;
    virtual std::vector<double> observe(const std::vector<double>& state, std::int64_t steps) const = 0;

private:
    EnvSpec spec_;
    std::vector<double> state_;
    std::int64_t steps_ = 0;
    bool done_ = true;
    bool started_ = false;
    std::size_t clamp_count_ = 0;
};

/// Continuous mountain car. State (position, velocity); observation equals state.
///   v' = clip(v + 0.0015 a - 0.0025 cos(3 x), -0.07, 0.07), x' = clip(x + v', -1.2, 0.6)
///   at the left wall a negative velocity is zeroed; success when x' >= 0.45 and v' >= 0
///   reward = 100 [success] - 0.1 a^2; reset x ~ U(-0.6, -0.4), v = 0; limit 999 steps.
class MountainCar final : public BuiltinEnv {
public:
    static constexpr double kMinPosition = -1.2;
    static constexpr double kMaxPosition = 0.6;
    static constexpr double kMaxSpeed = 0.07;
    static constexpr double kGoalPosition = 0.45;
    static constexpr double kGoalVelocity = 0.0;
    static constexpr double kPower = 0.0015;
    static constexpr double kGravity = 0.0025;

    MountainCar();

protected:
    std::vector<double> initial_state(std::uint64_t seed) const override;
    Tick dynamics(const std::vector<double>& state, std::span<const double> action,
                  std::int64_t step_index) const override;
    std::vector<double> observe(const std::vector<double>& state, std::int64_t steps) const override;
};

/// Pendulum swing-up. State (theta, theta_dot) with theta = 0 upright.
///   u = 2 a, theta_dot' = clip(theta_dot + (3 g / 2 l sin theta + 3 / (m l^2) u) dt, -8, 8),
///   theta' = theta + theta_dot' dt, reward = -(norm(theta)^2 + 0.1 theta_dot^2 + 0.001 u^2)
///   g = 10, m = l = 1, dt = 0.05; observation (cos, sin, theta_dot); limit 200 steps.
class Pendulum final : public BuiltinEnv {
public:
    static constexpr double kMaxSpeed = 8.0;
    static constexpr double kMaxTorque = 2.0;
    static constexpr double kDt = 0.05;
    static constexpr double kG = 10.0;
    static constexpr double kMass = 1.0;
    static constexpr double kLength = 1.0;

    Pendulum();

protected:
    std::vector<double> initial_state(std::uint64_t seed) const override;
    Tick dynamics(const std::vector<double>& state, std::span<const double> action,
                  std::int64_t step_index) const override;
    std::vector<double> observe(const std::vector<double>& state, std::int64_t steps) const override;
};

/// Planar point mass with actuators at two rates.
///   dims 0-1: thrust, applied every tick.
///   dims 2-3: trim command. The applied trim is re-latched from the command only on
///             ticks t with t % 5 == 0 and held in between; every tick on which a trim
///             command component differs from the previous tick's command costs 0.05.
///   v' = v + dt (thrust + trim - drag v), p' = p + dt v'
///   reward = -|p - goal| - 0.01 |thrust|^2 - latch cost
/// State (p, v, goal, applied trim, last command); observation
/// (p, v, goal, applied trim, phase = (t mod 5) / 5). Reset at the origin, goal uniform on the
/// unit circle; limit 300 steps.
class MultiRatePointMass final : public BuiltinEnv {
public:
    static constexpr int kHold = 5;
    static constexpr double kDt = 0.1;
    static constexpr double kDrag = 1.0;
    static constexpr double kThrustGain = 1.0;
    static constexpr double kTrimGain = 1.0;
    static constexpr double kThrustCost = 0.01;
    static constexpr double kLatchCost = 0.05;

    MultiRatePointMass();

protected:
    std::vector<double> initial_state(std::uint64_t seed) const override;
    Tick dynamics(const std::vector<double>& state, std::span<const double> action,
                  std::int64_t step_index) const override;
    std::vector<double> observe(const std::vector<double>& state, std::int64_t steps) const override;
};

/// "mountain_car", "pendulum", "point_mass". Throws ConfigError for unknown names.
std::unique_ptr<Env> make_builtin_env(std::string_view name);
std::vector<std::string> builtin_env_names();

}  // namespace sdar
