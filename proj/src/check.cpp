#include "sdar/check.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>

#include "sdar/config.hpp"
#include "sdar/critic.hpp"
#include "sdar/errors.hpp"
#include "sdar/harness.hpp"
#include "sdar/metrics.hpp"
#include "sdar/policy.hpp"
#include "sdar/trainer.hpp"

namespace sdar {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

template <typename F>
CheckResult timed(const std::string& name, F&& body) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.name = name;
    try {
        body(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_bits(const ParamSet<double>& a, const ParamSet<double>& b) {
    if (!a.same_shape(b)) return false;
    const auto fa = a.flatten();
    const auto fb = b.flatten();
    return std::memcmp(fa.data(), fb.data(), fa.size() * sizeof(double)) == 0;
}

std::vector<double> uniform_vec(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

Batch<double> random_batch(std::size_t obs, std::size_t act, int n, Rng& rng) {
    std::vector<Transition> rows;
    for (int i = 0; i < n; ++i) {
        Transition t;
        t.obs = uniform_vec(obs, rng);
        t.a_prev = uniform_vec(act, rng);
        t.action = uniform_vec(act, rng);
        t.reward = rng.uniform(-1.0, 1.0);
        t.next_obs = uniform_vec(obs, rng);
        rows.push_back(t);
    }
    return make_batch<double>(rows);
}

TrainConfig small_train_config(Mode mode, std::vector<std::size_t> hidden) {
    TrainConfig c;
    c.mode = mode;
    c.hidden = std::move(hidden);
    return c;
}

Agent<double> small_agent(std::size_t obs, std::size_t act, Mode mode, std::uint64_t seed) {
    const EnvSpec spec{"synthetic", obs, act, 10};
    Rng rng(seed);
    auto a = Agent<double>::init(spec, small_train_config(mode, {8, 8}), rng);
    a.temps.log_alpha_beta = std::log(0.3);
    a.temps.log_alpha_pi = std::log(0.2);
    return a;
}

// Central differences of f over every entry of p; p is restored afterwards.
std::vector<double> central_diff(ParamSet<double>& p, const std::function<double()>& f, double h = 1e-5) {
    const std::size_t n = p.num_params();
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = p.entry(i);
        p.entry(i) = x + h;
        const double up = f();
        p.entry(i) = x - h;
        const double down = f();
        p.entry(i) = x;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

double max_rel_err(const ParamSet<double>& analytic, const std::vector<double>& numeric, double floor = 1e-6) {
    const auto a = analytic.flatten();
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(numeric[i]), floor});
        worst = std::max(worst, std::abs(a[i] - numeric[i]) / scale);
    }
    return worst;
}

// Plain single-stage SAC on the shared substrate. The action net still takes the
// masked previous-action input, which for an always-acting policy is xi everywhere.
struct ReferenceSac {
    PolicyNets<double> nets;  // only pi is used
    ParamSet<double> q1, q2, q1_targ, q2_targ;
    AdamState<double> opt_pi, opt_q1, opt_q2;
    double log_alpha = 0.0;
    double target_entropy = 0.0;
    ScalarAdam opt_alpha;
    TrainConfig cfg;

    Matrix<double> masked(Eigen::Index n, Eigen::Index b) const {
        return Matrix<double>::Constant(n, b, nets.layout.xi.value());
    }

    void update(const Batch<double>& batch, std::int64_t t, Rng& rng) {
        const Eigen::Index B = batch.size();
        const auto n = static_cast<Eigen::Index>(nets.layout.act_dim);
        const double inv_b = 1.0 / static_cast<double>(B);
        const double alpha = std::exp(log_alpha);

        // critics
        {
            const Matrix<double> noise = normal_matrix<double>(n, B, rng);
            const auto g = gaussian_action(nets, batch.next_obs, masked(n, B), noise);
            const Matrix<double> v1 = q_values(q1_targ, batch.next_obs, g.a_hat);
            const Matrix<double> v2 = q_values(q2_targ, batch.next_obs, g.a_hat);
            Vector<double> y(B);
            for (Eigen::Index j = 0; j < B; ++j) {
                double soft = std::min(v1(0, j), v2(0, j));
                if (cfg.soft_target_entropy) soft -= alpha * g.log_pi(j);
                const double live = batch.terminal[static_cast<std::size_t>(j)] ? 0.0 : 1.0;
                y(j) = batch.reward(j) + cfg.gamma * live * soft;
            }
            auto fit = [&](const ParamSet<double>& q) {
                ForwardCache<double> cache;
                const Matrix<double> pred = q_values(q, batch.obs, batch.action, &cache);
                const Matrix<double> err = pred - y.transpose();
                return backprop(q, cache, Matrix<double>(err * inv_b), true).grads;
            };
            const auto g1 = fit(q1);
            const auto g2 = fit(q2);
            adam_step(opt_q1, q1, g1, cfg.lr_q);
            adam_step(opt_q2, q2, g2, cfg.lr_q);
        }
        if (t % cfg.policy_delay != 0) return;

        // actor
        const Matrix<double> noise = normal_matrix<double>(n, B, rng);
        const auto g = gaussian_action(nets, batch.obs, masked(n, B), noise);
        ForwardCache<double> c1, c2;
        const Matrix<double> v1 = q_values(q1, batch.obs, g.a_hat, &c1);
        const Matrix<double> v2 = q_values(q2, batch.obs, g.a_hat, &c2);
        Matrix<double> up1 = Matrix<double>::Zero(1, B);
        Matrix<double> up2 = Matrix<double>::Zero(1, B);
        for (Eigen::Index j = 0; j < B; ++j) (v1(0, j) <= v2(0, j) ? up1 : up2)(0, j) = -inv_b;
        const Matrix<double> d_a = backprop(q1, c1, up1, false).input_grad.bottomRows(n) +
                                   backprop(q2, c2, up2, false).input_grad.bottomRows(n);
        const Vector<double> d_log_pi = Vector<double>::Constant(B, alpha * inv_b);
        const auto grads = backprop(nets.pi, g.cache, gaussian_backward(g, d_a, d_log_pi), true).grads;
        adam_step(opt_pi, nets.pi, grads, cfg.lr_pi);

        // temperature
        double mean = 0.0;
        for (Eigen::Index j = 0; j < B; ++j) mean += g.log_pi(j);
        mean /= static_cast<double>(B);
        opt_alpha.apply(log_alpha, -(mean + target_entropy), cfg.lr_alpha);

        soft_update(q1_targ, q1, cfg.tau);
        soft_update(q2_targ, q2, cfg.tau);
    }
};

EpisodeTrace trace_of(const std::vector<std::vector<double>>& actions, std::vector<double> initial) {
    EpisodeTrace tr;
    tr.initial_action = std::move(initial);
    for (const auto& a : actions) {
        tr.actions.push_back(a);
        tr.schemas.emplace_back(a.size(), 1);
        tr.rewards.push_back(0.0);
    }
    return tr;
}

EpisodeTrace nrep_trace(int n, int length, std::size_t dims) {
    EpisodeTrace tr;
    tr.initial_action.assign(dims, 0.0);
    std::vector<double> a(dims, 0.0);
    for (int t = 0; t < length; ++t) {
        const bool act = t % n == 0;
        if (act)
            for (std::size_t i = 0; i < dims; ++i) a[i] = 0.9 * std::sin(1.0 + t + 0.37 * static_cast<double>(i));
        tr.actions.push_back(a);
        tr.schemas.emplace_back(dims, act ? 1 : 0);
        tr.rewards.push_back(1.0);
    }
    return tr;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read '" + p.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

CheckResult check_repeat_invariant(std::uint64_t seed, int tuples) {
    return timed("repeat-invariant", [&](CheckResult& r) {
        Rng rng(seed);
        const std::size_t dims[] = {1, 2, 4, 8};
        const std::size_t obs_dim = 3;
        long checked = 0, violations = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            const std::size_t n = dims[k];
            const int count = tuples / 4 + (static_cast<int>(k) < tuples % 4 ? 1 : 0);
            PolicyLayout layout;
            layout.obs_dim = obs_dim;
            layout.act_dim = n;
            layout.hidden = {16, 16};
            const auto nets = PolicyNets<double>::init(layout, rng);
            for (int i = 0; i < count; ++i) {
                Vector<double> s(static_cast<Eigen::Index>(obs_dim));
                for (auto& x : s) x = rng.uniform(-3.0, 3.0);
                Vector<double> a_prev(static_cast<Eigen::Index>(n));
                for (auto& x : a_prev) {
                    const double u = rng.uniform();
                    // Boundary and signed-zero values stress the copy.
                    x = u < 0.05 ? -0.0 : u < 0.1 ? 1.0 : u < 0.15 ? -1.0 : rng.uniform(-1.0, 1.0);
                }
                Schema b(static_cast<Eigen::Index>(n));
                for (auto& x : b) x = rng.uniform() < 0.5 ? 1 : 0;
                ActOptions o;
                o.fixed_schema = b;
                const auto out = act(nets, s, a_prev, o, rng);
                for (Eigen::Index d = 0; d < static_cast<Eigen::Index>(n); ++d) {
                    if (b(d)) continue;
                    ++checked;
                    if (!same_bits(out.action(d), a_prev(d))) ++violations;
                }
                // The same tuple through the batch path with the schema sampled by the net.
                const Matrix<double> sm(s);
                const Matrix<double> am(a_prev);
                const SchemaBatch sb = sample_schema(selection_probs(nets, sm, am), rng);
                const auto g = gaussian_action(nets, sm, premix(sb, am, nets.layout.xi.value()),
                                               normal_matrix<double>(static_cast<Eigen::Index>(n), 1, rng));
                const Matrix<double> a = postmix(sb, am, g.a_hat);
                for (Eigen::Index d = 0; d < static_cast<Eigen::Index>(n); ++d) {
                    if (sb(d, 0)) continue;
                    ++checked;
                    if (!same_bits(a(d, 0), am(d, 0))) ++violations;
                }
            }
        }
        r.passed = violations == 0 && checked > 0;
        r.detail = fmt::format("{} tuples, {} repeat components, {} mismatches", tuples, checked, violations);
    });
}

CheckResult check_gradients(std::uint64_t seed) {
    return timed("gradients", [&](CheckResult& r) {
        Rng rng(seed);
        const double tol = 1e-3;

        auto agent = small_agent(3, 2, Mode::sdar, seed + 100);
        const auto batch = random_batch(3, 2, 6, rng);
        UpdateOptions opts;

        // (i) critic loss with fixed targets
        TargetOptions to;
        to.alpha_beta = agent.temps.alpha_beta();
        to.alpha_pi = agent.temps.alpha_pi();
        const Vector<double> y = bellman_targets(batch, agent.policy, agent.critics, to, rng);
        const auto cl = critic_loss_and_grads(agent.critics, batch, y);
        const double e_q1 = max_rel_err(
            cl.grad_q1, central_diff(agent.critics.q1, [&] { return critic_loss_and_grads(agent.critics, batch, y).loss; }));
        const double e_q2 = max_rel_err(
            cl.grad_q2, central_diff(agent.critics.q2, [&] { return critic_loss_and_grads(agent.critics, batch, y).loss; }));

        // (ii) action objective with pinned schema and noise
        const auto draw = draw_action_inputs(agent, batch, opts, rng);
        const auto ag = action_policy_gradient(agent, batch, opts, draw);
        const double e_pi = max_rel_err(ag.grad, central_diff(agent.policy.pi, [&] {
                                            return -action_policy_gradient(agent, batch, opts, draw).objective;
                                        }));

        // (iii) exact selection objective, per-dimension and shared switch
        double e_beta = 0.0;
        for (Mode mode : {Mode::sdar, Mode::coupled}) {
            auto a2 = small_agent(3, 2, mode, seed + 200);
            const auto noise = draw_schema_noise(a2, batch.size(), rng);
            const auto sg = selection_exact_gradient(a2, batch, opts, noise);
            e_beta = std::max(e_beta, max_rel_err(sg.grad, central_diff(a2.policy.beta, [&] {
                                                      return -selection_exact_gradient(a2, batch, opts, noise).objective;
                                                  })));
        }
        const double worst = std::max({e_q1, e_q2, e_pi, e_beta});
        r.passed = worst < tol;
        r.detail = fmt::format("max rel err: q1 {:.2e}, q2 {:.2e}, pi {:.2e}, beta {:.2e} (tol {:.0e})", e_q1, e_q2,
                               e_pi, e_beta, tol);
    });
}

CheckResult check_estimator(std::uint64_t seed, int draws) {
    return timed("estimator", [&](CheckResult& r) {
        auto agent = small_agent(3, 2, Mode::sdar, seed + 100);
        Rng rng(seed);
        const auto batch = random_batch(3, 2, 8, rng);
        UpdateOptions opts;
        const auto noise = draw_schema_noise(agent, batch.size(), rng);
        const auto exact = selection_exact_gradient(agent, batch, opts, noise).grad.flatten();

        std::vector<double> sum(exact.size(), 0.0), sq(exact.size(), 0.0);
        for (int i = 0; i < draws; ++i) {
            const auto g = selection_sampled_gradient(agent, batch, opts, 1, rng, &noise).grad.flatten();
            for (std::size_t p = 0; p < g.size(); ++p) {
                sum[p] += g[p];
                sq[p] += g[p] * g[p];
            }
        }
        int outside = 0;
        double worst_z = 0.0;
        for (std::size_t p = 0; p < exact.size(); ++p) {
            const double mean = sum[p] / draws;
            const double var = std::max(sq[p] / draws - mean * mean, 0.0) * draws / (draws - 1.0);
            const double se = std::sqrt(var / draws);
            const double diff = std::abs(mean - exact[p]);
            if (se == 0.0) {
                if (diff > 1e-12) ++outside;
                continue;
            }
            worst_z = std::max(worst_z, diff / se);
            if (diff > 3.0 * se) ++outside;
        }
        r.passed = outside == 0;
        r.detail = fmt::format("{} coordinates, {} draws, max |z| {:.2f}, {} outside 3 SE", exact.size(), draws,
                               worst_z, outside);
    });
}

namespace {

// Empty string when every parameter matches bit for bit, else the names that differ.
std::string sac_equivalence_run(std::uint64_t seed, int updates, bool soft_targets, std::size_t& nparams) {
    TrainConfig cfg;
    cfg.mode = Mode::sac;
    cfg.hidden = {64, 64};
    cfg.batch_size = 64;
    cfg.seed = seed;
    cfg.replay_capacity = 10000;
    cfg.soft_target_entropy = soft_targets;
    Trainer<double> tr(cfg, [] { return make_builtin_env("point_mass"); });
    const auto& spec = tr.env_spec();

    Rng data(seed + 1000);
    std::vector<Transition> rows;
    for (int i = 0; i < 5000; ++i) {
        Transition t;
        t.obs = uniform_vec(spec.obs_dim, data);
        t.a_prev = uniform_vec(spec.act_dim, data);
        t.action = uniform_vec(spec.act_dim, data);
        t.reward = data.uniform(-1.0, 1.0);
        t.next_obs = uniform_vec(spec.obs_dim, data);
        t.terminal = data.uniform() < 0.05;
        t.truncated = !t.terminal && data.uniform() < 0.02;
        t.episode_start_next = t.terminal || t.truncated;
        rows.push_back(std::move(t));
    }
    tr.replay().restore(rows);

    const auto& a = tr.agent();
    ReferenceSac ref;
    ref.nets = a.policy;
    ref.q1 = a.critics.q1;
    ref.q2 = a.critics.q2;
    ref.q1_targ = a.critics.q1_targ;
    ref.q2_targ = a.critics.q2_targ;
    ref.opt_pi = AdamState<double>::for_params(ref.nets.pi);
    ref.opt_q1 = AdamState<double>::for_params(ref.q1);
    ref.opt_q2 = AdamState<double>::for_params(ref.q2);
    ref.log_alpha = cfg.init_log_alpha_pi;
    ref.target_entropy = -static_cast<double>(spec.act_dim);
    ref.cfg = cfg;
    const ParamSet<double> beta0 = a.policy.beta;
    const ParamSet<double> pi0 = a.policy.pi;
    const ReplayBuffer buffer = tr.replay();
    Rng replay_rng = tr.replay_rng();
    Rng policy_rng = tr.policy_rng();

    for (int t = 1; t <= updates; ++t) {
        tr.update_from_replay(t);
        ref.update(buffer.sample<double>(cfg.batch_size, replay_rng), t, policy_rng);
    }
    const auto& b = tr.agent();
    std::vector<std::string> differ;
    if (!same_bits(b.policy.pi, ref.nets.pi)) differ.push_back("pi");
    if (!same_bits(b.critics.q1, ref.q1)) differ.push_back("q1");
    if (!same_bits(b.critics.q2, ref.q2)) differ.push_back("q2");
    if (!same_bits(b.critics.q1_targ, ref.q1_targ)) differ.push_back("q1_targ");
    if (!same_bits(b.critics.q2_targ, ref.q2_targ)) differ.push_back("q2_targ");
    if (!same_bits(b.temps.log_alpha_pi, ref.log_alpha)) differ.push_back("log_alpha_pi");
    if (!same_bits(b.policy.beta, beta0)) differ.push_back("beta (should be untouched)");
    if (same_bits(b.policy.pi, pi0)) differ.push_back("pi never moved");
    nparams = b.policy.pi.num_params() + 4 * b.critics.q1.num_params() + 1;
    return fmt::format("{}", fmt::join(differ, ", "));
}

}  // namespace

CheckResult check_sac_equivalence(std::uint64_t seed, int updates) {
    return timed("sac-equivalence", [&](CheckResult& r) {
        std::size_t nparams = 0;
        const std::string soft = sac_equivalence_run(seed, updates, true, nparams);
        const std::string plain = sac_equivalence_run(seed, updates, false, nparams);
        r.passed = soft.empty() && plain.empty();
        r.detail = r.passed ? fmt::format("{} updates, {} parameters bit-identical (soft and plain targets)", updates,
                                          nparams)
                            : fmt::format("{} updates, differing: soft targets [{}], plain targets [{}]", updates,
                                          soft, plain);
    });
}

CheckResult check_temperature(std::uint64_t seed) {
    return timed("temperature", [&](CheckResult& r) {
        auto agent = small_agent(3, 2, Mode::sdar, seed + 100);
        Rng rng(seed);
        const auto batch = random_batch(3, 2, 32, rng);
        UpdateOptions opts;
        PolicyDraws<double> draws;
        action_policy_gradient(agent, batch, opts, draw_action_inputs(agent, batch, opts, rng), &draws);
        const double h_pi = -mean_log_prob(draws.log_pi);
        const double h_beta = -mean_log_prob(draws.log_beta);
        const double lr = 1e-3;

        bool ok = true;
        std::vector<std::string> notes;
        auto step = [&](double offset) {
            TemperatureState t = agent.temps;
            t.target_pi = h_pi + offset;
            t.target_beta = h_beta + offset;
            const double b0 = t.log_alpha_beta, p0 = t.log_alpha_pi;
            update_temperatures(t, draws, lr, true);
            return std::make_pair(t.log_alpha_beta - b0, t.log_alpha_pi - p0);
        };
        const auto up = step(+0.5);    // entropy below target
        const auto down = step(-0.5);  // entropy above target
        const auto still = step(0.0);
        if (!(up.first > 0 && up.second > 0)) ok = false, notes.push_back("no increase below target");
        if (!(down.first < 0 && down.second < 0)) ok = false, notes.push_back("no decrease above target");
        const double drift = std::max(std::abs(still.first), std::abs(still.second));
        if (!(drift < 1e-12)) ok = false, notes.push_back("drift at target");

        // The default selection target for |A| = 2.
        TrainConfig cfg;
        const auto def = TemperatureState::make(2, 2, cfg);
        const double expect = 0.5 * 2.0 * std::numbers::ln2;
        if (std::abs(def.target_beta - expect) > 1e-15) ok = false, notes.push_back("H_beta default");

        r.passed = ok;
        r.detail = fmt::format("H_pi {:.4f}, H_beta {:.4f}: below target dlog_alpha ({:+.2e}, {:+.2e}), above ({:+.2e}, "
                               "{:+.2e}), at target |d| {:.1e}{}",
                               h_pi, h_beta, up.first, up.second, down.first, down.second, drift,
                               notes.empty() ? "" : fmt::format(" [{}]", fmt::join(notes, "; ")));
    });
}

CheckResult check_metrics() {
    return timed("metrics", [&](CheckResult& r) {
        const double tol = 1e-12;
        std::vector<std::string> failed;
        auto expect = [&](const std::string& what, double got, double want) {
            if (!(std::abs(got - want) <= tol)) failed.push_back(fmt::format("{}: {} != {}", what, got, want));
        };

        const std::vector<EpisodeTrace> fresh{nrep_trace(1, 200, 3)};
        expect("APR no repeats", apr(fresh).apr, 1.0);
        expect("p no repeats", apr(fresh).p, 0.0);
        for (int n : {2, 4}) {
            const std::vector<EpisodeTrace> v{nrep_trace(n, 200, 2), nrep_trace(n, 120, 2)};
            const auto a = apr(v);
            expect(fmt::format("APR N-Rep({})", n), a.apr, n);
            for (double d : a.apr_per_dim) expect(fmt::format("per-dim APR N-Rep({})", n), d, n);
        }
        const std::vector<EpisodeTrace> quarter{
            trace_of({{0.1}, {0.1}, {0.1}, {0.1}, {0.2}, {0.2}, {0.2}, {0.2}}, {0.0})};
        expect("p 0.75", apr(quarter).p, 0.75);
        expect("APR p=0.75", apr(quarter).apr, 4.0);

        const std::vector<EpisodeTrace> constant{trace_of({{0.3, -0.2}, {0.3, -0.2}, {0.3, -0.2}}, {0.3, -0.2})};
        expect("AFR constant", afr(constant), 0.0);
        const std::vector<EpisodeTrace> alternating{trace_of({{-1.0}, {1.0}, {-1.0}, {1.0}}, {1.0})};
        expect("AFR alternating", afr(alternating), 2.0);
        const std::vector<EpisodeTrace> pyth{trace_of({{0.3, 0.4}}, {0.0, 0.0})};
        expect("AFR 2-D", afr(std::vector<EpisodeTrace>{trace_of({{0.6, 0.8}}, {0.0, 0.0})}), 1.0);
        expect("AFR 3-4-5 (scaled)", afr(pyth), 0.5);

        const NormalizationRef ref{-50.0, 150.0};
        expect("n-score Z0", n_score(-50.0, ref), 0.0);
        expect("n-score Z1", n_score(150.0, ref), 1.0);
        expect("n-score 100", n_score(100.0, ref), 0.75);

        const std::vector<std::pair<double, double>> flat{{0, 3.5}, {10, 3.5}, {25, 3.5}};
        const std::vector<std::pair<double, double>> ramp{{100, 0.0}, {300, 1.0}};
        expect("AUC constant", auc(flat), 3.5);
        expect("AUC ramp", auc(ramp), 0.5);

        r.passed = failed.empty();
        r.detail = failed.empty() ? "APR, AFR, n-score and AUC examples exact to 1e-12"
                                  : fmt::format("{}", fmt::join(failed, "; "));
    });
}

CheckResult check_repeat_marginal(std::uint64_t seed, int states, int calls) {
    return timed("repeat-marginal", [&](CheckResult& r) {
        Rng rng(seed);
        PolicyLayout layout;
        layout.obs_dim = 4;
        layout.act_dim = 4;
        layout.hidden = {16, 16};
        const auto nets = PolicyNets<double>::init(layout, rng);
        const auto n = static_cast<Eigen::Index>(layout.act_dim);
        int outside = 0;
        double worst_z = 0.0, lo_p = 1.0, hi_p = 0.0;
        for (int k = 0; k < states; ++k) {
            Vector<double> s(4), a_prev(n);
            for (auto& x : s) x = rng.uniform(-2.0, 2.0);
            for (auto& x : a_prev) x = rng.uniform(-1.0, 1.0);
            const auto sel = selection_probs(nets, Matrix<double>(s), Matrix<double>(a_prev));
            std::vector<long> repeats(static_cast<std::size_t>(n), 0);
            const ActOptions opts;
            for (int c = 0; c < calls; ++c) {
                const auto out = act(nets, s, a_prev, opts, rng);
                for (Eigen::Index d = 0; d < n; ++d)
                    if (same_bits(out.action(d), a_prev(d))) ++repeats[static_cast<std::size_t>(d)];
            }
            for (Eigen::Index d = 0; d < n; ++d) {
                const double q = 1.0 - sel.probs(d, 0);
                lo_p = std::min(lo_p, q);
                hi_p = std::max(hi_p, q);
                const double emp = static_cast<double>(repeats[static_cast<std::size_t>(d)]) / calls;
                const double sd = std::sqrt(q * (1.0 - q) / calls);
                const double z = std::abs(emp - q) / sd;
                worst_z = std::max(worst_z, z);
                if (z > 3.0) ++outside;
            }
        }
        r.passed = outside == 0;
        r.detail = fmt::format("{} states x {} dims, {} calls each, 1-beta in [{:.3f}, {:.3f}], max |z| {:.2f}, {} "
                               "outside 3 sigma",
                               states, n, calls, lo_p, hi_p, worst_z, outside);
    });
}

namespace {

std::vector<std::string> determinism_run(const fs::path& root, std::uint64_t seed, Precision precision,
                                         std::size_t& log_bytes) {
    fs::remove_all(root);
    RunConfig cfg;
    cfg.env = "builtin:point_mass";
    cfg.train.hidden = {16, 16};
    cfg.train.batch_size = 32;
    cfg.train.warmup_steps = 200;
    cfg.train.total_steps = 1200;
    cfg.train.eval_every = 300;
    cfg.train.eval_episodes = 2;
    cfg.train.seed = seed;
    cfg.train.precision = precision;

    TrainRunOptions o;
    o.out_dir = (root / "a").string();
    const auto a = run_training(cfg, o);
    o.out_dir = (root / "b").string();
    const auto b = run_training(cfg, o);
    o.out_dir = (root / "c").string();
    o.stop_at = 600;
    const auto c1 = run_training(cfg, o);
    TrainRunOptions resume;
    resume.out_dir = o.out_dir;
    resume.resume_from = c1.checkpoint_path;
    const auto c = run_training(cfg, resume);

    const std::string la = slurp(a.log_path), lb = slurp(b.log_path), lc = slurp(c.log_path);
    const std::string ka = slurp(a.checkpoint_path), kb = slurp(b.checkpoint_path), kc = slurp(c.checkpoint_path);
    const std::string p = to_string(precision);
    std::vector<std::string> notes;
    if (la != lb) notes.push_back(p + ": repeat log differs");
    if (ka != kb) notes.push_back(p + ": repeat checkpoint differs");
    if (la != lc) notes.push_back(p + ": resumed log differs");
    if (ka != kc) notes.push_back(p + ": resumed checkpoint differs");
    if (a.record.evals.size() != 4) notes.push_back(p + ": expected 4 evaluation records");
    log_bytes = la.size();
    return notes;
}

}  // namespace

CheckResult check_determinism(const std::string& scratch_dir, std::uint64_t seed) {
    return timed("determinism", [&](CheckResult& r) {
        const fs::path root = fs::path(scratch_dir) / "determinism";
        std::size_t b64 = 0, b32 = 0;
        auto notes = determinism_run(root / "f64", seed, Precision::f64, b64);
        const auto more = determinism_run(root / "f32", seed, Precision::f32, b32);
        notes.insert(notes.end(), more.begin(), more.end());
        fs::remove_all(root);
        r.passed = notes.empty();
        r.detail = notes.empty() ? fmt::format("f64 and f32 runs: repeated and resumed (at step 600) logs and "
                                               "checkpoints byte-identical ({} / {} log bytes)",
                                               b64, b32)
                                 : fmt::format("{}", fmt::join(notes, "; "));
    });
}

std::vector<std::string> check_names() {
    return {"repeat-invariant", "gradients",       "estimator",   "sac-equivalence",
            "temperature",      "metrics",         "repeat-marginal", "determinism"};
}

CheckResult run_check(const std::string& name, const std::string& scratch_dir) {
    if (name == "repeat-invariant") return check_repeat_invariant();
    if (name == "gradients") return check_gradients();
    if (name == "estimator") return check_estimator();
    if (name == "sac-equivalence") return check_sac_equivalence();
    if (name == "temperature") return check_temperature();
    if (name == "metrics") return check_metrics();
    if (name == "repeat-marginal") return check_repeat_marginal();
    if (name == "determinism") return check_determinism(scratch_dir);
    throw ConfigError("unknown check '" + name + "'");
}

std::string format_check_line(const CheckResult& r) {
    return fmt::format("{} {:<18} {} ({:.1f} s)", r.passed ? "PASS" : "FAIL", r.name, r.detail, r.seconds);
}

}  // namespace sdar
