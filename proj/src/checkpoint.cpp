#include "sdar/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sdar/errors.hpp"

namespace sdar {

namespace {

constexpr char kMagic[8] = {'S', 'D', 'A', 'R', 'C', 'K', 'P', 'T'};

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u64(s.size());
        buf_.append(s);
    }
    void doubles(const std::vector<double>& v) {
        u64(v.size());
        for (double x : v) f64(x);
    }
    template <typename T>
    void params(const ParamSet<T>& p) {
        const auto sizes = p.layer_sizes();
        u64(sizes.size());
        for (auto s : sizes) u64(s);
        for (T x : p.flatten()) f64(static_cast<double>(x));
    }
    template <typename T>
    void adam(const AdamState<T>& a) {
        params(a.m);
        params(a.v);
        i64(a.step);
        f64(a.hyper.beta1);
        f64(a.hyper.beta2);
        f64(a.hyper.eps);
    }
    void scalar_adam(const ScalarAdam& a) {
        f64(a.m);
        f64(a.v);
        i64(a.step);
        f64(a.hyper.beta1);
        f64(a.hyper.beta2);
        f64(a.hyper.eps);
    }
    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string bytes) : buf_(std::move(bytes)) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf_[pos_++]);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const auto n = count();
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::vector<double> doubles() {
        const auto n = count();
        std::vector<double> v(n);
        for (auto& x : v) x = f64();
        return v;
    }
    template <typename T>
    void params(ParamSet<T>& into, const char* what) {
        std::vector<std::size_t> sizes(count());
        for (auto& s : sizes) s = u64();
        if (sizes != into.layer_sizes())
            throw ConfigError(std::string("checkpoint: layer sizes of ") + what + " do not match the configuration");
        std::vector<T> flat(into.num_params());
        for (auto& x : flat) x = static_cast<T>(f64());
        into.assign_flat(flat);
    }
    template <typename T>
    void adam(AdamState<T>& a, const char* what) {
        params(a.m, what);
        params(a.v, what);
        a.step = i64();
        a.hyper.beta1 = f64();
        a.hyper.beta2 = f64();
        a.hyper.eps = f64();
    }
    void scalar_adam(ScalarAdam& a) {
        a.m = f64();
        a.v = f64();
        a.step = i64();
        a.hyper.beta1 = f64();
        a.hyper.beta2 = f64();
        a.hyper.eps = f64();
    }
    bool done() const { return pos_ == buf_.size(); }

private:
    std::size_t count() {
        const auto n = u64();
        if (n > buf_.size()) throw IoError("checkpoint: corrupt length field");
        return static_cast<std::size_t>(n);
    }
    void need(std::size_t n) const {
        if (buf_.size() - pos_ < n) throw IoError("checkpoint: truncated file");
    }
    std::string buf_;
    std::size_t pos_ = 0;
};

std::string read_payload(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    std::string all = ss.str();
    if (all.size() < sizeof kMagic + 64 || std::memcmp(all.data(), kMagic, sizeof kMagic) != 0)
        throw IoError("'" + path + "' is not a checkpoint");
    const std::string digest = all.substr(all.size() - 64);
    std::string payload = all.substr(sizeof kMagic, all.size() - sizeof kMagic - 64);
    if (sha256_hex(payload) != digest) throw IoError("checkpoint '" + path + "' failed its integrity check");
    return payload;
}

CheckpointInfo read_info(Reader& r) {
    CheckpointInfo info;
    info.version = r.u32();
    if (info.version != kCheckpointVersion)
        throw IoError("checkpoint format version " + std::to_string(info.version) + " is not supported");
    info.precision = r.u8() == 0 ? Precision::f64 : Precision::f32;
    info.config = RunConfig::from_json(nlohmann::json::parse(r.str()));
    info.env.name = r.str();
    info.env.obs_dim = r.u64();
    info.env.act_dim = r.u64();
    info.env.max_episode_steps = static_cast<int>(r.i64());
    info.step = r.i64();
    return info;
}

template <typename T>
constexpr Precision precision_of() {
    return std::is_same_v<T, float> ? Precision::f32 : Precision::f64;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const RunConfig& cfg, Trainer<T>& tr) {
    Writer w;
    w.u32(kCheckpointVersion);
    w.u8(precision_of<T>() == Precision::f64 ? 0 : 1);
    w.str(cfg.to_json().dump());
    const EnvSpec& spec = tr.env_spec();
    w.str(spec.name);
    w.u64(spec.obs_dim);
    w.u64(spec.act_dim);
    w.i64(spec.max_episode_steps);
    w.i64(tr.step());

    const auto& a = tr.agent();
    w.f64(a.temps.log_alpha_beta);
    w.f64(a.temps.log_alpha_pi);
    w.f64(a.temps.target_beta);
    w.f64(a.temps.target_pi);
    w.scalar_adam(a.temps.opt_beta);
    w.scalar_adam(a.temps.opt_pi);
    w.params(a.policy.beta);
    w.params(a.policy.pi);
    w.params(a.critics.q1);
    w.params(a.critics.q2);
    w.params(a.critics.q1_targ);
    w.params(a.critics.q2_targ);
    w.adam(a.opt_beta);
    w.adam(a.opt_pi);
    w.adam(a.opt_q1);
    w.adam(a.opt_q2);

    w.str(tr.env_rng().serialize());
    w.str(tr.policy_rng().serialize());
    w.str(tr.replay_rng().serialize());

    const auto& c = tr.collector();
    w.doubles(c.obs);
    w.doubles(c.a_prev);
    w.i64(c.episode_step);
    w.u8(c.need_reset ? 1 : 0);
    w.i64(c.episodes);
    w.f64(c.episode_return);
    w.f64(c.finished_return_sum);
    w.i64(c.finished_count);
    w.f64(tr.last_critic_loss());
    w.f64(tr.last_actor_objective());
    w.f64(tr.last_selection_objective());

    const auto& rb = tr.replay();
    w.u64(rb.size());
    for (std::size_t i = 0; i < rb.size(); ++i) {
        const Transition t = rb.at(i);
        w.doubles(t.obs);
        w.doubles(t.a_prev);
        w.doubles(t.action);
        w.f64(t.reward);
        w.doubles(t.next_obs);
        w.u8(static_cast<std::uint8_t>((t.terminal ? 1 : 0) | (t.truncated ? 2 : 0) | (t.episode_start_next ? 4 : 0)));
    }

    const auto snap = tr.env().snapshot();
    w.u8(snap ? 1 : 0);
    if (snap) {
        w.doubles(snap->state);
        w.i64(snap->steps);
        w.u8(snap->done ? 1 : 0);
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint '" + tmp + "'");
        out.write(kMagic, sizeof kMagic);
        out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
        out << sha256_hex(w.bytes());
        if (!out) throw IoError("checkpoint write failed for '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot move checkpoint into '" + path + "'");
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
    Reader r(read_payload(path));
    return read_info(r);
}

template <typename T>
CheckpointInfo load_checkpoint(const std::string& path, Trainer<T>& tr) {
    Reader r(read_payload(path));
    CheckpointInfo info = read_info(r);
    if (info.precision != precision_of<T>())
        throw ConfigError("checkpoint precision is " + to_string(info.precision) + ", trainer uses " +
                          to_string(precision_of<T>()));
    const EnvSpec& spec = tr.env_spec();
    if (spec.obs_dim != info.env.obs_dim || spec.act_dim != info.env.act_dim)
        throw ConfigError("checkpoint environment dimensions differ from the trainer's environment");

    auto& a = tr.agent();
    a.temps.log_alpha_beta = r.f64();
    a.temps.log_alpha_pi = r.f64();
    a.temps.target_beta = r.f64();
    a.temps.target_pi = r.f64();
    r.scalar_adam(a.temps.opt_beta);
    r.scalar_adam(a.temps.opt_pi);
    r.params(a.policy.beta, "beta");
    r.params(a.policy.pi, "pi");
    r.params(a.critics.q1, "q1");
    r.params(a.critics.q2, "q2");
    r.params(a.critics.q1_targ, "q1 target");
    r.params(a.critics.q2_targ, "q2 target");
    r.adam(a.opt_beta, "beta optimizer");
    r.adam(a.opt_pi, "pi optimizer");
    r.adam(a.opt_q1, "q1 optimizer");
    r.adam(a.opt_q2, "q2 optimizer");

    tr.env_rng().deserialize(r.str());
    tr.policy_rng().deserialize(r.str());
    tr.replay_rng().deserialize(r.str());

    auto& c = tr.collector();
    c.obs = r.doubles();
    c.a_prev = r.doubles();
    c.episode_step = r.i64();
    c.need_reset = r.u8() != 0;
    c.episodes = r.i64();
    c.episode_return = r.f64();
    c.finished_return_sum = r.f64();
    c.finished_count = r.i64();
    const double cl = r.f64();
    const double ao = r.f64();
    const double so = r.f64();
    tr.set_last_losses(cl, ao, so);

    const std::uint64_t n = r.u64();
    std::vector<Transition> rows;
    rows.reserve(static_cast<std::size_t>(n));
    for (std::uint64_t i = 0; i < n; ++i) {
        Transition t;
        t.obs = r.doubles();
        t.a_prev = r.doubles();
        t.action = r.doubles();
        t.reward = r.f64();
        t.next_obs = r.doubles();
        const auto flags = r.u8();
        t.terminal = flags & 1;
        t.truncated = flags & 2;
        t.episode_start_next = flags & 4;
        rows.push_back(std::move(t));
    }
    tr.replay().restore(std::move(rows));

    info.has_env_state = r.u8() != 0;
    if (info.has_env_state) {
        EnvSnapshot snap;
        snap.state = r.doubles();
        snap.steps = r.i64();
        snap.done = r.u8() != 0;
        tr.env().restore(snap);
    } else if (!c.need_reset) {
        // The environment cannot be captured (external process): start a new episode.
        c.need_reset = true;
    }
    if (!r.done()) throw IoError("checkpoint: trailing bytes");
    tr.set_step(info.step);
    return info;
}

template void save_checkpoint<float>(const std::string&, const RunConfig&, Trainer<float>&);
template void save_checkpoint<double>(const std::string&, const RunConfig&, Trainer<double>&);
template CheckpointInfo load_checkpoint<float>(const std::string&, Trainer<float>&);
template CheckpointInfo load_checkpoint<double>(const std::string&, Trainer<double>&);

}  // namespace sdar
