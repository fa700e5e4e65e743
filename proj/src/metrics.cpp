#include "sdar/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sdar/errors.hpp"

namespace sdar {

double EpisodeTrace::episode_return() const {
    double total = 0.0;
    for (double r : rewards) total += r;
    return total;
}

void EpisodeTrace::validate() const {
    if (initial_action.empty()) throw ConfigError("EpisodeTrace: empty action dimension");
    if (!schemas.empty() && schemas.size() != actions.size())
        throw ConfigError("EpisodeTrace: schema count differs from action count");
    if (!rewards.empty() && rewards.size() != actions.size())
        throw ConfigError("EpisodeTrace: reward count differs from action count");
    for (const auto& a : actions) {
        if (a.size() != initial_action.size()) throw ConfigError("EpisodeTrace: action length mismatch");
        for (double x : a)
            if (!(x >= -1.0 && x <= 1.0)) throw ConfigError("EpisodeTrace: action outside [-1, 1]");
    }
    for (const auto& b : schemas)
        if (b.size() != initial_action.size()) throw ConfigError("EpisodeTrace: schema length mismatch");
}

AprResult apr(std::span<const EpisodeTrace> traces, AprOptions opts) {
    if (traces.empty()) throw PreconditionError("apr: no traces");
    const std::size_t dims = traces.front().act_dim();
    std::vector<std::size_t> repeats(dims, 0);
    std::size_t steps = 0;
    for (const auto& tr : traces) {
        if (tr.act_dim() != dims) throw ConfigError("apr: traces disagree on action dimension");
        if (tr.length() == 0) throw PreconditionError("apr: empty trace");
        const std::vector<double>* prev = &tr.initial_action;
        for (const auto& a : tr.actions) {
            if (a.size() != dims) throw ConfigError("apr: action length mismatch");
            for (std::size_t i = 0; i < dims; ++i) {
                const bool same = opts.tolerance > 0.0 ? std::abs(a[i] - (*prev)[i]) <= opts.tolerance
                                                       : a[i] == (*prev)[i];
                if (same) ++repeats[i];
            }
            prev = &a;
            ++steps;
        }
    }
    const double mean_len = static_cast<double>(steps) / static_cast<double>(traces.size());
    auto rate = [&](double p) { return p >= 1.0 ? mean_len : 1.0 / (1.0 - p); };

    AprResult r;
    std::size_t total = 0;
    for (std::size_t i = 0; i < dims; ++i) {
        const double pi = static_cast<double>(repeats[i]) / static_cast<double>(steps);
        r.p_per_dim.push_back(pi);
        r.apr_per_dim.push_back(rate(pi));
        total += repeats[i];
    }
    r.p = static_cast<double>(total) / (static_cast<double>(steps) * static_cast<double>(dims));
    r.apr = rate(r.p);
    return r;
}

double afr(std::span<const EpisodeTrace> traces, AfrNorm norm) {
    if (traces.empty()) throw PreconditionError("afr: no traces");
    double sum = 0.0;
    std::size_t steps = 0;
    for (const auto& tr : traces) {
        if (tr.length() == 0) throw PreconditionError("afr: empty trace");
        const std::vector<double>* prev = &tr.initial_action;
        for (const auto& a : tr.actions) {
            if (a.size() != prev->size()) throw ConfigError("afr: action length mismatch");
            double acc = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double d = a[i] - (*prev)[i];
                acc += norm == AfrNorm::euclidean ? d * d : std::abs(d);
            }
            sum += norm == AfrNorm::euclidean ? std::sqrt(acc) : acc / static_cast<double>(a.size());
            prev = &a;
            ++steps;
        }
    }
    return sum / static_cast<double>(steps);
}

double n_score(double z, const NormalizationRef& ref) {
    if (ref.z1 == ref.z0) throw ConfigError("n_score: reference scores must differ (z1 == z0)");
    return (z - ref.z0) / (ref.z1 - ref.z0);
}

double auc(std::span<const std::pair<double, double>> curve) {
    if (curve.size() < 2) throw PreconditionError("auc: need at least two points");
    double area = 0.0;
    for (std::size_t k = 1; k < curve.size(); ++k) {
        const double dx = curve[k].first - curve[k - 1].first;
        if (!(dx > 0.0)) throw PreconditionError("auc: steps must be strictly increasing");
        area += 0.5 * dx * (curve[k].second + curve[k - 1].second);
    }
    return area / (curve.back().first - curve.front().first);
}

std::vector<double> best_normalized(std::span<const double> values) {
    if (values.empty()) throw PreconditionError("best_normalized: no values");
    const double best = *std::max_element(values.begin(), values.end());
    if (best == 0.0 || !std::isfinite(best)) throw ConfigError("best_normalized: best value must be finite and nonzero");
    std::vector<double> out;
    out.reserve(values.size());
    // All-negative scores: best / v keeps the best at 1 and the others in (0, 1).
    for (double v : values) out.push_back(best > 0.0 ? v / best : best / v);
    return out;
}

void export_selection_trace(const EpisodeTrace& trace, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("export_selection_trace: cannot open " + path);
    os << "step,dim,b\n";
    for (std::size_t t = 0; t < trace.schemas.size(); ++t)
        for (std::size_t i = 0; i < trace.schemas[t].size(); ++i)
            os << t << ',' << i << ',' << static_cast<int>(trace.schemas[t][i]) << '\n';
    if (!os) throw IoError("export_selection_trace: write failed for " + path);
}

std::vector<std::vector<std::uint8_t>> read_selection_trace(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("read_selection_trace: cannot open " + path);
    std::string line;
    std::getline(is, line);
    if (line != "step,dim,b") throw IoError("read_selection_trace: unexpected header in " + path);
    std::vector<std::vector<std::uint8_t>> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::size_t t = 0, i = 0;
        int b = 0;
        char c1 = 0, c2 = 0;
        if (!(ls >> t >> c1 >> i >> c2 >> b) || c1 != ',' || c2 != ',' || (b != 0 && b != 1))
            throw IoError("read_selection_trace: malformed row '" + line + "'");
        if (out.size() <= t) out.resize(t + 1);
        if (out[t].size() <= i) out[t].resize(i + 1, 0);
        out[t][i] = static_cast<std::uint8_t>(b);
    }
    return out;
}

}  // namespace sdar
