#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "blockstream/grouping.hpp"
#include "blockstream/types.hpp"

namespace blockstream {

struct DurationStat {
    double mean_ms = 0.0;
    double stddev_ms = 0.0;
    std::uint64_t count = 0;
};

/// Markov chain over superblock states. Transitions carry empirical duration
/// mean/stddev from training rather than exponential rates.
struct CtmcModel {
    std::uint32_t num_states = 0;
    std::vector<double> initial;
    // per-state outgoing transitions, sorted by destination
    std::vector<std::vector<std::pair<std::uint32_t, double>>> transitions;
    std::map<std::pair<std::uint32_t, std::uint32_t>, DurationStat> durations;

    std::size_t transition_count() const {
        std::size_t n = 0;
        for (const auto& row : transitions) n += row.size();
        return n;
    }
};

using Prediction = std::map<std::uint32_t, double>;

inline CtmcModel train_ctmc(const std::vector<SuperblockSequence>& sequences,
                            std::uint32_t num_states) {
    bool any = false;
    for (const auto& s : sequences)
        if (!s.steps.empty()) any = true;
    if (!any) throw DataError("ctmc training: empty corpus");

    CtmcModel m;
    m.num_states = num_states;
    m.initial.assign(num_states, 0.0);
    m.transitions.resize(num_states);

    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> counts;
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::pair<double, double>> dur;  // sum, sumsq
    std::vector<std::uint64_t> out_total(num_states, 0);
    std::uint64_t starts = 0;

    for (const auto& s : sequences) {
        if (s.steps.empty()) continue;
        m.initial[s.steps[0].first] += 1.0;
        ++starts;
        for (std::size_t i = 1; i < s.steps.size(); ++i) {
            auto key = std::make_pair(s.steps[i - 1].first, s.steps[i].first);
            counts[key] += 1;
            out_total[s.steps[i - 1].first] += 1;
            double gap = static_cast<double>(s.steps[i].second - s.steps[i - 1].second);
            dur[key].first += gap;
            dur[key].second += gap * gap;
        }
    }
    for (auto& p : m.initial) p /= static_cast<double>(starts);
    for (const auto& [key, c] : counts) {
        double p = static_cast<double>(c) / static_cast<double>(out_total[key.first]);
        m.transitions[key.first].emplace_back(key.second, p);
        double mean = dur[key].first / static_cast<double>(c);
        double var = dur[key].second / static_cast<double>(c) - mean * mean;
        m.durations[key] = DurationStat{mean, std::sqrt(std::max(0.0, var)),
                                        static_cast<std::uint64_t>(c)};
    }
    return m;
}

namespace detail {

inline void predict_dfs(const CtmcModel& m, std::uint32_t state, double prob,
                        double dur_ms, double lookahead_ms, double p_stop,
                        std::vector<bool>& on_path_visited, int depth,
                        Prediction& out) {
    if (depth >= 64) return;  // safety net for cyclic models
    for (const auto& [next, p] : m.transitions[state]) {
        double np = prob * p;
        if (np < p_stop) continue;
        double nd = dur_ms + m.durations.at({state, next}).mean_ms;
        if (nd > lookahead_ms) continue;
        bool first_visit = !on_path_visited[next];
        if (first_visit) {
            out[next] += np;
            on_path_visited[next] = true;
        }
        predict_dfs(m, next, np, nd, lookahead_ms, p_stop, on_path_visited,
                    depth + 1, out);
        if (first_visit) on_path_visited[next] = false;
    }
}

}  // namespace detail

/// Depth-first search from current_state. A branch is cut when its path
/// probability drops below p_stop or its cumulative mean duration exceeds
/// the lookahead. Each state accumulates probability from paths that reach
/// it for the first time on that path, capped at 1.
inline Prediction predict(const CtmcModel& m, std::uint32_t current_state,
                          double lookahead_ms, double p_stop) {
    if (current_state >= m.num_states)
        throw DataError("predict: unknown state " + std::to_string(current_state));
    Prediction out;
    std::vector<bool> visited(m.num_states, false);
    visited[current_state] = true;
    detail::predict_dfs(m, current_state, 1.0, 0.0, lookahead_ms, p_stop,
                        visited, 0, out);
    for (auto& [s, p] : out) p = std::min(p, 1.0);
    return out;
}

inline nlohmann::json ctmc_to_json(const CtmcModel& m) {
    nlohmann::json j;
    j["format"] = "ctmc";
    j["version"] = 1;
    j["num_states"] = m.num_states;
    j["initial"] = m.initial;
    nlohmann::json trans = nlohmann::json::array();
    for (std::uint32_t i = 0; i < m.num_states; ++i) {
        for (const auto& [to, p] : m.transitions[i]) {
            const auto& d = m.durations.at({i, to});
            trans.push_back({{"from", i},
                             {"to", to},
                             {"p", p},
                             {"dur_mean_ms", d.mean_ms},
                             {"dur_stddev_ms", d.stddev_ms},
                             {"count", d.count}});
        }
    }
    j["transitions"] = std::move(trans);
    return j;
}

inline CtmcModel ctmc_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != "ctmc")
        throw DataError("ctmc: bad header");
    if (j.value("version", 0) != 1)
        throw DataError("ctmc: unsupported version");
    CtmcModel m;
    m.num_states = j.at("num_states").get<std::uint32_t>();
    m.initial = j.at("initial").get<std::vector<double>>();
    if (m.initial.size() != m.num_states) throw DataError("ctmc: truncated");
    m.transitions.resize(m.num_states);
    for (const auto& t : j.at("transitions")) {
        std::uint32_t from = t.at("from").get<std::uint32_t>();
        std::uint32_t to = t.at("to").get<std::uint32_t>();
        if (from >= m.num_states || to >= m.num_states)
            throw DataError("ctmc: state out of range");
        m.transitions[from].emplace_back(to, t.at("p").get<double>());
        m.durations[{from, to}] =
            DurationStat{t.at("dur_mean_ms").get<double>(),
                         t.at("dur_stddev_ms").get<double>(),
                         t.at("count").get<std::uint64_t>()};
    }
    for (auto& row : m.transitions) std::sort(row.begin(), row.end());
    return m;
}

inline std::string serialize_ctmc(const CtmcModel& m) {
    return ctmc_to_json(m).dump();
}

inline CtmcModel deserialize_ctmc(const std::string& bytes) {
    if (bytes.empty()) throw DataError("ctmc: empty input");
    nlohmann::json j = nlohmann::json::parse(bytes, nullptr, false);
    if (j.is_discarded()) throw DataError("ctmc: corrupted document");
    return ctmc_from_json(j);
}

}  // namespace blockstream
