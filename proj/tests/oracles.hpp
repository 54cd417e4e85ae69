#pragma once

// Independent reference implementations used to check the production
// algorithms: exhaustive overlap search, exhaustive chain-prediction path
// enumeration, and a plain-map LRU cache model.

#include <cstdint>
#include <list>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "blockstream/cache_policy.hpp"
#include "blockstream/ctmc.hpp"
#include "blockstream/grouping.hpp"

namespace oracles {

using namespace blockstream;

// ---- grouping: exhaustive largest-overlap search ----

// Enumerates every assignment of (no partition | one partition) per trace via
// odometer counting, intersects with std::set, returns the best score.
inline std::size_t brute_force_overlap_score(
    const std::vector<std::vector<EquivalentPartition>>& sets) {
    std::size_t best = 0;
    std::vector<std::size_t> choice(sets.size(), 0);  // 0 = skip, i+1 = partition i
    while (true) {
        std::set<BlockKey> inter;
        bool started = false;
        std::size_t n = 0;
        for (std::size_t t = 0; t < sets.size(); ++t) {
            if (choice[t] == 0) continue;
            const auto& blocks = sets[t][choice[t] - 1].blocks;
            std::set<BlockKey> bs(blocks.begin(), blocks.end());
            if (!started) {
                inter = bs;
                started = true;
            } else {
                std::set<BlockKey> next;
                for (BlockKey k : inter)
                    if (bs.count(k)) next.insert(k);
                inter = next;
            }
            ++n;
        }
        if (started) best = std::max(best, inter.size() * n);

        std::size_t t = 0;
        while (t < sets.size()) {
            if (++choice[t] <= sets[t].size()) break;
            choice[t] = 0;
            ++t;
        }
        if (t == sets.size()) break;
    }
    return best;
}

inline std::vector<std::vector<EquivalentPartition>> random_overlap_instance(
    std::mt19937_64& rng) {
    std::uniform_int_distribution<int> ntraces(1, 3), nparts(1, 4), nblocks(1, 6),
        block(0, 11);
    std::vector<std::vector<EquivalentPartition>> sets(ntraces(rng));
    for (auto& trace : sets) {
        trace.resize(nparts(rng));
        for (auto& ep : trace) {
            std::set<BlockKey> s;
            int n = nblocks(rng);
            for (int i = 0; i < n; ++i) s.insert(static_cast<BlockKey>(block(rng)));
            ep.blocks.assign(s.begin(), s.end());
            ep.occurrences = {0};
        }
    }
    return sets;
}

// ---- chain prediction: iterative path enumeration ----

// Worklist over (state, path probability, cumulative duration, on-path
// visited bitmask); accumulates probability into states on first visit.
// Mirrors the documented pruning rules but shares no code with predict().
inline Prediction enumerate_prediction(const CtmcModel& m, std::uint32_t start,
                                       double lookahead_ms, double p_stop) {
    struct Item {
        std::uint32_t state;
        double prob;
        double dur;
        std::uint32_t mask;
        int depth;
    };
    Prediction out;
    std::vector<Item> work{{start, 1.0, 0.0, 1u << start, 0}};
    while (!work.empty()) {
        Item it = work.back();
        work.pop_back();
        if (it.depth >= 64) continue;
        for (const auto& [next, p] : m.transitions[it.state]) {
            double np = it.prob * p;
            if (np < p_stop) continue;
            double nd = it.dur + m.durations.at({it.state, next}).mean_ms;
            if (nd > lookahead_ms) continue;
            std::uint32_t bit = 1u << next;
            std::uint32_t mask = it.mask;
            if (!(mask & bit)) {
                out[next] += np;
                mask |= bit;
            }
            work.push_back(Item{next, np, nd, mask, it.depth + 1});
        }
    }
    for (auto& [s, p] : out) p = std::min(p, 1.0);
    return out;
}

inline CtmcModel random_ctmc(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::uint32_t> nstates(2, 6);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> dur(100.0, 20'000.0);
    CtmcModel m;
    m.num_states = nstates(rng);
    m.initial.assign(m.num_states, 1.0 / m.num_states);
    m.transitions.resize(m.num_states);
    for (std::uint32_t s = 0; s < m.num_states; ++s) {
        std::vector<std::uint32_t> dests;
        for (std::uint32_t d = 0; d < m.num_states; ++d)
            if (d != s && unit(rng) < 0.6) dests.push_back(d);
        if (dests.empty()) continue;
        std::vector<double> w(dests.size());
        double total = 0.0;
        for (auto& x : w) total += (x = unit(rng) + 0.05);
        for (std::size_t i = 0; i < dests.size(); ++i) {
            m.transitions[s].emplace_back(dests[i], w[i] / total);
            m.durations[{s, dests[i]}] = DurationStat{dur(rng), 0.0, 1};
        }
    }
    return m;
}

// ---- cache: reference LRU with pinning over plain containers ----

class ReferenceLru {
public:
    explicit ReferenceLru(std::size_t capacity) : capacity_(capacity) {}

    void set_resident(BlockKey k) { resident_.insert(k); }

    ReadResult on_read(BlockKey k) {
        if (resident_.count(k)) return ReadResult::ResidentHit;
        auto it = state_.find(k);
        if (it == state_.end()) return ReadResult::Miss;
        if (it->second.pinned) {
            it->second.pinned = false;
        } else {
            order_.remove(k);
        }
        order_.push_front(k);
        return ReadResult::TempHit;
    }

    // returns evicted keys; false in .second when the insert is impossible
    std::pair<std::vector<BlockKey>, bool> insert(BlockKey k, bool pinned,
                                                  std::int64_t now) {
        std::vector<BlockKey> evicted;
        if (resident_.count(k)) return {evicted, true};
        auto it = state_.find(k);
        if (it != state_.end()) {
            if (!it->second.pinned) {
                order_.remove(k);
                order_.push_front(k);
            }
            return {evicted, true};
        }
        while (state_.size() + 1 > capacity_) {
            if (order_.empty()) return {evicted, false};
            BlockKey victim = order_.back();
            order_.pop_back();
            state_.erase(victim);
            evicted.push_back(victim);
        }
        state_[k] = Entry{pinned, now};
        if (!pinned) order_.push_front(k);
        return {evicted, true};
    }

    std::size_t unpin_stale(std::int64_t now, std::int64_t age) {
        std::size_t n = 0;
        for (auto& [k, e] : state_) {
            if (e.pinned && now - e.pin_ts > age) {
                e.pinned = false;
                order_.push_back(k);
                ++n;
            }
        }
        return n;
    }

    bool contains(BlockKey k) const {
        return resident_.count(k) || state_.count(k);
    }
    bool is_pinned(BlockKey k) const {
        auto it = state_.find(k);
        return it != state_.end() && it->second.pinned;
    }
    std::size_t occupancy() const { return state_.size(); }

private:
    struct Entry {
        bool pinned = false;
        std::int64_t pin_ts = 0;
    };
    std::size_t capacity_;
    std::set<BlockKey> resident_;
    std::map<BlockKey, Entry> state_;
    std::list<BlockKey> order_;  // front = most recent
};

}  // namespace oracles
