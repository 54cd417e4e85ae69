#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "blockstream/ctmc.hpp"
#include "oracles.hpp"

using namespace blockstream;

namespace {

SuperblockSequence seq(std::vector<std::pair<std::uint32_t, std::int64_t>> steps) {
    SuperblockSequence s;
    s.steps = std::move(steps);
    return s;
}

// the [A,B,C]/[A,C] worked example: A=0, B=1, C=2
CtmcModel abc_model() {
    return train_ctmc({seq({{0, 0}, {1, 10'000}, {2, 20'000}}),
                       seq({{0, 0}, {2, 5'000}})},
                      3);
}

double prob_of(const Prediction& p, std::uint32_t s) {
    auto it = p.find(s);
    return it == p.end() ? 0.0 : it->second;
}

}  // namespace

TEST_CASE("train_ctmc frequency counts") {
    CtmcModel m = abc_model();
    CHECK(m.initial[0] == 1.0);
    CHECK(m.initial[1] == 0.0);
    REQUIRE(m.transitions[0].size() == 2);
    CHECK(m.transitions[0][0] == std::pair<std::uint32_t, double>{1, 0.5});
    CHECK(m.transitions[0][1] == std::pair<std::uint32_t, double>{2, 0.5});
    REQUIRE(m.transitions[1].size() == 1);
    CHECK(m.transitions[1][0] == std::pair<std::uint32_t, double>{2, 1.0});
    CHECK(m.transition_count() == 3);
}

TEST_CASE("train_ctmc duration stats") {
    SECTION("single observation") {
        CtmcModel m = train_ctmc({seq({{0, 0}, {1, 10'000}})}, 2);
        const auto& d = m.durations.at({0, 1});
        CHECK(d.mean_ms == 10'000.0);
        CHECK(d.stddev_ms == 0.0);
        CHECK(d.count == 1);
    }
    SECTION("two observations, population stddev") {
        CtmcModel m = train_ctmc({seq({{0, 0}, {1, 8'000}}),
                                  seq({{0, 0}, {1, 12'000}})},
                                 2);
        const auto& d = m.durations.at({0, 1});
        CHECK(d.mean_ms == 10'000.0);
        CHECK_THAT(d.stddev_ms, Catch::Matchers::WithinAbs(2'000.0, 1e-9));
        CHECK(d.count == 2);
    }
    SECTION("absorbing single-state sequence") {
        CtmcModel m = train_ctmc({seq({{0, 0}})}, 1);
        CHECK(m.initial[0] == 1.0);
        CHECK(m.transition_count() == 0);
    }
    SECTION("empty corpus") {
        CHECK_THROWS_AS(train_ctmc({seq({})}, 1), DataError);
    }
}

TEST_CASE("predict worked examples") {
    CtmcModel m = abc_model();
    // durations from training: A->B 10 s, B->C 10 s, A->C 5 s
    SECTION("full lookahead") {
        Prediction p = predict(m, 0, 60'000, 0.01);
        CHECK_THAT(prob_of(p, 1), Catch::Matchers::WithinAbs(0.5, 1e-12));
        CHECK_THAT(prob_of(p, 2), Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
    SECTION("duration pruning leaves only the direct path") {
        Prediction p = predict(m, 0, 5'000, 0.01);
        CHECK(prob_of(p, 1) == 0.0);
        CHECK_THAT(prob_of(p, 2), Catch::Matchers::WithinAbs(0.5, 1e-12));
    }
    SECTION("p_stop above both branches prunes everything") {
        CHECK(predict(m, 0, 60'000, 0.6).empty());
    }
    SECTION("unknown state") {
        CHECK_THROWS_AS(predict(m, 7, 60'000, 0.01), DataError);
    }
}

TEST_CASE("predict matches path enumeration", "[oracle]") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> stop(0.02, 0.3);
    std::uniform_real_distribution<double> look(5'000.0, 120'000.0);
    for (int iter = 0; iter < 250; ++iter) {
        CtmcModel m = oracles::random_ctmc(rng);
        double p_stop = stop(rng);
        double L = look(rng);
        for (std::uint32_t s = 0; s < m.num_states; ++s) {
            Prediction fast = predict(m, s, L, p_stop);
            Prediction slow = oracles::enumerate_prediction(m, s, L, p_stop);
            REQUIRE(fast.size() == slow.size());
            for (const auto& [state, p] : fast)
                REQUIRE_THAT(p, Catch::Matchers::WithinAbs(slow.at(state), 1e-9));
        }
    }
}

TEST_CASE("prediction monotonicity", "[property]") {
    std::mt19937_64 rng(23);
    for (int iter = 0; iter < 40; ++iter) {
        CtmcModel m = oracles::random_ctmc(rng);
        Prediction lo = predict(m, 0, 20'000, 0.05);
        Prediction hi = predict(m, 0, 60'000, 0.05);
        // larger lookahead can only add reachable states and probability mass
        for (const auto& [s, p] : lo) {
            REQUIRE(hi.count(s) == 1);
            REQUIRE(hi.at(s) >= p - 1e-12);
        }
        // stricter p_stop yields a subset
        Prediction strict = predict(m, 0, 60'000, 0.2);
        for (const auto& [s, p] : strict) REQUIRE(hi.count(s) == 1);
    }
}

TEST_CASE("ctmc serialization") {
    CtmcModel m = abc_model();
    SECTION("round trip") {
        CtmcModel back = deserialize_ctmc(serialize_ctmc(m));
        CHECK(back.num_states == m.num_states);
        CHECK(back.initial == m.initial);
        CHECK(back.transitions == m.transitions);
        REQUIRE(back.durations.size() == m.durations.size());
        for (const auto& [k, d] : m.durations) {
            CHECK(back.durations.at(k).mean_ms == d.mean_ms);
            CHECK(back.durations.at(k).count == d.count);
        }
    }
    SECTION("corrupted header") {
        CHECK_THROWS_AS(deserialize_ctmc("{\"format\":\"nope\"}"), DataError);
    }
    SECTION("garbage bytes") {
        CHECK_THROWS_AS(deserialize_ctmc("\x01\x02not json"), DataError);
    }
    SECTION("empty stream") {
        CHECK_THROWS_AS(deserialize_ctmc(""), DataError);
    }
    SECTION("truncated initial vector") {
        nlohmann::json j = ctmc_to_json(m);
        j["initial"] = {1.0};
        CHECK_THROWS_AS(ctmc_from_json(j), DataError);
    }
}
