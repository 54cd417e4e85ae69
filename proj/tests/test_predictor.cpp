#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "blockstream/predictor.hpp"

using namespace blockstream;

namespace {

BlockSet keys(std::uint32_t first, std::uint32_t count) {
    BlockSet out;
    for (std::uint32_t i = 0; i < count; ++i)
        out.push_back(block_key(BlockId{0, first + i}));
    return out;
}

// States: 0 (current) -> 1 with p=0.5, -> 2 with p=0.005. Durations 1 s.
ModelBundle gated_bundle() {
    ModelBundle b;
    Superblock s0, s1, s2;
    s0.id = 0;
    s0.blocks = keys(0, 4);
    s0.timestamps[0] = {0};
    s1.id = 1;
    s1.blocks = keys(100, 4);
    s1.timestamps[0] = {1000};
    s2.id = 2;
    s2.blocks = keys(200, 4);
    s2.timestamps[0] = {1000};
    b.superblocks = {s0, s1, s2};
    b.ctmc.num_states = 3;
    b.ctmc.initial = {1.0, 0.0, 0.0};
    b.ctmc.transitions.resize(3);
    b.ctmc.transitions[0] = {{1, 0.5}, {2, 0.005}};
    b.ctmc.durations[{0, 1}] = DurationStat{1000.0, 0.0, 1};
    b.ctmc.durations[{0, 2}] = DurationStat{1000.0, 0.0, 1};
    return b;
}

PredictorConfig gated_cfg() {
    PredictorConfig cfg;
    cfg.p_stop = 0.001;
    cfg.p_download = 0.02;
    return cfg;
}

// read all four blocks of superblock 0 at t=0, then a far read to close it
std::optional<PrefetchRequest> drive(Predictor& p) {
    std::optional<PrefetchRequest> req;
    for (std::uint32_t i = 0; i < 4; ++i)
        req = p.observe(BlockRead{0, BlockId{0, i}});
    REQUIRE_FALSE(req.has_value());
    return p.observe(BlockRead{1000, BlockId{0, 100}});
}

}  // namespace

TEST_CASE("p_download gates low-probability superblocks") {
    ModelBundle b = gated_bundle();
    Predictor p(b, gated_cfg(), [](BlockKey) { return false; });
    auto req = drive(p);
    REQUIRE(req.has_value());
    CHECK(req->issue_ts == 1000);
    CHECK(req->source_superblocks == std::vector<std::uint32_t>{1});
    std::set<BlockKey> got;
    for (BlockId id : req->blocks) got.insert(block_key(id));
    BlockSet want = keys(100, 4);
    CHECK(got == std::set<BlockKey>(want.begin(), want.end()));
}

TEST_CASE("fully cached prediction yields no request") {
    ModelBundle b = gated_bundle();
    Predictor p(b, gated_cfg(), [](BlockKey) { return true; });
    CHECK_FALSE(drive(p).has_value());
}

TEST_CASE("in-flight blocks are not requested twice") {
    ModelBundle b = gated_bundle();
    Predictor p(b, gated_cfg(), [](BlockKey) { return false; });
    auto first = drive(p);
    REQUIRE(first.has_value());
    // close a second identical partition without the cache filling up
    for (std::uint32_t i = 0; i < 4; ++i)
        p.observe(BlockRead{2000, BlockId{0, i}});
    auto second = p.observe(BlockRead{3000, BlockId{0, 100}});
    CHECK_FALSE(second.has_value());
    // after the cache confirms them, a new request may form again
    for (BlockId id : first->blocks) p.note_cached(block_key(id));
    CHECK(p.stats().requests_issued == 1);
}

TEST_CASE("current partition blocks are excluded from the request") {
    ModelBundle b = gated_bundle();
    // make the predicted superblock overlap the observed partition
    b.superblocks[1].blocks = keys(2, 4);  // blocks 2,3 overlap partition 0..3
    Predictor p(b, gated_cfg(), [](BlockKey) { return false; });
    std::optional<PrefetchRequest> req;
    for (std::uint32_t i = 0; i < 4; ++i)
        req = p.observe(BlockRead{0, BlockId{0, i}});
    req = p.observe(BlockRead{1000, BlockId{0, 100}});
    REQUIRE(req.has_value());
    std::set<BlockKey> got;
    for (BlockId id : req->blocks) got.insert(block_key(id));
    CHECK(got == std::set<BlockKey>{block_key(BlockId{0, 4}),
                                    block_key(BlockId{0, 5})});
}

TEST_CASE("unmatched partitions issue nothing and are counted") {
    ModelBundle b = gated_bundle();
    Predictor p(b, gated_cfg(), [](BlockKey) { return false; });
    p.observe(BlockRead{0, BlockId{0, 999}});
    auto req = p.observe(BlockRead{1000, BlockId{0, 998}});
    CHECK_FALSE(req.has_value());
    CHECK(p.stats().partitions_unmatched == 1);
}

TEST_CASE("flush closes the trailing partition") {
    ModelBundle b = gated_bundle();
    Predictor p(b, gated_cfg(), [](BlockKey) { return false; });
    for (std::uint32_t i = 0; i < 4; ++i)
        p.observe(BlockRead{0, BlockId{0, i}});
    auto req = p.flush();
    REQUIRE(req.has_value());
    CHECK(req->issue_ts == 0);
    CHECK(p.current_state() == 0u);
}

TEST_CASE("speed estimate") {
    SECTION("observation equal to the model mean keeps ratio 1") {
        SpeedEstimate e = update_speed(SpeedEstimate{1.0}, 5000.0, 5000.0);
        CHECK_THAT(e.ratio, Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
    SECTION("repeated observations at half the mean approach ratio 2") {
        SpeedEstimate e;
        for (int i = 0; i < 60; ++i) e = update_speed(e, 2500.0, 5000.0);
        CHECK_THAT(e.ratio, Catch::Matchers::WithinAbs(2.0, 1e-3));
    }
    SECTION("one extreme outlier is clamped") {
        SpeedEstimate e = update_speed(SpeedEstimate{1.0}, 50.0, 5000.0);
        CHECK(e.ratio <= kSpeedRatioMax);
    }
    SECTION("slow outlier clamps at the lower bound") {
        SpeedEstimate e{0.3};
        for (int i = 0; i < 60; ++i) e = update_speed(e, 500'000.0, 5000.0);
        CHECK(e.ratio >= kSpeedRatioMin);
    }
    SECTION("zero or negative observed duration is defensively handled") {
        CHECK_NOTHROW(update_speed(SpeedEstimate{1.0}, 0.0, 5000.0));
    }
}

TEST_CASE("effective lookahead scales with speed") {
    PredictorConfig cfg;
    cfg.lookahead_ms = 60'000;
    CHECK(effective_lookahead(cfg, SpeedEstimate{1.0}) == 60'000.0);
    CHECK(effective_lookahead(cfg, SpeedEstimate{2.0}) == 120'000.0);
    // a ratio of 10 never occurs: update_speed clamps to 4
    SpeedEstimate e{1.0};
    for (int i = 0; i < 100; ++i) e = update_speed(e, 500.0, 5000.0);
    CHECK(effective_lookahead(cfg, e) == 240'000.0);
}
