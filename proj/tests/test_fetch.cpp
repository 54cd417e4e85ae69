#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <mutex>
#include <thread>

#include "blockstream/fetch.hpp"
#include "blockstream/server.hpp"
#include "blockstream/shard.hpp"

using namespace blockstream;

namespace {

constexpr std::uint32_t kBs = 1024;

struct ServerFixture {
    std::filesystem::path root;
    std::unique_ptr<BlockServer> server;
    std::uint16_t port = 0;

    explicit ServerFixture(ServerConfig cfg = {}) {
        root = std::filesystem::temp_directory_path() / "bs-test-root";
        std::filesystem::remove_all(root);
        FileTable files;
        FileId f0 = files.intern("data/alpha.bin");
        files.set_size(f0, 64 * kBs);
        FileId f1 = files.intern("data/beta.bin");
        files.set_size(f1, 8 * kBs);
        generate_content(root.string(), files);

        cfg.root = root.string();
        cfg.block_size = kBs;
        server = std::make_unique<BlockServer>(std::move(cfg));
        port = server->start();
    }

    ~ServerFixture() {
        server->stop();
        std::filesystem::remove_all(root);
    }

    std::vector<std::uint8_t> expected_block(FileId fid, std::uint32_t idx) const {
        std::ostringstream buf;
        fill_deterministic(buf, fid + 1, (idx + 1) * static_cast<std::uint64_t>(kBs));
        std::string s = buf.str();
        return {s.begin() + idx * kBs, s.begin() + (idx + 1) * kBs};
    }
};

}  // namespace

TEST_CASE("wire request encode/decode round trip") {
    std::vector<BlockRange> ranges{{5, 3}, {100, 1}};
    auto body = wire::encode_request(7, ranges);
    wire::Frame f{FrameType::SpecReq, 42, body};
    WireRequest req = wire::decode_request(f);
    CHECK(req.file_id == 7);
    CHECK(req.request_id == 42);
    REQUIRE(req.ranges.size() == 2);
    CHECK(req.ranges[0].first_block == 5);
    CHECK(req.ranges[0].count == 3);
    CHECK(req.ranges[1].first_block == 100);
    CHECK(req.ranges[1].count == 1);
}

TEST_CASE("wire u32 big-endian layout") {
    std::vector<std::uint8_t> buf;
    wire::put_u32(buf, 0x01020304u);
    REQUIRE(buf == std::vector<std::uint8_t>({1, 2, 3, 4}));
    CHECK(wire::get_u32(buf.data()) == 0x01020304u);
}

TEST_CASE("coalesce_ranges") {
    SECTION("contiguous blocks of one file form a single range") {
        auto out = coalesce_ranges({{0, 5}, {0, 6}, {0, 7}});
        REQUIRE(out.size() == 1);
        REQUIRE(out[0].second.size() == 1);
        CHECK(out[0].second[0].first_block == 5);
        CHECK(out[0].second[0].count == 3);
    }
    SECTION("gaps and file switches split ranges") {
        auto out = coalesce_ranges({{0, 1}, {0, 2}, {0, 9}, {1, 0}});
        REQUIRE(out.size() == 2);
        CHECK(out[0].second.size() == 2);
        CHECK(out[1].first == 1);
    }
}

TEST_CASE("fetch queue") {
    SECTION("duplicates are filtered") {
        FetchQueue q;
        q.enqueue({{{0, 1}, 0}, {{0, 1}, 0}, {{0, 2}, 0}});
        CHECK(q.size() == 2);
    }
    SECTION("overflow drops the oldest entries") {
        FetchQueue q(4);
        std::vector<QueuedBlock> blocks;
        for (std::uint32_t i = 0; i < 6; ++i) blocks.push_back({{0, i}, 0});
        q.enqueue(blocks);
        CHECK(q.dropped() == 2);
        auto batch = q.pop_batch(10);
        REQUIRE(batch.size() == 4);
        CHECK(batch[0].block.block_index == 2);  // 0 and 1 were dropped
        CHECK(batch[3].block.block_index == 5);
    }
    SECTION("pop preserves FIFO order") {
        FetchQueue q;
        q.enqueue({{{0, 3}, 0}, {{0, 1}, 0}, {{0, 2}, 0}});
        auto batch = q.pop_batch(10);
        REQUIRE(batch.size() == 3);
        CHECK(batch[0].block.block_index == 3);
        CHECK(batch[1].block.block_index == 1);
        CHECK(batch[2].block.block_index == 2);
    }
    SECTION("close unblocks pop") {
        FetchQueue q;
        q.close();
        CHECK(q.pop_batch(10).empty());
        CHECK(q.closed());
    }
}

TEST_CASE("urgent fetch returns verified content") {
    ServerFixture fx;
    FetchClient client("127.0.0.1", fx.port, kBs);

    SECTION("single block") {
        auto got = client.fetch_urgent({{0, 3}});
        REQUIRE(got.size() == 1);
        CHECK(got[0].block == BlockId{0, 3});
        CHECK(got[0].payload == fx.expected_block(0, 3));
    }
    SECTION("16-block range arrives in order") {
        std::vector<BlockId> want;
        for (std::uint32_t i = 8; i < 24; ++i) want.push_back({0, i});
        auto got = client.fetch_urgent(want);
        REQUIRE(got.size() == 16);
        for (std::size_t i = 0; i < 16; ++i) {
            CHECK(got[i].block == want[i]);
            CHECK(got[i].payload == fx.expected_block(0, want[i].block_index));
        }
    }
    SECTION("empty request is an empty success") {
        CHECK(client.fetch_urgent({}).empty());
    }
    SECTION("unknown file id") {
        CHECK_THROWS_AS(client.fetch_urgent({{57, 0}}), DataError);
    }
    SECTION("out-of-range block index") {
        CHECK_THROWS_AS(client.fetch_urgent({{1, 5000}}), DataError);
    }
}

TEST_CASE("speculative drain inserts pinned, in enqueue order") {
    ServerFixture fx;
    auto dir = std::filesystem::temp_directory_path() / "bs-test-fetch-store";
    std::filesystem::remove_all(dir);
    BlockStore store(dir.string(), kBs, 0);
    FetchClient client("127.0.0.1", fx.port, kBs);

    FetchQueue queue;
    std::mutex mu;
    std::vector<BlockId> completed;
    client.run_speculative(queue, store, [&](const QueuedBlock& qb) {
        std::scoped_lock lock(mu);
        completed.push_back(qb.block);
    });

    std::vector<QueuedBlock> want;
    for (std::uint32_t i = 0; i < 12; ++i) want.push_back({{0, i * 2}, 5});
    queue.enqueue(want);
    queue.close();
    client.stop_speculative();

    REQUIRE(completed.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(completed[i] == want[i].block);
    for (const auto& qb : want) {
        auto data = store.read(qb.block, 10);
        REQUIRE(data.has_value());
        CHECK(*data == fx.expected_block(0, qb.block.block_index));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("urgent traffic preempts speculative transmission") {
    ServerConfig cfg;
    cfg.bandwidth_cap_bps = 2e6;  // ~4 ms per 1 KB block keeps spec slow
    ServerFixture fx(std::move(cfg));

    std::mutex mu;
    std::vector<ServerEvent> events;
    fx.server->set_event_hook([&](const ServerEvent& e) {
        std::scoped_lock lock(mu);
        events.push_back(e);
    });

    auto dir = std::filesystem::temp_directory_path() / "bs-test-prio-store";
    std::filesystem::remove_all(dir);
    BlockStore store(dir.string(), kBs, 0);
    FetchClient client("127.0.0.1", fx.port, kBs);

    FetchQueue queue;
    client.run_speculative(queue, store, {}, /*max_batch=*/64);
    std::vector<QueuedBlock> spec;
    for (std::uint32_t i = 0; i < 60; ++i) spec.push_back({{0, i}, 0});
    queue.enqueue(spec);

    std::this_thread::sleep_for(std::chrono::milliseconds(30));  // spec underway
    auto urgent = client.fetch_urgent({{1, 0}, {1, 1}});
    REQUIRE(urgent.size() == 2);

    queue.close();
    client.stop_speculative();
    // the final SpecBlockSent is emitted after the pacing sleep, which can
    // trail the client's last read by a few milliseconds
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    fx.server->set_event_hook(nullptr);

    // between UrgentStart and UrgentDone at most one speculative block may
    // land (the one already in flight when the urgent request arrived)
    std::scoped_lock lock(mu);
    bool urgent_active = false;
    int spec_during_urgent = 0;
    int spec_total = 0;
    for (const auto& e : events) {
        if (e.kind == ServerEvent::UrgentStart) urgent_active = true;
        if (e.kind == ServerEvent::UrgentDone) urgent_active = false;
        if (e.kind == ServerEvent::SpecBlockSent) {
            ++spec_total;
            if (urgent_active) ++spec_during_urgent;
        }
    }
    CHECK(spec_total == 60);
    CHECK(spec_during_urgent <= 1);
    std::filesystem::remove_all(dir);
}
