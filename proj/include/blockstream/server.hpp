#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>
#include <netinet/in.h>
#include <netinet/tcp.h>

#include "blockstream/types.hpp"
#include "blockstream/wire.hpp"

namespace blockstream {

/// Content root: a directory of plain files plus a manifest.json mapping
/// dense file ids to relative paths. Blocks are addressed as
/// (file_id, block_index) and served straight from the files.
class BlockRoot {
public:
    BlockRoot(const std::string& dir, std::uint32_t block_size)
        : dir_(dir), block_size_(block_size) {
        std::ifstream in(dir_ + "/manifest.json");
        if (!in) throw DataError("block root: missing manifest.json in " + dir);
        nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded() || j.value("version", 0) != 1)
            throw DataError("block root: bad manifest");
        for (const auto& f : j.at("files")) {
            Entry e;
            e.path = dir_ + "/" + f.at("path").get<std::string>();
            e.size = f.at("size").get<std::uint64_t>();
            std::uint32_t id = f.at("id").get<std::uint32_t>();
            if (id >= files_.size()) files_.resize(id + 1);
            files_[id] = std::move(e);
        }
    }

    std::uint32_t block_size() const { return block_size_; }

    /// Reads one block, zero-padded at the file tail. Returns false for
    /// unknown files or out-of-range indexes.
    bool read_block(FileId file_id, std::uint32_t index,
                    std::vector<std::uint8_t>& out) const {
        if (file_id >= files_.size() || files_[file_id].path.empty()) return false;
        const Entry& e = files_[file_id];
        std::uint64_t off = static_cast<std::uint64_t>(index) * block_size_;
        if (off >= e.size) return false;
        std::scoped_lock lock(mu_);
        std::FILE* f = std::fopen(e.path.c_str(), "rb");
        if (!f) throw DataError("block root: cannot open " + e.path);
        out.assign(block_size_, 0);
        std::fseek(f, static_cast<long>(off), SEEK_SET);
        std::fread(out.data(), 1, block_size_, f);
        std::fclose(f);
        return true;
    }

private:
    struct Entry {
        std::string path;
        std::uint64_t size = 0;
    };
    std::string dir_;
    std::uint32_t block_size_;
    std::vector<Entry> files_;
    mutable std::mutex mu_;
};

struct ServerConfig {
    std::string root;
    std::uint16_t port = 0;              // 0 = ephemeral
    std::uint32_t block_size = kDefaultBlockSize;
    double bandwidth_cap_bps = 0.0;      // 0 = uncapped (test throttling)
    std::int64_t rtt_sim_ms = 0;         // added latency for desk experiments
};

struct ServerEvent {
    enum Kind { UrgentStart, UrgentDone, SpecBlockSent, SpecReqStart, SpecReqDone };
    Kind kind;
    std::uint32_t request_id;
};

/// Block storage server. Urgent requests take priority over speculative
/// ones: a speculative response pauses between blocks whenever an urgent
/// request is pending anywhere on the server.
class BlockServer {
public:
    using EventHook = std::function<void(const ServerEvent&)>;

    explicit BlockServer(ServerConfig cfg)
        : cfg_(std::move(cfg)), root_(cfg_.root, cfg_.block_size) {}

    ~BlockServer() { stop(); }

    std::uint16_t start() {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw NetworkError("socket() failed");
        int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(cfg_.port);
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
            throw NetworkError("bind failed");
        if (::listen(listen_fd_, 16) != 0) throw NetworkError("listen failed");
        socklen_t len = sizeof(addr);
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        running_ = true;
        accept_thread_ = std::thread([this] { accept_loop(); });
        return port_;
    }

    void stop() {
        if (!running_.exchange(false)) return;
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        if (accept_thread_.joinable()) accept_thread_.join();
        std::vector<std::thread> workers;
        {
            std::scoped_lock lock(mu_);
            workers.swap(workers_);
            for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
        }
        for (auto& t : workers)
            if (t.joinable()) t.join();
    }

    std::uint16_t port() const { return port_; }

    void set_event_hook(EventHook hook) { hook_ = std::move(hook); }

private:
    void emit(ServerEvent::Kind kind, std::uint32_t id) {
        if (hook_) hook_(ServerEvent{kind, id});
    }

    void accept_loop() {
        while (running_) {
            int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) break;
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
            std::scoped_lock lock(mu_);
            conn_fds_.push_back(fd);
            workers_.emplace_back([this, fd] { serve_connection(fd); });
        }
    }

    void pace(std::size_t bytes) {
        if (cfg_.bandwidth_cap_bps <= 0.0) return;
        // accumulate debt and measure the actual sleep so scheduler
        // overshoot does not compound across thousands of blocks
        thread_local double debt_s = 0.0;
        debt_s += static_cast<double>(bytes) * 8.0 / cfg_.bandwidth_cap_bps;
        if (debt_s > 0.002) {
            auto t0 = std::chrono::steady_clock::now();
            std::this_thread::sleep_for(std::chrono::duration<double>(debt_s));
            debt_s -= std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        }
    }

    void serve_connection(int fd) {
        try {
            wire::Frame frame;
            while (running_ && wire::recv_frame(fd, frame)) {
                if (frame.type != FrameType::UrgentReq &&
                    frame.type != FrameType::SpecReq) {
                    send_error(fd, frame.request_id, kErrBadRequest, "unexpected frame");
                    continue;
                }
                WireRequest req = wire::decode_request(frame);
                if (req.type == FrameType::UrgentReq) {
                    pending_urgent_.fetch_add(1);
                    emit(ServerEvent::UrgentStart, req.request_id);
                    handle_request(fd, req, /*urgent=*/true);
                    pending_urgent_.fetch_sub(1);
                    urgent_cv_.notify_all();
                    emit(ServerEvent::UrgentDone, req.request_id);
                } else {
                    emit(ServerEvent::SpecReqStart, req.request_id);
                    handle_request(fd, req, /*urgent=*/false);
                    emit(ServerEvent::SpecReqDone, req.request_id);
                }
            }
        } catch (const std::exception&) {
            // connection torn down; nothing to clean up beyond the fd
        }
        ::close(fd);
    }

    void handle_request(int fd, const WireRequest& req, bool urgent) {
        const std::uint32_t bs = cfg_.block_size;
        if (cfg_.rtt_sim_ms > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.rtt_sim_ms));

        // validate the whole request first so errors are atomic
        std::vector<std::pair<std::uint32_t, std::vector<std::uint8_t>>> blocks;
        for (const auto& r : req.ranges) {
            for (std::uint32_t i = 0; i < r.count; ++i) {
                std::vector<std::uint8_t> data;
                if (!root_.read_block(req.file_id, r.first_block + i, data)) {
                    send_error(fd, req.request_id, kErrNotFound, "unknown block");
                    return;
                }
                blocks.emplace_back(r.first_block + i, std::move(data));
            }
        }

        std::vector<std::uint8_t> body;
        wire::put_u32(body, req.request_id);  // echo
        wire::put_u32(body, static_cast<std::uint32_t>(blocks.size()));
        std::vector<std::uint8_t> header = body;

        // stream block by block so speculative traffic can yield to urgent
        {
            std::vector<std::uint8_t> frame;
            std::uint32_t total = static_cast<std::uint32_t>(
                5 + header.size() + blocks.size() * (12 + bs));
            wire::put_u32(frame, total);
            frame.push_back(static_cast<std::uint8_t>(FrameType::Resp));
            wire::put_u32(frame, req.request_id);
            frame.insert(frame.end(), header.begin(), header.end());
            wire::send_all(fd, frame.data(), frame.size());
        }
        for (const auto& [index, data] : blocks) {
            if (!urgent) {
                std::unique_lock lock(urgent_mu_);
                while (pending_urgent_.load() != 0 && running_)
                    urgent_cv_.wait_for(lock, std::chrono::milliseconds(1));
            }
            std::vector<std::uint8_t> piece;
            wire::put_u32(piece, req.file_id);
            wire::put_u32(piece, index);
            wire::put_u32(piece, wire::payload_crc(data.data(), data.size()));
            piece.insert(piece.end(), data.begin(), data.end());
            wire::send_all(fd, piece.data(), piece.size());
            pace(piece.size());
            if (!urgent) emit(ServerEvent::SpecBlockSent, req.request_id);
        }
    }

    void send_error(int fd, std::uint32_t request_id, std::uint32_t code,
                    const std::string& msg) {
        std::vector<std::uint8_t> body;
        wire::put_u32(body, code);
        wire::put_u32(body, static_cast<std::uint32_t>(msg.size()));
        body.insert(body.end(), msg.begin(), msg.end());
        wire::send_frame(fd, FrameType::Error, request_id, body);
    }

    ServerConfig cfg_;
    BlockRoot root_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> running_{false};
    std::atomic<int> pending_urgent_{0};
    std::mutex urgent_mu_;
    std::condition_variable urgent_cv_;
    std::thread accept_thread_;
    std::mutex mu_;
    std::vector<std::thread> workers_;
    std::vector<int> conn_fds_;
    EventHook hook_;
};

}  // namespace blockstream
