#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "blockstream/trace.hpp"
#include "blockstream/types.hpp"

namespace blockstream {

/// Scans a content tree and writes the manifest.json the block server needs:
/// file ids assigned in sorted relative-path order.
inline nlohmann::json write_manifest_from_tree(const std::string& root) {
    namespace fs = std::filesystem;
    std::vector<std::pair<std::string, std::uint64_t>> entries;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::string rel = fs::relative(e.path(), root).generic_string();
        if (rel == "manifest.json") continue;
        entries.emplace_back(rel, static_cast<std::uint64_t>(e.file_size()));
    }
    std::sort(entries.begin(), entries.end());
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t i = 0; i < entries.size(); ++i)
        files.push_back({{"id", i},
                         {"path", entries[i].first},
                         {"size", entries[i].second}});
    nlohmann::json manifest{{"version", 1}, {"files", files}};
    std::ofstream out(root + "/manifest.json");
    if (!out) throw DataError("cannot write manifest under " + root);
    out << manifest.dump(2) << '\n';
    return manifest;
}

/// Deterministic filler so desk experiments can synthesize server content
/// matching a trace/bundle manifest without shipping real assets.
inline void fill_deterministic(std::ostream& out, std::uint64_t seed,
                               std::uint64_t bytes) {
    std::uint64_t x = seed * 0x9e3779b97f4a7c15ull + 1;
    char buf[8192];
    while (bytes > 0) {
        std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(bytes, sizeof(buf)));
        for (std::size_t i = 0; i < n; ++i) {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            buf[i] = static_cast<char>(x);
        }
        out.write(buf, static_cast<std::streamsize>(n));
        bytes -= n;
    }
}

/// Materializes a block root (content files + manifest) from a file table
/// with known sizes.
inline void generate_content(const std::string& root, const FileTable& files) {
    namespace fs = std::filesystem;
    fs::create_directories(root);
    nlohmann::json jfiles = nlohmann::json::array();
    for (FileId id = 0; id < files.count(); ++id) {
        const std::string& rel = files.path_of(id);
        std::uint64_t size = files.size_of(id);
        fs::path p = fs::path(root) / rel;
        fs::create_directories(p.parent_path());
        std::ofstream out(p, std::ios::binary);
        if (!out) throw DataError("cannot write " + p.string());
        fill_deterministic(out, id + 1, size);
        jfiles.push_back({{"id", id}, {"path", rel}, {"size", size}});
    }
    nlohmann::json manifest{{"version", 1}, {"files", jfiles}};
    std::ofstream out(root + "/manifest.json");
    out << manifest.dump(2) << '\n';
}

}  // namespace blockstream
