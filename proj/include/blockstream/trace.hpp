#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "blockstream/types.hpp"

namespace blockstream {

/// Interns file paths to dense integer ids. Shared across every trace of a
/// corpus so that BlockIds are comparable across traces, and embedded in the
/// model bundle so test traces resolve to the same ids at replay time.
class FileTable {
public:
    FileId intern(const std::string& path) {
        auto it = ids_.find(path);
        if (it != ids_.end()) return it->second;
        FileId id = static_cast<FileId>(paths_.size());
        paths_.push_back(path);
        sizes_.push_back(0);
        ids_.emplace(path, id);
        return id;
    }

    std::optional<FileId> lookup(const std::string& path) const {
        auto it = ids_.find(path);
        if (it == ids_.end()) return std::nullopt;
        return it->second;
    }

    const std::string& path_of(FileId id) const { return paths_.at(id); }

    void set_size(FileId id, std::uint64_t bytes) { sizes_.at(id) = bytes; }
    std::uint64_t size_of(FileId id) const { return sizes_.at(id); }

    std::size_t count() const { return paths_.size(); }

private:
    std::vector<std::string> paths_;
    std::vector<std::uint64_t> sizes_;  // 0 = unknown
    std::unordered_map<std::string, FileId> ids_;
};

struct ReadRecord {
    std::int64_t timestamp_ms = 0;
    FileId file_id = 0;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;

    bool operator==(const ReadRecord&) const = default;
};

struct Trace {
    std::string trace_id;
    std::vector<ReadRecord> records;            // sorted by timestamp
    std::map<FileId, std::uint64_t> manifest;   // declared file sizes, if any
    bool sorted_on_load = false;                // true if parse had to re-sort

    bool operator==(const Trace& o) const {
        return records == o.records && manifest == o.manifest;
    }
};

/// One ReadRecord becomes one BlockRead per distinct block touched by
/// [offset, offset+length), ascending block index, all at the record's
/// timestamp. A zero-length read touches nothing.
inline std::vector<BlockRead> expand_record(const ReadRecord& r,
                                            std::uint32_t block_size = kDefaultBlockSize) {
    std::vector<BlockRead> out;
    if (r.length == 0) return out;
    std::uint64_t first = r.offset / block_size;
    std::uint64_t last = (r.offset + r.length - 1) / block_size;
    out.reserve(static_cast<std::size_t>(last - first + 1));
    for (std::uint64_t b = first; b <= last; ++b) {
        out.push_back(BlockRead{r.timestamp_ms,
                                BlockId{r.file_id, static_cast<std::uint32_t>(b)}});
    }
    return out;
}

inline std::vector<BlockRead> expand_trace(const Trace& t,
                                           std::uint32_t block_size = kDefaultBlockSize) {
    std::vector<BlockRead> out;
    for (const auto& r : t.records) {
        auto blocks = expand_record(r, block_size);
        out.insert(out.end(), blocks.begin(), blocks.end());
    }
    return out;
}

struct ParseOptions {
    bool strict = false;  // reject unsorted timestamps instead of sorting
};

/// Trace file format: UTF-8 text, one record per line,
///   timestamp_ms<TAB>path<TAB>offset<TAB>length
/// `#` starts a comment; `#file<TAB>path<TAB>size_bytes` declares a manifest
/// entry. Unknown trailing fields on a record line are ignored.
inline Trace parse_trace(std::istream& in, FileTable& files,
                         const ParseOptions& opts = {},
                         const std::string& trace_id = "") {
    Trace t;
    t.trace_id = trace_id;
    std::string line;
    std::size_t lineno = 0;

    auto fail = [&](const std::string& what) {
        throw ParseError("trace parse error at line " + std::to_string(lineno) +
                         ": " + what);
    };

    auto split_tabs = [](const std::string& s) {
        std::vector<std::string> f;
        std::size_t start = 0;
        while (true) {
            std::size_t pos = s.find('\t', start);
            if (pos == std::string::npos) {
                f.push_back(s.substr(start));
                break;
            }
            f.push_back(s.substr(start, pos - start));
            start = pos + 1;
        }
        return f;
    };

    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto f = split_tabs(line);
            if (f[0] == "#file" && f.size() >= 3) {
                FileId id = files.intern(f[1]);
                std::uint64_t size = 0;
                try {
                    size = std::stoull(f[2]);
                } catch (const std::exception&) {
                    fail("bad manifest size '" + f[2] + "'");
                }
                files.set_size(id, size);
                t.manifest[id] = size;
            }
            continue;
        }
        auto f = split_tabs(line);
        if (f.size() < 4) fail("expected 4 tab-separated fields");
        ReadRecord rec;
        try {
            long long ts = std::stoll(f[0]);
            if (ts < 0) fail("negative timestamp");
            rec.timestamp_ms = ts;
            rec.file_id = files.intern(f[1]);
            long long off = std::stoll(f[2]);
            if (off < 0) fail("negative offset");
            rec.offset = static_cast<std::uint64_t>(off);
            long long len = std::stoll(f[3]);
            if (len < 0) fail("negative length");
            rec.length = static_cast<std::uint64_t>(len);
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception&) {
            fail("malformed field");
        }
        auto it = t.manifest.find(rec.file_id);
        if (it != t.manifest.end() && rec.offset + rec.length > it->second)
            fail("read past declared file size");
        t.records.push_back(rec);
    }
    if (t.records.empty()) throw ParseError("empty trace");

    bool sorted = std::is_sorted(t.records.begin(), t.records.end(),
                                 [](const ReadRecord& a, const ReadRecord& b) {
                                     return a.timestamp_ms < b.timestamp_ms;
                                 });
    if (!sorted) {
        if (opts.strict) throw ParseError("timestamps not sorted (strict mode)");
        std::stable_sort(t.records.begin(), t.records.end(),
                         [](const ReadRecord& a, const ReadRecord& b) {
                             return a.timestamp_ms < b.timestamp_ms;
                         });
        t.sorted_on_load = true;
    }
    return t;
}

inline void serialize_trace(const Trace& t, const FileTable& files,
                            std::ostream& out) {
    for (const auto& [id, size] : t.manifest)
        out << "#file\t" << files.path_of(id) << '\t' << size << '\n';
    for (const auto& r : t.records)
        out << r.timestamp_ms << '\t' << files.path_of(r.file_id) << '\t'
            << r.offset << '\t' << r.length << '\n';
}

}  // namespace blockstream
