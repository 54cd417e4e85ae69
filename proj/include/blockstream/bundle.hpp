#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "blockstream/ctmc.hpp"
#include "blockstream/grouping.hpp"
#include "blockstream/resident.hpp"
#include "blockstream/trace.hpp"
#include "blockstream/types.hpp"

namespace blockstream {

struct TrainParams {
    std::int64_t delta_ms = 100;
    double tau = 0.9;
    std::size_t min_superblock_size = 17;
    double containment = 0.9;
};

/// Deployable "app model": superblock definitions, the trained chain, the
/// file table the ids refer to, and the resident-set ranking derived from
/// the same training corpus.
struct ModelBundle {
    std::uint32_t block_size = kDefaultBlockSize;
    TrainParams params;
    FileTable files;
    std::vector<Superblock> superblocks;
    CtmcModel ctmc;
    std::vector<BlockKey> resident_order;
};

inline ModelBundle train_bundle(const std::vector<Trace>& traces,
                                const FileTable& files, const TrainParams& params,
                                std::uint32_t block_size = kDefaultBlockSize) {
    if (traces.empty()) throw DataError("training requires at least one trace");

    ModelBundle b;
    b.block_size = block_size;
    b.params = params;
    b.files = files;

    std::vector<std::vector<BlockRead>> expanded;
    expanded.reserve(traces.size());
    for (const auto& t : traces) expanded.push_back(expand_trace(t, block_size));

    std::vector<std::vector<EquivalentPartition>> equiv_sets;
    for (const auto& reads : expanded) {
        auto parts = partition_trace(reads, params.delta_ms);
        equiv_sets.push_back(merge_equivalent(parts, params.tau));
    }

    b.superblocks = create_superblocks(std::move(equiv_sets),
                                       params.min_superblock_size);

    std::vector<SuperblockSequence> sequences;
    for (std::size_t i = 0; i < expanded.size(); ++i) {
        sequences.push_back(to_superblock_sequence(expanded[i], b.superblocks,
                                                   params.delta_ms,
                                                   params.containment,
                                                   traces[i].trace_id));
    }
    b.ctmc = train_ctmc(sequences, static_cast<std::uint32_t>(b.superblocks.size()));
    b.resident_order = resident_ranking(expanded);
    return b;
}

inline nlohmann::json bundle_to_json(const ModelBundle& b) {
    nlohmann::json j;
    j["format"] = "blockstream-model";
    j["version"] = 1;
    j["block_size"] = b.block_size;
    j["params"] = {{"delta_ms", b.params.delta_ms},
                   {"tau", b.params.tau},
                   {"min_superblock_size", b.params.min_superblock_size},
                   {"containment", b.params.containment}};
    nlohmann::json files = nlohmann::json::array();
    for (FileId id = 0; id < b.files.count(); ++id)
        files.push_back({{"path", b.files.path_of(id)}, {"size", b.files.size_of(id)}});
    j["files"] = std::move(files);
    nlohmann::json sbs = nlohmann::json::array();
    for (const auto& sb : b.superblocks) {
        nlohmann::json ts;
        for (const auto& [t, list] : sb.timestamps) ts[std::to_string(t)] = list;
        sbs.push_back({{"id", sb.id}, {"blocks", sb.blocks}, {"timestamps", ts}});
    }
    j["superblocks"] = std::move(sbs);
    j["ctmc"] = ctmc_to_json(b.ctmc);
    j["resident_order"] = b.resident_order;
    return j;
}

inline ModelBundle bundle_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != "blockstream-model")
        throw DataError("model bundle: bad header");
    if (j.value("version", 0) != 1)
        throw DataError("model bundle: unsupported version");
    ModelBundle b;
    b.block_size = j.at("block_size").get<std::uint32_t>();
    const auto& p = j.at("params");
    b.params.delta_ms = p.at("delta_ms").get<std::int64_t>();
    b.params.tau = p.at("tau").get<double>();
    b.params.min_superblock_size = p.at("min_superblock_size").get<std::size_t>();
    b.params.containment = p.at("containment").get<double>();
    for (const auto& f : j.at("files")) {
        FileId id = b.files.intern(f.at("path").get<std::string>());
        b.files.set_size(id, f.at("size").get<std::uint64_t>());
    }
    for (const auto& js : j.at("superblocks")) {
        Superblock sb;
        sb.id = js.at("id").get<std::uint32_t>();
        sb.blocks = js.at("blocks").get<std::vector<BlockKey>>();
        for (const auto& [key, list] : js.at("timestamps").items())
            sb.timestamps[std::stoul(key)] = list.get<std::vector<std::int64_t>>();
        b.superblocks.push_back(std::move(sb));
    }
    b.ctmc = ctmc_from_json(j.at("ctmc"));
    b.resident_order = j.at("resident_order").get<std::vector<BlockKey>>();
    return b;
}

inline void save_bundle(const ModelBundle& b, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << bundle_to_json(b).dump(2) << '\n';
}

inline ModelBundle load_bundle(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw DataError("model bundle: corrupted document");
    return bundle_from_json(j);
}

}  // namespace blockstream
