// blockstream command-line entry point: trace synthesis, model training,
// trace-driven simulation, parameter sweeps, block serving and live replay.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "blockstream/bundle.hpp"
#include "blockstream/config.hpp"
#include "blockstream/pair_model.hpp"
#include "blockstream/replay.hpp"
#include "blockstream/server.hpp"
#include "blockstream/shard.hpp"
#include "blockstream/sim.hpp"
#include "blockstream/synth.hpp"
#include "blockstream/trace.hpp"

namespace {

using namespace blockstream;

double parse_bandwidth(const std::string& s) {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    std::string unit = s.substr(pos);
    if (unit.empty() || unit == "bps") return v;
    if (unit == "kbps" || unit == "Kbps") return v * 1e3;
    if (unit == "Mbps" || unit == "mbps") return v * 1e6;
    if (unit == "Gbps" || unit == "gbps") return v * 1e9;
    throw ConfigError("unknown bandwidth unit '" + unit + "'");
}

std::pair<std::string, std::uint16_t> parse_hostport(const std::string& s) {
    auto colon = s.rfind(':');
    if (colon == std::string::npos)
        throw ConfigError("expected host:port, got '" + s + "'");
    return {s.substr(0, colon),
            static_cast<std::uint16_t>(std::stoi(s.substr(colon + 1)))};
}

std::vector<Trace> load_traces(const std::vector<std::string>& paths,
                               FileTable& files, bool strict) {
    std::vector<Trace> traces;
    for (const auto& p : paths) {
        std::ifstream in(p);
        if (!in) throw DataError("cannot read trace file " + p);
        try {
            traces.push_back(parse_trace(in, files, ParseOptions{strict}, p));
        } catch (const ParseError& e) {
            throw ParseError(p + ": " + e.what());
        }
    }
    return traces;
}

struct CommonFlags {
    std::string config_path;
    RunConfig cfg = RunConfig::defaults();

    void add(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file (flat keys)");
        cmd->add_option("--delta-ms", overrides["delta_ms"], "partition gap threshold");
        cmd->add_option("--tau", overrides["tau"], "partition similarity threshold");
        cmd->add_option("--p-stop", overrides["p_stop"], "DFS pruning threshold");
        cmd->add_option("--p-download", overrides["p_download"], "prefetch probability gate");
        cmd->add_option("--lookahead-s", overrides["lookahead_s"], "prediction horizon, seconds");
        cmd->add_option("--containment", overrides["containment"], "superblock match ratio");
        cmd->add_option("--min-superblock-size", overrides["min_superblock_size"],
                        "superblock extraction threshold");
        cmd->add_option("--b-initial-bytes", overrides["b_initial_bytes"],
                        "resident set byte budget");
        cmd->add_option("--temp-limit-bytes", overrides["temp_limit_bytes"],
                        "temporary storage hard limit (0 = unlimited)");
        cmd->add_option("--bandwidth-bps", overrides["bandwidth_bps"], "link bandwidth");
        cmd->add_option("--rtt-ms", overrides["rtt_ms"], "link round-trip time");
        cmd->add_option("--fp-window-s", overrides["fp_window_s"],
                        "false positive window, seconds");
    }

    RunConfig resolve(const CLI::App* cmd) {
        if (!config_path.empty()) cfg.load_file(config_path);
        nlohmann::json j = nlohmann::json::object();
        for (auto& [key, value] : overrides) {
            std::string flag = "--" + key;
            for (auto& c : flag)
                if (c == '_') c = '-';
            if (cmd->count(flag)) j[key] = value;
        }
        cfg.apply_json(j);
        std::cerr << "resolved config: " << cfg.resolved().dump() << "\n";
        return cfg;
    }

    std::map<std::string, double> overrides;
};

int cmd_synth(const std::string& spec_path, std::uint64_t seed,
              const std::string& out_path) {
    std::ifstream in(spec_path);
    if (!in) throw ConfigError("cannot read synth spec " + spec_path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("synth spec is not valid JSON");
    SynthSpec spec = SynthSpec::from_json(j);
    FileTable files;
    Trace t = synth_trace(spec, seed, files);
    std::ostringstream text;
    serialize_trace(t, files, text);
    if (out_path.empty() || out_path == "-") {
        std::cout << text.str();
    } else {
        std::ofstream out(out_path);
        if (!out) throw DataError("cannot write " + out_path);
        out << text.str();
    }
    std::cerr << "synth: " << t.records.size() << " records\n";
    return 0;
}

int cmd_train(const std::vector<std::string>& trace_paths, CommonFlags& common,
              const CLI::App* cmd, const std::string& out_path, bool strict) {
    RunConfig cfg = common.resolve(cmd);
    FileTable files;
    auto traces = load_traces(trace_paths, files, strict);
    ModelBundle bundle = train_bundle(traces, files, cfg.train);
    save_bundle(bundle, out_path);

    // coverage: how much of each training trace the superblocks explain
    std::size_t total_parts = 0, unmatched = 0;
    for (const auto& t : traces) {
        auto seq = to_superblock_sequence(expand_trace(t, bundle.block_size),
                                          bundle.superblocks, cfg.train.delta_ms,
                                          cfg.train.containment, t.trace_id);
        total_parts += seq.steps.size() + seq.unmatched_partitions;
        unmatched += seq.unmatched_partitions;
    }
    std::cout << "states: " << bundle.superblocks.size()
              << "\ntransitions: " << bundle.ctmc.transition_count()
              << "\nunmatched_partitions: " << unmatched << "/" << total_parts
              << "\n";
    return 0;
}

int cmd_simulate(const std::string& bundle_path,
                 const std::vector<std::string>& trace_paths,
                 const std::vector<std::string>& train_paths, bool baseline,
                 CommonFlags& common, const CLI::App* cmd,
                 const std::string& out_path, bool strict) {
    RunConfig cfg = common.resolve(cmd);
    ModelBundle bundle = load_bundle(bundle_path);
    FileTable files = bundle.files;
    auto traces = load_traces(trace_paths, files, strict);

    PairModel pairs;
    cfg.sim.use_pair_baseline = baseline;
    if (baseline) {
        if (train_paths.empty())
            throw ConfigError("--baseline requires --train-trace files");
        auto train_traces = load_traces(train_paths, files, strict);
        pairs.train(train_traces, cfg.sim.pred.lookahead_ms, bundle.block_size);
        std::cerr << "baseline pairs: " << pairs.pair_count() << " ("
                  << pairs.naive_memory_bytes() << " bytes naive)\n";
    }
    SimReport rep = simulate(bundle, baseline ? &pairs : nullptr, traces, cfg.sim);
    std::string text = sim_report_to_json(rep).dump(2) + "\n";
    if (out_path.empty() || out_path == "-") {
        std::cout << text;
    } else {
        std::ofstream out(out_path);
        out << text;
    }
    return 0;
}

int cmd_sweep(const std::string& bundle_path,
              const std::vector<std::string>& trace_paths,
              const std::vector<std::string>& train_paths,
              const std::string& param, const std::string& values_csv,
              CommonFlags& common, const CLI::App* cmd,
              const std::string& out_path, bool strict) {
    RunConfig cfg = common.resolve(cmd);
    ModelBundle bundle = load_bundle(bundle_path);
    FileTable files = bundle.files;
    auto traces = load_traces(trace_paths, files, strict);
    std::vector<Trace> train_traces;
    if (!train_paths.empty()) train_traces = load_traces(train_paths, files, strict);

    std::vector<double> values;
    std::stringstream ss(values_csv);
    std::string item;
    while (std::getline(ss, item, ',')) values.push_back(std::stod(item));

    auto points = sweep(bundle, traces, cfg.sim, param, values,
                        train_traces.empty() ? nullptr : &train_traces);
    std::string csv = sweep_to_csv(points);
    if (out_path.empty() || out_path == "-") {
        std::cout << csv;
    } else {
        std::ofstream out(out_path);
        out << csv;
    }
    return 0;
}

int cmd_serve(const std::string& root, const std::string& listen,
              const std::string& bandwidth_cap, std::int64_t rtt_sim,
              std::uint32_t block_size) {
    ServerConfig scfg;
    scfg.root = root;
    auto [host, port] = parse_hostport(listen);
    (void)host;  // loopback server
    scfg.port = port;
    scfg.block_size = block_size;
    if (!bandwidth_cap.empty()) scfg.bandwidth_cap_bps = parse_bandwidth(bandwidth_cap);
    scfg.rtt_sim_ms = rtt_sim;
    BlockServer server(std::move(scfg));
    std::uint16_t actual = server.start();
    std::cout << "listening on 127.0.0.1:" << actual << std::endl;
    // run until stdin closes
    std::string line;
    while (std::getline(std::cin, line)) {
    }
    server.stop();
    return 0;
}

int cmd_replay(const std::string& bundle_path, const std::string& trace_path,
               const std::string& server, const std::string& cache_dir,
               double time_scale, CommonFlags& common, const CLI::App* cmd,
               bool strict) {
    RunConfig cfg = common.resolve(cmd);
    ModelBundle bundle = load_bundle(bundle_path);
    FileTable files = bundle.files;
    auto traces = load_traces({trace_path}, files, strict);

    ReplayConfig rcfg;
    rcfg.sim = cfg.sim;
    auto [host, port] = parse_hostport(server);
    rcfg.host = host;
    rcfg.port = port;
    rcfg.cache_dir = cache_dir;
    rcfg.time_scale = time_scale;

    SimRun run = replay_live(bundle, traces[0], rcfg);
    SimReport rep;
    rep.total_delay_ms = run.delay_ms;
    rep.miss_bytes = run.miss_bytes;
    rep.downloaded_bytes = run.downloaded_bytes;
    rep.false_positive_bytes = run.false_positive_bytes;
    rep.hit_rate = run.hit_rate;
    rep.runs.push_back(run);
    std::cout << sim_report_to_json(rep).dump(2) << "\n";
    return 0;
}

int cmd_shard(const std::string& root, const std::string& from_bundle) {
    if (!from_bundle.empty()) {
        ModelBundle bundle = load_bundle(from_bundle);
        generate_content(root, bundle.files);
        std::cout << "generated " << bundle.files.count() << " files under "
                  << root << "\n";
    } else {
        auto manifest = write_manifest_from_tree(root);
        std::cout << "manifest with " << manifest["files"].size()
                  << " files written under " << root << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"predictive block prefetching toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic trace");
    std::string synth_spec, synth_out;
    std::uint64_t synth_seed = 1;
    synth->add_option("--spec", synth_spec, "synth spec JSON")->required();
    synth->add_option("--seed", synth_seed, "RNG seed");
    synth->add_option("--out", synth_out, "output trace file (default stdout)");

    bool strict = false;
    app.add_flag("--strict", strict, "reject unsorted trace timestamps");

    // train
    auto* train = app.add_subcommand("train", "train a model bundle from traces");
    std::vector<std::string> train_traces;
    std::string train_out;
    CommonFlags train_flags;
    train->add_option("traces", train_traces, "training trace files")->required();
    train->add_option("--out", train_out, "output bundle path")->required();
    train_flags.add(train);

    // simulate
    auto* sim = app.add_subcommand("simulate", "trace-driven simulation");
    std::string sim_bundle, sim_out;
    std::vector<std::string> sim_traces, sim_train_traces;
    bool sim_baseline = false;
    CommonFlags sim_flags;
    sim->add_option("--bundle", sim_bundle, "model bundle")->required();
    sim->add_option("traces", sim_traces, "test trace files")->required();
    sim->add_option("--train-trace", sim_train_traces,
                    "training traces (baseline mode)");
    sim->add_flag("--baseline", sim_baseline, "use the block-pair baseline");
    sim->add_option("--out", sim_out, "report output path (default stdout)");
    sim_flags.add(sim);

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "one-parameter grid sweep");
    std::string sweep_bundle, sweep_param, sweep_values, sweep_out;
    std::vector<std::string> sweep_traces, sweep_train_traces;
    CommonFlags sweep_flags;
    sweep_cmd->add_option("--bundle", sweep_bundle, "model bundle")->required();
    sweep_cmd->add_option("traces", sweep_traces, "test trace files")->required();
    sweep_cmd->add_option("--param", sweep_param, "parameter name")->required();
    sweep_cmd->add_option("--values", sweep_values, "comma-separated values")->required();
    sweep_cmd->add_option("--train-trace", sweep_train_traces,
                          "training traces (needed for training params)");
    sweep_cmd->add_option("--out", sweep_out, "CSV output path (default stdout)");
    sweep_flags.add(sweep_cmd);

    // serve
    auto* serve = app.add_subcommand("serve", "run the block storage server");
    std::string serve_root, serve_listen = "127.0.0.1:0", serve_bw;
    std::int64_t serve_rtt = 0;
    std::uint32_t serve_bs = kDefaultBlockSize;
    serve->add_option("--root", serve_root, "content root with manifest.json")->required();
    serve->add_option("--listen", serve_listen, "bind address host:port");
    serve->add_option("--bandwidth-cap", serve_bw, "throttle, e.g. 17.4Mbps");
    serve->add_option("--rtt-sim", serve_rtt, "added latency per request, ms");
    serve->add_option("--block-size", serve_bs, "block size in bytes");

    // replay
    auto* replay = app.add_subcommand("replay", "live replay against a server");
    std::string replay_bundle, replay_trace, replay_server, replay_cache = "replay-cache";
    double replay_scale = 1.0;
    CommonFlags replay_flags;
    replay->add_option("--bundle", replay_bundle, "model bundle")->required();
    replay->add_option("--trace", replay_trace, "trace to replay")->required();
    replay->add_option("--server", replay_server, "server host:port")->required();
    replay->add_option("--cache-dir", replay_cache, "local block store directory");
    replay->add_option("--time-scale", replay_scale, "replay speed multiplier");
    replay_flags.add(replay);

    // shard
    auto* shard = app.add_subcommand("shard", "prepare a content root");
    std::string shard_root, shard_bundle;
    shard->add_option("--root", shard_root, "content root directory")->required();
    shard->add_option("--gen-from-bundle", shard_bundle,
                      "generate deterministic content for a bundle's manifest");

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return cmd_synth(synth_spec, synth_seed, synth_out);
        if (train->parsed())
            return cmd_train(train_traces, train_flags, train, train_out, strict);
        if (sim->parsed())
            return cmd_simulate(sim_bundle, sim_traces, sim_train_traces,
                                sim_baseline, sim_flags, sim, sim_out, strict);
        if (sweep_cmd->parsed())
            return cmd_sweep(sweep_bundle, sweep_traces, sweep_train_traces,
                             sweep_param, sweep_values, sweep_flags, sweep_cmd,
                             sweep_out, strict);
        if (serve->parsed())
            return cmd_serve(serve_root, serve_listen, serve_bw, serve_rtt, serve_bs);
        if (replay->parsed())
            return cmd_replay(replay_bundle, replay_trace, replay_server,
                              replay_cache, replay_scale, replay_flags, replay,
                              strict);
        if (shard->parsed()) return cmd_shard(shard_root, shard_bundle);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const blockstream::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const blockstream::NetworkError& e) {
        std::cerr << "network error: " << e.what() << "\n";
        return 4;
    } catch (const blockstream::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
