#pragma once

// Shared synthetic corpus for the simulator and acceptance suites: a
// branching scene graph over ~50 MB of virtual content, 10 training traces
// and 2 held-out test traces.

#include <string>
#include <vector>

#include "blockstream/bundle.hpp"
#include "blockstream/synth.hpp"
#include "blockstream/trace.hpp"

namespace testcorpus {

using namespace blockstream;

struct Corpus {
    FileTable files;
    std::vector<Trace> train;
    std::vector<Trace> test;
    SynthSpec spec;
};

// scene_blocks 1250 x 10 scenes x 4 KB = 51.2 MB of virtual content
inline SynthSpec make_spec(std::uint32_t scene_blocks = 1250,
                           std::int64_t dwell_ms = 5000,
                           std::uint32_t reads_per_scene = 16,
                           double noise_rate = 0.02) {
    SynthSpec s;
    s.file = "game.pak";
    const char* names[] = {"menu", "s1", "s2", "s3", "s4",
                           "s5",   "s6", "s7", "s8", "s9"};
    for (std::uint32_t i = 0; i < 10; ++i)
        s.scenes.push_back(SynthScene{names[i], i * scene_blocks, scene_blocks});
    s.edges = {
        {"menu", "s1", 0.5}, {"menu", "s2", 0.5}, {"s1", "s3", 1.0},
        {"s2", "s3", 1.0},   {"s3", "s4", 0.6},   {"s3", "s5", 0.4},
        {"s4", "s6", 1.0},   {"s5", "s6", 1.0},   {"s6", "s7", 0.5},
        {"s6", "s8", 0.5},   {"s7", "s9", 1.0},   {"s8", "s9", 1.0},
    };
    s.start = "menu";
    s.dwell_ms_mean = dwell_ms;
    s.dwell_ms_jitter = dwell_ms / 10;
    s.reads_per_scene = reads_per_scene;
    s.noise_rate = noise_rate;
    s.max_steps = 16;
    return s;
}

inline Corpus build(std::uint32_t scene_blocks = 1250) {
    Corpus c;
    c.spec = make_spec(scene_blocks);
    for (std::uint64_t seed = 1; seed <= 10; ++seed)
        c.train.push_back(synth_trace(c.spec, seed, c.files));
    for (std::uint64_t seed = 101; seed <= 102; ++seed)
        c.test.push_back(synth_trace(c.spec, seed, c.files));
    return c;
}

inline ModelBundle train(const Corpus& c, TrainParams params = {}) {
    return train_bundle(c.train, c.files, params);
}

}  // namespace testcorpus
