#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dpt/encoder.hpp"
#include "dpt/pipeline.hpp"
#include "dpt/synthetic.hpp"

namespace dpt {

struct EvalConfig {
    std::string mode = "full"; // full | sampled
    int k = 10;
    int negatives = 99;
};

// Everything a run needs, parsed from an INI-style `key = value` file with
// [section] headers. The grammar is documented in the README.
struct RunConfig {
    // [data]
    std::string data_path;
    std::vector<std::string> behaviors; // ordered, last = target
    int min_target = 3;

    // [model]
    EncoderConfig encoder;
    int relation_top_k = 10;
    bool item_all_pairs = false;

    // [stage1] [stage2] [stage3]
    StageConfig stage1, stage2, stage3;

    // [eval]
    EvalConfig eval;

    // [synth]
    bool has_synth = false;
    SyntheticSpec synth;

    // [run]
    std::uint64_t seed = 1;
    std::string out_dir = "run";
    int threads = 1;

    // Canonical `section.key=value` lines of every setting that decides
    // artifact compatibility. Seed, threads, output dir, evaluation settings,
    // and the stage-3 prompt variant are deliberately left out so those can
    // vary without invalidating earlier stages' artifacts.
    std::string canonical() const;
    std::uint64_t hash() const;
};

RunConfig parse_config(std::istream& in);
RunConfig parse_config_file(const std::string& path);

} // namespace dpt
