#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpt/params.hpp"

namespace dpt {

// Everything a later stage needs to resume: parameter values with their
// frozen flags, plus provenance (stage, config hash, seed, the removed-edge
// report the run's graph came from, the stage-3 prompt variant).
//
// On disk: magic "DPT1", a format version, a plain-text metadata block, a
// parameter manifest (name, shape, dtype, frozen flag, data offset), then the
// little-endian raw arrays. Writing the same checkpoint twice yields
// identical bytes.
struct Checkpoint {
    int stage = 0;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::string denoised_ref = "-";   // file name of the removed-edge report
    std::string prompt_variant = "-"; // stage 3 only
    std::vector<double> loss_trace;   // per-epoch mean training loss
    ParameterStore params;
};

// use_f32 stores arrays as 32-bit floats (halves the file, loses replay
// exactness); the default keeps full 64-bit values.
void write_checkpoint(const Checkpoint& ckpt, const std::string& path, bool use_f32 = false);

Checkpoint read_checkpoint(const std::string& path);

} // namespace dpt
