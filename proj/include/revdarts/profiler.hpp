#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "revdarts/config.hpp"

namespace revdarts {

struct ProfileRow {
    int d = 0;
    int depth = 0;
    std::string backbone; // "reversible" | "standard"
    long long retained_bytes = 0; // between end of forward and backward
    long long peak_bytes = 0;
    long long recompute_count = 0;
    bool cap_exceeded = false;
};

struct ProfileResult {
    std::vector<ProfileRow> rows;
    nlohmann::json summary; // per-point reversible/standard retained ratio
};

// Sweeps width x depth over encoder stacks with full mixed-op search nodes,
// measuring both backbones with the activation ledger.
ProfileResult profile_memory(const MemprofileConfig& cfg, Pooling pooling,
                             Dtype dtype, std::uint64_t seed);

// memprofile.csv with the documented header plus memprofile.json.
void write_profile(const ProfileResult& result, const std::string& out_dir);

} // namespace revdarts
