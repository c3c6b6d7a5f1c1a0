#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "revdarts/model.hpp"

namespace revdarts {

// A discretized network: one operation kind per choice point. The decoder's
// last split is always the fixed cross-attention and is not listed per node.
struct Architecture {
    int version = 1;
    ModelDims dims;
    std::vector<std::vector<OperationKind>> encoder; // s x m
    std::vector<std::vector<OperationKind>> decoder; // s x n
    nlohmann::json provenance = nlohmann::json::object();

    void validate() const;
    bool structurally_equal(const Architecture& other) const;
};

nlohmann::json arch_to_json(const Architecture& arch);
Architecture arch_from_json(const nlohmann::json& j);

void save_arch(const Architecture& arch, const std::string& path);
Architecture load_arch(const std::string& path);

// argmax per node; the fixed cross-attention slot is copied through.
Architecture discretize(const SuperNetwork& net);

// Builds a single-candidate network realizing the architecture. Alpha in
// every node is frozen (requires_grad off) so only theta trains.
SuperNetwork realize(const Architecture& arch, Pooling pooling,
                     double dropout_p, Dtype dtype, RngStream& rng);

// Checkpoint directory layout: theta.bin (flat little-endian f64 dump),
// theta.json sidecar (names/shapes/dtype/offsets), alpha.json.
void save_checkpoint(const SuperNetwork& net, const std::string& dir);
void load_checkpoint(SuperNetwork& net, const std::string& dir);

// Stable name -> tensor mapping used by the checkpoint format.
std::vector<std::pair<std::string, Tensor>> named_tensors(
    const SuperNetwork& net);

nlohmann::json alpha_to_json(const SuperNetwork& net);

} // namespace revdarts
