#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "revdarts/model.hpp"
#include "revdarts/rng.hpp"

namespace revdarts {

// reserved token ids
constexpr int kPadId = 0;
constexpr int kBosId = 1;
constexpr int kEosId = 2;
constexpr int kUnkId = 3;

enum class Task { copy, reverse };
Task task_from_name(const std::string& name);
const char* task_name(Task t);

// Which slice of the synthetic stream a batch is drawn from; each shard is
// its own RNG universe so theta/alpha/retrain/test data never overlap.
enum class Shard { theta_train, alpha_val, retrain_train, retrain_val, test };
const char* shard_name(Shard s);

struct DataSpec {
    Task task = Task::copy;
    int vocab = 64;
    int l_min = 4;
    int l_max = 12;
    std::uint64_t seed = 1;

    void validate() const;
};

struct Batch {
    // rectangular, padded with kPadId
    std::vector<std::vector<int>> src;
    std::vector<std::vector<int>> tgt_in;
    std::vector<std::vector<int>> tgt_out;
    std::vector<std::vector<double>> tgt_weight; // 0 on pad positions
};

// Deterministic function of (spec.seed, shard, batch_index).
Batch make_batch(const DataSpec& spec, Shard shard, std::uint64_t batch_index,
                 int batch_size);

// The padded row sliced back out as a per-sequence example.
SequenceExample example_from_batch(const Batch& batch, int row);

// Source sequence without markers, for decoding tests.
std::vector<int> batch_source_tokens(const Batch& batch, int row);

// Expected decoder output (target tokens then eos), pads stripped.
std::vector<int> batch_reference_tokens(const Batch& batch, int row);

} // namespace revdarts
