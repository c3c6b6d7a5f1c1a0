#include "revdarts/data.hpp"

#include <algorithm>

namespace revdarts {

Task task_from_name(const std::string& name) {
    if (name == "copy") return Task::copy;
    if (name == "reverse") return Task::reverse;
    fail("unknown task '" + name + "' (expected copy or reverse)");
}

const char* task_name(Task t) { return t == Task::copy ? "copy" : "reverse"; }

const char* shard_name(Shard s) {
    switch (s) {
        case Shard::theta_train: return "theta_train";
        case Shard::alpha_val: return "alpha_val";
        case Shard::retrain_train: return "retrain_train";
        case Shard::retrain_val: return "retrain_val";
        case Shard::test: return "test";
    }
    fail("unknown shard");
}

void DataSpec::validate() const {
    if (vocab < 5) fail("data.vocab must be >= 5 (4 reserved ids + payload)");
    if (l_min < 1) fail("data.l_min must be >= 1");
    if (l_min > l_max)
        fail("data.l_min=" + std::to_string(l_min) + " > l_max=" +
             std::to_string(l_max));
}

Batch make_batch(const DataSpec& spec, Shard shard, std::uint64_t batch_index,
                 int batch_size) {
    spec.validate();
    if (batch_size < 1) fail("batch_size must be >= 1");
    // two rounds of splitmix keep the shard streams pairwise disjoint
    std::uint64_t shard_seed =
        RngStream(spec.seed ^ (0xA5C3000ULL + static_cast<int>(shard)))
            .next_u64();
    RngStream rng(RngStream(shard_seed + batch_index).next_u64());

    std::vector<std::vector<int>> sources;
    int max_len = 0;
    for (int b = 0; b < batch_size; ++b) {
        int len = spec.l_min +
                  static_cast<int>(rng.next_u64() %
                                   static_cast<std::uint64_t>(spec.l_max -
                                                              spec.l_min + 1));
        std::vector<int> src(static_cast<std::size_t>(len));
        for (int& t : src)
            t = kUnkId + 1 +
                static_cast<int>(rng.next_u64() %
                                 static_cast<std::uint64_t>(spec.vocab -
                                                            kUnkId - 1));
        max_len = std::max(max_len, len);
        sources.push_back(std::move(src));
    }

    Batch batch;
    for (auto& src : sources) {
        std::vector<int> tgt = src;
        if (spec.task == Task::reverse) std::reverse(tgt.begin(), tgt.end());

        std::vector<int> src_row = src;
        src_row.resize(static_cast<std::size_t>(max_len), kPadId);

        std::vector<int> tin{kBosId}, tout;
        tin.insert(tin.end(), tgt.begin(), tgt.end());
        tout = tgt;
        tout.push_back(kEosId);
        std::vector<double> w(tout.size(), 1.0);
        tin.resize(static_cast<std::size_t>(max_len) + 1, kPadId);
        tout.resize(static_cast<std::size_t>(max_len) + 1, kPadId);
        w.resize(static_cast<std::size_t>(max_len) + 1, 0.0);

        batch.src.push_back(std::move(src_row));
        batch.tgt_in.push_back(std::move(tin));
        batch.tgt_out.push_back(std::move(tout));
        batch.tgt_weight.push_back(std::move(w));
    }
    return batch;
}

SequenceExample example_from_batch(const Batch& batch, int row) {
    auto r = static_cast<std::size_t>(row);
    if (r >= batch.src.size()) fail("batch row out of range");
    // Strip the rectangular padding: the model must never see pad tokens,
    // or decoding (which runs on the bare sequence) would diverge from the
    // teacher-forced distribution it was trained on.
    SequenceExample ex;
    for (int t : batch.src[r])
        if (t != kPadId) ex.src.push_back(t);
    std::size_t len = batch.tgt_weight[r].size();
    while (len > 0 && batch.tgt_weight[r][len - 1] == 0.0) --len;
    ex.tgt_in.assign(batch.tgt_in[r].begin(), batch.tgt_in[r].begin() + len);
    ex.tgt_out.assign(batch.tgt_out[r].begin(), batch.tgt_out[r].begin() + len);
    ex.tgt_weight.assign(batch.tgt_weight[r].begin(),
                         batch.tgt_weight[r].begin() + len);
    return ex;
}

std::vector<int> batch_source_tokens(const Batch& batch, int row) {
    auto r = static_cast<std::size_t>(row);
    if (r >= batch.src.size()) fail("batch row out of range");
    std::vector<int> out;
    for (int t : batch.src[r])
        if (t != kPadId) out.push_back(t);
    return out;
}

std::vector<int> batch_reference_tokens(const Batch& batch, int row) {
    auto r = static_cast<std::size_t>(row);
    if (r >= batch.tgt_out.size()) fail("batch row out of range");
    std::vector<int> out;
    for (std::size_t i = 0; i < batch.tgt_out[r].size(); ++i)
        if (batch.tgt_weight[r][i] > 0) out.push_back(batch.tgt_out[r][i]);
    return out;
}

} // namespace revdarts
