#pragma once

#include <cstdint>

namespace revdarts {

// Activation-byte accounting. "Retained" means bytes of intermediate tensors
// held between the end of a forward pass and the start of the matching
// backward pass; parameters and gradients are not activations and are never
// counted. Tapes report every recorded node output here while they are alive.
struct MemoryLedger {
    long long retained_bytes = 0;
    long long peak_bytes = 0;
    long long retain_events = 0;
    long long release_events = 0;
    // Total G_k evaluations, and the subset re-run inside
    // backward-with-reconstruction.
    long long g_eval_count = 0;
    long long recompute_count = 0;

    void retain(long long bytes) {
        retained_bytes += bytes;
        ++retain_events;
        if (retained_bytes > peak_bytes) peak_bytes = retained_bytes;
    }
    void release(long long bytes) {
        retained_bytes -= bytes;
        ++release_events;
    }
    void reset() { *this = MemoryLedger{}; }

    bool balanced() const {
        return retained_bytes == 0 && retain_events == release_events;
    }
};

MemoryLedger* current_ledger();

// RAII attach/detach of the thread's active ledger.
class LedgerScope {
public:
    explicit LedgerScope(MemoryLedger& ledger);
    ~LedgerScope();
    LedgerScope(const LedgerScope&) = delete;
    LedgerScope& operator=(const LedgerScope&) = delete;

private:
    MemoryLedger* prev_;
};

} // namespace revdarts
