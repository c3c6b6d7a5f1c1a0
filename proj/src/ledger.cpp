#include "revdarts/ledger.hpp"

namespace revdarts {

namespace {
thread_local MemoryLedger* t_ledger = nullptr;
}

MemoryLedger* current_ledger() { return t_ledger; }

LedgerScope::LedgerScope(MemoryLedger& ledger) : prev_(t_ledger) {
    t_ledger = &ledger;
}

LedgerScope::~LedgerScope() { t_ledger = prev_; }

} // namespace revdarts
