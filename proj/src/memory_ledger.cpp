// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#include "nevrf/memory_ledger.hpp"

#include <algorithm>
#include <utility>

namespace nevrf {

MemoryLedger& MemoryLedger::instance() {
    static MemoryLedger ledger;
    return ledger;
}

void MemoryLedger::add(MemoryCategory category, std::int64_t bytes) {
    std::lock_guard lock(mutex_);
    auto idx = static_cast<std::size_t>(category);
    current_[idx] += bytes;
    peak_[idx] = std::max(peak_[idx], current_[idx]);
    peak_total_ = std::max(peak_total_, current_[0] + current_[1]);
}

std::int64_t MemoryLedger::current(MemoryCategory category) const {
    std::lock_guard lock(mutex_);
    return current_[static_cast<std::size_t>(category)];
}

std::int64_t MemoryLedger::peak(MemoryCategory category) const {
    std::lock_guard lock(mutex_);
    return peak_[static_cast<std::size_t>(category)];
}

std::int64_t MemoryLedger::current_total() const {
    std::lock_guard lock(mutex_);
    return current_[0] + current_[1];
}

std::int64_t MemoryLedger::peak_total() const {
    std::lock_guard lock(mutex_);
    return peak_total_;
}

void MemoryLedger::reset_peaks() {
    std::lock_guard lock(mutex_);
    peak_ = current_;
    peak_total_ = current_[0] + current_[1];
}

LedgerToken::LedgerToken(MemoryCategory category, std::int64_t bytes) : category_(category), bytes_(bytes) {
    if (bytes_ != 0) MemoryLedger::instance().add(category_, bytes_);
}

LedgerToken::~LedgerToken() { release(); }

LedgerToken::LedgerToken(const LedgerToken& other) : LedgerToken(other.category_, other.bytes_) {}

LedgerToken& LedgerToken::operator=(const LedgerToken& other) {
    if (this != &other) {
        release();
        category_ = other.category_;
        bytes_ = other.bytes_;
        if (bytes_ != 0) MemoryLedger::instance().add(category_, bytes_);
    }
    return *this;
}

LedgerToken::LedgerToken(LedgerToken&& other) noexcept
    : category_(other.category_), bytes_(std::exchange(other.bytes_, 0)) {}

LedgerToken& LedgerToken::operator=(LedgerToken&& other) noexcept {
    if (this != &other) {
        release();
        category_ = other.category_;
        bytes_ = std::exchange(other.bytes_, 0);
    }
    return *this;
}

void LedgerToken::release() {
    if (bytes_ != 0) {
        MemoryLedger::instance().add(category_, -bytes_);
        bytes_ = 0;
    }
}

} // namespace nevrf
