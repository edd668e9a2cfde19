// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <mutex>

namespace nevrf {

enum class MemoryCategory { FrameImages = 0, ReplayRecords = 1 };

/// Process-wide accounting of resident frame images and replay records.
/// Tracks current and peak bytes per category and for the total.
class MemoryLedger {
public:
    static MemoryLedger& instance();

    void add(MemoryCategory category, std::int64_t bytes);
    std::int64_t current(MemoryCategory category) const;
    std::int64_t peak(MemoryCategory category) const;
    std::int64_t current_total() const;
    std::int64_t peak_total() const;
    /// Resets peaks to the current values.
    void reset_peaks();

private:
    mutable std::mutex mutex_;
    std::array<std::int64_t, 2> current_{};
    std::array<std::int64_t, 2> peak_{};
    std::int64_t peak_total_ = 0;
};

/// RAII registration of a byte count with the ledger.
class LedgerToken {
public:
    LedgerToken() = default;
    LedgerToken(MemoryCategory category, std::int64_t bytes);
    ~LedgerToken();
    LedgerToken(const LedgerToken& other);
    LedgerToken& operator=(const LedgerToken& other);
    LedgerToken(LedgerToken&& other) noexcept;
    LedgerToken& operator=(LedgerToken&& other) noexcept;

    std::int64_t bytes() const noexcept { return bytes_; }

private:
    void release();

    MemoryCategory category_ = MemoryCategory::FrameImages;
    std::int64_t bytes_ = 0;
};

} // namespace nevrf
