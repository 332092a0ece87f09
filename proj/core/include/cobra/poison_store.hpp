#pragma once

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cobra/common.hpp"

namespace cobra {

// Per-task-execution access log used by the idempotence diagnostic. Bounded;
// once full, further events are dropped and the trace is marked overflowed
// (a verdict from an overflowed trace is not trustworthy and the sweeps
// reject it).
class AccessTrace {
 public:
  enum class Op : uint8_t { Read = 0, Write = 1 };

  void set_capacity(size_t cap) { cap_ = cap; }
  void clear() {
    events_.clear();
    overflow_ = false;
  }
  void record(size_t cell, Op op) {
    if (events_.size() >= cap_) {
      overflow_ = true;
      return;
    }
    events_.push_back((static_cast<uint64_t>(cell) << 1) | static_cast<uint64_t>(op));
  }
  size_t size() const { return events_.size(); }
  size_t cell(size_t i) const { return static_cast<size_t>(events_[i] >> 1); }
  Op op(size_t i) const { return static_cast<Op>(events_[i] & 1); }
  bool overflowed() const { return overflow_; }

 private:
  std::vector<uint64_t> events_;
  size_t cap_ = size_t{1} << 20;
  bool overflow_ = false;
};

// Registers the trace that subsequent store accesses on this thread record
// into (nullptr to disable). Scoped by the runtime around task executions.
void set_active_trace(AccessTrace* trace);
AccessTrace* active_trace();

// Cells read by the traced execution before that same execution wrote them —
// the signature of a non-idempotent (read-modify-write) task. Sorted, unique.
std::vector<size_t> check_idempotence(const AccessTrace& trace);

struct IdempotenceViolation {
  uint64_t node_id = 0;
  size_t cell = 0;
};

// Simulated memory with per-cell poison flags, modeling uncorrectable soft
// errors: a read of a poisoned cell raises PoisonFault instead of returning a
// value; any write stores the value and clears the flag ("unpoisons").
// Value and flag behave as a linearizable pair; the injector may poison
// concurrently with kernel reads and writes.
namespace detail {
// Distinct trace-cell namespaces per store, so accesses to equal indices of
// different stores never alias in an idempotence trace.
uint64_t next_trace_base(size_t cells);
}  // namespace detail

template <typename T>
class PoisonableStore {
 public:
  explicit PoisonableStore(size_t n)
      : trace_base_(detail::next_trace_base(n)), cells_(n), bits_((n + 63) / 64) {}

  size_t size() const { return cells_.size(); }

  T read(size_t i) const {
    bounds(i);
    if (AccessTrace* t = active_trace()) t->record(trace_base_ + i, AccessTrace::Op::Read);
    if (bit_word(i).load(std::memory_order_acquire) & bit_mask(i)) {
      faults_.fetch_add(1, std::memory_order_relaxed);
      throw PoisonFault{i};
    }
    return cells_[i].load(std::memory_order_relaxed);
  }

  void write(size_t i, T v) {
    bounds(i);
    if (AccessTrace* t = active_trace()) t->record(trace_base_ + i, AccessTrace::Op::Write);
    cells_[i].store(v, std::memory_order_relaxed);
    bit_word(i).fetch_and(~bit_mask(i), std::memory_order_release);
  }

  void poison(size_t i) {
    bounds(i);
    bit_word(i).fetch_or(bit_mask(i), std::memory_order_release);
  }

  bool is_poisoned(size_t i) const {
    bounds(i);
    return bit_word(i).load(std::memory_order_acquire) & bit_mask(i);
  }

  uint64_t fault_count() const { return faults_.load(std::memory_order_relaxed); }

  // Poisoned cells remaining; at the end of a run these are the soft errors
  // that escaped the computation.
  size_t poisoned_count() const {
    size_t n = 0;
    for (const auto& w : bits_) n += __builtin_popcountll(w.load(std::memory_order_acquire));
    return n;
  }

  // Untraced helpers for preparing inputs and reading results outside of
  // measured task executions.
  T peek(size_t i) const {
    bounds(i);
    return cells_[i].load(std::memory_order_relaxed);
  }
  void prime(size_t i, T v) {
    bounds(i);
    cells_[i].store(v, std::memory_order_relaxed);
    bit_word(i).fetch_and(~bit_mask(i), std::memory_order_relaxed);
  }

  uint64_t trace_base() const { return trace_base_; }

 private:
  void bounds(size_t i) const {
    if (i >= cells_.size()) throw std::out_of_range("store index out of range");
  }
  std::atomic<uint64_t>& bit_word(size_t i) const { return bits_[i / 64]; }
  static uint64_t bit_mask(size_t i) { return uint64_t{1} << (i % 64); }

  uint64_t trace_base_;
  mutable std::vector<std::atomic<T>> cells_;
  mutable std::vector<std::atomic<uint64_t>> bits_;
  mutable std::atomic<uint64_t> faults_{0};
};

}  // namespace cobra
