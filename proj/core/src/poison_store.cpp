#include "cobra/poison_store.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

namespace cobra {

namespace {
thread_local AccessTrace* g_active_trace = nullptr;
std::atomic<uint64_t> g_trace_base{0};
}

namespace detail {
uint64_t next_trace_base(size_t cells) {
  return g_trace_base.fetch_add(static_cast<uint64_t>(cells), std::memory_order_relaxed);
}
}  // namespace detail

void set_active_trace(AccessTrace* trace) { g_active_trace = trace; }
AccessTrace* active_trace() { return g_active_trace; }

std::vector<size_t> check_idempotence(const AccessTrace& trace) {
  // A cell that is only read (input) or written first (output) is fine; the
  // non-idempotence signature is a read that precedes a write of the same
  // cell within one execution.
  std::unordered_map<size_t, size_t> first_write;
  for (size_t i = 0; i < trace.size(); ++i)
    if (trace.op(i) == AccessTrace::Op::Write) first_write.emplace(trace.cell(i), i);
  std::unordered_set<size_t> flagged;
  std::vector<size_t> violations;
  for (size_t i = 0; i < trace.size(); ++i) {
    if (trace.op(i) != AccessTrace::Op::Read) continue;
    size_t cell = trace.cell(i);
    auto it = first_write.find(cell);
    if (it != first_write.end() && i < it->second && flagged.insert(cell).second)
      violations.push_back(cell);
  }
  std::sort(violations.begin(), violations.end());
  return violations;
}

}  // namespace cobra
