#pragma once

#include <array>
#include <atomic>
#include <condition_variable>
#include <exception>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "cobra/common.hpp"
#include "cobra/fork_join.hpp"
#include "cobra/poison_store.hpp"
#include "cobra/protocol.hpp"
#include "cobra/rng.hpp"
#include "cobra/task_graph.hpp"

namespace cobra {

// Per-worker set of claimed (Busy) nodes. The owner has the full picture;
// thieves scan a bounded window of published slots and tolerate staleness.
// Entries past the window simply are not visible to thieves, which only makes
// steals less effective, never incorrect.
class WorkingList {
 public:
  static constexpr int kPublished = 64;

  int size() const { return total_; }

  NodeIndex at(int pos) const {
    return pos < kPublished ? slots_[pos].load(std::memory_order_relaxed)
                            : overflow_[pos - kPublished];
  }

  void push(NodeIndex n) {
    if (total_ < kPublished) {
      slots_[total_].store(n, std::memory_order_release);
      published_.store(total_ + 1, std::memory_order_release);
    } else {
      overflow_.push_back(n);
    }
    ++total_;
  }

  void remove_at(int pos) {
    int last = total_ - 1;
    if (pos != last) {
      NodeIndex moved = at(last);
      if (pos < kPublished)
        slots_[pos].store(moved, std::memory_order_release);
      else
        overflow_[pos - kPublished] = moved;
    }
    if (last >= kPublished)
      overflow_.pop_back();
    else
      published_.store(last, std::memory_order_release);
    total_ = last;
  }

  void reset() {
    total_ = 0;
    published_.store(0, std::memory_order_release);
    overflow_.clear();
  }

  // Thief view: possibly stale snapshot of one published slot.
  NodeIndex thief_at(int pos) const {
    if (pos >= published_.load(std::memory_order_acquire)) return kNoNode;
    return slots_[pos].load(std::memory_order_acquire);
  }

 private:
  std::array<std::atomic<NodeIndex>, kPublished> slots_{};
  std::atomic<int> published_{0};
  int total_ = 0;                   // owner view
  std::vector<NodeIndex> overflow_; // owner-only
};

// Aggregated counters for a measured interval (one or more trees).
struct RunStats {
  uint64_t trees_run = 0;
  uint64_t nodes_created = 0;  // excluding sentinels
  uint64_t forks = 0;
  uint64_t joins = 0;
  uint64_t discarded_forks = 0;
  uint64_t discarded_joins = 0;
  uint64_t claims = 0;
  uint64_t reclaims = 0;
  uint64_t root_reclaims = 0;
  uint64_t steals = 0;
  uint64_t steal_rejects = 0;
  uint64_t stale_drops = 0;
  uint64_t continuations_run = 0;
  uint64_t failures_handled = 0;
  uint64_t nodes_inactivated = 0;
  uint64_t refail_fires = 0;
  uint64_t poison_faults = 0;
  uint64_t injected_faults_observed = 0;
  uint64_t idempotence_violations = 0;
  uint64_t max_working_list = 0;
};

class Runtime;

struct alignas(64) WorkerContext {
  int id = 0;
  WorkingList list;
  std::atomic<bool> fault_token{false};
  Xoshiro256 rng;
  WorkerMachine<Runtime> machine;

  // owner-written counters, folded into RunStats on demand
  uint64_t claims = 0, reclaims = 0, steals = 0, steal_rejects = 0;
  uint64_t stale_drops = 0, continuations = 0, failures_handled = 0;
  uint64_t nodes_inactivated = 0, refail_fires = 0;
  uint64_t poison_faults = 0, injected_observed = 0, max_list = 0;

  AccessTrace trace;  // diagnostics-only idempotence trace
};

// The resilient work-stealing scheduler. Worker threads are spawned once and
// parked between computations so that a sequence of trees (one run() call per
// tree) shares workers, node storage and failure mailboxes — failure tokens
// posted between trees are observed at the next tree's loop top.
class Runtime final : public ForkJoinRuntime {
 public:
  struct Options {
    int workers = 1;
    uint64_t seed = 1;
    PercolationMode percolation = PercolationMode::BestCase;
    bool diagnostics = false;       // record access traces, flag read-before-write
    uint64_t max_root_restarts = 100000;  // per tree; exceeded -> UnrecoverableFailure
  };

  explicit Runtime(const Options& opts);
  ~Runtime() override;
  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  // Executes one fork/join computation to completion (all workers quiesce).
  // Non-fault errors raised by user code propagate from here.
  void run(Job root_task) override;
  int workers() const override { return workers_n_; }

  // True iff the current computation's root node is Done (or the run aborted).
  bool detect_completion() const;

  void reset_stats();
  RunStats stats() const;
  const std::vector<IdempotenceViolation>& diagnostics_violations() const { return violations_; }

  // Failure mailbox, single producer (the injector). Returns false when a
  // token was already pending (coalesced).
  bool post_failure_token(int worker);

  // --- protocol environment (used by WorkerMachine; not user API) ---
  NodeIndex parent_of(NodeIndex n) const { return arena_[n].parent; }
  bool is_sentinel(NodeIndex n) const { return arena_[n].sentinel; }
  bool is_root(NodeIndex n) const {
    NodeIndex p = arena_[n].parent;
    return p != kNoNode && arena_[p].sentinel;
  }
  NodeState load_state(NodeIndex n) const { return arena_[n].state.load(std::memory_order_acquire); }
  uint64_t load_version(NodeIndex n) const { return arena_[n].version.load(std::memory_order_acquire); }
  uint64_t load_version_owned(NodeIndex n) const {
    return arena_[n].version.load(std::memory_order_relaxed);
  }
  bool cas_state(int worker, NodeIndex n, NodeState from, NodeState to) {
    (void)worker;
    return arena_[n].try_transition(from, to);
  }
  void reclaim_store_version(int worker, NodeIndex n, uint64_t v) {
    (void)worker;
    arena_[n].version.store(v, std::memory_order_release);
  }
  void reclaim_publish_busy(int worker, NodeIndex n) {
    (void)worker;
    arena_[n].state.store(NodeState::Busy, std::memory_order_release);
  }
  void reclaim_reset(int worker, NodeIndex n);
  bool reclaim_barrier_mutated() const { return false; }
  NodeIndex first_child(NodeIndex n) const { return arena_[n].first_child.load(std::memory_order_acquire); }
  NodeIndex next_sibling(NodeIndex n) const { return arena_[n].next_sibling.load(std::memory_order_acquire); }

  ExecOutcome execute_task(int worker, NodeIndex n);
  ExecOutcome execute_continuation(int worker, NodeIndex n);

  int list_size(int w) const { return ctx(w).list.size(); }
  NodeIndex list_at(int w, int pos) const { return ctx(w).list.at(pos); }
  void list_push(int w, NodeIndex n);
  void list_remove_at(int w, int pos) { ctx(w).list.remove_at(pos); }
  NodeIndex victim_list_at(int v, int pos) const { return ctx(v).list.thief_at(pos); }

  bool poll_fault(int w);
  bool computation_done() const;
  int worker_count() const { return workers_n_; }
  int pick_victim(int w);
  void reinit_after_failure(int w) { (void)w; }
  void idle_pause(int w, uint32_t streak);

  void note_parent_check(int w, NodeIndex n, bool considered_valid) {
    (void)n;
    if (!considered_valid) ++ctx(w).stale_drops;
  }
  void note_claim(int w, NodeIndex n, uint64_t epoch, bool stolen) {
    (void)n;
    (void)epoch;
    if (stolen)
      ++ctx(w).steals;
    else
      ++ctx(w).claims;
  }
  void note_reclaim_begin(int w, NodeIndex n) { (void)w; (void)n; }
  void note_steal_rejected(int w, NodeIndex n) { (void)n; ++ctx(w).steal_rejects; }
  void assert_children_done(int w, NodeIndex n) const;
  void note_failure_handled(int w, size_t inactivated);

  // test access
  NodeArena& arena() { return arena_; }
  NodeIndex root_index() const { return root_; }
  ForkJoinCounters& fork_counters() { return fj_counters_; }

 private:
  friend struct WorkerMachine<Runtime>;

  WorkerContext& ctx(int w) { return workers_[w]; }
  const WorkerContext& ctx(int w) const { return workers_[w]; }
  void worker_main(int w);
  void record_user_error(std::exception_ptr e);

  Options opts_;
  int workers_n_;
  NodeArena arena_;
  std::unique_ptr<WorkerContext[]> workers_;
  std::vector<std::thread> threads_;

  NodeIndex root_ = kNoNode;
  std::atomic<bool> abort_{false};
  uint64_t root_restarts_this_run_ = 0;  // written by reclaimers under no race in practice; see .cpp

  std::mutex mu_;
  std::condition_variable cv_start_;
  std::condition_variable cv_done_;
  uint64_t generation_ = 0;
  int halted_ = 0;
  bool shutdown_ = false;

  std::exception_ptr user_error_;
  std::mutex error_mu_;

  ForkJoinCounters fj_counters_;
  std::atomic<uint64_t> root_reclaims_{0};
  uint64_t trees_run_ = 0;
  uint64_t nodes_created_ = 0;

  std::vector<IdempotenceViolation> violations_;
  std::mutex violations_mu_;
};

}  // namespace cobra
