#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "cobra/common.hpp"
#include "cobra/fork_join.hpp"
#include "cobra/rng.hpp"

namespace cobra {

namespace baseline_detail {
struct BNode;
}

// Per-worker double-ended queue: the owner pushes and pops one end, thieves
// CAS the other. Every pushed task is executed exactly once across workers.
class WorkDeque {
 public:
  explicit WorkDeque(size_t capacity_pow2 = size_t{1} << 13);

  void push(baseline_detail::BNode* n);       // owner
  baseline_detail::BNode* pop();              // owner
  baseline_detail::BNode* steal();            // thieves

 private:
  std::vector<std::atomic<baseline_detail::BNode*>> buf_;
  size_t mask_;
  std::atomic<int64_t> top_{0};
  std::atomic<int64_t> bottom_{0};
};

// Conventional help-first work-stealing scheduler without any resilience
// machinery: child tasks go on the forking worker's deque, join continuations
// run when a per-node fork counter drains. Used as the failure-free
// performance reference; any fault aborts the run.
class BaselineRuntime final : public ForkJoinRuntime {
 public:
  struct Options {
    int workers = 1;
    uint64_t seed = 1;
  };

  explicit BaselineRuntime(const Options& opts);
  ~BaselineRuntime() override;
  BaselineRuntime(const BaselineRuntime&) = delete;
  BaselineRuntime& operator=(const BaselineRuntime&) = delete;

  void run(Job root_task) override;
  int workers() const override { return workers_n_; }

  uint64_t tasks_executed() const { return tasks_executed_.load(std::memory_order_relaxed); }

 private:
  friend class BaselineContext;

  struct alignas(64) Worker {
    std::unique_ptr<WorkDeque> deque;
    std::deque<baseline_detail::BNode> nodes;  // stable addresses
    Xoshiro256 rng;
  };

  baseline_detail::BNode* alloc_node(int w);
  void worker_main(int w);
  void execute(int w, baseline_detail::BNode* n);
  void complete(int w, baseline_detail::BNode* n);
  void record_error(std::exception_ptr e);

  Options opts_;
  int workers_n_;
  std::vector<Worker> workers_;
  std::vector<std::thread> threads_;

  std::atomic<bool> done_{false};
  std::atomic<uint64_t> tasks_executed_{0};

  std::mutex mu_;
  std::condition_variable cv_start_;
  std::condition_variable cv_done_;
  uint64_t generation_ = 0;
  int halted_ = 0;
  bool shutdown_ = false;

  std::exception_ptr error_;
  std::mutex error_mu_;
};

}  // namespace cobra
