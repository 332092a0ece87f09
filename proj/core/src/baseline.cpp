#include "cobra/baseline.hpp"

#include <stdexcept>

namespace cobra {

namespace baseline_detail {

struct BNode {
  Job task;
  Job continuation;
  std::atomic<int> pending{1};  // self-reference plus one per forked child
  BNode* parent = nullptr;
};

}  // namespace baseline_detail

using baseline_detail::BNode;

WorkDeque::WorkDeque(size_t capacity_pow2) : buf_(capacity_pow2), mask_(capacity_pow2 - 1) {
  COBRA_CHECK((capacity_pow2 & mask_) == 0, "deque capacity must be a power of two");
}

void WorkDeque::push(BNode* n) {
  int64_t b = bottom_.load(std::memory_order_relaxed);
  int64_t t = top_.load(std::memory_order_acquire);
  COBRA_CHECK(b - t < static_cast<int64_t>(buf_.size()), "work deque full");
  buf_[static_cast<size_t>(b) & mask_].store(n, std::memory_order_relaxed);
  std::atomic_thread_fence(std::memory_order_release);
  bottom_.store(b + 1, std::memory_order_relaxed);
}

BNode* WorkDeque::pop() {
  int64_t b = bottom_.load(std::memory_order_relaxed) - 1;
  bottom_.store(b, std::memory_order_relaxed);
  std::atomic_thread_fence(std::memory_order_seq_cst);
  int64_t t = top_.load(std::memory_order_relaxed);
  if (t > b) {
    bottom_.store(b + 1, std::memory_order_relaxed);
    return nullptr;
  }
  BNode* n = buf_[static_cast<size_t>(b) & mask_].load(std::memory_order_relaxed);
  if (t == b) {
    // last element: race the thieves for it
    if (!top_.compare_exchange_strong(t, t + 1, std::memory_order_seq_cst,
                                      std::memory_order_relaxed))
      n = nullptr;
    bottom_.store(b + 1, std::memory_order_relaxed);
  }
  return n;
}

BNode* WorkDeque::steal() {
  int64_t t = top_.load(std::memory_order_acquire);
  std::atomic_thread_fence(std::memory_order_seq_cst);
  int64_t b = bottom_.load(std::memory_order_acquire);
  if (t >= b) return nullptr;
  BNode* n = buf_[static_cast<size_t>(t) & mask_].load(std::memory_order_relaxed);
  if (!top_.compare_exchange_strong(t, t + 1, std::memory_order_seq_cst,
                                    std::memory_order_relaxed))
    return nullptr;
  return n;
}

class BaselineContext final : public ForkJoinContext {
 public:
  BaselineContext(BaselineRuntime* rt, int w, BNode* node, bool in_continuation)
      : rt_(rt), w_(w), node_(node), in_continuation_(in_continuation) {}

  void fork(Job task) override {
    if (in_continuation_) throw UserProgramError("fork called from a join continuation");
    BNode* child = rt_->alloc_node(w_);
    child->task = std::move(task);
    child->continuation = nullptr;
    child->pending.store(1, std::memory_order_relaxed);
    child->parent = node_;
    node_->pending.fetch_add(1, std::memory_order_relaxed);
    rt_->workers_[static_cast<size_t>(w_)].deque->push(child);
  }

  void join(Job continuation) override {
    if (in_continuation_) throw UserProgramError("join called from a join continuation");
    if (joined_) throw UserProgramError("join called twice in one task execution");
    node_->continuation = std::move(continuation);
    joined_ = true;
  }

 private:
  BaselineRuntime* rt_;
  int w_;
  BNode* node_;
  bool in_continuation_;
  bool joined_ = false;
};

BaselineRuntime::BaselineRuntime(const Options& opts) : opts_(opts), workers_n_(opts.workers) {
  COBRA_CHECK(workers_n_ >= 1, "need at least one worker");
  workers_.resize(static_cast<size_t>(workers_n_));
  for (int w = 0; w < workers_n_; ++w) {
    workers_[static_cast<size_t>(w)].deque = std::make_unique<WorkDeque>();
    workers_[static_cast<size_t>(w)].rng =
        Xoshiro256(derive_seed(opts.seed, {0xBA5E, static_cast<uint64_t>(w)}));
  }
  threads_.reserve(static_cast<size_t>(workers_n_));
  for (int w = 0; w < workers_n_; ++w)
    threads_.emplace_back([this, w] { worker_main(w); });
}

BaselineRuntime::~BaselineRuntime() {
  {
    std::lock_guard<std::mutex> lk(mu_);
    shutdown_ = true;
  }
  cv_start_.notify_all();
  for (auto& t : threads_) t.join();
}

BNode* BaselineRuntime::alloc_node(int w) {
  auto& nodes = workers_[static_cast<size_t>(w)].nodes;
  nodes.emplace_back();
  return &nodes.back();
}

void BaselineRuntime::run(Job root_task) {
  for (auto& w : workers_) w.nodes.clear();
  done_.store(false, std::memory_order_relaxed);

  BNode* root = alloc_node(0);
  root->task = std::move(root_task);
  root->continuation = nullptr;
  root->pending.store(1, std::memory_order_relaxed);
  root->parent = nullptr;
  workers_[0].deque->push(root);

  {
    std::lock_guard<std::mutex> lk(mu_);
    halted_ = 0;
    ++generation_;
  }
  cv_start_.notify_all();
  {
    std::unique_lock<std::mutex> lk(mu_);
    cv_done_.wait(lk, [&] { return halted_ == workers_n_; });
  }

  std::exception_ptr err;
  {
    std::lock_guard<std::mutex> lk(error_mu_);
    err = error_;
    error_ = nullptr;
  }
  if (err) std::rethrow_exception(err);
}

void BaselineRuntime::worker_main(int w) {
  uint64_t gen = 0;
  for (;;) {
    {
      std::unique_lock<std::mutex> lk(mu_);
      cv_start_.wait(lk, [&] { return shutdown_ || generation_ > gen; });
      if (shutdown_) return;
      gen = generation_;
    }
    auto& me = workers_[static_cast<size_t>(w)];
    uint32_t idle = 0;
    while (!done_.load(std::memory_order_acquire)) {
      BNode* n = me.deque->pop();
      if (!n && workers_n_ > 1) {
        uint64_t r = me.rng.below(static_cast<uint64_t>(workers_n_ - 1));
        int victim = static_cast<int>(r) >= w ? static_cast<int>(r) + 1 : static_cast<int>(r);
        n = workers_[static_cast<size_t>(victim)].deque->steal();
      }
      if (n) {
        idle = 0;
        execute(w, n);
      } else if (++idle % 64 == 0) {
        std::this_thread::yield();
      }
    }
    {
      std::lock_guard<std::mutex> lk(mu_);
      if (++halted_ == workers_n_) cv_done_.notify_all();
    }
  }
}

void BaselineRuntime::execute(int w, BNode* n) {
  tasks_executed_.fetch_add(1, std::memory_order_relaxed);
  BaselineContext ctx(this, w, n, false);
  try {
    if (n->task) n->task(ctx);
  } catch (const PoisonFault&) {
    record_error(std::make_exception_ptr(
        std::runtime_error("baseline scheduler cannot recover from a poison fault")));
  } catch (const InjectedFault&) {
    record_error(std::make_exception_ptr(
        std::runtime_error("baseline scheduler cannot recover from an injected failure")));
  } catch (...) {
    record_error(std::current_exception());
  }
  if (n->pending.fetch_sub(1, std::memory_order_acq_rel) == 1) complete(w, n);
}

void BaselineRuntime::complete(int w, BNode* n) {
  for (BNode* cur = n; cur != nullptr;) {
    if (cur->continuation) {
      BaselineContext ctx(this, w, cur, true);
      try {
        cur->continuation(ctx);
      } catch (const PoisonFault&) {
        record_error(std::make_exception_ptr(
            std::runtime_error("baseline scheduler cannot recover from a poison fault")));
      } catch (...) {
        record_error(std::current_exception());
      }
    }
    BNode* p = cur->parent;
    if (!p) {
      done_.store(true, std::memory_order_release);
      return;
    }
    if (p->pending.fetch_sub(1, std::memory_order_acq_rel) == 1)
      cur = p;
    else
      return;
  }
}

void BaselineRuntime::record_error(std::exception_ptr e) {
  {
    std::lock_guard<std::mutex> lk(error_mu_);
    if (!error_) error_ = e;
  }
  done_.store(true, std::memory_order_release);
}

}  // namespace cobra
