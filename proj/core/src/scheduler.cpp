#include "cobra/scheduler.hpp"

#include <algorithm>
#include <cstdio>

namespace cobra {

namespace {
thread_local WorkerContext* tls_worker = nullptr;
}

void fault_check() {
  WorkerContext* w = tls_worker;
  if (w && w->fault_token.load(std::memory_order_acquire) &&
      w->fault_token.exchange(false, std::memory_order_acq_rel)) {
    ++w->injected_observed;
    throw InjectedFault{};
  }
}

Runtime::Runtime(const Options& opts) : opts_(opts), workers_n_(opts.workers) {
  COBRA_CHECK(workers_n_ >= 1, "need at least one worker");
  workers_ = std::make_unique<WorkerContext[]>(workers_n_);
  for (int w = 0; w < workers_n_; ++w) {
    workers_[w].id = w;
    workers_[w].rng = Xoshiro256(derive_seed(opts.seed, {0xC0B7A, static_cast<uint64_t>(w)}));
    workers_[w].machine = WorkerMachine<Runtime>(w);
  }
  threads_.reserve(workers_n_);
  for (int w = 0; w < workers_n_; ++w)
    threads_.emplace_back([this, w] { worker_main(w); });
}

Runtime::~Runtime() {
  {
    std::lock_guard<std::mutex> lk(mu_);
    shutdown_ = true;
  }
  cv_start_.notify_all();
  for (auto& t : threads_) t.join();
}

void Runtime::worker_main(int w) {
  tls_worker = &workers_[w];
  uint64_t gen = 0;
  for (;;) {
    {
      std::unique_lock<std::mutex> lk(mu_);
      cv_start_.wait(lk, [&] { return shutdown_ || generation_ > gen; });
      if (shutdown_) return;
      gen = generation_;
    }
    WorkerMachine<Runtime>& m = ctx(w).machine;
    while (m.step(*this)) {
    }
    {
      std::lock_guard<std::mutex> lk(mu_);
      if (++halted_ == workers_n_) cv_done_.notify_all();
    }
  }
}

void Runtime::run(Job root_task) {
  arena_.reset();
  NodeIndex sentinel = arena_.allocate();
  arena_[sentinel].reset(kNoNode, 0, nullptr, 0);
  arena_[sentinel].sentinel = true;
  arena_[sentinel].state.store(NodeState::Busy, std::memory_order_relaxed);

  root_ = arena_.allocate();
  arena_[root_].reset(sentinel, 0, std::move(root_task), static_cast<uint64_t>(root_));
  arena_.append_child(sentinel, root_);

  abort_.store(false, std::memory_order_relaxed);
  root_restarts_this_run_ = 0;
  for (int w = 0; w < workers_n_; ++w) {
    ctx(w).list.reset();
    ctx(w).machine.reset_for_run();
  }
  ctx(0).list.push(sentinel);

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

  // Tokens that landed after completion: consume them so that every delivered
  // token maps to exactly one (possibly empty) failure handling.
  for (int w = 0; w < workers_n_; ++w) {
    if (ctx(w).fault_token.exchange(false, std::memory_order_acq_rel)) ++ctx(w).failures_handled;
  }

  ++trees_run_;
  nodes_created_ += static_cast<uint64_t>(arena_.size()) - 1;  // sentinel excluded

  std::exception_ptr err;
  {
    std::lock_guard<std::mutex> lk(error_mu_);
    err = user_error_;
    user_error_ = nullptr;
  }
  if (err) std::rethrow_exception(err);
  COBRA_CHECK(load_state(root_) == NodeState::Done, "computation ended without root Done");
}

bool Runtime::detect_completion() const {
  return root_ != kNoNode && load_state(root_) == NodeState::Done;
}

bool Runtime::computation_done() const {
  if (abort_.load(std::memory_order_acquire)) return true;
  return load_state(root_) == NodeState::Done;
}

bool Runtime::poll_fault(int w) {
  auto& t = ctx(w).fault_token;
  if (t.load(std::memory_order_acquire) && t.exchange(false, std::memory_order_acq_rel)) {
    ++ctx(w).injected_observed;
    return true;
  }
  return false;
}

bool Runtime::post_failure_token(int worker) {
  return !ctx(worker).fault_token.exchange(true, std::memory_order_acq_rel);
}

int Runtime::pick_victim(int w) {
  uint64_t r = ctx(w).rng.below(static_cast<uint64_t>(workers_n_ - 1));
  int v = static_cast<int>(r);
  return v >= w ? v + 1 : v;
}

void Runtime::idle_pause(int w, uint32_t streak) {
  (void)w;
  (void)streak;
  std::this_thread::yield();
}

void Runtime::list_push(int w, NodeIndex n) {
  auto& c = ctx(w);
  c.list.push(n);
  c.max_list = std::max<uint64_t>(c.max_list, static_cast<uint64_t>(c.list.size()));
}

void Runtime::reclaim_reset(int w, NodeIndex n) {
  TaskNode& nd = arena_[n];
  nd.first_child.store(kNoNode, std::memory_order_relaxed);
  nd.last_child = kNoNode;
  nd.continuation = nullptr;
  bool root_node = is_root(n);
  nd.refail_armed = opts_.percolation == PercolationMode::WorstCase && !root_node;
  ++ctx(w).reclaims;
  if (root_node) {
    root_reclaims_.fetch_add(1, std::memory_order_relaxed);
    // Only worker 0 (the super-root's owner) reclaims the root, so this
    // counter is single-writer within a run.
    if (++root_restarts_this_run_ > opts_.max_root_restarts) {
      record_user_error(std::make_exception_ptr(UnrecoverableFailure(
          "root restarted more than " + std::to_string(opts_.max_root_restarts) +
          " times; failure cannot be fixed by re-execution")));
    }
  }
}

ExecOutcome Runtime::execute_task(int w, NodeIndex n) {
  TaskNode& nd = arena_[n];
  if (!nd.task) return ExecOutcome::Ok;
  NodeHandle h(&arena_, n, nd.version.load(std::memory_order_relaxed), false, &fj_counters_);
  WorkerContext& c = ctx(w);
  if (opts_.diagnostics) {
    c.trace.clear();
    set_active_trace(&c.trace);
  }
  ExecOutcome out = ExecOutcome::Ok;
  try {
    nd.task(h);
  } catch (const PoisonFault&) {
    ++c.poison_faults;
    out = ExecOutcome::Fault;
  } catch (const InjectedFault&) {
    out = ExecOutcome::Fault;
  } catch (...) {
    record_user_error(std::current_exception());
  }
  if (opts_.diagnostics) {
    set_active_trace(nullptr);
    COBRA_CHECK(!c.trace.overflowed(), "diagnostics trace overflowed; raise capacity");
    auto cells = check_idempotence(c.trace);
    if (!cells.empty()) {
      std::lock_guard<std::mutex> lk(violations_mu_);
      for (size_t cell : cells) violations_.push_back({nd.id, cell});
    }
  }
  return out;
}

ExecOutcome Runtime::execute_continuation(int w, NodeIndex n) {
  TaskNode& nd = arena_[n];
  if (nd.refail_armed) {
    // Worst-case percolation: the restarted node fails again the moment its
    // continuation would run, pushing the restart one level up the tree.
    nd.refail_armed = false;
    ++ctx(w).refail_fires;
    return ExecOutcome::Fault;
  }
  ++ctx(w).continuations;
  if (!nd.continuation) return ExecOutcome::Ok;
  NodeHandle h(&arena_, n, nd.version.load(std::memory_order_relaxed), true, &fj_counters_);
  WorkerContext& c = ctx(w);
  if (opts_.diagnostics) {
    c.trace.clear();
    set_active_trace(&c.trace);
  }
  ExecOutcome out = ExecOutcome::Ok;
  try {
    nd.continuation(h);
  } catch (const PoisonFault&) {
    ++c.poison_faults;
    out = ExecOutcome::Fault;
  } catch (const InjectedFault&) {
    out = ExecOutcome::Fault;
  } catch (...) {
    record_user_error(std::current_exception());
  }
  if (opts_.diagnostics) {
    set_active_trace(nullptr);
    COBRA_CHECK(!c.trace.overflowed(), "diagnostics trace overflowed; raise capacity");
    auto cells = check_idempotence(c.trace);
    if (!cells.empty()) {
      std::lock_guard<std::mutex> lk(violations_mu_);
      for (size_t cell : cells) violations_.push_back({nd.id, cell});
    }
  }
  return out;
}

void Runtime::assert_children_done(int w, NodeIndex n) const {
  (void)w;
  for (NodeIndex c = first_child(n); c != kNoNode; c = next_sibling(c))
    COBRA_CHECK(load_state(c) == NodeState::Done, "continuation enabled with non-Done child");
}

void Runtime::note_failure_handled(int w, size_t inactivated) {
  auto& c = ctx(w);
  ++c.failures_handled;
  c.nodes_inactivated += inactivated;
}

void Runtime::record_user_error(std::exception_ptr e) {
  {
    std::lock_guard<std::mutex> lk(error_mu_);
    if (!user_error_) user_error_ = e;
  }
  abort_.store(true, std::memory_order_release);
}

void Runtime::reset_stats() {
  for (int w = 0; w < workers_n_; ++w) {
    auto& c = ctx(w);
    c.claims = c.reclaims = c.steals = c.steal_rejects = 0;
    c.stale_drops = c.continuations = c.failures_handled = 0;
    c.nodes_inactivated = c.refail_fires = 0;
    c.poison_faults = c.injected_observed = c.max_list = 0;
  }
  fj_counters_.forks.store(0);
  fj_counters_.joins.store(0);
  fj_counters_.discarded_forks.store(0);
  fj_counters_.discarded_joins.store(0);
  root_reclaims_.store(0);
  trees_run_ = 0;
  nodes_created_ = 0;
  violations_.clear();
}

RunStats Runtime::stats() const {
  RunStats s;
  s.trees_run = trees_run_;
  s.nodes_created = nodes_created_;
  s.forks = fj_counters_.forks.load();
  s.joins = fj_counters_.joins.load();
  s.discarded_forks = fj_counters_.discarded_forks.load();
  s.discarded_joins = fj_counters_.discarded_joins.load();
  s.root_reclaims = root_reclaims_.load();
  for (int w = 0; w < workers_n_; ++w) {
    const auto& c = ctx(w);
    s.claims += c.claims;
    s.reclaims += c.reclaims;
    s.steals += c.steals;
    s.steal_rejects += c.steal_rejects;
    s.stale_drops += c.stale_drops;
    s.continuations_run += c.continuations;
    s.failures_handled += c.failures_handled;
    s.nodes_inactivated += c.nodes_inactivated;
    s.refail_fires += c.refail_fires;
    s.poison_faults += c.poison_faults;
    s.injected_faults_observed += c.injected_observed;
    s.max_working_list = std::max(s.max_working_list, c.max_list);
  }
  s.idempotence_violations = violations_.size();
  return s;
}

}  // namespace cobra
