#include "cobra/fault_injection.hpp"

#include <algorithm>

#include "cobra/rng.hpp"

namespace cobra {

FailureSchedule build_schedule(size_t n_failures, std::chrono::nanoseconds t_ff, uint64_t seed,
                               PercolationMode mode) {
  COBRA_CHECK(t_ff.count() > 0, "failure-free time must be positive");
  FailureSchedule s;
  s.mode = mode;
  s.seed = seed;
  s.instants.reserve(n_failures);
  Xoshiro256 rng(derive_seed(seed, {0x5C4ED, n_failures}));
  for (size_t i = 0; i < n_failures; ++i) {
    double u = rng.uniform01();
    s.instants.emplace_back(static_cast<int64_t>(u * static_cast<double>(t_ff.count())));
  }
  std::sort(s.instants.begin(), s.instants.end());
  return s;
}

const char* to_string(InjectionEvent::Outcome o) {
  switch (o) {
    case InjectionEvent::Outcome::Delivered: return "delivered";
    case InjectionEvent::Outcome::Coalesced: return "coalesced";
    case InjectionEvent::Outcome::AlreadyFinished: return "already-finished";
  }
  return "?";
}

FaultInjector::FaultInjector(Runtime& rt, FailureSchedule schedule)
    : rt_(rt), schedule_(std::move(schedule)) {
  start_ = std::chrono::steady_clock::now();
  if (!schedule_.instants.empty()) thread_ = std::thread([this] { controller(); });
}

FaultInjector::~FaultInjector() {
  if (thread_.joinable()) finish();
}

void FaultInjector::controller() {
  Xoshiro256 rng(derive_seed(schedule_.seed, {0x7A46E7}));
  int n = rt_.workers();
  for (auto t : schedule_.instants) {
    {
      std::unique_lock<std::mutex> lk(mu_);
      cv_.wait_until(lk, start_ + t, [&] { return stop_; });
      if (stop_) {
        events_.push_back({t, -1, InjectionEvent::Outcome::AlreadyFinished});
        continue;
      }
    }
    int worker = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
    bool fresh = rt_.post_failure_token(worker);
    events_.push_back({t, worker,
                       fresh ? InjectionEvent::Outcome::Delivered
                             : InjectionEvent::Outcome::Coalesced});
  }
}

std::vector<InjectionEvent> FaultInjector::finish() {
  if (!finished_) {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
    finished_ = true;
  }
  return events_;
}

size_t FaultInjector::delivered_count(const std::vector<InjectionEvent>& events) {
  size_t n = 0;
  for (const auto& e : events)
    if (e.outcome == InjectionEvent::Outcome::Delivered) ++n;
  return n;
}

}  // namespace cobra
