#pragma once

#include <chrono>
#include <cstdint>
#include <thread>
#include <vector>

#include "cobra/common.hpp"
#include "cobra/scheduler.hpp"

namespace cobra {

// Planned failure deliveries for one measured run. Instants are offsets from
// the run start, sampled uniformly over [0, T_ff] where T_ff is the measured
// mean failure-free execution time of the same configuration; targets are
// picked at fire time.
struct FailureSchedule {
  std::vector<std::chrono::nanoseconds> instants;  // sorted ascending
  PercolationMode mode = PercolationMode::BestCase;
  uint64_t seed = 1;
};

FailureSchedule build_schedule(size_t n_failures, std::chrono::nanoseconds t_ff, uint64_t seed,
                               PercolationMode mode);

struct InjectionEvent {
  std::chrono::nanoseconds when{0};
  int worker = -1;
  enum class Outcome : uint8_t {
    Delivered,        // token landed in an empty mailbox
    Coalesced,        // a token was already pending on that worker
    AlreadyFinished,  // the measured run ended before the instant
  } outcome = Outcome::Delivered;
};

const char* to_string(InjectionEvent::Outcome o);

// Background controller that delivers the schedule to a running Runtime.
// Construct right before starting the measured computation; call finish()
// right after it returns.
class FaultInjector {
 public:
  FaultInjector(Runtime& rt, FailureSchedule schedule);
  ~FaultInjector();

  FaultInjector(const FaultInjector&) = delete;
  FaultInjector& operator=(const FaultInjector&) = delete;

  // Stops the controller and returns the event log (one entry per scheduled
  // instant, in schedule order).
  std::vector<InjectionEvent> finish();

  static size_t delivered_count(const std::vector<InjectionEvent>& events);

 private:
  void controller();

  Runtime& rt_;
  FailureSchedule schedule_;
  std::vector<InjectionEvent> events_;
  std::chrono::steady_clock::time_point start_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stop_ = false;
  bool finished_ = false;
  std::thread thread_;
};

}  // namespace cobra
