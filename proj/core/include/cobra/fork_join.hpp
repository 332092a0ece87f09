#pragma once

#include <functional>

namespace cobra {

class ForkJoinContext;

// A task or join continuation. Tasks must be idempotent: re-executing one
// must produce the same effect as executing it once.
using Job = std::function<void(ForkJoinContext&)>;

// Capability handed to an executing task. Valid only for the dynamic extent
// of that execution; fork builds the task tree lazily, join registers the
// continuation that runs once every forked child has completed. Neither runs
// user code immediately.
class ForkJoinContext {
 public:
  virtual void fork(Job task) = 0;
  virtual void join(Job continuation) = 0;

 protected:
  ~ForkJoinContext() = default;
};

// Scheduler interface the kernels are written against. run() executes one
// fork/join computation (one tree) to completion.
class ForkJoinRuntime {
 public:
  virtual ~ForkJoinRuntime() = default;
  virtual void run(Job root_task) = 0;
  virtual int workers() const = 0;
};

// Kernel-defined safe point: observes a pending injected failure token, if
// any, on the calling worker thread. No-op outside a resilient worker.
void fault_check();

}  // namespace cobra
