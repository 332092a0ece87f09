#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "cobra/fork_join.hpp"
#include "cobra/poison_store.hpp"

namespace cobra {

// Benchmark program selection and shape. All kernels read inputs from and
// write outputs to PoisonableStore cells and are written in an idempotent
// style (no read-modify-write of the same cell within one execution).
struct KernelSpec {
  std::string name = "qsort";  // qsort | map | reduce | treegen
  size_t input_size = 1 << 17;
  size_t cutoff = 0;  // 0 -> kernel default (qsort 2048, map/reduce 4096)
  // treegen shape
  int num_trees = 1;
  int depth = 4;
  int fanout = 2;
  long leaf_work = 10000;
  uint64_t seed = 1;
};

class KernelInstance {
 public:
  virtual ~KernelInstance() = default;
  virtual const std::string& name() const = 0;

  // Clears outputs, scratch and poison before one measured run. Inputs and
  // oracle values are fixed at construction (derived from the spec seed);
  // run seeds only vary scheduling and injection.
  virtual void prepare(uint64_t run_seed) = 0;

  // Runs the kernel: num_trees successive fork/join computations for
  // treegen, a single one for the others.
  virtual void execute(ForkJoinRuntime& rt) = 0;

  // Output equals the sequential oracle computed at construction.
  virtual bool verify() const = 0;

  // Poisoned cells remaining after a run (escaped soft errors).
  virtual size_t escaped_faults() const = 0;

  // Test hooks; null unless the kernel owns a store of that role/type.
  virtual PoisonableStore<int64_t>* i64_input() { return nullptr; }
  virtual PoisonableStore<int64_t>* i64_output() { return nullptr; }
  virtual PoisonableStore<int64_t>* i64_scratch(int) { return nullptr; }
  virtual PoisonableStore<uint64_t>* u64_input() { return nullptr; }
  virtual PoisonableStore<uint64_t>* u64_output() { return nullptr; }
};

std::unique_ptr<KernelInstance> make_kernel(const KernelSpec& spec);

// Map kernel with a caller-chosen element transform (the shipped kernel uses
// a fixed mixing function; tests also instantiate identity).
std::unique_ptr<KernelInstance> make_map_kernel(const KernelSpec& spec,
                                                std::function<uint64_t(uint64_t)> f);

// Deliberately non-idempotent micro-kernel (out[i] = out[i] + 1 on a shared
// cell); exists to validate the idempotence diagnostic.
std::unique_ptr<KernelInstance> make_rmw_micro_kernel(size_t cells);

// Total leaf work units of a treegen spec: num_trees * fanout^depth * leaf_work.
uint64_t treegen_total_work(const KernelSpec& spec);

// Nodes per treegen tree: sum over k of fanout^k, k = 0..depth.
uint64_t treegen_nodes_per_tree(const KernelSpec& spec);

}  // namespace cobra
