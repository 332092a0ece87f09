#include "cobra/kernels.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "cobra/common.hpp"
#include "cobra/rng.hpp"

namespace cobra {

namespace {

constexpr size_t kPollEvery = 1024;  // elements between fault polls in leaf loops

size_t default_cutoff(const KernelSpec& spec, size_t fallback) {
  return spec.cutoff ? spec.cutoff : fallback;
}

// ---------------------------------------------------------------------------
// qsort: double-buffered three-way quicksort. Each task reads its region from
// one scratch buffer and writes the partitioned region into the other; pivot
// ties go straight to the output at their final positions, leaves sort their
// region into the output. No cell is read after this execution wrote it, so
// every task is idempotent in the strict read-before-write sense.

class QsortKernel final : public KernelInstance {
 public:
  explicit QsortKernel(const KernelSpec& spec)
      : spec_(spec),
        cutoff_(default_cutoff(spec, 2048)),
        in_(spec.input_size),
        ping_(spec.input_size),
        pong_(spec.input_size),
        out_(spec.input_size),
        expected_(spec.input_size) {
    Xoshiro256 rng(spec.seed);
    for (size_t i = 0; i < spec_.input_size; ++i) {
      int64_t v = static_cast<int64_t>(rng.next() % 1000003);
      in_.prime(i, v);
      expected_[i] = v;
    }
    std::sort(expected_.begin(), expected_.end());
  }

  const std::string& name() const override { return spec_.name; }

  void prepare(uint64_t) override {
    for (size_t i = 0; i < spec_.input_size; ++i) {
      ping_.prime(i, 0);
      pong_.prime(i, 0);
      out_.prime(i, 0);
    }
  }

  void execute(ForkJoinRuntime& rt) override {
    rt.run([this](ForkJoinContext& ctx) { sort_task(ctx, &in_, &ping_, 0, spec_.input_size); });
  }

  bool verify() const override {
    for (size_t i = 0; i < spec_.input_size; ++i)
      if (out_.peek(i) != expected_[i]) return false;
    return true;
  }

  size_t escaped_faults() const override {
    return in_.poisoned_count() + ping_.poisoned_count() + pong_.poisoned_count() +
           out_.poisoned_count();
  }

  PoisonableStore<int64_t>* i64_input() override { return &in_; }
  PoisonableStore<int64_t>* i64_output() override { return &out_; }
  PoisonableStore<int64_t>* i64_scratch(int which) override {
    return which == 0 ? &ping_ : &pong_;
  }

 private:
  void sort_task(ForkJoinContext& ctx, PoisonableStore<int64_t>* src,
                 PoisonableStore<int64_t>* dst, size_t lo, size_t hi) {
    size_t n = hi - lo;
    if (n <= cutoff_) {
      std::vector<int64_t> buf(n);
      for (size_t i = 0; i < n; ++i) {
        if (i % kPollEvery == 0) fault_check();
        buf[i] = src->read(lo + i);
      }
      std::sort(buf.begin(), buf.end());
      for (size_t i = 0; i < n; ++i) out_.write(lo + i, buf[i]);
      return;
    }
    std::vector<int64_t> buf(n);
    for (size_t i = 0; i < n; ++i) {
      if (i % kPollEvery == 0) fault_check();
      buf[i] = src->read(lo + i);
    }
    int64_t a = buf.front(), b = buf[n / 2], c = buf.back();
    int64_t pivot = std::max(std::min(a, b), std::min(std::max(a, b), c));
    size_t less = 0, greater = 0;
    for (int64_t v : buf) {
      if (v < pivot)
        dst->write(lo + less++, v);
      else if (v > pivot)
        ++greater;
    }
    size_t gpos = hi - greater;
    for (int64_t v : buf)
      if (v > pivot) dst->write(gpos++, v);
    for (size_t i = lo + less; i < hi - greater; ++i) out_.write(i, pivot);

    PoisonableStore<int64_t>* next = dst == &ping_ ? &pong_ : &ping_;
    size_t l_lo = lo, l_hi = lo + less;
    size_t g_lo = hi - greater, g_hi = hi;
    ctx.fork([this, dst, next, l_lo, l_hi](ForkJoinContext& c2) {
      sort_task(c2, dst, next, l_lo, l_hi);
    });
    ctx.fork([this, dst, next, g_lo, g_hi](ForkJoinContext& c2) {
      sort_task(c2, dst, next, g_lo, g_hi);
    });
    ctx.join([](ForkJoinContext&) {});  // merge barrier: regions are disjoint
  }

  KernelSpec spec_;
  size_t cutoff_;
  PoisonableStore<int64_t> in_, ping_, pong_, out_;
  std::vector<int64_t> expected_;
};

// ---------------------------------------------------------------------------
// map: out[i] = f(in[i]) with recursive binary splitting.

class MapKernel final : public KernelInstance {
 public:
  MapKernel(const KernelSpec& spec, std::function<uint64_t(uint64_t)> f)
      : spec_(spec),
        cutoff_(default_cutoff(spec, 4096)),
        f_(std::move(f)),
        in_(spec.input_size),
        out_(spec.input_size),
        expected_(spec.input_size) {
    Xoshiro256 rng(spec.seed);
    for (size_t i = 0; i < spec_.input_size; ++i) {
      uint64_t v = rng.next();
      in_.prime(i, v);
      expected_[i] = f_(v);
    }
  }

  const std::string& name() const override { return spec_.name; }

  void prepare(uint64_t) override {
    for (size_t i = 0; i < spec_.input_size; ++i) out_.prime(i, 0);
  }

  void execute(ForkJoinRuntime& rt) override {
    rt.run([this](ForkJoinContext& ctx) { map_task(ctx, 0, spec_.input_size); });
  }

  bool verify() const override {
    for (size_t i = 0; i < spec_.input_size; ++i)
      if (out_.peek(i) != expected_[i]) return false;
    return true;
  }

  size_t escaped_faults() const override {
    return in_.poisoned_count() + out_.poisoned_count();
  }

  PoisonableStore<uint64_t>* u64_input() override { return &in_; }
  PoisonableStore<uint64_t>* u64_output() override { return &out_; }

 private:
  void map_task(ForkJoinContext& ctx, size_t lo, size_t hi) {
    if (hi - lo <= cutoff_) {
      for (size_t i = lo; i < hi; ++i) {
        if ((i - lo) % kPollEvery == 0) fault_check();
        out_.write(i, f_(in_.read(i)));
      }
      return;
    }
    size_t mid = lo + (hi - lo) / 2;
    ctx.fork([this, lo, mid](ForkJoinContext& c2) { map_task(c2, lo, mid); });
    ctx.fork([this, mid, hi](ForkJoinContext& c2) { map_task(c2, mid, hi); });
  }

  KernelSpec spec_;
  size_t cutoff_;
  std::function<uint64_t(uint64_t)> f_;
  PoisonableStore<uint64_t> in_, out_;
  std::vector<uint64_t> expected_;
};

// ---------------------------------------------------------------------------
// reduce: tree reduction; every node owns a distinct result cell and each
// continuation combines its children's cells into it, so the reduction
// exercises join continuations without any read-modify-write.

class ReduceKernel final : public KernelInstance {
 public:
  explicit ReduceKernel(const KernelSpec& spec)
      : spec_(spec),
        cutoff_(default_cutoff(spec, 4096)),
        in_(spec.input_size),
        levels_(level_count(spec.input_size, cutoff_)),
        results_(levels_ * spec.input_size) {
    Xoshiro256 rng(spec.seed);
    uint64_t sum = 0;
    for (size_t i = 0; i < spec_.input_size; ++i) {
      uint64_t v = rng.next();
      in_.prime(i, v);
      sum += v;
    }
    expected_ = sum;
  }

  const std::string& name() const override { return spec_.name; }

  void prepare(uint64_t) override {
    for (size_t i = 0; i < results_.size(); ++i) results_.prime(i, 0);
  }

  void execute(ForkJoinRuntime& rt) override {
    rt.run([this](ForkJoinContext& ctx) { reduce_task(ctx, 0, spec_.input_size, 0); });
  }

  bool verify() const override { return results_.peek(0) == expected_; }

  size_t escaped_faults() const override {
    return in_.poisoned_count() + results_.poisoned_count();
  }

  PoisonableStore<uint64_t>* u64_input() override { return &in_; }
  PoisonableStore<uint64_t>* u64_output() override { return &results_; }

  uint64_t expected_sum() const { return expected_; }

 private:
  static size_t level_count(size_t n, size_t cutoff) {
    size_t levels = 1, m = n;
    while (m > cutoff) {
      m = (m + 1) / 2;
      ++levels;
    }
    return levels + 1;
  }

  size_t cell_of(size_t lo, size_t level) const { return level * spec_.input_size + lo; }

  void reduce_task(ForkJoinContext& ctx, size_t lo, size_t hi, size_t level) {
    if (hi - lo <= cutoff_) {
      uint64_t sum = 0;
      for (size_t i = lo; i < hi; ++i) {
        if ((i - lo) % kPollEvery == 0) fault_check();
        sum += in_.read(i);
      }
      results_.write(cell_of(lo, level), sum);
      return;
    }
    size_t mid = lo + (hi - lo) / 2;
    ctx.fork([this, lo, mid, level](ForkJoinContext& c2) { reduce_task(c2, lo, mid, level + 1); });
    ctx.fork([this, mid, hi, level](ForkJoinContext& c2) { reduce_task(c2, mid, hi, level + 1); });
    size_t own = cell_of(lo, level), left = cell_of(lo, level + 1), right = cell_of(mid, level + 1);
    ctx.join([this, own, left, right](ForkJoinContext&) {
      results_.write(own, results_.read(left) + results_.read(right));
    });
  }

  KernelSpec spec_;
  size_t cutoff_;
  PoisonableStore<uint64_t> in_;
  size_t levels_;
  PoisonableStore<uint64_t> results_;
  uint64_t expected_ = 0;
};

// ---------------------------------------------------------------------------
// treegen: num_trees successive uniform fork/join trees with configurable
// depth, fanout and per-leaf arithmetic; leaves and continuations each write
// one distinct cell. Granularity control for the failure-impact experiments.

class TreegenKernel final : public KernelInstance {
 public:
  explicit TreegenKernel(const KernelSpec& spec)
      : spec_(spec),
        nodes_per_tree_(treegen_nodes_per_tree(spec)),
        cells_(nodes_per_tree_ * static_cast<size_t>(spec.num_trees)),
        expected_roots_(static_cast<size_t>(spec.num_trees)) {
    for (int t = 0; t < spec_.num_trees; ++t)
      expected_roots_[static_cast<size_t>(t)] = oracle_node(t, 0, 0);
  }

  const std::string& name() const override { return spec_.name; }

  void prepare(uint64_t) override {
    for (size_t i = 0; i < cells_.size(); ++i) cells_.prime(i, 0);
  }

  void execute(ForkJoinRuntime& rt) override {
    for (int t = 0; t < spec_.num_trees; ++t)
      rt.run([this, t](ForkJoinContext& ctx) { node_task(ctx, t, 0, 0); });
  }

  bool verify() const override {
    for (int t = 0; t < spec_.num_trees; ++t)
      if (cells_.peek(cell_of(t, 0)) != expected_roots_[static_cast<size_t>(t)]) return false;
    return true;
  }

  size_t escaped_faults() const override { return cells_.poisoned_count(); }

  PoisonableStore<uint64_t>* u64_output() override { return &cells_; }

  uint64_t expected_root(int tree) const { return expected_roots_[static_cast<size_t>(tree)]; }

 private:
  size_t cell_of(int tree, uint64_t addr) const {
    return static_cast<size_t>(tree) * nodes_per_tree_ + addr;
  }

  uint64_t leaf_value(int tree, uint64_t addr) const {
    uint64_t x = derive_seed(spec_.seed, {static_cast<uint64_t>(tree), addr});
    for (long i = 0; i < spec_.leaf_work; ++i) x = mix64(x);
    return x;
  }

  uint64_t leaf_value_polling(int tree, uint64_t addr) const {
    uint64_t x = derive_seed(spec_.seed, {static_cast<uint64_t>(tree), addr});
    for (long i = 0; i < spec_.leaf_work; ++i) {
      if (i % 4096 == 0) fault_check();
      x = mix64(x);
    }
    return x;
  }

  // Sequential oracle; shares only the arithmetic definition, not the
  // fork/join execution path.
  uint64_t oracle_node(int tree, uint64_t addr, int level) const {
    if (level == spec_.depth) return leaf_value(tree, addr);
    uint64_t sum = 0;
    for (int j = 0; j < spec_.fanout; ++j)
      sum += oracle_node(tree, addr * spec_.fanout + 1 + j, level + 1);
    return sum;
  }

  void node_task(ForkJoinContext& ctx, int tree, uint64_t addr, int level) {
    if (level == spec_.depth) {
      cells_.write(cell_of(tree, addr), leaf_value_polling(tree, addr));
      return;
    }
    for (int j = 0; j < spec_.fanout; ++j) {
      uint64_t child = addr * spec_.fanout + 1 + j;
      ctx.fork([this, tree, child, level](ForkJoinContext& c2) {
        node_task(c2, tree, child, level + 1);
      });
    }
    size_t own = cell_of(tree, addr);
    uint64_t first = addr * spec_.fanout + 1;
    int fanout = spec_.fanout;
    ctx.join([this, tree, own, first, fanout](ForkJoinContext&) {
      uint64_t sum = 0;
      for (int j = 0; j < fanout; ++j)
        sum += cells_.read(cell_of(tree, first + static_cast<uint64_t>(j)));
      cells_.write(own, sum);
    });
  }

  KernelSpec spec_;
  size_t nodes_per_tree_;
  PoisonableStore<uint64_t> cells_;
  std::vector<uint64_t> expected_roots_;
};

// ---------------------------------------------------------------------------
// Deliberate read-modify-write micro-kernel for the diagnostic.

class RmwMicroKernel final : public KernelInstance {
 public:
  explicit RmwMicroKernel(size_t cells) : name_("rmw-micro"), cells_(cells) {}

  const std::string& name() const override { return name_; }

  void prepare(uint64_t) override {
    for (size_t i = 0; i < cells_.size(); ++i) cells_.prime(i, 0);
  }

  void execute(ForkJoinRuntime& rt) override {
    rt.run([this](ForkJoinContext&) { cells_.write(0, cells_.read(0) + 1); });
  }

  bool verify() const override { return cells_.peek(0) >= 1; }

  size_t escaped_faults() const override { return cells_.poisoned_count(); }

  PoisonableStore<uint64_t>* u64_output() override { return &cells_; }

 private:
  std::string name_;
  PoisonableStore<uint64_t> cells_;
};

}  // namespace

uint64_t treegen_nodes_per_tree(const KernelSpec& spec) {
  uint64_t n = 0, level = 1;
  for (int k = 0; k <= spec.depth; ++k) {
    n += level;
    level *= static_cast<uint64_t>(spec.fanout);
  }
  return n;
}

uint64_t treegen_total_work(const KernelSpec& spec) {
  uint64_t leaves = 1;
  for (int k = 0; k < spec.depth; ++k) leaves *= static_cast<uint64_t>(spec.fanout);
  return static_cast<uint64_t>(spec.num_trees) * leaves * static_cast<uint64_t>(spec.leaf_work);
}

std::unique_ptr<KernelInstance> make_map_kernel(const KernelSpec& spec,
                                                std::function<uint64_t(uint64_t)> f) {
  return std::make_unique<MapKernel>(spec, std::move(f));
}

std::unique_ptr<KernelInstance> make_rmw_micro_kernel(size_t cells) {
  return std::make_unique<RmwMicroKernel>(cells);
}

std::unique_ptr<KernelInstance> make_kernel(const KernelSpec& spec) {
  if (spec.name == "qsort") return std::make_unique<QsortKernel>(spec);
  if (spec.name == "map") return make_map_kernel(spec, [](uint64_t x) { return mix64(x); });
  if (spec.name == "reduce") return std::make_unique<ReduceKernel>(spec);
  if (spec.name == "treegen") return std::make_unique<TreegenKernel>(spec);
  throw std::invalid_argument("unknown kernel: " + spec.name);
}

}  // namespace cobra
