#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>

#include "cobra/common.hpp"
#include "cobra/fork_join.hpp"

namespace cobra {

// Life cycle of a node. Legal transitions are exactly
//   Free -> Busy, Busy -> Done, Busy -> Inactive, Inactive -> Busy;
// Done is terminal. State transitions are partially monotone, which is what
// makes the lock-free claim/steal protocol sound.
enum class NodeState : uint8_t { Free, Busy, Inactive, Done };

const char* to_string(NodeState s);
bool transition_is_legal(NodeState from, NodeState to);

// One node of the explicit fork/join tree.
//
// Cross-thread access is restricted to: CAS on state, acquire loads of state
// and version, and traversal of the children chain (which tolerates staleness,
// guarded by version validation). Everything else is written only by the
// worker currently holding the node Busy.
struct TaskNode {
  std::atomic<NodeState> state{NodeState::Free};
  std::atomic<uint64_t> version{0};
  NodeIndex parent = kNoNode;

  // Intrusive append-only children chain for the current version epoch. The
  // head is reset wholesale when the node is reclaimed; stale readers keep
  // traversing the abandoned chain, which stays intact because node storage
  // is never freed while the computation runs.
  std::atomic<NodeIndex> first_child{kNoNode};
  std::atomic<NodeIndex> next_sibling{kNoNode};
  NodeIndex last_child = kNoNode;  // owner-only append cursor

  Job task;          // retained for the node's whole life; re-run on reclaim
  Job continuation;  // set by join; cleared on reclaim

  // Set when the node is reclaimed in a worst-case percolation run: its next
  // continuation execution triggers another failure instead of running.
  bool refail_armed = false;
  bool sentinel = false;
  uint64_t id = 0;

  // Atomically performs `from -> to` if the current state is `from`.
  // An illegal pair is a programming error and is rejected up front.
  bool try_transition(NodeState from, NodeState to);

  void reset(NodeIndex parent_idx, uint64_t v, Job t, uint64_t node_id);
};

// Grow-only node storage with stable indices. Chunks are allocated lazily;
// nothing is recycled until the next computation resets the arena, so stale
// steals and superseded children can always be inspected safely.
class NodeArena {
 public:
  static constexpr int kChunkBits = 12;
  static constexpr int kChunkSize = 1 << kChunkBits;
  static constexpr int kMaxChunks = 1 << 14;

  NodeArena() = default;
  ~NodeArena();
  NodeArena(const NodeArena&) = delete;
  NodeArena& operator=(const NodeArena&) = delete;

  NodeIndex allocate();
  void reset() { size_.store(0, std::memory_order_relaxed); }

  TaskNode& operator[](NodeIndex i) {
    return chunks_[i >> kChunkBits].load(std::memory_order_acquire)[i & (kChunkSize - 1)];
  }
  const TaskNode& operator[](NodeIndex i) const {
    return chunks_[i >> kChunkBits].load(std::memory_order_acquire)[i & (kChunkSize - 1)];
  }
  int32_t size() const { return size_.load(std::memory_order_acquire); }

  // Owner-only: appends child to parent's chain with release publication.
  void append_child(NodeIndex parent, NodeIndex child);

 private:
  std::atomic<int32_t> size_{0};
  std::array<std::atomic<TaskNode*>, kMaxChunks> chunks_{};
};

struct ForkJoinCounters {
  std::atomic<uint64_t> forks{0};
  std::atomic<uint64_t> joins{0};
  std::atomic<uint64_t> discarded_forks{0};
  std::atomic<uint64_t> discarded_joins{0};
};

// The capability passed to an executing task or continuation. It is bound to
// one version epoch of one node; once the node is reclaimed the handle goes
// stale and fork/join calls through it are discarded (a restart of this
// subtree is already in progress, so the stale builder's output is dropped).
class NodeHandle final : public ForkJoinContext {
 public:
  void fork(Job task) override;
  void join(Job continuation) override;

  NodeHandle(NodeArena* arena, NodeIndex node, uint64_t epoch, bool in_continuation,
             ForkJoinCounters* counters)
      : arena_(arena), node_(node), epoch_(epoch), in_continuation_(in_continuation),
        counters_(counters) {}

 private:
  NodeArena* arena_;
  NodeIndex node_;
  uint64_t epoch_;
  bool in_continuation_;
  bool joined_ = false;
  ForkJoinCounters* counters_;
};

}  // namespace cobra
