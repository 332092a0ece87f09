#include "cobra/task_graph.hpp"

#include <stdexcept>

namespace cobra {

const char* to_string(NodeState s) {
  switch (s) {
    case NodeState::Free: return "free";
    case NodeState::Busy: return "busy";
    case NodeState::Inactive: return "inactive";
    case NodeState::Done: return "done";
  }
  return "?";
}

bool transition_is_legal(NodeState from, NodeState to) {
  switch (from) {
    case NodeState::Free: return to == NodeState::Busy;
    case NodeState::Busy: return to == NodeState::Done || to == NodeState::Inactive;
    case NodeState::Inactive: return to == NodeState::Busy;
    case NodeState::Done: return false;
  }
  return false;
}

bool TaskNode::try_transition(NodeState from, NodeState to) {
  if (!transition_is_legal(from, to))
    throw std::logic_error(std::string("illegal state transition ") + to_string(from) + " -> " +
                           to_string(to));
  NodeState expected = from;
  return state.compare_exchange_strong(expected, to, std::memory_order_acq_rel,
                                       std::memory_order_acquire);
}

void TaskNode::reset(NodeIndex parent_idx, uint64_t v, Job t, uint64_t node_id) {
  state.store(NodeState::Free, std::memory_order_relaxed);
  version.store(v, std::memory_order_relaxed);
  parent = parent_idx;
  first_child.store(kNoNode, std::memory_order_relaxed);
  next_sibling.store(kNoNode, std::memory_order_relaxed);
  last_child = kNoNode;
  task = std::move(t);
  continuation = nullptr;
  refail_armed = false;
  sentinel = false;
  id = node_id;
}

NodeArena::~NodeArena() {
  for (auto& c : chunks_) {
    TaskNode* p = c.load(std::memory_order_relaxed);
    delete[] p;
  }
}

NodeIndex NodeArena::allocate() {
  int32_t idx = size_.fetch_add(1, std::memory_order_relaxed);
  COBRA_CHECK(idx < kMaxChunks * kChunkSize, "node arena exhausted");
  int chunk = idx >> kChunkBits;
  TaskNode* p = chunks_[chunk].load(std::memory_order_acquire);
  if (p == nullptr) {
    TaskNode* fresh = new TaskNode[kChunkSize];
    TaskNode* expected = nullptr;
    if (chunks_[chunk].compare_exchange_strong(expected, fresh, std::memory_order_acq_rel)) {
      p = fresh;
    } else {
      delete[] fresh;
      p = expected;
    }
  }
  return idx;
}

void NodeArena::append_child(NodeIndex parent_idx, NodeIndex child) {
  TaskNode& p = (*this)[parent_idx];
  if (p.last_child == kNoNode) {
    p.first_child.store(child, std::memory_order_release);
  } else {
    (*this)[p.last_child].next_sibling.store(child, std::memory_order_release);
  }
  p.last_child = child;
}

void NodeHandle::fork(Job task) {
  if (in_continuation_)
    throw UserProgramError("fork called from a join continuation");
  TaskNode& cur = (*arena_)[node_];
  if (cur.version.load(std::memory_order_relaxed) != epoch_) {
    // The node was reclaimed while this execution was still running; a
    // restart is rebuilding the subtree, so this child is dropped.
    counters_->discarded_forks.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  NodeIndex child = arena_->allocate();
  (*arena_)[child].reset(node_, epoch_, std::move(task), static_cast<uint64_t>(child));
  arena_->append_child(node_, child);
  counters_->forks.fetch_add(1, std::memory_order_relaxed);
}

void NodeHandle::join(Job continuation) {
  if (in_continuation_)
    throw UserProgramError("join called from a join continuation");
  TaskNode& cur = (*arena_)[node_];
  if (cur.version.load(std::memory_order_relaxed) != epoch_) {
    counters_->discarded_joins.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  if (joined_)
    throw UserProgramError("join called twice in one task execution");
  cur.continuation = std::move(continuation);
  joined_ = true;
  counters_->joins.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace cobra
