#pragma once

#include <cstdint>

#include "cobra/common.hpp"
#include "cobra/task_graph.hpp"

namespace cobra {

// Outcome of running a task or continuation through the environment.
enum class ExecOutcome : uint8_t { Ok, Fault };

// Phases of the scheduling loop, one shared-memory micro-operation each.
// The same machine drives real worker threads and the deterministic checker;
// the checker interleaves executions at exactly this granularity.
enum class Phase : uint8_t {
  kLoopTop,         // poll failure token / completion, select a node or go steal
  kParentState,     // read the selected node's parent state
  kParentVersion,   // read parent version; drop the node if superseded
  kScanChild,       // classify one child (free / inactive / busy / done)
  kClaimCas,        // CAS Free -> Busy on a free child
  kReclaimCheck,    // re-check Inactive before reclaiming
  kReclaimStepA,    // version bump (state publish first when barrier mutated)
  kReclaimStepB,    // state publish (version bump when barrier mutated)
  kReclaimReset,    // clear children/continuation, arm percolation wrapper
  kExecTask,        // run the claimed node's task
  kEnterList,       // publish the claimed node into the own working list
  kRunContinuation, // run the node's continuation
  kMarkDone,        // CAS Busy -> Done and drop from the list
  kStealPick,       // choose a victim
  kStealReadSlot,   // read one victim working-list slot
  kStealScanChild,  // read one victim child's state
  kStealCas,        // CAS Free -> Busy on the victim child
  kStealValidate,   // version validation of the stolen child
  kFailInactivate,  // one Busy -> Inactive transition of the failure reset
  kFailFinish,      // reinitialize worker-local scheduler state
  kHalted,
};

const char* to_string(Phase p);

inline constexpr uint32_t kStealBackoff = 64;  // failed empty-list rounds before yielding

enum class ClaimKind : uint8_t { None, Local, Reclaim, Steal };

// One worker's scheduling loop as an explicit step machine. All registers are
// plain data so the checker can snapshot and hash them. `Env` supplies every
// shared-memory access, task execution, list access and instrumentation hook;
// real and simulated environments implement the same surface.
template <typename Env>
struct WorkerMachine {
  int id = 0;
  Phase phase = Phase::kLoopTop;

  uint32_t cursor = 0;      // round-robin position in the working list
  uint32_t inspected = 0;   // consecutive nodes seen with only busy children
  NodeIndex node = kNoNode; // node under inspection
  uint32_t node_pos = 0;
  NodeState parent_state_reg = NodeState::Free;

  NodeIndex scan_child = kNoNode;
  NodeIndex first_inactive = kNoNode;
  bool saw_nondone = false;

  NodeIndex claim = kNoNode;
  ClaimKind claim_kind = ClaimKind::None;
  uint64_t reclaim_ver = 0;

  int victim = -1;
  uint32_t victim_slot = 0;
  NodeIndex victim_node = kNoNode;
  NodeIndex steal_child = kNoNode;
  uint32_t steal_streak = 0;

  uint32_t fail_pos = 0;
  uint32_t fail_count = 0;

  WorkerMachine() = default;
  explicit WorkerMachine(int worker_id) : id(worker_id) {}

  void reset_for_run() {
    phase = Phase::kLoopTop;
    cursor = inspected = node_pos = 0;
    node = scan_child = first_inactive = claim = kNoNode;
    saw_nondone = false;
    claim_kind = ClaimKind::None;
    victim = -1;
    victim_slot = 0;
    victim_node = steal_child = kNoNode;
    steal_streak = 0;
    fail_pos = fail_count = 0;
  }

  bool halted() const { return phase == Phase::kHalted; }

  // Executes one protocol micro-step. Returns false once halted.
  bool step(Env& env);

 private:
  void begin_scan(Env& env) {
    scan_child = env.first_child(node);
    first_inactive = kNoNode;
    saw_nondone = false;
    phase = Phase::kScanChild;
  }

  void begin_failure() {
    fail_pos = 0;
    fail_count = 0;
    phase = Phase::kFailInactivate;
  }

  void steal_round_failed(Env& env) {
    ++steal_streak;
    if (env.list_size(id) == 0 && steal_streak % kStealBackoff == 0)
      env.idle_pause(id, steal_streak);
    phase = Phase::kLoopTop;
  }
};

template <typename Env>
bool WorkerMachine<Env>::step(Env& env) {
  switch (phase) {
    case Phase::kHalted:
      return false;

    case Phase::kLoopTop: {
      if (env.computation_done()) {
        phase = Phase::kHalted;
        return false;
      }
      if (env.poll_fault(id)) {
        begin_failure();
        return true;
      }
      int n = env.list_size(id);
      if (n == 0) {
        phase = Phase::kStealPick;
        return true;
      }
      if (inspected >= static_cast<uint32_t>(n)) {
        // Every listed node has busy children: try one steal round, then
        // come back to the own list.
        inspected = 0;
        phase = Phase::kStealPick;
        return true;
      }
      if (cursor >= static_cast<uint32_t>(n)) cursor = 0;
      node_pos = cursor;
      node = env.list_at(id, static_cast<int>(cursor));
      ++cursor;
      ++inspected;
      if (env.is_sentinel(node)) {
        begin_scan(env);
      } else {
        phase = Phase::kParentState;
      }
      return true;
    }

    case Phase::kParentState:
      parent_state_reg = env.load_state(env.parent_of(node));
      phase = Phase::kParentVersion;
      return true;

    case Phase::kParentVersion: {
      uint64_t pv = env.load_version(env.parent_of(node));
      bool stale = parent_state_reg == NodeState::Inactive ||
                   pv > env.load_version_owned(node);
      env.note_parent_check(id, node, !stale);
      if (stale) {
        // The parent was inactivated or reclaimed; this node belongs to a
        // superseded epoch and will be recreated by the restart.
        env.list_remove_at(id, static_cast<int>(node_pos));
        if (cursor > node_pos) cursor = node_pos;
        inspected = 0;
        node = kNoNode;
        phase = Phase::kLoopTop;
      } else {
        begin_scan(env);
      }
      return true;
    }

    case Phase::kScanChild: {
      if (scan_child == kNoNode) {
        if (first_inactive != kNoNode) {
          claim = first_inactive;
          phase = Phase::kReclaimCheck;
        } else if (!saw_nondone) {
          phase = Phase::kRunContinuation;
        } else {
          phase = Phase::kLoopTop;  // busy children: move on to the next node
        }
        return true;
      }
      NodeState st = env.load_state(scan_child);
      if (st == NodeState::Free) {
        claim = scan_child;
        phase = Phase::kClaimCas;
        return true;
      }
      if (st == NodeState::Inactive) {
        if (first_inactive == kNoNode) first_inactive = scan_child;
        saw_nondone = true;
      } else if (st == NodeState::Busy) {
        saw_nondone = true;
      }
      scan_child = env.next_sibling(scan_child);
      return true;
    }

    case Phase::kClaimCas: {
      if (env.cas_state(id, claim, NodeState::Free, NodeState::Busy)) {
        env.note_claim(id, claim, env.load_version_owned(claim), false);
        claim_kind = ClaimKind::Local;
        phase = Phase::kExecTask;
      } else {
        saw_nondone = true;  // someone else claimed it
        scan_child = env.next_sibling(claim);
        claim = kNoNode;
        phase = Phase::kScanChild;
      }
      return true;
    }

    case Phase::kReclaimCheck: {
      // Only the worker responsible for the parent reaches this point, so a
      // plain check-then-write suffices (no CAS needed on this path).
      if (env.load_state(claim) == NodeState::Inactive) {
        reclaim_ver = env.load_version_owned(claim);
        env.note_reclaim_begin(id, claim);
        phase = Phase::kReclaimStepA;
      } else {
        claim = kNoNode;
        phase = Phase::kLoopTop;
      }
      return true;
    }

    case Phase::kReclaimStepA:
      // The version bump must be visible before the Busy publication so that
      // superseded children either still see an inactive parent or see a
      // larger parent version. The mutated order exists only as a regression
      // guard for the checker.
      if (!env.reclaim_barrier_mutated())
        env.reclaim_store_version(id, claim, reclaim_ver + 1);
      else
        env.reclaim_publish_busy(id, claim);
      phase = Phase::kReclaimStepB;
      return true;

    case Phase::kReclaimStepB:
      if (!env.reclaim_barrier_mutated())
        env.reclaim_publish_busy(id, claim);
      else
        env.reclaim_store_version(id, claim, reclaim_ver + 1);
      phase = Phase::kReclaimReset;
      return true;

    case Phase::kReclaimReset:
      env.reclaim_reset(id, claim);
      env.note_claim(id, claim, reclaim_ver + 1, false);
      claim_kind = ClaimKind::Reclaim;
      phase = Phase::kExecTask;
      return true;

    case Phase::kExecTask: {
      ExecOutcome r = env.execute_task(id, claim);
      if (r == ExecOutcome::Fault) {
        begin_failure();
      } else {
        phase = Phase::kEnterList;
      }
      return true;
    }

    case Phase::kEnterList:
      env.list_push(id, claim);
      claim = kNoNode;
      claim_kind = ClaimKind::None;
      inspected = 0;
      steal_streak = 0;
      phase = Phase::kLoopTop;
      return true;

    case Phase::kRunContinuation: {
      env.assert_children_done(id, node);
      ExecOutcome r = env.execute_continuation(id, node);
      if (r == ExecOutcome::Fault) {
        begin_failure();
      } else {
        phase = Phase::kMarkDone;
      }
      return true;
    }

    case Phase::kMarkDone: {
      bool ok = env.cas_state(id, node, NodeState::Busy, NodeState::Done);
      COBRA_CHECK(ok, "owner Busy->Done transition lost");
      env.list_remove_at(id, static_cast<int>(node_pos));
      if (cursor > node_pos) cursor = node_pos;
      inspected = 0;
      node = kNoNode;
      phase = Phase::kLoopTop;
      return true;
    }

    case Phase::kStealPick: {
      if (env.worker_count() < 2) {
        steal_round_failed(env);
        return true;
      }
      victim = env.pick_victim(id);
      victim_slot = 0;
      phase = Phase::kStealReadSlot;
      return true;
    }

    case Phase::kStealReadSlot: {
      NodeIndex vn = env.victim_list_at(victim, static_cast<int>(victim_slot));
      if (vn == kNoNode) {
        steal_round_failed(env);
        return true;
      }
      victim_node = vn;
      steal_child = env.first_child(victim_node);
      phase = Phase::kStealScanChild;
      return true;
    }

    case Phase::kStealScanChild: {
      if (steal_child == kNoNode) {
        ++victim_slot;
        phase = Phase::kStealReadSlot;
        return true;
      }
      NodeState st = env.load_state(steal_child);
      if (st == NodeState::Free) {
        phase = Phase::kStealCas;
      } else {
        steal_child = env.next_sibling(steal_child);
      }
      return true;
    }

    case Phase::kStealCas: {
      if (env.cas_state(id, steal_child, NodeState::Free, NodeState::Busy)) {
        phase = Phase::kStealValidate;
      } else {
        steal_child = env.next_sibling(steal_child);
        phase = Phase::kStealScanChild;
      }
      return true;
    }

    case Phase::kStealValidate: {
      // A child claimed out of a superseded children snapshot has a smaller
      // version than its (reclaimed) parent; it stays abandoned and the scan
      // moves on.
      uint64_t vv = env.load_version(victim_node);
      if (vv <= env.load_version_owned(steal_child)) {
        env.note_claim(id, steal_child, env.load_version_owned(steal_child), true);
        claim = steal_child;
        claim_kind = ClaimKind::Steal;
        steal_streak = 0;
        phase = Phase::kExecTask;
      } else {
        env.note_steal_rejected(id, steal_child);
        steal_child = env.next_sibling(steal_child);
        phase = Phase::kStealScanChild;
      }
      return true;
    }

    case Phase::kFailInactivate: {
      if (claim != kNoNode) {
        // The claim whose execution faulted: Busy but not yet listed.
        bool ok = env.cas_state(id, claim, NodeState::Busy, NodeState::Inactive);
        COBRA_CHECK(ok, "in-flight claim must be Busy");
        claim = kNoNode;
        claim_kind = ClaimKind::None;
        ++fail_count;
        return true;
      }
      int n = env.list_size(id);
      if (fail_pos < static_cast<uint32_t>(n) &&
          env.is_sentinel(env.list_at(id, static_cast<int>(fail_pos)))) {
        ++fail_pos;
        return true;
      }
      if (fail_pos < static_cast<uint32_t>(n)) {
        NodeIndex v = env.list_at(id, static_cast<int>(fail_pos));
        bool ok = env.cas_state(id, v, NodeState::Busy, NodeState::Inactive);
        COBRA_CHECK(ok, "listed nodes are Busy");
        env.list_remove_at(id, static_cast<int>(fail_pos));
        ++fail_count;
        return true;
      }
      phase = Phase::kFailFinish;
      return true;
    }

    case Phase::kFailFinish:
      env.reinit_after_failure(id);
      env.note_failure_handled(id, fail_count);
      cursor = 0;
      inspected = 0;
      steal_streak = 0;
      fail_pos = 0;
      fail_count = 0;
      node = kNoNode;
      scan_child = kNoNode;
      first_inactive = kNoNode;
      saw_nondone = false;
      phase = Phase::kLoopTop;
      return true;
  }
  return false;
}

}  // namespace cobra
