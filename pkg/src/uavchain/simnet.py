"""Deterministic discrete-event network simulator.

A single global event queue ordered by (time, sequence) drives everything:
mobility ticks, transaction arrivals, message queue arrivals and deliveries,
block proposals, and timeout checks.  The full trace is a pure function of
(scenario, fault plan, protocol, seed); every random draw comes from a
labeled substream of the master seed, so runs replay bit-identically.

Message transport composes the radio model: per-message latency is
processing + measured FIFO queue wait + transmission + propagation.  Each
receiver runs one deterministic-service queue (one message per 1/rate
seconds); the measured wait is the time between physical arrival and
service start, which reduces to the analytic queue estimate at steady
state and to zero on an idle node.

Attack injection: byzantine senders mutate their own outbound traffic
(equivocation, invalid blocks, silence), DDoS windows pour junk messages
straight into a target's inbound queue where they burn service capacity
until signature verification discards them, and spoofing windows shift
reported positions, which distorts the link distances the transport layer
sees without touching true physics.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
import random
from dataclasses import dataclass, field, replace
from typing import Any, Iterator, Optional

from . import consensus as cons
from .consensus import (
    ConsensusState,
    Mission,
    ProtocolConfig,
    ProtocolKind,
    UavProfile,
    ValidatorSet,
    byzantine_tolerance,
    substream,
)
from .domain import (
    Block,
    Commit,
    ConsensusMessage,
    NodeId,
    Prepare,
    PrePrepare,
    Transaction,
    TxKind,
    forged_message,
    hex_digest,
    signed_message,
)
from .faults import ByzantineStrategy, FaultPlan
from .mobility import Vec3, ZERO, apply_spoofing, sample_waypoint, steer_to_waypoint, step
from .radio import MIN_LINK_DISTANCE_M, PROPAGATION_SPEED_M_S, link_capacity
from .scenario import DeployedUav, Scenario, deploy_fleet

# Synthetic sender id used by DDoS junk traffic; never part of any fleet.
ATTACKER_ID: NodeId = 10**9

_MISSION_TX_KIND = {
    Mission.CONNECTIVITY: TxKind.STATUS_REPORT,
    Mission.DELIVERY: TxKind.SUPPLY_REQUEST,
    Mission.RESCUE: TxKind.TASK_ASSIGNMENT,
    Mission.ASSESSMENT: TxKind.DAMAGE_REPORT,
}


@dataclass(frozen=True)
class TxForward:
    """Wire wrapper moving a client transaction to a validator's mempool."""

    tx: Transaction


@dataclass
class NodeQueue:
    """Single-server FIFO with deterministic service time per message.

    The backlog is bounded (tail drop), so a flood saturates the node for
    the attack window instead of leaving an unbounded drain queue behind.
    """

    service_rate: float
    max_backlog_msgs: int = 500
    busy_until: float = 0.0
    pending_starts: list[float] = field(default_factory=list)
    served: int = 0
    tail_dropped: int = 0
    total_wait_s: float = 0.0
    max_wait_s: float = 0.0
    total_len_seen: float = 0.0

    def length_at(self, now: float) -> int:
        starts = self.pending_starts
        i = 0
        while i < len(starts) and starts[i] <= now:
            i += 1
        if i:
            del starts[:i]
        return len(starts)

    def admit(self, now: float) -> Optional[tuple[float, float]]:
        """Enqueue one message; returns (service_start, measured_wait), or
        None when the backlog is full and the message is tail-dropped."""
        qlen = self.length_at(now)
        if qlen >= self.max_backlog_msgs:
            self.tail_dropped += 1
            return None
        start = max(now, self.busy_until)
        self.busy_until = start + 1.0 / self.service_rate
        wait = start - now
        self.pending_starts.append(start)
        self.served += 1
        self.total_wait_s += wait
        self.max_wait_s = max(self.max_wait_s, wait)
        self.total_len_seen += qlen
        return start, wait


@dataclass
class SimNode:
    uav: DeployedUav
    queue: NodeQueue
    kin: KinematicState
    machine: Optional[ConsensusState] = None
    waypoint: Vec3 = ZERO
    proposed: set = field(default_factory=set)
    sync_pending: bool = False

    @property
    def node_id(self) -> NodeId:
        return self.uav.profile.node

    @property
    def mission(self) -> Mission:
        return self.uav.profile.mission


class EventTrace:
    """Ordered run trace: one JSON-compatible record per event."""

    def __init__(self) -> None:
        self.records: list[dict[str, Any]] = []

    def add(self, record: dict[str, Any]) -> None:
        self.records.append(record)

    def jsonl_lines(self) -> Iterator[str]:
        for record in self.records:
            yield json.dumps(record, sort_keys=True, separators=(",", ":"))

    def hash_hex(self) -> str:
        h = hashlib.sha256()
        for line in self.jsonl_lines():
            h.update(line.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    def by_kind(self, kind: str) -> list[dict[str, Any]]:
        return [r for r in self.records if r["kind"] == kind]


@dataclass
class RunResult:
    trace: EventTrace
    counters: dict[str, int]
    duration_s: float
    validator_ids: tuple[NodeId, ...]
    chains: dict[NodeId, tuple[Block, ...]]
    queue_stats: dict[NodeId, dict[str, float]]

    def trace_hash(self) -> str:
        return self.trace.hash_hex()


# Event kind ordering inside the heap is (time, seq); kind is payload only.
_EV_MOBILITY = "mobility"
_EV_TX = "tx"
_EV_QARR = "qarr"
_EV_DELIVER = "deliver"
_EV_PROPOSAL = "proposal"
_EV_TIMEOUT = "timeout"
_EV_JUNK = "junk"
_EV_SYNC = "sync"

# A validator that times out this many times in a row suspects it has fallen
# behind and fetches the committed chain from its peers (state transfer).
SYNC_AFTER_TIMEOUTS = 2
SYNC_DELAY_S = 0.2


class Simulation:
    """One deterministic run of a scenario under a protocol and fault plan."""

    def __init__(
        self,
        scenario: Scenario,
        fault_plan: FaultPlan,
        protocol: ProtocolKind,
        seed: int,
        enforce_tolerance: bool = True,
    ) -> None:
        self.scenario = scenario
        self.plan = fault_plan
        self.protocol = protocol
        self.seed = seed
        self.cfg: ProtocolConfig = scenario.consensus.protocol_config(protocol, seed)

        self.rng_drop = substream(seed, "drop")
        self.rng_net = substream(seed, "net")
        self.rng_attack = substream(seed, "attack")
        self.rng_equiv = substream(seed, "equivocate")

        self.now = 0.0
        self._seq = 0
        self._rec_seq = 0
        self._heap: list[tuple[float, int, str, tuple]] = []
        self.trace = EventTrace()
        self.full_trace = scenario.trace_detail == "full"

        self.counters: dict[str, int] = {
            "sent": 0,
            "delivered": 0,
            "dropped": 0,
            "dropped_zero_capacity": 0,
            "dropped_queue_full": 0,
            "junk_injected": 0,
            "invalid_signature": 0,
            "unknown_sender": 0,
            "invalid_block": 0,
            "view_changes": 0,
            "blocks_committed": 0,
            "txs_committed": 0,
        }

        self.nodes: dict[NodeId, SimNode] = {}
        uavs = deploy_fleet(scenario, seed)
        for uav in uavs:
            self.nodes[uav.profile.node] = SimNode(
                uav=uav,
                queue=NodeQueue(service_rate=scenario.service.service_rate_msgs_per_s),
                kin=uav.state,
            )

        self.profiles: dict[NodeId, UavProfile] = {
            u.profile.node: u.profile for u in uavs
        }
        # An empty fleet still runs (mobility only); consensus needs nodes.
        self.vset: Optional[ValidatorSet] = self._elect() if self.profiles else None
        if enforce_tolerance and self.vset is not None:
            fault_plan.check_tolerance(self.vset.ids, byzantine_tolerance(self.vset.n))

        for node_id in sorted(self.vset.ids) if self.vset else ():
            self.nodes[node_id].machine = cons.initial_state(
                node_id, "validator", 0.0, self.cfg
            )

        # Canonical committed prefix: first commit seen per height.
        self.first_commit: dict[int, tuple[float, Block]] = {}
        # Chain-level block cadence; proposals respect a global floor.
        self.last_proposal_time: float = -math.inf
        self._vc_seen: set = set()
        self._failed_proposer_logged: set = set()
        self._epoch_commits = 0
        self._tx_counter = 0

        self._init_waypoints()
        self._schedule(scenario.mobility.dt, _EV_MOBILITY, ())
        self._generate_workload()
        self._generate_junk()
        for node_id in sorted(self.vset.ids) if self.vset else ():
            machine = self.nodes[node_id].machine
            self._schedule(machine.timeout_deadline, _EV_TIMEOUT, (node_id, machine.timeout_deadline))
        self._schedule_proposer_duty(first=True)

    # -- setup ---------------------------------------------------------------

    def _elect(self) -> ValidatorSet:
        n = self.scenario.consensus.n_validators
        if self.protocol is ProtocolKind.PURE_PBFT:
            n = len(self.profiles)
        profiles = [self.profiles[i] for i in sorted(self.profiles)]
        return cons.elect_validators(profiles, self.scenario.consensus.weights, n)

    def _init_waypoints(self) -> None:
        rng = substream(self.seed, "mobility")
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            node.waypoint = self._sample_cluster_waypoint(node, rng)
        self._mobility_rng = rng

    def _sample_cluster_waypoint(self, node: SimNode, rng: random.Random) -> Vec3:
        region = node.uav.waypoint_region
        area = self.scenario.area
        box = replace(
            area,
            x_min=region.x_min,
            x_max=region.x_max,
            y_min=region.y_min,
            y_max=region.y_max,
        )
        return sample_waypoint(rng, box)

    def _generate_workload(self) -> None:
        rng = substream(self.seed, "workload")
        rate = self.scenario.workload.tx_rate_per_uav
        if rate <= 0:
            return
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            t = rng.expovariate(rate)
            while t < self.scenario.duration_s:
                tx = Transaction(
                    tx_id=self._tx_counter,
                    origin=node_id,
                    created_at=t,
                    payload_bits=self.scenario.workload.payload_bits,
                    kind=_MISSION_TX_KIND[node.mission],
                )
                self._tx_counter += 1
                self._schedule(t, _EV_TX, (tx,))
                t += rng.expovariate(rate)

    def _generate_junk(self) -> None:
        for window in self.plan.ddos:
            if window.flood_rate_msgs_per_s <= 0:
                continue
            t = window.start_s + self.rng_attack.expovariate(window.flood_rate_msgs_per_s)
            end = window.start_s + window.duration_s
            while t < min(end, self.scenario.duration_s):
                junk_digest = self.rng_attack.getrandbits(256).to_bytes(32, "big")
                self._schedule(t, _EV_JUNK, (window.target, junk_digest))
                t += self.rng_attack.expovariate(window.flood_rate_msgs_per_s)

    # -- event plumbing --------------------------------------------------------

    def _schedule(self, time: float, kind: str, data: tuple) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (time, self._seq, kind, data))

    def _record(self, kind: str, **fields: Any) -> None:
        self._rec_seq += 1
        record = {"t": round(self.now, 9), "seq": self._rec_seq, "kind": kind}
        record.update(fields)
        self.trace.add(record)

    # -- transport -------------------------------------------------------------

    def _wire_bits(self, wire: Any) -> int:
        cp = self.scenario.consensus
        if isinstance(wire, TxForward):
            return wire.tx.payload_bits
        body = wire.body
        if isinstance(body, PrePrepare):
            return cp.header_bits + sum(tx.payload_bits for tx in body.block.transactions)
        return cp.vote_bits

    def _distance(self, a: SimNode, b: SimNode) -> float:
        pa = a.kin.reported_position
        pb = b.kin.reported_position
        return max(pa.distance_to(pb), MIN_LINK_DISTANCE_M)

    def _send(self, wire: Any, src: NodeId, dst: NodeId) -> None:
        self.counters["sent"] += 1
        if self.full_trace:
            self._record("send", src=src, dst=dst, msg=_wire_kind(wire))
        if self.plan.drop_prob > 0 and self.rng_drop.random() < self.plan.drop_prob:
            self.counters["dropped"] += 1
            if self.full_trace:
                self._record("drop", src=src, dst=dst, reason="loss")
            return
        a, b = self.nodes[src], self.nodes[dst]
        distance = self._distance(a, b)
        cap = link_capacity(self.scenario.radio, distance)
        if cap <= 0.0:
            self.counters["dropped_zero_capacity"] += 1
            if self.full_trace:
                self._record("drop", src=src, dst=dst, reason="zero_capacity")
            return
        trans_s = self._wire_bits(wire) / cap
        prop_s = distance / PROPAGATION_SPEED_M_S
        jitter = 0.0
        if self.scenario.extra_delay_jitter_s > 0:
            jitter = self.rng_net.uniform(0.0, self.scenario.extra_delay_jitter_s)
        t_arr = self.now + trans_s + prop_s + jitter
        self._schedule(t_arr, _EV_QARR, (dst, wire, src, self.now))

    def _broadcast(self, sender: NodeId, messages: list[ConsensusMessage]) -> None:
        strategy = self.plan.byzantine.get(sender)
        recipients = [v for v in sorted(self.vset.ids) if v != sender]
        for msg in messages:
            for out_msg, targets in self._apply_byzantine(sender, msg, strategy, recipients):
                for dst in targets:
                    self._send(out_msg, sender, dst)

    def _apply_byzantine(
        self,
        sender: NodeId,
        msg: ConsensusMessage,
        strategy: Optional[ByzantineStrategy],
        recipients: list[NodeId],
    ) -> list[tuple[ConsensusMessage, list[NodeId]]]:
        """Mutate one outbound message per the sender's strategy."""
        if strategy is None:
            return [(msg, recipients)]
        if strategy is ByzantineStrategy.SILENT:
            return []
        body = msg.body
        if strategy is ByzantineStrategy.EQUIVOCATE and isinstance(body, (Prepare, Commit)):
            fake_hash = hashlib.sha256(
                body.block_hash + self.rng_equiv.getrandbits(64).to_bytes(8, "big")
            ).digest()
            fake_body = replace(body, block_hash=fake_hash)
            half = len(recipients) // 2
            return [
                (msg, recipients[:half]),
                (signed_message(sender, fake_body), recipients[half:]),
            ]
        if strategy is ByzantineStrategy.INVALID_BLOCK and isinstance(body, PrePrepare):
            block = body.block
            broken = replace(
                block,
                block_hash=bytes(b ^ 0xFF for b in block.block_hash),
            )
            return [(signed_message(sender, PrePrepare(broken)), recipients)]
        return [(msg, recipients)]

    # -- consensus plumbing ------------------------------------------------------

    def _proposer_for(self, height: int, view: int) -> NodeId:
        return self.cfg.proposer_for(self.vset, height, view)

    def _schedule_proposer_duty(self, first: bool = False) -> None:
        """Arm a proposal event for whichever validator leads its own (h, v)."""
        if self.vset is None:
            return
        for node_id in sorted(self.vset.ids):
            node = self.nodes[node_id]
            machine = node.machine
            if machine is None:
                continue
            h, v = machine.height, machine.view
            if (h, v) in node.proposed:
                continue
            if self._proposer_for(h, v) != node_id:
                continue
            if self.plan.byzantine.get(node_id) is ByzantineStrategy.SILENT:
                continue
            earliest = max(
                self.now,
                self.last_proposal_time + self.scenario.consensus.min_block_interval_s,
            )
            if first:
                earliest = max(earliest, self.scenario.consensus.min_block_interval_s)
            node.proposed.add((h, v))
            self._schedule(earliest, _EV_PROPOSAL, (node_id, h, v))

    def _arm_timeout(self, node_id: NodeId) -> None:
        machine = self.nodes[node_id].machine
        if machine is None:  # node left the validator set mid-absorb
            return
        self._schedule(machine.timeout_deadline, _EV_TIMEOUT, (node_id, machine.timeout_deadline))

    def _absorb_result(self, node_id: NodeId, result: cons.HandleResult) -> None:
        node = self.nodes[node_id]
        old = node.machine
        node.machine = result.state
        for block in result.committed:
            self._note_commit(node_id, block)
        if result.state.view != old.view:
            self.counters["view_changes"] += 1
            key = (old.height, old.view, node_id)
            if key not in self._vc_seen:
                self._vc_seen.add(key)
                self._record(
                    "view_adopted", node=node_id, height=old.height,
                    old_view=old.view, new_view=result.state.view,
                )
            self._note_failed_proposer(old.height, old.view)
        if result.state.timeout_deadline != old.timeout_deadline:
            self._arm_timeout(node_id)
        if result.outbound:
            self._broadcast(node_id, result.outbound)
        if result.committed or result.state.view != old.view:
            self._schedule_proposer_duty()

    def _note_commit(self, node_id: NodeId, block: Block) -> None:
        self._record("commit", node=node_id, height=block.height, hash=hex_digest(block.block_hash))
        if block.height not in self.first_commit:
            self.first_commit[block.height] = (self.now, block)
            self.counters["blocks_committed"] += 1
            self.counters["txs_committed"] += len(block.transactions)
            self._record(
                "block",
                height=block.height,
                hash=hex_digest(block.block_hash),
                proposer=block.proposer,
                view=block.view,
                txs=[tx.tx_id for tx in block.transactions],
            )
            self._epoch_commits += 1
            if self._epoch_commits >= self.scenario.consensus.reelect_every_blocks:
                self._epoch_commits = 0
                self._reelect()

    def _note_failed_proposer(self, height: int, view: int) -> None:
        key = (height, view)
        if key in self._failed_proposer_logged:
            return
        self._failed_proposer_logged.add(key)
        failed = self._proposer_for(height, view)
        self.profiles[failed] = cons.update_history(self.profiles[failed], 0.0)

    def _reelect(self) -> None:
        """Epoch boundary: refresh history scores and re-run the election."""
        if self.protocol is ProtocolKind.PURE_PBFT:
            return
        proposers = {b.proposer for _, b in self.first_commit.values()}
        for node_id in self.vset.ids:
            if node_id in proposers:
                self.profiles[node_id] = cons.update_history(self.profiles[node_id], 1.0)
        new_set = self._elect()
        if new_set.ids == self.vset.ids:
            self.vset = new_set
            return
        joined = new_set.ids - self.vset.ids
        left = self.vset.ids - new_set.ids
        self.vset = new_set
        self._record(
            "reelection", joined=sorted(joined), left=sorted(left),
            members=sorted(new_set.ids),
        )
        chain = self._canonical_chain()
        for node_id in sorted(left):
            self.nodes[node_id].machine = None
        for node_id in sorted(joined):
            machine = cons.initial_state(node_id, "validator", self.now, self.cfg)
            machine.committed_chain = chain
            machine.height = len(chain)
            self.nodes[node_id].machine = machine
            self._arm_timeout(node_id)
        self._schedule_proposer_duty()

    def _canonical_chain(self) -> tuple[Block, ...]:
        chain = [cons.genesis_block()]
        h = 1
        while h in self.first_commit:
            chain.append(self.first_commit[h][1])
            h += 1
        return tuple(chain)

    # -- event handlers -----------------------------------------------------------

    def _on_mobility(self) -> None:
        scn = self.scenario
        dt = scn.mobility.dt
        active_spoofs: dict[NodeId, Vec3] = {}
        for window in self.plan.spoof:
            if window.active(self.now):
                prev = active_spoofs.get(window.target, ZERO)
                active_spoofs[window.target] = prev + window.offset
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            state = node.kin
            accel = steer_to_waypoint(state, node.waypoint, scn.mobility)
            if accel == ZERO and state.position.distance_to(node.waypoint) <= scn.mobility.waypoint_arrival_radius:
                node.waypoint = self._sample_cluster_waypoint(node, self._mobility_rng)
                accel = steer_to_waypoint(state, node.waypoint, scn.mobility)
            state = replace(state, acceleration=accel)
            state = step(state, scn.mobility)
            node.kin = apply_spoofing(state, active_spoofs.get(node_id, ZERO))
        self._record("mobility_tick")
        nxt = self.now + dt
        if nxt < scn.duration_s:
            self._schedule(nxt, _EV_MOBILITY, ())

    def _on_tx(self, tx: Transaction) -> None:
        origin = self.nodes[tx.origin]
        self._record(
            "tx_arrival", tx=tx.tx_id, origin=tx.origin,
            mission=origin.mission.value, bits=tx.payload_bits,
        )
        wire = TxForward(tx)
        for validator in sorted(self.vset.ids) if self.vset else ():
            if validator == tx.origin:
                machine = self.nodes[validator].machine
                if machine is not None:
                    self.nodes[validator].machine = machine.add_transactions([tx])
            else:
                self._send(wire, tx.origin, validator)

    def _on_qarr(self, dst: NodeId, wire: Any, src: NodeId, sent_at: float) -> None:
        node = self.nodes[dst]
        admitted = node.queue.admit(self.now)
        if admitted is None:
            self.counters["dropped_queue_full"] += 1
            if self.full_trace:
                self._record("drop", src=src, dst=dst, reason="queue_full")
            return
        start, _wait = admitted
        deliver_at = start + self.scenario.service.proc_latency_s
        self._schedule(deliver_at, _EV_DELIVER, (dst, wire, src, sent_at))

    def _on_deliver(self, dst: NodeId, wire: Any, src: NodeId, sent_at: float) -> None:
        self.counters["delivered"] += 1
        if self.full_trace:
            self._record(
                "deliver", src=src, dst=dst, msg=_wire_kind(wire),
                latency=round(self.now - sent_at, 9),
            )
        node = self.nodes[dst]
        machine = node.machine
        if machine is None:
            return
        if isinstance(wire, TxForward):
            node.machine = machine.add_transactions([wire.tx])
            return
        result = cons.handle_message(machine, wire, self.vset, self.now, self.cfg)
        self._absorb_result(dst, result)

    def _on_junk(self, target: NodeId, junk_digest: bytes) -> None:
        self.counters["junk_injected"] += 1
        junk = forged_message(ATTACKER_ID, Prepare(junk_digest, 1, 0))
        self._schedule(self.now, _EV_QARR, (target, junk, ATTACKER_ID, self.now))

    def _on_sync(self, node_id: NodeId) -> None:
        """State transfer: fast-forward a lagging validator to the committed
        chain its peers hold.  The blocks are quorum-certified, so adopting
        them never conflicts with any honest commit."""
        node = self.nodes[node_id]
        node.sync_pending = False
        machine = node.machine
        if machine is None:
            return
        chain = self._canonical_chain()
        if len(chain) <= machine.height:
            return
        fresh = cons.initial_state(node_id, "validator", self.now, self.cfg)
        fresh.committed_chain = chain
        fresh.height = len(chain)
        fresh.view = chain[-1].view
        committed_ids = {tx.tx_id for b in chain for tx in b.transactions}
        fresh.mempool = tuple(tx for tx in machine.mempool if tx.tx_id not in committed_ids)
        fresh.mempool_ids = frozenset(tx.tx_id for tx in fresh.mempool)
        node.machine = fresh
        self._record(
            "sync", node=node_id, from_height=machine.height, to_height=fresh.height,
        )
        self._arm_timeout(node_id)
        self._schedule_proposer_duty()

    def _on_proposal(self, node_id: NodeId, height: int, view: int) -> None:
        node = self.nodes[node_id]
        machine = node.machine
        if machine is None or machine.height != height or machine.view != view:
            return
        if self._proposer_for(height, view) != node_id:
            return
        block = cons.proposal_for_turn(machine, self.cfg)
        self.last_proposal_time = self.now
        self._record(
            "proposal", node=node_id, height=height, view=view,
            hash=hex_digest(block.block_hash), txs=len(block.transactions),
        )
        msg = signed_message(node_id, PrePrepare(block))
        self._broadcast(node_id, [msg])
        result = cons.handle_message(machine, msg, self.vset, self.now, self.cfg)
        self._absorb_result(node_id, result)

    def _on_timeout(self, node_id: NodeId, deadline: float) -> None:
        node = self.nodes[node_id]
        machine = node.machine
        if machine is None or machine.timeout_deadline != deadline:
            return
        if self.now < deadline:
            return
        new_state, outbound = cons.on_timeout(machine, self.now, self.cfg)
        node.machine = new_state
        if outbound:
            self._record("timeout", node=node_id, height=machine.height, view=machine.view)
            if self.plan.byzantine.get(node_id) is not ByzantineStrategy.SILENT:
                self._broadcast(node_id, outbound)
            # A node's own view-change vote can complete a quorum locally.
            for msg in outbound:
                result = cons.handle_message(node.machine, msg, self.vset, self.now, self.cfg)
                self._absorb_result(node_id, result)
        if (
            node.machine is not None
            and node.machine.timeouts_since_commit >= SYNC_AFTER_TIMEOUTS
            and not node.sync_pending
        ):
            node.sync_pending = True
            self._schedule(self.now + SYNC_DELAY_S, _EV_SYNC, (node_id,))
        self._arm_timeout(node_id)

    # -- main loop ------------------------------------------------------------------

    def run(self, t_end: Optional[float] = None) -> RunResult:
        end = self.scenario.duration_s if t_end is None else t_end
        while self._heap:
            time, seq, kind, data = self._heap[0]
            if time > end:
                break
            heapq.heappop(self._heap)
            self.now = time
            if kind == _EV_MOBILITY:
                self._on_mobility()
            elif kind == _EV_TX:
                self._on_tx(*data)
            elif kind == _EV_QARR:
                self._on_qarr(*data)
            elif kind == _EV_DELIVER:
                self._on_deliver(*data)
            elif kind == _EV_PROPOSAL:
                self._on_proposal(*data)
            elif kind == _EV_TIMEOUT:
                self._on_timeout(*data)
            elif kind == _EV_JUNK:
                self._on_junk(*data)
            elif kind == _EV_SYNC:
                self._on_sync(*data)
        self.now = end
        self._finalize()
        return RunResult(
            trace=self.trace,
            counters=dict(self.counters),
            duration_s=end,
            validator_ids=self.vset.member_nodes() if self.vset else (),
            chains={
                node_id: node.machine.committed_chain
                for node_id, node in sorted(self.nodes.items())
                if node.machine is not None
            },
            queue_stats=self._queue_stats(),
        )

    def _queue_stats(self) -> dict[NodeId, dict[str, float]]:
        stats = {}
        for node_id in sorted(self.nodes):
            q = self.nodes[node_id].queue
            if q.served == 0:
                continue
            stats[node_id] = {
                "served": q.served,
                "mean_wait_s": q.total_wait_s / q.served,
                "max_wait_s": q.max_wait_s,
                "mean_len": q.total_len_seen / q.served,
                "mean_len_over_rate_s": (q.total_len_seen / q.served) / q.service_rate,
            }
        return stats

    def _finalize(self) -> None:
        for node_id in sorted(self.nodes):
            machine = self.nodes[node_id].machine
            if machine is None:
                continue
            self.counters["invalid_signature"] += machine.invalid_signature_count
            self.counters["unknown_sender"] += machine.unknown_sender_count
            self.counters["invalid_block"] += machine.invalid_block_count
        in_flight = (
            self.counters["sent"]
            + self.counters["junk_injected"]
            - self.counters["delivered"]
            - self.counters["dropped"]
            - self.counters["dropped_zero_capacity"]
            - self.counters["dropped_queue_full"]
        )
        self._record(
            "end",
            counters=dict(self.counters),
            in_flight=in_flight,
            duration_s=self.now,
        )


def _wire_kind(wire: Any) -> str:
    if isinstance(wire, TxForward):
        return "TxForward"
    return wire.kind()


def run(
    scenario: Scenario,
    fault_plan: FaultPlan,
    protocol: ProtocolKind,
    seed: int,
    t_end: Optional[float] = None,
    enforce_tolerance: bool = True,
) -> RunResult:
    """Run one experiment to t_end (scenario duration by default)."""
    sim = Simulation(scenario, fault_plan, protocol, seed, enforce_tolerance)
    return sim.run(t_end)
