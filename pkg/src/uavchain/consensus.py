"""Validator election and the DPoS-PBFT replicated state machine.

Election scores each UAV by a weighted sum of normalized stake, fuel,
capability, and history; the top n form the validator set.  Block proposers
rotate round-robin or are drawn stake-weighted from a seeded stream shared
by every node, so all honest nodes agree on the schedule without extra
messages.

The block agreement machine runs the three-phase flow (pre-prepare /
prepare / commit, each phase advancing on a strict two-thirds quorum of
distinct senders) with view changes on timeout.  Two standard guards make
the three phases safe across view changes:

* a node that has seen a prepare quorum for a block locks on it, and in
  later views of the same height will only prepare-vote that block (the
  lock is released only by a prepare quorum for another block in a newer
  view, which quorum intersection makes impossible once any honest node has
  committed);
* a commit quorum observed for a stored block commits it immediately,
  whatever phase or view the node is in, so nodes left behind by a view
  change still converge on the committed block.

Every transition is a pure function of (state, message, validator set,
clock, protocol config): ``handle_message`` returns a new state and never
mutates its input.  Vote tallies are keyed sets of distinct senders, so the
final state is independent of message arrival order.

Two baseline protocols share the machine: pure-DPoS commits on the
proposer's block plus a simple majority of acknowledgments in a single
round (no view change), and pure-PBFT is the same three-phase flow with
every fleet node as a validator and the primary fixed by view number.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Iterable, NamedTuple, Optional, Sequence

from .domain import (
    Block,
    Commit,
    ConsensusMessage,
    NodeId,
    Prepare,
    PrePrepare,
    Transaction,
    ViewChange,
    block_is_valid,
    genesis_block,
    make_block,
    signed_message,

)


class TooFewNodes(ValueError):
    pass


class ZeroTotalStake(ValueError):
    """Total stake of the validator set is zero; no silent uniform fallback."""


class Mission(Enum):
    CONNECTIVITY = "connectivity"
    DELIVERY = "delivery"
    RESCUE = "rescue"
    ASSESSMENT = "assessment"


class ProtocolKind(Enum):
    HYBRID = "hybrid"
    PURE_DPOS = "dpos"
    PURE_PBFT = "pbft"


class ProposerPolicy(Enum):
    ROUND_ROBIN = "round_robin"
    STAKE_WEIGHTED = "stake_weighted"


@dataclass(frozen=True)
class UavProfile:
    node: NodeId
    stake: float
    fuel: float
    capability: float
    history: float
    mission: Mission

    def __post_init__(self) -> None:
        if self.stake < 0:
            raise ValueError("stake must be >= 0")
        for name in ("fuel", "capability", "history"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class ScoreWeights:
    """Election weights, normalized to sum to 1 at construction."""

    w1: float = 0.25
    w2: float = 0.25
    w3: float = 0.25
    w4: float = 0.25

    def __post_init__(self) -> None:
        vals = (self.w1, self.w2, self.w3, self.w4)
        if any(w < 0 for w in vals):
            raise ValueError("weights must be non-negative")
        total = sum(vals)
        if total <= 0:
            raise ValueError("weights must not all be zero")
        if abs(total - 1.0) > 1e-12:
            object.__setattr__(self, "w1", self.w1 / total)
            object.__setattr__(self, "w2", self.w2 / total)
            object.__setattr__(self, "w3", self.w3 / total)
            object.__setattr__(self, "w4", self.w4 / total)


@dataclass(frozen=True)
class ValidatorInfo:
    node: NodeId
    score: float
    stake: float


@dataclass(frozen=True)
class ValidatorSet:
    """Elected members ordered by descending score, ties by ascending id."""

    members: tuple[ValidatorInfo, ...]

    def __post_init__(self) -> None:
        if len(self.members) < 1:
            raise ValueError("validator set must be non-empty")
        order = [(-m.score, m.node) for m in self.members]
        if order != sorted(order):
            raise ValueError("members must be sorted by score desc, node asc")

    @property
    def n(self) -> int:
        return len(self.members)

    @property
    def ids(self) -> frozenset[NodeId]:
        return frozenset(m.node for m in self.members)

    def member_nodes(self) -> tuple[NodeId, ...]:
        return tuple(m.node for m in self.members)


def validator_score(profile: UavProfile, weights: ScoreWeights) -> float:
    """Weighted sum of the four normalized metrics (stake pre-normalized)."""
    return (
        weights.w1 * profile.stake
        + weights.w2 * profile.fuel
        + weights.w3 * profile.capability
        + weights.w4 * profile.history
    )


def elect_validators(
    profiles: Sequence[UavProfile], weights: ScoreWeights, n: int
) -> ValidatorSet:
    """Top-n profiles by score; stakes max-normalized across the fleet first."""
    if n < 4:
        raise TooFewNodes("validator set needs n >= 4 for byzantine tolerance")
    if len(profiles) < n:
        raise TooFewNodes(f"need at least {n} profiles, got {len(profiles)}")
    max_stake = max(p.stake for p in profiles)
    scored = []
    for p in profiles:
        normalized = replace(p, stake=(p.stake / max_stake if max_stake > 0 else 0.0))
        scored.append((validator_score(normalized, weights), p))
    scored.sort(key=lambda item: (-item[0], item[1].node))
    members = tuple(
        ValidatorInfo(node=p.node, score=s, stake=p.stake) for s, p in scored[:n]
    )
    return ValidatorSet(members=members)


def proposer_distribution(vset: ValidatorSet) -> dict[NodeId, float]:
    """Stake share of each member; raises if the set holds no stake at all."""
    total = sum(m.stake for m in vset.members)
    if total <= 0:
        raise ZeroTotalStake("validator set has zero total stake")
    return {m.node: m.stake / total for m in vset.members}


def select_proposer(
    vset: ValidatorSet,
    policy: ProposerPolicy,
    round_index: int,
    rng: Optional[random.Random] = None,
) -> NodeId:
    """Next proposer: rotating schedule or a seeded stake-weighted draw."""
    if policy is ProposerPolicy.ROUND_ROBIN:
        return vset.members[round_index % vset.n].node
    if rng is None:
        raise ValueError("stake-weighted selection needs a seeded rng stream")
    dist = proposer_distribution(vset)
    u = rng.random()
    acc = 0.0
    for member in vset.members:
        acc += dist[member.node]
        if u < acc:
            return member.node
    return vset.members[-1].node


def quorum_threshold(n: int) -> int:
    """Smallest vote count strictly greater than two thirds of n."""
    return (2 * n) // 3 + 1


def majority_threshold(n: int) -> int:
    return n // 2 + 1


def byzantine_tolerance(n: int) -> int:
    return (n - 1) // 3


def update_history(profile: UavProfile, outcome: float) -> UavProfile:
    """Exponential moving average of per-epoch behavior (1 good, 0 bad)."""
    return replace(profile, history=0.9 * profile.history + 0.1 * outcome)


def derive_seed(master_seed: int, label: str) -> int:
    """Independent, platform-stable substream seed for (master, label)."""
    digest = hashlib.sha256(f"{master_seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def substream(master_seed: int, label: str) -> random.Random:
    return random.Random(derive_seed(master_seed, label))


@dataclass(frozen=True)
class ProtocolConfig:
    """Fixed per-run protocol parameters shared by every node."""

    kind: ProtocolKind = ProtocolKind.HYBRID
    policy: ProposerPolicy = ProposerPolicy.STAKE_WEIGHTED
    timeout_s: float = 0.5
    timeout_backoff: float = 2.0
    max_txs_per_block: int = 16
    optimistic_fast_path: bool = False
    seed: int = 0

    def proposer_for(self, vset: ValidatorSet, height: int, view: int) -> NodeId:
        return _proposer_for_cached(self, vset, height, view)

    def commit_quorum(self, n: int) -> int:
        if self.kind is ProtocolKind.PURE_DPOS:
            return majority_threshold(n)
        return quorum_threshold(n)


@lru_cache(maxsize=200_000)
def _proposer_for_cached(
    cfg: ProtocolConfig, vset: ValidatorSet, height: int, view: int
) -> NodeId:
    """The shared proposer schedule; a pure function of its arguments, so all
    nodes agree on it without communicating."""
    if cfg.kind is ProtocolKind.PURE_PBFT:
        return vset.members[view % vset.n].node
    if cfg.kind is ProtocolKind.PURE_DPOS:
        return vset.members[height % vset.n].node
    if cfg.policy is ProposerPolicy.ROUND_ROBIN:
        return select_proposer(vset, ProposerPolicy.ROUND_ROBIN, height + view)
    rng = substream(cfg.seed, f"proposer:{height}:{view}")
    return select_proposer(vset, ProposerPolicy.STAKE_WEIGHTED, height + view, rng)


class Phase(Enum):
    IDLE = "idle"
    PRE_PREPARED = "pre_prepared"
    PREPARED = "prepared"
    COMMITTED = "committed"


# Buffered future-height messages beyond this window are discarded.
FUTURE_WINDOW = 16

VoteKey = tuple[bytes, int]  # (block_hash, view)


@dataclass
class ConsensusState:
    """One node's replicated-state-machine view.

    Container fields hold immutable values (tuples / frozensets / Blocks) and
    are rebound rather than mutated, so ``copy()`` is a cheap shallow copy
    and past states stay valid.
    """

    node: NodeId
    role: str = "validator"  # "validator" | "observer"
    height: int = 1
    view: int = 0
    phase: Phase = Phase.IDLE
    committed_chain: tuple[Block, ...] = field(default_factory=lambda: (genesis_block(),))
    mempool: tuple[Transaction, ...] = ()
    mempool_ids: frozenset[int] = frozenset()

    # Current-height stores.
    blocks: dict[bytes, Block] = field(default_factory=dict)
    proposals: dict[NodeId, tuple[bytes, ...]] = field(default_factory=dict)
    prepare_votes: dict[VoteKey, frozenset[NodeId]] = field(default_factory=dict)
    commit_votes: dict[VoteKey, frozenset[NodeId]] = field(default_factory=dict)
    view_change_votes: dict[int, frozenset[NodeId]] = field(default_factory=dict)

    # Own-vote bookkeeping for the current height.
    prepare_sent: dict[int, bytes] = field(default_factory=dict)
    commit_sent: frozenset[VoteKey] = frozenset()
    view_change_sent: frozenset[int] = frozenset()

    locked_hash: Optional[bytes] = None
    locked_view: int = -1

    # Messages for heights we have not reached yet.
    future: dict[int, tuple[ConsensusMessage, ...]] = field(default_factory=dict)

    timeout_deadline: float = 0.0
    timeouts_since_commit: int = 0
    consecutive_view_changes: int = 0
    observed_fault: bool = False

    invalid_signature_count: int = 0
    unknown_sender_count: int = 0
    invalid_block_count: int = 0

    def copy(self) -> "ConsensusState":
        c = ConsensusState.__new__(ConsensusState)
        c.__dict__.update(self.__dict__)
        c.blocks = dict(self.blocks)
        c.proposals = dict(self.proposals)
        c.prepare_votes = dict(self.prepare_votes)
        c.commit_votes = dict(self.commit_votes)
        c.view_change_votes = dict(self.view_change_votes)
        c.prepare_sent = dict(self.prepare_sent)
        c.future = dict(self.future)
        return c

    @property
    def tip(self) -> Block:
        return self.committed_chain[-1]

    def locked_block(self) -> Optional[Block]:
        if self.locked_hash is None:
            return None
        return self.blocks.get(self.locked_hash)

    def add_transactions(self, txs: Iterable[Transaction]) -> "ConsensusState":
        new = self.copy()
        pool = list(new.mempool)
        ids = set(new.mempool_ids)
        committed = {tx.tx_id for b in new.committed_chain for tx in b.transactions}
        for tx in txs:
            if tx.tx_id not in ids and tx.tx_id not in committed:
                pool.append(tx)
                ids.add(tx.tx_id)
        new.mempool = tuple(pool)
        new.mempool_ids = frozenset(ids)
        return new


def initial_state(
    node: NodeId, role: str, now: float, cfg: ProtocolConfig
) -> ConsensusState:
    return ConsensusState(node=node, role=role, timeout_deadline=now + cfg.timeout_s)


class HandleResult(NamedTuple):
    state: ConsensusState
    outbound: list[ConsensusMessage]
    committed: list[Block]


def create_block(state: ConsensusState, max_txs: int) -> Block:
    """Fresh block at the node's next height: FIFO mempool prefix, hashed,
    signed by this node.  An empty mempool yields a valid heartbeat block."""
    txs = state.mempool[:max_txs]
    return make_block(state.height, state.tip.block_hash, state.node, state.view, txs)


def proposal_for_turn(state: ConsensusState, cfg: ProtocolConfig) -> Block:
    """The block this node should broadcast as proposer for (height, view):
    its locked block verbatim if it holds one, else a fresh block."""
    locked = state.locked_block()
    if locked is not None and cfg.kind is not ProtocolKind.PURE_DPOS:
        return locked
    return create_block(state, cfg.max_txs_per_block)


def _body_height(msg: ConsensusMessage) -> int:
    body = msg.body
    if isinstance(body, PrePrepare):
        return body.block.height
    return body.height


def _add_vote(
    table: dict, key, sender: NodeId
) -> bool:
    existing = table.get(key, frozenset())
    if sender in existing:
        return False
    table[key] = existing | {sender}
    return True


def handle_message(
    state: ConsensusState,
    msg: ConsensusMessage,
    vset: ValidatorSet,
    now: float,
    cfg: ProtocolConfig,
) -> HandleResult:
    """Apply one message; returns (new state, outbound messages, commits).

    Messages that fail signature verification or come from outside the
    validator set are discarded and counted.  Stale (lower height or view)
    and duplicate messages leave the protocol state unchanged.
    """
    r = state.copy()
    outbound: list[ConsensusMessage] = []
    committed: list[Block] = []

    if not msg.verifies():
        r.invalid_signature_count += 1
        return HandleResult(r, outbound, committed)
    if msg.sender not in vset.ids:
        r.unknown_sender_count += 1
        return HandleResult(r, outbound, committed)

    h = _body_height(msg)
    if h < r.height:
        return HandleResult(r, outbound, committed)
    if h > r.height:
        if h - r.height <= FUTURE_WINDOW:
            r.future[h] = r.future.get(h, ()) + (msg,)
        return HandleResult(r, outbound, committed)

    _ingest(r, msg, vset, cfg)
    _advance(r, vset, cfg, now, outbound, committed)
    return HandleResult(r, outbound, committed)


def _ingest(
    r: ConsensusState, msg: ConsensusMessage, vset: ValidatorSet, cfg: ProtocolConfig
) -> None:
    """Record a current-height message into the state's tallies and stores."""
    body = msg.body
    if isinstance(body, PrePrepare):
        block = body.block
        if not block_is_valid(block, r.tip.block_hash, r.height):
            r.invalid_block_count += 1
            r.observed_fault = True
            return
        # Proposals are attributed to the broadcasting sender: a new proposer
        # may relay a locked block verbatim, so block.proposer (its original
        # creator, authenticated by the embedded signature) can differ.
        if block.block_hash not in r.blocks:
            r.blocks[block.block_hash] = block
        attributed = r.proposals.get(msg.sender, ())
        if block.block_hash not in attributed:
            r.proposals[msg.sender] = attributed + (block.block_hash,)
    elif isinstance(body, Prepare):
        if body.view >= r.view or cfg.kind is ProtocolKind.PURE_DPOS:
            _add_vote(r.prepare_votes, (body.block_hash, body.view), msg.sender)
    elif isinstance(body, Commit):
        if cfg.kind is ProtocolKind.PURE_DPOS:
            return
        if body.view >= r.view:
            _add_vote(r.commit_votes, (body.block_hash, body.view), msg.sender)
    elif isinstance(body, ViewChange):
        if cfg.kind is ProtocolKind.PURE_DPOS:
            return
        if body.new_view > r.view:
            _add_vote(r.view_change_votes, body.new_view, msg.sender)


def _candidate_hash(r: ConsensusState, vset: ValidatorSet, cfg: ProtocolConfig) -> Optional[bytes]:
    """The proposal hash this node may prepare-vote in its current view."""
    proposer = cfg.proposer_for(vset, r.height, r.view)
    candidates = [
        digest
        for digest in r.proposals.get(proposer, ())
        if r.blocks[digest].view <= r.view
    ]
    if not candidates:
        return None
    if r.locked_hash is not None:
        return r.locked_hash if r.locked_hash in candidates else None
    # An equivocating proposer may have sent several; take the first seen.
    return candidates[0]


def _apply_commit(
    r: ConsensusState,
    block: Block,
    vset: ValidatorSet,
    now: float,
    cfg: ProtocolConfig,
    committed: list[Block],
) -> None:
    committed.append(block)
    r.committed_chain = r.committed_chain + (block,)
    r.height += 1
    r.phase = Phase.IDLE
    included = {tx.tx_id for tx in block.transactions}
    r.mempool = tuple(tx for tx in r.mempool if tx.tx_id not in included)
    r.mempool_ids = frozenset(i for i in r.mempool_ids if i not in included)
    r.blocks = {}
    r.proposals = {}
    r.prepare_votes = {}
    r.commit_votes = {}
    r.view_change_votes = {}
    r.prepare_sent = {}
    r.commit_sent = frozenset()
    r.view_change_sent = frozenset()
    r.locked_hash = None
    r.locked_view = -1
    r.timeouts_since_commit = 0
    r.consecutive_view_changes = 0
    r.timeout_deadline = now + cfg.timeout_s
    # Replay anything buffered for the height we just reached.
    replay = r.future.pop(r.height, ())
    r.future = {h: msgs for h, msgs in r.future.items() if h > r.height}
    for buffered in replay:
        _ingest(r, buffered, vset, cfg)


def _advance(
    r: ConsensusState,
    vset: ValidatorSet,
    cfg: ProtocolConfig,
    now: float,
    outbound: list[ConsensusMessage],
    committed: list[Block],
) -> None:
    """Run every enabled transition to a fixpoint.

    Transitions fire off the tally state alone, so replaying the same
    message multiset in any order reaches the same fixpoint.
    """
    n = vset.n
    quorum = cfg.commit_quorum(n)
    changed = True
    while changed:
        changed = False

        if cfg.kind is ProtocolKind.PURE_DPOS:
            # Single acknowledgment round: proposer's block commits on a
            # simple majority of distinct acks.
            digest = _candidate_hash(r, vset, cfg)
            if digest is not None and r.view not in r.prepare_sent:
                r.prepare_sent[r.view] = digest
                _add_vote(r.prepare_votes, (digest, r.view), r.node)
                outbound.append(
                    signed_message(r.node, Prepare(digest, r.height, r.view))
                )
                r.phase = Phase.PRE_PREPARED
                changed = True
            for (block_hash, view), senders in list(r.prepare_votes.items()):
                if len(senders) >= quorum and block_hash in r.blocks:
                    _apply_commit(r, r.blocks[block_hash], vset, now, cfg, committed)
                    changed = True
                    break
            continue

        # Commit certificate: a commit quorum for a stored block wins
        # outright, whatever view or phase this node is in.
        done = False
        for (block_hash, view), senders in list(r.commit_votes.items()):
            if len(senders) >= quorum and block_hash in r.blocks:
                _apply_commit(r, r.blocks[block_hash], vset, now, cfg, committed)
                changed = True
                done = True
                break
        if done:
            continue

        # Optimistic fast path: commit on the proposer's signature alone
        # while no validation fault has ever been observed.
        if cfg.optimistic_fast_path and not r.observed_fault:
            digest = _candidate_hash(r, vset, cfg)
            if digest is not None:
                _apply_commit(r, r.blocks[digest], vset, now, cfg, committed)
                changed = True
                continue

        # Prepare-vote for the current view's proposal.
        if r.view not in r.prepare_sent:
            digest = _candidate_hash(r, vset, cfg)
            if digest is not None:
                r.prepare_sent[r.view] = digest
                _add_vote(r.prepare_votes, (digest, r.view), r.node)
                outbound.append(
                    signed_message(r.node, Prepare(digest, r.height, r.view))
                )
                if r.phase is Phase.IDLE:
                    r.phase = Phase.PRE_PREPARED
                changed = True

        # Prepare quorum: lock on the block and commit-vote it.
        for (block_hash, view), senders in list(r.prepare_votes.items()):
            if len(senders) < quorum or block_hash not in r.blocks:
                continue
            if view > r.locked_view:
                r.locked_hash = block_hash
                r.locked_view = view
                r.phase = Phase.PREPARED
                changed = True
            key = (block_hash, view)
            if key not in r.commit_sent:
                r.commit_sent = r.commit_sent | {key}
                _add_vote(r.commit_votes, key, r.node)
                outbound.append(
                    signed_message(r.node, Commit(block_hash, r.height, view))
                )
                changed = True

        # Join a view change once enough peers call for it; adopt on quorum.
        join_threshold = byzantine_tolerance(n) + 1
        for new_view, senders in sorted(r.view_change_votes.items()):
            if new_view <= r.view:
                continue
            if len(senders) >= join_threshold and new_view not in r.view_change_sent:
                r.view_change_sent = r.view_change_sent | {new_view}
                _add_vote(r.view_change_votes, new_view, r.node)
                outbound.append(
                    signed_message(r.node, ViewChange(new_view, r.height))
                )
                changed = True
            senders = r.view_change_votes.get(new_view, frozenset())
            if len(senders) >= quorum:
                r.view = new_view
                r.phase = Phase.IDLE
                r.consecutive_view_changes += 1
                r.timeout_deadline = now + cfg.timeout_s * (
                    cfg.timeout_backoff ** r.timeouts_since_commit
                )
                changed = True
                break


def on_timeout(
    state: ConsensusState, now: float, cfg: ProtocolConfig
) -> tuple[ConsensusState, list[ConsensusMessage]]:
    """Stalled at the current height past the deadline: call a view change.

    Re-fires re-send the same target view (receivers deduplicate); the
    deadline backs off exponentially until a commit resets it.
    """
    if now < state.timeout_deadline or cfg.kind is ProtocolKind.PURE_DPOS:
        return state, []
    r = state.copy()
    target = r.view + 1
    r.timeouts_since_commit += 1
    r.timeout_deadline = now + cfg.timeout_s * (
        cfg.timeout_backoff ** r.timeouts_since_commit
    )
    outbound: list[ConsensusMessage] = []
    msg = signed_message(r.node, ViewChange(target, r.height))
    if target not in r.view_change_sent:
        r.view_change_sent = r.view_change_sent | {target}
    _add_vote(r.view_change_votes, target, r.node)
    outbound.append(msg)
    return r, outbound


def ingest_self_proposal(
    state: ConsensusState,
    block: Block,
    vset: ValidatorSet,
    now: float,
    cfg: ProtocolConfig,
) -> HandleResult:
    """Proposer-side bookkeeping: run the proposer's own pre-prepare through
    the same transition path every other validator uses."""
    msg = signed_message(state.node, PrePrepare(block))
    return handle_message(state, msg, vset, now, cfg)
