"""Three-node protocol simulation driven by messages on a virtual clock.

Alice and Bob commit their choices block by block and send pulses; the
Center sees only the pulses, computes the BSM and announces the psi-minus
rounds over a reliable constant-latency control channel, closing each block
with a flush. After the quantum phase the End Nodes reconcile bases,
reveal a subset of bits for estimation and hand their stores to the
estimator. Every delivered message can be written to a JSONL event log from
which the whole session replays.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Union

import numpy as np

from . import _pykernels, backend, decoy
from .forward import ScenarioConfig, _node_amplitudes
from .model import Basis, BsmOutcome, GainTable, Intensity

LOG_VERSION = 1
REVEAL_SLOT = 11  # random-stream slot for the public sampling decision


class ProtocolError(RuntimeError):
    """A message that the protocol forbids, e.g. a reveal of an unretained round."""


class NodeId(str, Enum):
    ALICE = "Alice"
    BOB = "Bob"
    CENTER = "Center"


@dataclass(frozen=True)
class BsmAnnouncement:
    round_index: int
    outcome: BsmOutcome


@dataclass(frozen=True)
class BasisReveal:
    round_index: int
    basis: Basis
    intensity: Intensity


@dataclass(frozen=True)
class SubsetReveal:
    round_index: int
    bit: int


@dataclass(frozen=True)
class SessionControl:
    action: str  # start | stop | flush
    upto: int = 0  # flush: every round below this index is settled

    def __post_init__(self):
        if self.action not in ("start", "stop", "flush"):
            raise ValueError(f"unknown control action {self.action!r}")


Message = Union[BsmAnnouncement, BasisReveal, SubsetReveal, SessionControl]


@dataclass
class SiftedStore:
    """What one End Node keeps.

    ``settings`` holds the node's own ``basis * 3 + intensity`` for every
    round sent; it never leaves the node during the session and is combined
    with the peer's only by the offline estimator.
    """

    node: NodeId
    round_index: np.ndarray
    basis: np.ndarray
    bit: np.ndarray
    intensity: np.ndarray
    settings: np.ndarray
    revealed_own: dict[int, int] = field(default_factory=dict)
    revealed_peer: dict[int, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.round_index.size)

    def tallies(self) -> np.ndarray:
        """Retained rounds per own ``(basis, intensity)``, shape ``(2, 3)``."""
        counts = np.bincount(self.basis.astype(np.int64) * 3 + self.intensity, minlength=6)
        return counts.reshape(2, 3)

    def __eq__(self, other):
        if not isinstance(other, SiftedStore):
            return NotImplemented
        return (
            self.node == other.node
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("round_index", "basis", "bit", "intensity", "settings")
            )
            and self.revealed_own == other.revealed_own
            and self.revealed_peer == other.revealed_peer
        )


@dataclass(frozen=True)
class SessionEstimate:
    table: GainTable
    sent: np.ndarray
    retained: np.ndarray
    revealed: np.ndarray
    errors: np.ndarray
    unrevealed: np.ndarray  # retained cells without any revealed bit


class SessionOutcome(NamedTuple):
    store_a: SiftedStore
    store_b: SiftedStore
    table: GainTable
    result: decoy.DecoyResult | None


@dataclass
class Causality:
    """Counters filled while the session runs; zero violations is the contract."""

    checks: int = 0
    violations: list[str] = field(default_factory=list)

    def require(self, ok: bool, what: str) -> None:
        self.checks += 1
        if not ok:
            self.violations.append(what)


def public_uniforms(seed: int, rounds: np.ndarray) -> np.ndarray:
    """Shared sampling randomness for arbitrary round indices."""
    key = _pykernels.stream_key(seed)
    idx = np.asarray(rounds, dtype=np.uint64)
    with np.errstate(over="ignore"):
        states = _pykernels._mix(key + idx * _pykernels.GOLDEN)
    return _pykernels.uniforms(states, REVEAL_SLOT)


class EndNode:
    def __init__(self, node: NodeId, source, transmittance: float, seed: int, offset: int, kernels, causality):
        self.node = node
        self.peer = NodeId.BOB if node is NodeId.ALICE else NodeId.ALICE
        self.source = source
        self.amp = _node_amplitudes(source, transmittance)
        self.seed = seed
        self.offset = offset
        self.k = kernels
        self.causality = causality
        self.committed = 0
        self.settled = 0
        self.pending: dict[int, tuple[int, np.ndarray, np.ndarray, np.ndarray]] = {}
        self.settings: list[np.ndarray] = []
        self.retained: dict[int, tuple[int, int, int]] = {}
        self.matched: set[int] = set()
        self.revealed_own: dict[int, int] = {}
        self.revealed_peer: dict[int, int] = {}
        self.peer_bases: dict[int, tuple[int, int]] = {}
        self.reconciled = False

    def commit(self, start: int, n: int) -> np.ndarray:
        """Draw and fix this block's choices; returns the pulses sent."""
        if start != self.committed:
            raise ProtocolError(f"{self.node.value}: block at {start} out of order")
        p = self.source
        basis, bit, inten = self.k.draw_choices(self.seed, start, n, p.p_basis, p.p_intensity[0], p.p_intensity[1], self.offset)
        basis = np.asarray(basis)
        bit = np.asarray(bit)
        inten = np.asarray(inten)
        self.pending[start] = (n, basis, bit, inten)
        self.settings.append((basis * 3 + inten).astype(np.uint8))
        self.committed = start + n
        return self.amp[basis, bit, inten]

    def _lookup(self, r: int):
        for start, (n, basis, bit, inten) in self.pending.items():
            if start <= r < start + n:
                i = r - start
                return int(basis[i]), int(bit[i]), int(inten[i])
        return None

    def on_announcement(self, msg: BsmAnnouncement, sent_at: float, now: float, round_time: float) -> None:
        r = msg.round_index
        self.causality.require(sent_at >= round_time, f"{self.node.value}: round {r} announced before it was sent")
        self.causality.require(now >= sent_at, f"{self.node.value}: round {r} delivered before it was announced")
        if r < self.settled or r >= self.committed:
            raise ProtocolError(f"{self.node.value}: announcement for unknown round {r}")
        if msg.outcome is not BsmOutcome.PSI_MINUS:
            raise ProtocolError(f"{self.node.value}: only psi-minus rounds are announced (round {r})")
        choice = self._lookup(r)
        if choice is None or r in self.retained:
            raise ProtocolError(f"{self.node.value}: announcement for unknown round {r}")
        self.retained[r] = choice

    def on_flush(self, upto: int) -> None:
        for start in [s for s, (n, *_rest) in self.pending.items() if s + n <= upto]:
            del self.pending[start]
        self.settled = max(self.settled, upto)

    def basis_reveals(self) -> list[BasisReveal]:
        return [BasisReveal(r, Basis(b), Intensity(i)) for r, (b, _bit, i) in sorted(self.retained.items())]

    def on_basis_reveal(self, msg: BasisReveal) -> None:
        r = msg.round_index
        if r not in self.retained:
            raise ProtocolError(f"{self.node.value}: basis reveal for unretained round {r}")
        self.peer_bases[r] = (int(msg.basis), int(msg.intensity))

    def reconcile(self) -> None:
        if set(self.peer_bases) != set(self.retained):
            raise ProtocolError(f"{self.node.value}: basis reveals do not cover the retained rounds")
        self.matched = {r for r, (b, _bit, _i) in self.retained.items() if b == self.peer_bases[r][0]}
        self.reconciled = True

    def subset_reveals(self, reveal_x: float, reveal_z: float) -> list[SubsetReveal]:
        rounds = np.array(sorted(self.matched), dtype=np.int64)
        if rounds.size == 0:
            return []
        u = public_uniforms(self.seed, rounds)
        out = []
        for r, ur in zip(rounds.tolist(), u.tolist()):
            basis, bit, _i = self.retained[r]
            frac = reveal_z if basis == Basis.Z else reveal_x
            if ur < frac:
                self.revealed_own[r] = bit
                out.append(SubsetReveal(r, bit))
        return out

    def on_subset_reveal(self, msg: SubsetReveal) -> None:
        r = msg.round_index
        if not self.reconciled or r not in self.matched:
            raise ProtocolError(f"{self.node.value}: bit reveal for unretained round {r}")
        self.revealed_peer[r] = int(msg.bit)

    def store(self) -> SiftedStore:
        rounds = sorted(self.matched)
        rows = [self.retained[r] for r in rounds]
        arr = np.array(rows, dtype=np.uint8).reshape(-1, 3)
        settings = np.concatenate(self.settings) if self.settings else np.zeros(0, np.uint8)
        return SiftedStore(
            self.node,
            np.array(rounds, dtype=np.int64),
            arr[:, 0].copy(),
            arr[:, 1].copy(),
            arr[:, 2].copy(),
            settings,
            dict(self.revealed_own),
            dict(self.revealed_peer),
        )


class Center:
    """Sees pulses only; never the End Nodes' choices."""

    def __init__(self, seed: int, overlap: float, nu: float, kernels):
        self.seed = seed
        self.overlap = overlap
        self.nu = nu
        self.k = kernels

    def measure(self, start: int, pulses_a: np.ndarray, pulses_b: np.ndarray) -> list[int]:
        psi = np.asarray(self.k.measure(self.seed, start, pulses_a, pulses_b, self.overlap, self.nu))
        return (np.flatnonzero(psi) + start).tolist()


class _ReplayCenter:
    """Stands in for :class:`Center`, answering from a recorded log."""

    def __init__(self, psi_rounds):
        self.psi = sorted(psi_rounds)

    def measure(self, start: int, pulses_a, pulses_b) -> list[int]:
        end = start + len(pulses_a)
        return [r for r in self.psi if start <= r < end]


def _encode(msg: Message) -> dict:
    if isinstance(msg, BsmAnnouncement):
        return {"type": "BsmAnnouncement", "round": msg.round_index, "outcome": msg.outcome.name}
    if isinstance(msg, BasisReveal):
        return {"type": "BasisReveal", "round": msg.round_index, "basis": msg.basis.name, "intensity": msg.intensity.label}
    if isinstance(msg, SubsetReveal):
        return {"type": "SubsetReveal", "round": msg.round_index, "bit": msg.bit}
    return {"type": "SessionControl", "action": msg.action, "upto": msg.upto}


def _decode(d: dict) -> Message:
    kind = d["type"]
    if kind == "BsmAnnouncement":
        return BsmAnnouncement(int(d["round"]), BsmOutcome[d["outcome"]])
    if kind == "BasisReveal":
        return BasisReveal(int(d["round"]), Basis[d["basis"]], Intensity.from_label(d["intensity"]))
    if kind == "SubsetReveal":
        return SubsetReveal(int(d["round"]), int(d["bit"]))
    if kind == "SessionControl":
        return SessionControl(d["action"], int(d.get("upto", 0)))
    raise ValueError(f"unknown message type {kind!r}")


class Session:
    """One protocol run. ``run()`` returns a :class:`SessionOutcome`.

    Parameters
    ----------
    scenario : ScenarioConfig
    rounds : int
    seed : int
    latency : float
        Control-channel latency in seconds.
    reveal_x, reveal_z : float
        Fractions of reconciled rounds whose bits are disclosed.
    block : int
        Rounds committed per block.
    record : bool
        Keep the JSONL event log in ``self.log``.
    """

    def __init__(
        self,
        scenario: ScenarioConfig,
        rounds: int,
        seed: int,
        latency: float = 1e-4,
        *,
        reveal_x: float = 1.0,
        reveal_z: float = 0.1,
        block: int = 1 << 16,
        record: bool = False,
        kernels=None,
        f: float = decoy.F_EC,
    ):
        if rounds < 1:
            raise ValueError("rounds must be >= 1")
        if latency < 0:
            raise ValueError("latency must be >= 0")
        if block < 1:
            raise ValueError("block must be >= 1")
        for name, frac in (("reveal_x", reveal_x), ("reveal_z", reveal_z)):
            if not 0.0 <= frac <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        self.scenario = scenario
        self.rounds = int(rounds)
        self.seed = int(seed)
        self.latency = float(latency)
        self.reveal_x = float(reveal_x)
        self.reveal_z = float(reveal_z)
        self.block = int(block)
        self.record = record
        self.f = f
        self.k = kernels or backend.get()
        self.causality = Causality()
        self.log: list[str] = []
        self.estimate: SessionEstimate | None = None
        self.decoy_error: str | None = None
        self._center = None

    def header(self) -> dict:
        return {
            "event": "header",
            "version": LOG_VERSION,
            "rounds": self.rounds,
            "seed": self.seed,
            "latency_s": self.latency,
            "reveal_x": self.reveal_x,
            "reveal_z": self.reveal_z,
            "block_rounds": self.block,
        }

    def _round_time(self, r: int) -> float:
        return r / self.scenario.detection.qubit_rate

    def run(self) -> SessionOutcome:
        sc = self.scenario
        ta, tb = sc.transmittances()
        alice = EndNode(NodeId.ALICE, sc.alice, ta, self.seed, 0, self.k, self.causality)
        bob = EndNode(NodeId.BOB, sc.bob, tb, self.seed, 3, self.k, self.causality)
        nodes = {NodeId.ALICE: alice, NodeId.BOB: bob}
        center = self._center or Center(self.seed, sc.detection.overlap, sc.detection.noise_mean, self.k)
        queue: list = []
        seq = 0
        self.log = []
        if self.record:
            self.log.append(json.dumps(self.header(), sort_keys=True))

        def send(sender: NodeId, to: NodeId, msg: Message, at: float) -> None:
            nonlocal seq
            heapq.heappush(queue, (at + self.latency, seq, at, sender, to, msg))
            seq += 1

        def deliver_until(t: float) -> None:
            while queue and queue[0][0] <= t:
                now, _s, sent_at, sender, to, msg = heapq.heappop(queue)
                if self.record:
                    entry = {"t": now, "from": sender.value, "to": to.value}
                    entry.update(_encode(msg))
                    self.log.append(json.dumps(entry, sort_keys=True))
                node = nodes[to]
                if isinstance(msg, BsmAnnouncement):
                    node.on_announcement(msg, sent_at, now, self._round_time(msg.round_index))
                elif isinstance(msg, SessionControl):
                    if msg.action == "flush":
                        node.on_flush(msg.upto)
                elif isinstance(msg, BasisReveal):
                    node.on_basis_reveal(msg)
                else:
                    node.on_subset_reveal(msg)

        for node in (NodeId.ALICE, NodeId.BOB):
            send(NodeId.CENTER, node, SessionControl("start"), 0.0)
        deliver_until(0.0)

        start = 0
        while start < self.rounds:
            n = min(self.block, self.rounds - start)
            pa = alice.commit(start, n)
            pb = bob.commit(start, n)
            end_time = self._round_time(start + n)
            self.causality.require(
                alice.committed >= start + n and bob.committed >= start + n,
                f"center measured block {start} before both nodes committed",
            )
            for r in center.measure(start, pa, pb):
                for node in (NodeId.ALICE, NodeId.BOB):
                    send(NodeId.CENTER, node, BsmAnnouncement(r, BsmOutcome.PSI_MINUS), self._round_time(r))
            for node in (NodeId.ALICE, NodeId.BOB):
                send(NodeId.CENTER, node, SessionControl("flush", start + n), end_time)
            deliver_until(end_time)
            start += n

        t = self._round_time(self.rounds)
        for node in (NodeId.ALICE, NodeId.BOB):
            send(NodeId.CENTER, node, SessionControl("stop", self.rounds), t)
        deliver_until(math.inf)
        t += self.latency
        self.causality.require(not alice.pending and not bob.pending, "unsettled rounds after stop")

        # basis reconciliation
        for src in (alice, bob):
            for msg in src.basis_reveals():
                send(src.node, src.peer, msg, t)
        deliver_until(math.inf)
        t += self.latency
        alice.reconcile()
        bob.reconcile()

        # estimation subset
        for src in (alice, bob):
            for msg in src.subset_reveals(self.reveal_x, self.reveal_z):
                send(src.node, src.peer, msg, t)
        deliver_until(math.inf)

        store_a, store_b = alice.store(), bob.store()
        self.estimate = estimate_from_session(store_a, store_b)
        result = None
        try:
            result = decoy.analyze(self.estimate.table, sc.alice.mu, sc.bob.mu, self.f)
        except (decoy.InfeasibleError, ArithmeticError, ValueError) as exc:
            self.decoy_error = str(exc)
        return SessionOutcome(store_a, store_b, self.estimate.table, result)

    def log_text(self) -> str:
        return "".join(line + "\n" for line in self.log)


def estimate_from_session(store_a: SiftedStore, store_b: SiftedStore, revealed=None) -> SessionEstimate:
    """Per-cell gains from retained counts, QBERs from revealed bits only.

    ``revealed`` restricts the error estimate to the given round indices; by
    default every round both nodes disclosed is used. Cells with retained
    rounds but no revealed bit report ``E = 0.5`` and are flagged.
    """
    if not np.array_equal(store_a.round_index, store_b.round_index):
        raise ProtocolError("stores disagree on the retained rounds")
    if store_a.settings.size != store_b.settings.size:
        raise ProtocolError("stores cover different numbers of rounds")
    if np.any(store_a.basis != store_b.basis):
        raise ProtocolError("stores contain mismatched-basis rounds")
    sa = store_a.settings.astype(np.int64)
    sb = store_b.settings.astype(np.int64)
    ba, ia = sa // 3, sa % 3
    bb, ib = sb // 3, sb % 3
    same = ba == bb
    sent = np.bincount(((ba * 3 + ia) * 3 + ib)[same], minlength=18).reshape(2, 3, 3)

    cell = (store_a.basis.astype(np.int64) * 3 + store_a.intensity) * 3 + store_b.intensity
    retained = np.bincount(cell, minlength=18).reshape(2, 3, 3)

    if revealed is None:
        revealed = set(store_a.revealed_own) & set(store_b.revealed_own)
    revealed = set(int(r) for r in revealed)
    pos = {r: i for i, r in enumerate(store_a.round_index.tolist())}
    rev = np.zeros(18, dtype=np.int64)
    err = np.zeros(18, dtype=np.int64)
    for r in sorted(revealed):
        if r not in pos:
            raise ProtocolError(f"revealed round {r} was not retained")
        bit_a = store_b.revealed_peer.get(r, store_a.revealed_own.get(r))
        bit_b = store_a.revealed_peer.get(r, store_b.revealed_own.get(r))
        if bit_a is None or bit_b is None:
            raise ProtocolError(f"round {r} lacks a disclosed bit")
        c = cell[pos[r]]
        rev[c] += 1
        err[c] += bit_a == bit_b  # psi-minus anticorrelates the bits
    rev = rev.reshape(2, 3, 3)
    err = err.reshape(2, 3, 3)
    with np.errstate(invalid="ignore", divide="ignore"):
        Q = np.where(sent > 0, retained / np.maximum(sent, 1), 0.0)
        E = np.where(rev > 0, err / np.maximum(rev, 1), 0.5)
    return SessionEstimate(GainTable(Q, E), sent, retained, rev, err, (retained > 0) & (rev == 0))


def run_session(
    scenario: ScenarioConfig,
    rounds: int,
    seed: int,
    channel_latency: float = 1e-4,
    **kwargs,
) -> SessionOutcome:
    """Run a session and return ``(store_a, store_b, table, decoy_result)``.

    ``decoy_result`` is ``None`` when the bounding program rejects the
    estimated table (statistical fluctuations are not covered by the
    asymptotic analysis).
    """
    return Session(scenario, rounds, seed, channel_latency, **kwargs).run()


def replay(log_text: str, scenario: ScenarioConfig, **kwargs) -> Session:
    """Re-run a session from its event log; the Center is replaced by the log.

    The returned session has been run with recording on; its
    :meth:`Session.log_text` equals the input when the replay is faithful.
    """
    lines = [ln for ln in log_text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty event log")
    head = json.loads(lines[0])
    if head.get("event") != "header" or head.get("version") != LOG_VERSION:
        raise ValueError("event log lacks a recognised header")
    psi = set()
    for ln in lines[1:]:
        entry = json.loads(ln)
        msg = _decode(entry)
        if isinstance(msg, BsmAnnouncement):
            psi.add(msg.round_index)
    s = Session(
        scenario,
        head["rounds"],
        head["seed"],
        head["latency_s"],
        reveal_x=head["reveal_x"],
        reveal_z=head["reveal_z"],
        block=head["block_rounds"],
        record=True,
        **kwargs,
    )
    s._center = _ReplayCenter(psi)
    s.outcome = s.run()
    return s
