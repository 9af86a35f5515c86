"""Distributed execution substrate for the belief-propagation rounds.

Each sensor runs as an independent agent holding only its own edge
constraints.  Per round it broadcasts its current belief, collects the
neighbors' previous-round beliefs, computes the incoming opinions locally,
fuses them, and re-estimates its position.  Two interchangeable transports
carry the broadcasts: an in-process board for simulation and UDP datagrams
with a fixed 52-byte frame for running over real sockets.  Both execute the
same arithmetic, so their belief histories are identical.

Belief frame layout (little-endian, 52 bytes total):

    0   4  magic "GBPL"
    4   1  version (1)
    5   1  kind (0 = belief)
    6   2  sender node id, unsigned
    8   4  iteration, unsigned
    12  40 five float64: mu_x, mu_y, P_xx, P_xy, P_yy

Ack frames reuse the header with kind 1 and carry the acked peer id instead
of a payload (14 bytes).  The round barrier over UDP is enforced by the
iteration tag plus per-round acknowledgment with bounded rebroadcast.
"""

from __future__ import annotations

import socket
import struct
import threading
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .bp import (
    BpConfig,
    GaussianBelief,
    _check_connected,
    _neighbor_map,
    anchor_belief,
    compute_message,
    fuse_messages,
    has_converged,
    init_belief,
    resolve_alpha,
)
from .errors import (
    BadMagic,
    FrameError,
    NonFiniteField,
    NumericalFailure,
    RoundTimeout,
    SenderIdOverflow,
    TruncatedFrame,
    UnexpectedKind,
    UnsupportedVersion,
)
from .geometry import EdgeConstraint

MAGIC = b"GBPL"
VERSION = 1
KIND_BELIEF = 0
KIND_ACK = 1

_BELIEF_STRUCT = struct.Struct("<4sBBHI5d")
_ACK_STRUCT = struct.Struct("<4sBBHIH")

BELIEF_FRAME_SIZE = _BELIEF_STRUCT.size  # 52
ACK_FRAME_SIZE = _ACK_STRUCT.size  # 14


def encode_belief_frame(sender: int, iteration: int, belief: GaussianBelief) -> bytes:
    """Pack a belief into the fixed 52-byte frame."""
    if not 0 <= sender < 65536:
        raise SenderIdOverflow(f"sender id {sender} does not fit 16 bits")
    if not 0 <= iteration < 2 ** 32:
        raise ValueError(f"iteration {iteration} does not fit 32 bits")
    cov = belief.covariance
    return _BELIEF_STRUCT.pack(
        MAGIC,
        VERSION,
        KIND_BELIEF,
        sender,
        iteration,
        float(belief.mean[0]),
        float(belief.mean[1]),
        float(cov[0, 0]),
        float(cov[0, 1]),
        float(cov[1, 1]),
    )


def decode_belief_frame(frame: bytes) -> tuple[int, int, GaussianBelief]:
    """Unpack and validate a 52-byte belief frame.

    The covariance is rebuilt symmetric from its three stored entries; an
    all-zero covariance marks an anchor point mass.
    """
    if len(frame) != BELIEF_FRAME_SIZE:
        raise TruncatedFrame(f"expected {BELIEF_FRAME_SIZE} bytes, got {len(frame)}")
    magic, version, kind, sender, iteration, mx, my, pxx, pxy, pyy = (
        _BELIEF_STRUCT.unpack(frame)
    )
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"version {version} not supported")
    if kind != KIND_BELIEF:
        raise UnexpectedKind(f"expected belief frame, got kind {kind}")
    values = (mx, my, pxx, pxy, pyy)
    if not all(np.isfinite(values)):
        raise NonFiniteField(f"non-finite field in frame from sender {sender}")
    is_anchor = pxx == 0.0 and pxy == 0.0 and pyy == 0.0
    belief = GaussianBelief(
        np.array([mx, my]),
        np.array([[pxx, pxy], [pxy, pyy]]),
        is_anchor=is_anchor,
    )
    return sender, iteration, belief


def _encode_ack(sender: int, iteration: int, target: int) -> bytes:
    return _ACK_STRUCT.pack(MAGIC, VERSION, KIND_ACK, sender, iteration, target)


def _frame_kind(frame: bytes) -> int:
    if len(frame) < 6 or frame[:4] != MAGIC:
        return -1
    return frame[5]


# ---------------------------------------------------------------------------
# agent runtime


@dataclass
class _AgentSpec:
    node: int
    is_anchor: bool
    constraints: dict[int, EdgeConstraint]  # keyed by neighbor
    initial: GaussianBelief


class _InProcessLink:
    """Broadcast medium for agents sharing one process: a board keyed by
    (iteration, node).  A publish barrier separates everyone's publication
    from everyone's reads, so no locking is needed beyond the barriers."""

    def __init__(self, parties: int):
        self.board: dict[tuple[int, int], GaussianBelief] = {}
        self.publish_barrier = threading.Barrier(parties)

    def make_endpoint(self, spec: _AgentSpec, peers: Sequence[int]):
        return _InProcessEndpoint(self, spec.node, peers)


class _InProcessEndpoint:
    def __init__(self, link: _InProcessLink, node: int, peers: Sequence[int]):
        self.link = link
        self.node = node
        self.peers = list(peers)

    def publish(self, iteration: int, belief: GaussianBelief) -> None:
        self.link.board[(iteration, self.node)] = belief

    def barrier_hook(self, barrier: threading.Barrier) -> None:
        barrier.wait()

    def collect(self, iteration: int) -> dict[int, GaussianBelief]:
        self.link.publish_barrier.wait()
        return {j: self.link.board[(iteration, j)] for j in self.peers}

    def close(self) -> None:
        pass


class _UdpEndpoint:
    """One UDP socket per agent.

    A dedicated receiver thread services the socket for the endpoint's whole
    lifetime: it buffers neighbor beliefs by (iteration, sender), answers
    every belief frame with an ack (including retransmitted duplicates, even
    while the agent is busy computing or parked at the round barrier), and
    records acks of our own frames.  ``collect`` blocks until the round's
    frames and acks are all in, rebroadcasting the un-acked frame every
    ``retry_interval`` up to ``retries`` times."""

    def __init__(
        self,
        node: int,
        sock: socket.socket,
        peer_addrs: Mapping[int, tuple[str, int]],
        retries: int,
        retry_interval: float,
    ):
        self.node = node
        self.sock = sock
        self.peer_addrs = dict(peer_addrs)
        self.retries = retries
        self.retry_interval = retry_interval
        self.inbox: dict[tuple[int, int], GaussianBelief] = {}
        self.acks: set[tuple[int, int]] = set()  # (iteration, peer)
        self._cond = threading.Condition()
        self._closing = False
        self._receiver = threading.Thread(
            target=self._receive_loop, name=f"udp-rx-{node}", daemon=True
        )
        self.sock.settimeout(0.05)
        self._receiver.start()

    def _receive_loop(self) -> None:
        peers = set(self.peer_addrs)
        while True:
            with self._cond:
                if self._closing:
                    return
            try:
                frame, _ = self.sock.recvfrom(256)
            except socket.timeout:
                continue
            except OSError:
                return
            kind = _frame_kind(frame)
            if kind == KIND_BELIEF:
                try:
                    sender, tag, belief = decode_belief_frame(frame)
                except FrameError:
                    continue
                if sender not in peers:
                    continue  # not one of our edges; never feeds the update
                with self._cond:
                    self.inbox.setdefault((tag, sender), belief)
                    self._cond.notify_all()
                # ack every copy so a peer whose earlier ack was lost recovers
                self.sock.sendto(
                    _encode_ack(self.node, tag, sender), self.peer_addrs[sender]
                )
            elif kind == KIND_ACK:
                _, _, _, sender, tag, target = _ACK_STRUCT.unpack(frame)
                if target == self.node and sender in peers:
                    with self._cond:
                        self.acks.add((tag, sender))
                        self._cond.notify_all()

    def publish(self, iteration: int, belief: GaussianBelief) -> None:
        self._payload = encode_belief_frame(self.node, iteration, belief)
        for addr in self.peer_addrs.values():
            self.sock.sendto(self._payload, addr)

    def barrier_hook(self, barrier: threading.Barrier) -> None:
        barrier.wait()

    def collect(self, iteration: int) -> dict[int, GaussianBelief]:
        peers = set(self.peer_addrs)

        def missing() -> set[int]:
            return {j for j in peers if (iteration, j) not in self.inbox}

        def unacked() -> set[int]:
            return {j for j in peers if (iteration, j) not in self.acks}

        attempts = 0
        with self._cond:
            while missing() or unacked():
                done = self._cond.wait_for(
                    lambda: not missing() and not unacked(),
                    timeout=self.retry_interval,
                )
                if done:
                    break
                attempts += 1
                if attempts > self.retries:
                    j = min(missing() | unacked())
                    what = "frame from" if j in missing() else "ack from"
                    raise RoundTimeout(
                        f"node {self.node}: no {what} neighbor {j} on edge "
                        f"({self.node}, {j}) for iteration {iteration} after "
                        f"{self.retries} retries"
                    )
                for j in sorted(unacked()):
                    self.sock.sendto(self._payload, self.peer_addrs[j])
            collected = {j: self.inbox[(iteration, j)] for j in peers}
            for key in [k for k in self.inbox if k[0] < iteration]:
                del self.inbox[key]
            for key in [k for k in self.acks if k[0] < iteration]:
                self.acks.discard(key)
        return collected

    def close(self) -> None:
        with self._cond:
            self._closing = True
        self._receiver.join(timeout=2.0)
        self.sock.close()


def _split_constraints(
    constraints: Mapping[tuple[int, int], EdgeConstraint],
    anchor: int,
    config: BpConfig,
    anchor_position: Sequence[float],
) -> list[_AgentSpec]:
    neighbors = _neighbor_map(constraints)
    _check_connected(neighbors, anchor)
    alpha = resolve_alpha(config, constraints)
    specs = []
    for i, js in neighbors.items():
        local = {j: constraints[(i, j)] for j in js}
        initial = (
            anchor_belief(anchor_position)
            if i == anchor
            else init_belief(len(js), alpha)
        )
        specs.append(_AgentSpec(i, i == anchor, local, initial))
    return specs


class _AgentThread(threading.Thread):
    def __init__(self, spec: _AgentSpec, endpoint, sigma2: float,
                 barrier: threading.Barrier, stop: threading.Event,
                 registry: dict[int, GaussianBelief], abort_all):
        super().__init__(name=f"agent-{spec.node}", daemon=True)
        self.spec = spec
        self.endpoint = endpoint
        self.sigma2 = sigma2
        self.barrier = barrier
        self.stop = stop
        self.registry = registry
        self.abort_all = abort_all
        self.error: BaseException | None = None

    def run(self):
        spec = self.spec
        belief = spec.initial
        try:
            iteration = 0
            while True:
                self.endpoint.publish(iteration, belief)
                received = self.endpoint.collect(iteration)
                if not spec.is_anchor:
                    msgs = [
                        compute_message(received[j], spec.constraints[j], self.sigma2)
                        for j in sorted(received)
                    ]
                    try:
                        belief = fuse_messages(msgs)
                    except NumericalFailure as exc:
                        raise NumericalFailure(
                            f"node {spec.node}, iteration {iteration + 1}: {exc}"
                        ) from exc
                self.registry[spec.node] = belief
                self.endpoint.barrier_hook(self.barrier)
                if self.stop.is_set():
                    break
                iteration += 1
        except threading.BrokenBarrierError:
            pass
        except BaseException as exc:  # surfaced by the runner
            self.error = exc
            self.abort_all()
        finally:
            self.endpoint.close()


def run_agents(
    constraints: Mapping[tuple[int, int], EdgeConstraint],
    anchor: int,
    config: BpConfig,
    transport: str = "in_process",
    anchor_position: Sequence[float] = (0.0, 0.0),
    udp_host: str = "127.0.0.1",
    udp_base_port: int = 0,
    retries: int = 10,
    retry_interval: float = 0.2,
) -> list[dict[int, GaussianBelief]]:
    """Run one agent per node over the chosen transport.

    Agents exchange beliefs only with their neighbors and only through the
    transport; the runner just synchronizes rounds and applies the same
    stopping rule as the synchronous engine, so both transports produce the
    same belief history.  ``udp_base_port=0`` lets the OS pick free loopback
    ports; a nonzero base binds node ``i`` to ``udp_base_port + i``.

    Raises:
        RoundTimeout: a UDP neighbor frame stayed missing past the retry
            budget.
    """
    if transport not in ("in_process", "udp"):
        raise ValueError(f"unknown transport {transport!r}")
    specs = _split_constraints(constraints, anchor, config, anchor_position)
    registry: dict[int, GaussianBelief] = {s.node: s.initial for s in specs}
    history: list[dict[int, GaussianBelief]] = [dict(registry)]
    stop = threading.Event()

    def on_round_complete():
        history.append(dict(registry))
        done = len(history) - 1 >= config.max_iters or has_converged(
            history[-2], history[-1], config.tol
        )
        if done:
            stop.set()

    barrier = threading.Barrier(len(specs), action=on_round_complete)

    endpoints = []
    sockets: dict[int, socket.socket] = {}
    link: _InProcessLink | None = None
    if transport == "udp":
        addrs: dict[int, tuple[str, int]] = {}
        for s in specs:
            sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            port = 0 if udp_base_port == 0 else udp_base_port + s.node
            sock.bind((udp_host, port))
            sockets[s.node] = sock
            addrs[s.node] = sock.getsockname()
        for s in specs:
            peer_addrs = {j: addrs[j] for j in s.constraints}
            endpoints.append(
                _UdpEndpoint(s.node, sockets[s.node], peer_addrs, retries, retry_interval)
            )
    else:
        link = _InProcessLink(len(specs))
        endpoints = [link.make_endpoint(s, sorted(s.constraints)) for s in specs]

    def abort_all():
        barrier.abort()
        if link is not None:
            link.publish_barrier.abort()

    threads = [
        _AgentThread(s, ep, config.sigma2, barrier, stop, registry, abort_all)
        for s, ep in zip(specs, endpoints)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    errors = [t.error for t in sorted(threads, key=lambda t: t.spec.node) if t.error]
    if errors:
        raise errors[0]
    return history


def run_udp_agent(
    node: int,
    constraints: Mapping[int, EdgeConstraint],
    is_anchor: bool,
    bind: tuple[str, int],
    peers: Mapping[int, tuple[str, int]],
    rounds: int,
    config: BpConfig,
    anchor_position: Sequence[float] = (0.0, 0.0),
    retries: int = 10,
    retry_interval: float = 0.2,
) -> list[GaussianBelief]:
    """Run a single sensor agent over UDP for a fixed number of rounds.

    This is the entry point for multi-process deployment, where each agent is
    its own OS process and no shared stopping rule exists; all agents must be
    started with the same ``rounds``.  Returns this agent's belief history.
    """
    alpha = resolve_alpha(config, constraints.values())
    belief = (
        anchor_belief(anchor_position)
        if is_anchor
        else init_belief(len(constraints), alpha)
    )
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.bind(bind)
    endpoint = _UdpEndpoint(node, sock, peers, retries, retry_interval)
    history = [belief]
    try:
        for iteration in range(rounds):
            endpoint.publish(iteration, belief)
            received = endpoint.collect(iteration)
            if not is_anchor:
                msgs = [
                    compute_message(received[j], constraints[j], config.sigma2)
                    for j in sorted(received)
                ]
                belief = fuse_messages(msgs)
            history.append(belief)
    finally:
        endpoint.close()
    return history
