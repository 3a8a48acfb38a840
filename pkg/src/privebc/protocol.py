"""Two-party protocol orchestration and X-side final assembly.

One session is a sequential state machine: forward message (X's set
release), backward message (Y's noisy counts and partial sum, skipped
when Y's side of the ego network has fewer than two nodes), then X-side
assembly of S_X + S_XY + S_Y. Runs either in-process (both party views
held by one driver) or across two processes over a framed TCP wire;
given identical seeds both modes produce bit-identical results.
"""

from __future__ import annotations

import socket
import struct
import time
from dataclasses import dataclass

import numpy as np

from .backward import BackwardMsg, DegenerateEgoError, _partial_ebc_y_idx, _spanning_counts_idx, _y_ego_sorted
from .dpnum import DEFAULT_CONTEXT, PrecisionContext, PrivacyParams
from .forward import ForwardMsg, forward_message_from_context
from .graphs import (
    EgoContext,
    PartitionedGraph,
    PartyView,
    WrongPartyError,
    _ego_context_idx,
    _local_square,
)

ALL_MECHS = frozenset({"mech1", "mech2", "mech3"})
CLAMP_MODES = ("clamp_nonneg", "raw")


class ProtocolError(RuntimeError):
    pass


class HandshakeError(ProtocolError):
    """Transport peers disagree on magic or protocol version."""


class DecodeError(ValueError):
    """Malformed frame; `offset` is the byte position of the problem."""

    def __init__(self, offset: int, message: str):
        super().__init__(f"byte {offset}: {message}")
        self.offset = offset


@dataclass(frozen=True)
class ProtocolConfig:
    """Session parameters.

    mech_mask lists which of the three mechanisms run privately; any
    mechanism left out is substituted by its noiseless counterpart
    (set release -> R*, counts -> exact cores, partial sum -> exact).
    Anything other than the full mask is an experiment configuration
    and the session result is flagged non-private. clamp_mode picks how
    X treats noisy denominators: "clamp_nonneg" (default) clamps the
    received count at zero before adding X-side paths, guaranteeing
    denominators >= 1; "raw" skips nonpositive denominators and counts
    them in diagnostics.
    """

    epsilon: float
    precision_bits: int = 300
    clamp_mode: str = "clamp_nonneg"
    mech_mask: frozenset[str] = ALL_MECHS

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.clamp_mode not in CLAMP_MODES:
            raise ValueError(f"clamp_mode must be one of {CLAMP_MODES}")
        mask = frozenset(self.mech_mask)
        if not mask <= ALL_MECHS:
            raise ValueError(f"mech_mask must be a subset of {sorted(ALL_MECHS)}")
        object.__setattr__(self, "mech_mask", mask)

    @property
    def non_private(self) -> bool:
        return self.mech_mask != ALL_MECHS


@dataclass
class EbcAccumulator:
    """The three partial sums whose total is the protocol's output."""

    S_X: float = 0.0
    S_XY: float = 0.0
    S_Y: float = 0.0

    @property
    def total(self) -> float:
        return self.S_X + self.S_XY + self.S_Y


class BudgetLedger:
    """Append-only record of every noise/selection event's privacy cost."""

    def __init__(self):
        self.events: list[tuple[str, str, float]] = []

    def charge(self, party: str, mechanism: str, cost: float) -> None:
        self.events.append((party, mechanism, float(cost)))

    def total(self, party: str) -> float:
        return sum(c for p, _, c in self.events if p == party)


@dataclass
class SessionResult:
    """Everything one protocol session produced."""

    value: float
    parts: EbcAccumulator
    skipped_terms: int
    degenerate: str  # "" | "no-y-nodes" | "small-y-ego"
    non_private: bool
    budget: BudgetLedger
    frames: tuple[bytes, ...]
    r_size: int


# ---------------------------------------------------------------------------
# Wire format v1
# ---------------------------------------------------------------------------
# frame   = u32 length | u8 version | u8 type | payload   (big-endian)
# length counts every byte after the length field itself.
# type 1 (forward):  u32 count | count * u64 node index, strictly ascending
# type 2 (backward): u32 count | count * (u64 i, u64 j, f64 value), strictly
#                    ascending by (i, j) | f64 S_Y

WIRE_VERSION = 1
TYPE_FORWARD = 1
TYPE_BACKWARD = 2
HANDSHAKE_MAGIC = b"PEBC"

_FWD_ENTRY = np.dtype(">u8")
_BWD_ENTRY = np.dtype([("i", ">u8"), ("j", ">u8"), ("v", ">f8")])


def encode_msg(msg: ForwardMsg | BackwardMsg) -> bytes:
    """Serialize one message as a single wire frame."""
    if isinstance(msg, ForwardMsg):
        nodes = np.array(sorted(msg.R), dtype=_FWD_ENTRY)
        payload = struct.pack(">I", nodes.size) + nodes.tobytes()
        mtype = TYPE_FORWARD
    elif isinstance(msg, BackwardMsg):
        keys = sorted(msg.T)
        entries = np.empty(len(keys), dtype=_BWD_ENTRY)
        for pos, (i, j) in enumerate(keys):
            entries[pos] = (i, j, msg.T[(i, j)])
        payload = (struct.pack(">I", len(keys)) + entries.tobytes()
                   + struct.pack(">d", msg.S_Y))
        mtype = TYPE_BACKWARD
    else:
        raise TypeError(f"cannot encode {type(msg).__name__}")
    return struct.pack(">IBB", 2 + len(payload), WIRE_VERSION, mtype) + payload


def decode_msg(data: bytes) -> ForwardMsg | BackwardMsg:
    """Parse exactly one frame; raises DecodeError with a byte offset."""
    if len(data) < 4:
        raise DecodeError(0, "truncated length field")
    (length,) = struct.unpack_from(">I", data, 0)
    if length < 2:
        raise DecodeError(0, f"frame length {length} below header size")
    if len(data) != 4 + length:
        raise DecodeError(4 + min(length, len(data) - 4),
                          f"frame claims {4 + length} bytes, got {len(data)}")
    version, mtype = struct.unpack_from(">BB", data, 4)
    if version != WIRE_VERSION:
        raise DecodeError(4, f"unsupported version {version}")
    payload = data[6:]
    if mtype == TYPE_FORWARD:
        if len(payload) < 4:
            raise DecodeError(6, "truncated count field")
        (count,) = struct.unpack_from(">I", payload, 0)
        if len(payload) != 4 + 8 * count:
            raise DecodeError(10, f"forward payload needs {4 + 8 * count} bytes, got {len(payload)}")
        nodes = np.frombuffer(payload, dtype=_FWD_ENTRY, count=count, offset=4)
        if count > 1 and not np.all(nodes[1:] > nodes[:-1]):
            bad = int(np.flatnonzero(nodes[1:] <= nodes[:-1])[0]) + 1
            raise DecodeError(10 + 8 * bad, "node indices not strictly ascending")
        return ForwardMsg(R=frozenset(int(v) for v in nodes))
    if mtype == TYPE_BACKWARD:
        if len(payload) < 4:
            raise DecodeError(6, "truncated count field")
        (count,) = struct.unpack_from(">I", payload, 0)
        if len(payload) != 4 + 24 * count + 8:
            raise DecodeError(10, f"backward payload needs {4 + 24 * count + 8} bytes, got {len(payload)}")
        entries = np.frombuffer(payload, dtype=_BWD_ENTRY, count=count, offset=4)
        t: dict[tuple[int, int], float] = {}
        prev: tuple[int, int] | None = None
        for pos in range(count):
            key = (int(entries["i"][pos]), int(entries["j"][pos]))
            if prev is not None and key <= prev:
                raise DecodeError(10 + 24 * pos, "entries not strictly ascending by (i, j)")
            prev = key
            t[key] = float(entries["v"][pos])
        (s_y,) = struct.unpack_from(">d", payload, 4 + 24 * count)
        return BackwardMsg(T=t, S_Y=s_y)
    raise DecodeError(5, f"unknown message type {mtype}")


# ---------------------------------------------------------------------------
# Session stages (shared by in-process and two-process modes)
# ---------------------------------------------------------------------------

def _forward_stage(view_x: PartyView, ectx: EgoContext, config: ProtocolConfig,
                   ctx: PrecisionContext, rng: np.random.Generator,
                   ledger: BudgetLedger) -> ForwardMsg:
    if "mech1" in config.mech_mask:
        params = PrivacyParams(epsilon=config.epsilon, delta0=1.0)
        msg = forward_message_from_context(ectx, params, ctx, rng)
        ledger.charge("X", "set-release", config.epsilon)
        return msg
    return ForwardMsg(R=ectx.R_star)


def _backward_stage(view_y: PartyView, a_idx: int, R: frozenset[int],
                    config: ProtocolConfig, rng: np.random.Generator,
                    ledger: BudgetLedger) -> BackwardMsg:
    y_ego = _y_ego_sorted(view_y, a_idx)
    if y_ego.size < 2:
        raise DegenerateEgoError("backward stage invoked on a gated case")
    params = PrivacyParams(epsilon=config.epsilon)
    noisy_t = "mech2" in config.mech_mask
    noisy_sy = "mech3" in config.mech_mask
    t = _spanning_counts_idx(view_y, y_ego, R, params, rng, noiseless=not noisy_t)
    if noisy_t:
        ledger.charge("Y", "count-vector", config.epsilon / 2.0)
    s_y = _partial_ebc_y_idx(view_y, a_idx, y_ego, R, params, rng, noiseless=not noisy_sy)
    if noisy_sy:
        ledger.charge("Y", "partial-sum", config.epsilon / 2.0)
    return BackwardMsg(T=t, S_Y=s_y)


def _assemble_x(view_x: PartyView, ectx: EgoContext, R: frozenset[int],
                back: BackwardMsg | None, config: ProtocolConfig) -> tuple[EbcAccumulator, int]:
    """X-side completion: S_XY over cross pairs, S_X over X-side pairs.

    Received counts for i outside R* are discarded; counts for i in
    R* \\ R start from zero. The X-side path increment counts
    intermediates in R* u {a}; S_X counts intermediates anywhere in
    N_a u {a}, all through edges X knows.
    """
    g = view_x.graph
    a_idx = ectx.a
    r_star_sorted = np.array(sorted(ectx.R_star), dtype=np.int64)
    y_ego = np.array(sorted(v for v in ectx.N_a if not view_x.is_x(v)), dtype=np.int64)
    acc = EbcAccumulator()
    skipped = 0

    local = np.array(sorted(ectx.N_a | {a_idx}), dtype=np.int64)
    madj, msq = _local_square(g, local)

    if y_ego.size and r_star_sorted.size:
        pos_rstar = np.searchsorted(local, r_star_sorted)
        pos_yego = np.searchsorted(local, y_ego)
        pos_ra = np.searchsorted(local, np.array(sorted(ectx.R_star | {a_idx}), dtype=np.int64))
        # X-side 2-path counts through R* u {a}: rows R*, cols Y-side ego
        k_x = (madj[np.ix_(pos_rstar, pos_ra)].astype(np.float64)
               @ madj[np.ix_(pos_ra, pos_yego)].astype(np.float64))
        cross_adj = madj[np.ix_(pos_rstar, pos_yego)]
        t_recv = np.zeros((r_star_sorted.size, y_ego.size), dtype=np.float64)
        if back is not None:
            for ri, i in enumerate(r_star_sorted):
                if int(i) in R:
                    row = t_recv[ri]
                    for ci, j in enumerate(y_ego):
                        row[ci] = back.T[(int(i), int(j))]
        if config.clamp_mode == "clamp_nonneg":
            np.maximum(t_recv, 0.0, out=t_recv)
        denom = t_recv + k_x
        open_pairs = cross_adj == 0
        if config.clamp_mode == "raw":
            usable = open_pairs & (denom > 0.0)
            skipped = int(np.count_nonzero(open_pairs & ~usable))
        else:
            usable = open_pairs
        acc.S_XY = float(np.sum(1.0 / denom[usable]))

    if r_star_sorted.size >= 2:
        pos_rstar = np.searchsorted(local, r_star_sorted)
        sub_adj = madj[np.ix_(pos_rstar, pos_rstar)]
        sub_sq = msq[np.ix_(pos_rstar, pos_rstar)]
        iu = np.triu_indices(r_star_sorted.size, k=1)
        disconnected = sub_adj[iu] == 0
        acc.S_X = float(np.sum(1.0 / sub_sq[iu][disconnected]))

    acc.S_Y = back.S_Y if back is not None else 0.0
    return acc, skipped


def _exact_local_ebc(view_x: PartyView, ectx: EgoContext) -> float:
    """Exact EBC from X's own edges; valid when no Y nodes exist."""
    from .graphs import _exact_ebc_idx

    return _exact_ebc_idx(view_x.graph, ectx.a)


def run_session(pg: PartitionedGraph, a: object, config: ProtocolConfig,
                rng: np.random.Generator,
                ctx: PrecisionContext | None = None) -> SessionResult:
    """Run one full in-process session between the two party views."""
    view_x = pg.view_x()
    view_y = pg.view_y()
    a_idx = pg.graph.index_of(a)
    if not pg.is_x(a_idx):
        raise WrongPartyError(f"ego node {a!r} is not in party X")
    if ctx is None:
        ctx = (DEFAULT_CONTEXT if config.precision_bits == DEFAULT_CONTEXT.bits
               else PrecisionContext(config.precision_bits))
    ledger = BudgetLedger()
    rng_x, rng_y = rng.spawn(2)
    ectx = _ego_context_idx(view_x, a_idx)
    frames: list[bytes] = []

    if pg.vy_indices.size == 0:
        value = _exact_local_ebc(view_x, ectx)
        return SessionResult(value=value, parts=EbcAccumulator(S_X=value),
                             skipped_terms=0, degenerate="no-y-nodes",
                             non_private=config.non_private, budget=ledger,
                             frames=(), r_size=len(ectx.R_star))

    fwd = _forward_stage(view_x, ectx, config, ctx, rng_x, ledger)
    frames.append(encode_msg(fwd))

    y_ego = _y_ego_sorted(view_y, a_idx)
    back: BackwardMsg | None = None
    degenerate = ""
    if y_ego.size >= 2:
        back = _backward_stage(view_y, a_idx, fwd.R, config, rng_y, ledger)
        frames.append(encode_msg(back))
    else:
        degenerate = "small-y-ego"

    acc, skipped = _assemble_x(view_x, ectx, fwd.R, back, config)
    return SessionResult(value=acc.total, parts=acc, skipped_terms=skipped,
                         degenerate=degenerate, non_private=config.non_private,
                         budget=ledger, frames=tuple(frames), r_size=len(fwd.R))


def private_ebc(pg: PartitionedGraph, a: object, config: ProtocolConfig,
                rng: np.random.Generator) -> float:
    """The private EBC estimate for ego a under the given config."""
    return run_session(pg, a, config, rng).value


def nonprivate_ebc_protocol(pg: PartitionedGraph, a: object) -> float:
    """The protocol with no noise and R = R*; exact by decomposition."""
    config = ProtocolConfig(epsilon=1.0, mech_mask=frozenset())
    return run_session(pg, a, config, np.random.default_rng(0)).value


# ---------------------------------------------------------------------------
# Two-process transport
# ---------------------------------------------------------------------------

def _send_all(sock: socket.socket, data: bytes) -> None:
    try:
        sock.sendall(data)
    except OSError as exc:
        raise ConnectionError(f"transport send failed: {exc}") from exc


def _recv_exact(sock: socket.socket, size: int) -> bytes:
    buf = bytearray()
    while len(buf) < size:
        try:
            chunk = sock.recv(size - len(buf))
        except OSError as exc:
            raise ConnectionError(f"transport recv failed: {exc}") from exc
        if not chunk:
            raise ConnectionError("peer closed the connection mid-frame")
        buf.extend(chunk)
    return bytes(buf)


def _recv_frame(sock: socket.socket) -> bytes:
    head = _recv_exact(sock, 4)
    (length,) = struct.unpack(">I", head)
    return head + _recv_exact(sock, length)


def _handshake(sock: socket.socket, version: int = WIRE_VERSION) -> None:
    _send_all(sock, HANDSHAKE_MAGIC + struct.pack(">B", version))
    reply = _recv_exact(sock, 5)
    if reply[:4] != HANDSHAKE_MAGIC:
        raise HandshakeError("peer sent bad magic")
    if reply[4] != WIRE_VERSION:
        raise HandshakeError(f"peer speaks version {reply[4]}, expected {WIRE_VERSION}")


def _handshake_accept(sock: socket.socket) -> None:
    hello = _recv_exact(sock, 5)
    ok = hello[:4] == HANDSHAKE_MAGIC and hello[4] == WIRE_VERSION
    _send_all(sock, HANDSHAKE_MAGIC + struct.pack(">B", WIRE_VERSION))
    if not ok:
        raise HandshakeError(f"client hello invalid: {hello!r}")


def run_two_process(role: str, address: tuple[str, int], view: PartyView, a: object,
                    config: ProtocolConfig, seed: int,
                    transcript: list[tuple[str, bytes]] | None = None,
                    _handshake_version: int = WIRE_VERSION) -> float | None:
    """Run one party's half of a session over a framed TCP connection.

    Both sides derive their generator from the shared seed exactly the
    way the in-process driver does, so results match it bit for bit. X
    returns the EBC estimate; Y returns None. Each party only ever
    holds its own view, so the other side's internal edges are absent
    from its process by construction.
    """
    children = np.random.default_rng(seed).spawn(2)
    a_idx = view.graph.index_of(a)
    ctx = (DEFAULT_CONTEXT if config.precision_bits == DEFAULT_CONTEXT.bits
           else PrecisionContext(config.precision_bits))
    ledger = BudgetLedger()
    y_ego = _y_ego_sorted(view, a_idx)  # both parties know the shared edges
    expect_backward = y_ego.size >= 2

    if role == "X":
        if not view.is_x(a_idx):
            raise WrongPartyError(f"ego node {a!r} is not in party X")
        rng_x = children[0]
        ectx = _ego_context_idx(view, a_idx)
        last_err: OSError | None = None
        sock = None
        for _ in range(200):  # the Y listener may still be starting up
            try:
                sock = socket.create_connection(address, timeout=10.0)
                break
            except OSError as exc:
                last_err = exc
                time.sleep(0.05)
        if sock is None:
            raise ConnectionError(f"could not reach Y at {address}: {last_err}")
        with sock:
            _handshake(sock, version=_handshake_version)
            fwd = _forward_stage(view, ectx, config, ctx, rng_x, ledger)
            frame = encode_msg(fwd)
            _send_all(sock, frame)
            if transcript is not None:
                transcript.append(("sent-forward", frame))
            back = None
            if expect_backward:
                raw = _recv_frame(sock)
                if transcript is not None:
                    transcript.append(("received-backward", raw))
                msg = decode_msg(raw)
                if not isinstance(msg, BackwardMsg):
                    raise ProtocolError("expected a backward frame")
                back = msg
        acc, _ = _assemble_x(view, ectx, fwd.R, back, config)
        return acc.total

    if role == "Y":
        rng_y = children[1]
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        with listener:
            listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            listener.bind(address)
            listener.listen(1)
            conn, _ = listener.accept()
            with conn:
                _handshake_accept(conn)
                raw = _recv_frame(conn)
                if transcript is not None:
                    transcript.append(("received-forward", raw))
                msg = decode_msg(raw)
                if not isinstance(msg, ForwardMsg):
                    raise ProtocolError("expected a forward frame")
                if expect_backward:
                    back = _backward_stage(view, a_idx, msg.R, config, rng_y, ledger)
                    frame = encode_msg(back)
                    _send_all(conn, frame)
                    if transcript is not None:
                        transcript.append(("sent-backward", frame))
        return None

    raise ValueError(f"role must be 'X' or 'Y', got {role!r}")
