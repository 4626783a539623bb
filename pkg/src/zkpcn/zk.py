"""Public-balance relation, a transparent Setup/Prove/Verify backend and the
prover latency model.

The backend does not build a SNARK. ``prove`` checks the relation itself and
emits a keyed tag bound to the statement digest, padded to the fixed proof
size. Any real proving system can replace it behind the same three calls.
"""

from __future__ import annotations

import bisect
import hashlib
import hmac
import struct
from dataclasses import dataclass
from pathlib import Path

from .channel import Channel, Direction, tx_digest

PROOF_SIZE = 193
TAG_BYTES = 32


class ProveRefused(Exception):
    """The honest prover will not attest to a false statement."""


class CircuitCapacityExceeded(ValueError):
    pass


@dataclass(frozen=True)
class Statement:
    initial_balances: tuple[int, int]
    tx_digests: tuple[bytes, ...]
    public_balances: tuple[int, int]

    def __post_init__(self):
        if min(self.initial_balances) < 0 or min(self.public_balances) < 0:
            raise ValueError("statement amounts must be non-negative")

    def encode(self) -> bytes:
        parts = [struct.pack("<QQQ", *self.initial_balances, len(self.tx_digests))]
        parts.extend(self.tx_digests)
        parts.append(struct.pack("<QQ", *self.public_balances))
        return b"".join(parts)

    def digest(self) -> bytes:
        return hashlib.sha256(b"zkpcn-statement\x00" + self.encode()).digest()


@dataclass(frozen=True)
class WitnessTx:
    nonce: bytes
    amount: int
    version: int
    sig: bytes
    direction: Direction


@dataclass(frozen=True)
class Witness:
    transactions: tuple[WitnessTx, ...]


@dataclass(frozen=True)
class Proof:
    body: bytes
    statement_digest: bytes


@dataclass(frozen=True)
class PublicParams:
    setup_key: bytes
    circuit_size: int
    security: int


def statement_for(ch: Channel) -> Statement:
    return Statement(
        initial_balances=ch.initial_balances,
        tx_digests=tuple(tx.digest for tx in ch.log),
        public_balances=ch.public_balances,
    )


def witness_for(ch: Channel) -> Witness:
    return Witness(tuple(WitnessTx(tx.nonce, tx.amount, tx.index, tx.sig, tx.direction) for tx in ch.log))


def true_balances(stmt: Statement, wit: Witness) -> tuple[int, int] | None:
    """Replay the witness against the statement; None if any digest or prefix check fails."""
    if len(stmt.tx_digests) != len(wit.transactions):
        raise ValueError(
            f"statement has {len(stmt.tx_digests)} digests but witness has {len(wit.transactions)} transactions"
        )
    a, b = stmt.initial_balances
    for h, tx in zip(stmt.tx_digests, wit.transactions):
        if tx.amount < 0 or tx_digest(tx.nonce, tx.amount, tx.version, tx.sig) != h:
            return None
        if tx.direction == Direction.A_TO_B:
            a, b = a - tx.amount, b + tx.amount
        else:
            a, b = a + tx.amount, b - tx.amount
        if a < 0 or b < 0:
            return None
    return a, b


def relation_holds(stmt: Statement, wit: Witness) -> bool:
    bal = true_balances(stmt, wit)
    if bal is None:
        return False
    return stmt.public_balances[0] <= bal[0] and stmt.public_balances[1] <= bal[1]


def setup(max_n: int, security: int = 128, seed: int = 0) -> PublicParams:
    if max_n < 1:
        raise ValueError("circuit size must be >= 1")
    key = hashlib.sha256(struct.pack("<QQQ", max_n, security, seed) + b"zkpcn-setup").digest()
    return PublicParams(setup_key=key, circuit_size=max_n, security=security)


def _body(pp: PublicParams, stmt_digest: bytes) -> bytes:
    tag = hmac.new(pp.setup_key, stmt_digest, hashlib.sha256).digest()
    return tag + hashlib.shake_256(tag).digest(PROOF_SIZE - TAG_BYTES)


@dataclass(frozen=True)
class LatencyModel:
    """Prover time (ms) as a piecewise-linear function of the number of hashed transactions."""

    points: tuple[tuple[int, float], ...]
    verifier_ms: float

    def __post_init__(self):
        xs = [n for n, _ in self.points]
        ys = [t for _, t in self.points]
        if not xs or xs != sorted(set(xs)) or xs[0] < 1:
            raise ValueError("calibration hash counts must be distinct, increasing and >= 1")
        if any(y1 < y0 for y0, y1 in zip(ys, ys[1:])) or ys[0] < 0:
            raise ValueError("calibration prover times must be non-negative and non-decreasing")

    @classmethod
    def calibrated(cls) -> "LatencyModel":
        return cls(points=((1, 157.0), (10, 682.0), (100, 6011.0), (1000, 43798.0)), verifier_ms=5.0)

    @classmethod
    def zero(cls) -> "LatencyModel":
        return cls(points=((1, 0.0),), verifier_ms=0.0)

    @classmethod
    def from_file(cls, path: str | Path) -> "LatencyModel":
        """Read ``n,ms`` lines plus an optional ``verifier,ms`` line; ``#`` starts a comment."""
        points = []
        verifier = 5.0
        for raw in Path(path).read_text(encoding="utf-8").splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, val = (s.strip() for s in line.split(","))
            if key == "verifier":
                verifier = float(val)
            else:
                points.append((int(key), float(val)))
        return cls(points=tuple(sorted(points)), verifier_ms=verifier)


def prover_latency(model: LatencyModel, n: int) -> float:
    if n <= 0:
        raise ValueError("hash count must be >= 1")
    pts = model.points
    if len(pts) == 1:
        return pts[0][1]
    xs = [p[0] for p in pts]
    i = bisect.bisect_left(xs, n)
    if i < len(xs) and xs[i] == n:
        return pts[i][1]
    if i == 0:
        return pts[0][1]
    if i == len(xs):
        i = len(xs) - 1  # extrapolate along the last segment
    (x0, y0), (x1, y1) = pts[i - 1], pts[i]
    return y0 + (y1 - y0) * (n - x0) / (x1 - x0)


def prove(
    pp: PublicParams,
    stmt: Statement,
    wit: Witness,
    latency: LatencyModel | None = None,
) -> tuple[Proof, float]:
    """Return the proof and the simulated prover time in ms.

    A statement with no digests is charged the one-hash cost.
    """
    n = len(stmt.tx_digests)
    if n > pp.circuit_size:
        raise CircuitCapacityExceeded(f"{n} transactions exceed circuit size {pp.circuit_size}")
    if not relation_holds(stmt, wit):
        raise ProveRefused("statement does not satisfy the public-balance relation")
    d = stmt.digest()
    cost = prover_latency(latency or LatencyModel.calibrated(), max(n, 1))
    return Proof(body=_body(pp, d), statement_digest=d), cost


def verify(pp: PublicParams, stmt: Statement, proof: Proof) -> bool:
    if len(proof.body) != PROOF_SIZE:
        return False
    d = stmt.digest()
    if not hmac.compare_digest(proof.statement_digest, d):
        return False
    return hmac.compare_digest(proof.body, _body(pp, d))


def forged_proof(stmt: Statement) -> Proof:
    """Well-formed but invalid proof, as emitted by a byzantine announcer."""
    d = stmt.digest()
    return Proof(body=hashlib.shake_256(b"forged" + d).digest(PROOF_SIZE), statement_digest=d)
