"""Two-party channel lifecycle with a hash-chained transaction log.

Every update carries ``h_i = H(r_i || tran_i || v_i || sig)``. States are
immutable; ``apply_update`` returns a new :class:`Channel`.
"""

from __future__ import annotations

import hashlib
import hmac
import struct
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache

import numpy as np


class ChannelError(Exception):
    pass


class InsufficientFunds(ChannelError):
    pass


class VersionMismatch(ChannelError):
    pass


class TamperDetected(ChannelError):
    pass


class InvalidLog(ChannelError):
    pass


class FraudulentClaim(ChannelError):
    pass


class Direction(int, Enum):
    A_TO_B = 0
    B_TO_A = 1


class PublicPolicy(str, Enum):
    DELTA_FOLLOW = "delta-follow"
    FRACTION = "fraction"


NONCE_BYTES = 16
SIG_BYTES = 32


@lru_cache(maxsize=1 << 18)
def tx_digest(nonce: bytes, amount: int, version: int, sig: bytes) -> bytes:
    """SHA-256 over nonce(16) || amount(u64 LE) || version(u64 LE) || sig(32)."""
    if len(nonce) != NONCE_BYTES or len(sig) != SIG_BYTES:
        raise ValueError("nonce must be 16 bytes and sig 32 bytes")
    return hashlib.sha256(nonce + struct.pack("<QQ", amount, version) + sig).digest()


def node_secret(node: str) -> bytes:
    return hashlib.sha256(b"zkpcn-node-secret:" + node.encode()).digest()


def sign(node: str, channel_id: int, version: int, amount: int, direction: Direction) -> bytes:
    """Modelled signature: HMAC-SHA256 of the update fields under the node's secret."""
    msg = struct.pack("<QQQB", channel_id, version, amount, int(direction))
    return hmac.new(node_secret(node), msg, hashlib.sha256).digest()


@dataclass(frozen=True)
class LoggedTx:
    index: int
    amount: int
    direction: Direction
    nonce: bytes
    sig: bytes
    digest: bytes

    def recompute(self) -> bytes:
        return tx_digest(self.nonce, self.amount, self.index, self.sig)


@dataclass(frozen=True)
class UpdateMsg:
    channel: int
    sig: bytes
    version: int
    amount: int
    digest: bytes
    direction: Direction
    nonce: bytes


@dataclass(frozen=True)
class Settlement:
    channel: int
    final_balances: tuple[int, int]
    settled_version: int


@dataclass(frozen=True)
class Channel:
    id: int
    parties: tuple[str, str]
    initial_balances: tuple[int, int]
    true_balances: tuple[int, int]
    public_balances: tuple[int, int]
    version: int = 0
    log: tuple[LoggedTx, ...] = ()
    # version at which the current log starts; nonzero only after a reset
    log_base: int = 0

    @property
    def capacity(self) -> int:
        return sum(self.initial_balances)

    def side_of(self, node: str) -> int:
        if node == self.parties[0]:
            return 0
        if node == self.parties[1]:
            return 1
        raise ChannelError(f"{node} is not a party of channel {self.id}")


def open_channel(a: str, b: str, x_a: int, x_b: int, channel_id: int = 0) -> Channel:
    if a == b:
        raise ChannelError("cannot open a channel with oneself")
    if x_a < 0 or x_b < 0 or x_a + x_b <= 0:
        raise ChannelError("deposits must be non-negative with a positive total")
    return Channel(
        id=channel_id,
        parties=(a, b),
        initial_balances=(x_a, x_b),
        true_balances=(x_a, x_b),
        public_balances=(x_a, x_b),
    )


def _sender_direction(ch: Channel, sender: str | int) -> Direction:
    side = sender if isinstance(sender, int) else ch.side_of(sender)
    return Direction.A_TO_B if side == 0 else Direction.B_TO_A


def make_update(ch: Channel, sender: str | int, amount: int, rng: np.random.Generator) -> UpdateMsg:
    """Build the update message for ``sender`` paying ``amount`` over ``ch``.

    ``sender`` may be a node id or a side index (0 for A, 1 for B).
    """
    direction = _sender_direction(ch, sender)
    if amount <= 0:
        raise ChannelError("amount must be positive")
    if ch.true_balances[direction] < amount:
        raise InsufficientFunds(
            f"channel {ch.id}: side {direction.name} holds {ch.true_balances[direction]} < {amount}"
        )
    version = ch.version + 1
    nonce = rng.bytes(NONCE_BYTES)
    sig = sign(ch.parties[direction], ch.id, version, amount, direction)
    return UpdateMsg(
        channel=ch.id,
        sig=sig,
        version=version,
        amount=amount,
        digest=tx_digest(nonce, amount, version, sig),
        direction=direction,
        nonce=nonce,
    )


def _shift(balances: tuple[int, int], amount: int, direction: Direction) -> tuple[int, int]:
    a, b = balances
    return (a - amount, b + amount) if direction == Direction.A_TO_B else (a + amount, b - amount)


def follow_publics(
    publics: tuple[int, int],
    new_true: tuple[int, int],
    amount: int,
    direction: Direction,
    policy: PublicPolicy = PublicPolicy.DELTA_FOLLOW,
    fraction: float = 1.0,
) -> tuple[int, int]:
    if policy == PublicPolicy.FRACTION:
        return (int(fraction * new_true[0]), int(fraction * new_true[1]))
    s = int(direction)
    r = 1 - s
    out = [0, 0]
    out[s] = min(max(0, publics[s] - amount), new_true[s])
    out[r] = min(publics[r] + amount, new_true[r])
    return (out[0], out[1])


def apply_update(
    ch: Channel,
    msg: UpdateMsg,
    policy: PublicPolicy = PublicPolicy.DELTA_FOLLOW,
    fraction: float = 1.0,
) -> Channel:
    if msg.channel != ch.id:
        raise ChannelError(f"message for channel {msg.channel} applied to {ch.id}")
    if msg.version != ch.version + 1:
        raise VersionMismatch(f"expected version {ch.version + 1}, got {msg.version}")
    if tx_digest(msg.nonce, msg.amount, msg.version, msg.sig) != msg.digest:
        raise TamperDetected(f"digest mismatch on channel {ch.id} version {msg.version}")
    if msg.amount <= 0 or ch.true_balances[msg.direction] < msg.amount:
        raise InsufficientFunds(f"channel {ch.id} cannot move {msg.amount}")
    new_true = _shift(ch.true_balances, msg.amount, msg.direction)
    # index is the channel version, which keeps counting across resets
    tx = LoggedTx(
        index=msg.version,
        amount=msg.amount,
        direction=msg.direction,
        nonce=msg.nonce,
        sig=msg.sig,
        digest=msg.digest,
    )
    return replace(
        ch,
        true_balances=new_true,
        public_balances=follow_publics(ch.public_balances, new_true, msg.amount, msg.direction, policy, fraction),
        version=msg.version,
        log=ch.log + (tx,),
    )


def replay_log(initial: tuple[int, int], log) -> tuple[int, int]:
    """Fold the log over ``initial``; every digest must verify and no prefix may go negative."""
    bal = initial
    for tx in log:
        if tx.recompute() != tx.digest:
            raise TamperDetected(f"digest mismatch at version {tx.index}")
        if tx.amount <= 0 or bal[tx.direction] < tx.amount:
            raise InvalidLog(f"version {tx.index} overdraws side {Direction(tx.direction).name}")
        bal = _shift(bal, tx.amount, tx.direction)
    return bal


def close_channel(ch: Channel, view_a: tuple[int, bytes | None], view_b: tuple[int, bytes | None]) -> Settlement:
    """Settle at the highest submitted version.

    Each view is ``(version, sig)``; ``sig`` must be the logged signature of
    that version (``None`` is accepted only for version ``log_base``, the
    state with no logged update).
    """
    for v, sig in (view_a, view_b):
        if v < ch.log_base or v > ch.version:
            raise FraudulentClaim(f"version {v} is not in channel {ch.id}'s log")
        if v == ch.log_base:
            continue
        tx = ch.log[v - ch.log_base - 1]
        if sig is None or not hmac.compare_digest(tx.sig, sig):
            raise FraudulentClaim(f"signature for version {v} does not match the log")
    top = max(view_a[0], view_b[0])
    return Settlement(
        channel=ch.id,
        final_balances=replay_log(ch.initial_balances, ch.log[: top - ch.log_base]),
        settled_version=top,
    )


def latest_view(ch: Channel) -> tuple[int, bytes | None]:
    return (ch.version, ch.log[-1].sig if ch.log else None)


def view_at(ch: Channel, version: int) -> tuple[int, bytes | None]:
    if version == ch.log_base:
        return (version, None)
    return (version, ch.log[version - ch.log_base - 1].sig)


def maybe_reset(ch: Channel, threshold: int) -> Channel:
    """Re-base the channel on its current true balances once the log reaches ``threshold``.

    The version counter is kept so settlement still compares monotone versions.
    """
    if threshold <= 0 or len(ch.log) < threshold:
        return ch
    return replace(ch, initial_balances=ch.true_balances, log=(), log_base=ch.version)
