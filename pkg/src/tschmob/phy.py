"""Channel hopping and unit-disk slot arbitration."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping, Sequence

DEFAULT_FHS = (16, 17, 23, 18)
FULL_FHS = (16, 17, 23, 18, 26, 15, 25, 22, 19, 11, 12, 13, 24, 14, 20, 21)
DEFAULT_RANGE = 450.0


@dataclass(frozen=True)
class Fhs:
    channels: tuple[int, ...] = DEFAULT_FHS

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if not self.channels:
            raise ValueError("hopping sequence must not be empty")
        bad = [c for c in self.channels if not 11 <= c <= 26]
        if bad:
            raise ValueError(f"invalid IEEE 802.15.4 channels: {bad}")

    def __len__(self) -> int:
        return len(self.channels)


def channel_for(asn: int, channel_offset: int, fhs: Fhs) -> int:
    """Physical channel of a cell: ``fhs[(asn + channel_offset) mod |fhs|]``."""
    if channel_offset < 0:
        raise ValueError("channel offset must be non-negative")
    ch = fhs.channels
    return ch[(asn + channel_offset) % len(ch)]


def in_range(a, b, radio_range: float = DEFAULT_RANGE) -> bool:
    return math.hypot(a.x - b.x, a.y - b.y) <= radio_range


@dataclass(frozen=True)
class TxAttempt:
    sender: int
    channel: int
    frame: Any


class RxResult(Enum):
    DELIVERED = "delivered"
    COLLISION = "collision"
    IDLE = "idle"


@dataclass(frozen=True)
class RxOutcome:
    receiver: int
    result: RxResult
    frame: Any = None
    sender: int | None = None


def arbitrate_slot(
    attempts: Sequence[TxAttempt],
    listeners: Sequence[tuple[int, int]],
    positions: Mapping[int, Any],
    radio_range: float = DEFAULT_RANGE,
) -> list[RxOutcome]:
    """Resolve one slot: a listener gets a frame iff exactly one in-range sender
    used its channel. No capture effect."""
    senders = {a.sender for a in attempts}
    if len(senders) != len(attempts):
        raise ValueError("a node may transmit at most once per slot")
    by_channel: dict[int, list[TxAttempt]] = {}
    for a in attempts:
        by_channel.setdefault(a.channel, []).append(a)

    out = []
    for node, channel in listeners:
        if node in senders:
            raise ValueError(f"node {node} is both sending and listening")
        p = positions[node]
        heard = [a for a in by_channel.get(channel, ()) if in_range(positions[a.sender], p, radio_range)]
        if not heard:
            out.append(RxOutcome(node, RxResult.IDLE))
        elif len(heard) == 1:
            out.append(RxOutcome(node, RxResult.DELIVERED, heard[0].frame, heard[0].sender))
        else:
            out.append(RxOutcome(node, RxResult.COLLISION))
    return out
