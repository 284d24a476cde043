"""Slot clock and seeded random streams shared by every simulation run."""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

SLOT_DURATION = 0.010
SIM_DURATION = 4 * 3600.0


def seconds_to_slots(seconds: float, slot_duration: float = SLOT_DURATION) -> int:
    return int(round(seconds / slot_duration))


@dataclass
class SimClock:
    """Global Absolute Slot Number counter.

    The coordinator starts the network with ``asn = 0``; slot ``k`` begins at
    wall time ``k * slot_duration``. The run covers slots ``0 .. total_slots-1``.
    """

    slot_duration: float = SLOT_DURATION
    sim_duration: float = SIM_DURATION
    asn: int = 0

    @property
    def total_slots(self) -> int:
        return seconds_to_slots(self.sim_duration, self.slot_duration)

    @property
    def finished(self) -> bool:
        return self.asn >= self.total_slots - 1

    def time_of(self, asn: int) -> float:
        return asn * self.slot_duration

    def advance_to_next_slot(self) -> int:
        if self.finished:
            raise RuntimeError("simulation already finished")
        self.asn += 1
        return self.asn

    def jump_to(self, asn: int) -> int:
        # event-driven fast path: slots in between carry no transmissions or timers
        if asn <= self.asn:
            raise ValueError(f"cannot move clock backwards ({self.asn} -> {asn})")
        self.asn = asn
        return asn


def _derive_seed(seed: int, stream_id) -> int:
    key = f"{int(seed)}/{stream_id!r}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


class RngStream:
    """Named substream of a run seed.

    The substream seed is a keyed hash of ``(seed, stream_id)``, so a stream's
    sequence never depends on which other streams exist in the run.
    """

    __slots__ = ("seed", "stream_id", "_rng")

    def __init__(self, seed: int, stream_id):
        self.seed = int(seed)
        self.stream_id = stream_id
        self._rng = random.Random(_derive_seed(self.seed, stream_id))

    def uniform_choice(self, n: int) -> int:
        return uniform_choice(self, n)

    def uniform(self, a: float, b: float) -> float:
        return self._rng.uniform(a, b)

    def random(self) -> float:
        return self._rng.random()

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id!r})"


def uniform_choice(rng: RngStream, n: int) -> int:
    """Index in ``[0, n)`` with probability ``1/n`` each."""
    if n < 1:
        raise ValueError(f"uniform_choice needs n >= 1, got {n}")
    return rng._rng.randrange(n)
