"""Mobility traces: agricultural trail ping-pong, warehouse random walk, ns-2 files."""

from __future__ import annotations

import bisect
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .simcore import RngStream, uniform_choice

FRAME_SIZE = 1000.0
DEFAULT_SPEED = 2.0

UP, DOWN, LEFT, RIGHT = "up", "down", "left", "right"
DIRECTIONS = (UP, DOWN, LEFT, RIGHT)
_STEP = {UP: (0.0, 1.0), DOWN: (0.0, -1.0), LEFT: (-1.0, 0.0), RIGHT: (1.0, 0.0)}

# warehouse leg lengths: 50, 60, ..., 500 m
LEG_LENGTHS = tuple(range(50, 501, 10))


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def distance(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Waypoint:
    t: float
    pos: Position


@dataclass
class MobilityTrace:
    node: int
    waypoints: list[Waypoint]
    _times: list[float] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self._times = [w.t for w in self.waypoints]

    @property
    def duration(self) -> float:
        return self.waypoints[-1].t if self.waypoints else 0.0

    def position_at(self, t: float) -> Position:
        return position_at(self, t)


def in_frame(p: Position, size: float = FRAME_SIZE) -> bool:
    return 0.0 <= p.x <= size and 0.0 <= p.y <= size


class TrailSpec:
    """Polyline trail with cumulative arc-length lookup."""

    def __init__(self, polyline: Sequence[Position]):
        if len(polyline) < 2:
            raise ValueError("trail polyline needs at least two points")
        self.polyline = [Position(float(p.x), float(p.y)) for p in polyline]
        for p in self.polyline:
            if not in_frame(p):
                raise ValueError(f"trail point {p} outside the frame")
        self.cumulative = [0.0]
        for a, b in zip(self.polyline, self.polyline[1:]):
            self.cumulative.append(self.cumulative[-1] + a.distance(b))
        if self.total_length <= 0:
            raise ValueError("trail has zero length")

    @property
    def total_length(self) -> float:
        return self.cumulative[-1]

    def point_at(self, s: float) -> Position:
        s = min(max(s, 0.0), self.total_length)
        i = bisect.bisect_right(self.cumulative, s) - 1
        i = min(i, len(self.polyline) - 2)
        seg = self.cumulative[i + 1] - self.cumulative[i]
        f = 0.0 if seg == 0 else (s - self.cumulative[i]) / seg
        a, b = self.polyline[i], self.polyline[i + 1]
        return Position(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y))

    def distance_to(self, p: Position) -> float:
        """Shortest distance from ``p`` to the polyline."""
        best = math.inf
        for a, b in zip(self.polyline, self.polyline[1:]):
            dx, dy = b.x - a.x, b.y - a.y
            seg2 = dx * dx + dy * dy
            f = 0.0 if seg2 == 0 else max(0.0, min(1.0, ((p.x - a.x) * dx + (p.y - a.y) * dy) / seg2))
            best = min(best, math.hypot(p.x - (a.x + f * dx), p.y - (a.y + f * dy)))
        return best


def serpentine_trail(
    rows: int = 3,
    row_length: float = 400.0,
    row_spacing: float = 120.0,
    origin: Position = Position(300.0, 380.0),
) -> TrailSpec:
    """Boustrophedon trail: ``rows`` horizontal passes joined by vertical links.

    Total length is ``rows * row_length + (rows - 1) * row_spacing``.
    """
    pts = []
    for r in range(rows):
        y = origin.y + r * row_spacing
        xs = (origin.x, origin.x + row_length)
        if r % 2:
            xs = xs[::-1]
        pts.append(Position(xs[0], y))
        pts.append(Position(xs[1], y))
    return TrailSpec(pts)


def default_trail() -> TrailSpec:
    # 2 * 470 + 500 = 1440 m. The passes sit 500 m apart, so a vehicle half a
    # trail behind another is out of radio range for most of the run.
    return serpentine_trail(rows=2, row_length=470.0, row_spacing=500.0, origin=Position(265.0, 250.0))


def gen_agri_trace(
    trail: TrailSpec,
    start_offset: float,
    initial_direction: str = "forward",
    speed: float = DEFAULT_SPEED,
    duration: float = 4 * 3600.0,
    node: int = 0,
) -> MobilityTrace:
    """Ping-pong along the trail at constant speed, reversing at either end."""
    if not trail.polyline:
        raise ValueError("empty trail")
    L = trail.total_length
    if not 0.0 <= start_offset <= L:
        raise ValueError(f"start offset {start_offset} outside [0, {L}]")
    if initial_direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction {initial_direction!r}")
    if speed <= 0:
        raise ValueError("speed must be positive")

    s = float(start_offset)
    d = 1 if initial_direction == "forward" else -1
    if d == 1 and s >= L:
        d = -1
    elif d == -1 and s <= 0.0:
        d = 1

    t = 0.0
    wps = [Waypoint(0.0, trail.point_at(s))]
    while t < duration:
        # next vertex (or trail end) in the direction of travel
        if d == 1:
            i = bisect.bisect_right(trail.cumulative, s)
            target = trail.cumulative[min(i, len(trail.cumulative) - 1)]
        else:
            i = bisect.bisect_left(trail.cumulative, s) - 1
            target = trail.cumulative[max(i, 0)]
        dist = abs(target - s)
        if dist == 0.0:
            d = -d
            continue
        dt = dist / speed
        if t + dt >= duration:
            s += d * (duration - t) * speed
            t = duration
        else:
            s = target
            t += dt
        wps.append(Waypoint(t, trail.point_at(s)))
        if s >= L or s <= 0.0:
            d = -d
    return MobilityTrace(node, wps)


# positions this close to an edge count as on it, so no leg is shorter than this
EDGE_TOLERANCE = 1e-6


def eligible_directions(p: Position, size: float = FRAME_SIZE) -> list[str]:
    """Directions whose first step stays inside the frame."""
    lo, hi = EDGE_TOLERANCE, size - EDGE_TOLERANCE
    out = []
    if p.y < hi:
        out.append(UP)
    if p.y > lo:
        out.append(DOWN)
    if p.x > lo:
        out.append(LEFT)
    if p.x < hi:
        out.append(RIGHT)
    return out


def warehouse_leg(rng: RngStream, p: Position, size: float = FRAME_SIZE) -> tuple[str, int, Position]:
    dirs = eligible_directions(p, size)
    direction = dirs[uniform_choice(rng, len(dirs))]
    length = LEG_LENGTHS[uniform_choice(rng, len(LEG_LENGTHS))]
    dx, dy = _STEP[direction]
    end = Position(min(max(p.x + dx * length, 0.0), size), min(max(p.y + dy * length, 0.0), size))
    return direction, length, end


def gen_warehouse_trace(
    rng: RngStream,
    start: Position,
    speed: float = DEFAULT_SPEED,
    duration: float = 4 * 3600.0,
    node: int = 0,
) -> MobilityTrace:
    """Axis-aligned random walk with frame-aware direction choice and clamped legs."""
    if not in_frame(start):
        raise ValueError(f"start {start} outside the frame")
    if speed <= 0:
        raise ValueError("speed must be positive")
    t = 0.0
    p = start
    wps = [Waypoint(0.0, p)]
    while t < duration:
        _, _, end = warehouse_leg(rng, p)
        dist = p.distance(end)
        dt = dist / speed
        if t + dt >= duration:
            f = (duration - t) / dt
            end = Position(p.x + f * (end.x - p.x), p.y + f * (end.y - p.y))
            t = duration
        else:
            t += dt
        wps.append(Waypoint(t, end))
        p = end
    return MobilityTrace(node, wps)


def position_at(trace: MobilityTrace, t: float) -> Position:
    """Linear interpolation between waypoints."""
    wps = trace.waypoints
    if not wps:
        raise ValueError("empty trace")
    if t < 0 or t > wps[-1].t + 1e-9:
        raise ValueError(f"t={t} outside trace span [0, {wps[-1].t}]")
    times = trace._times
    i = bisect.bisect_right(times, t) - 1
    if i >= len(wps) - 1:
        return wps[-1].pos
    a, b = wps[i], wps[i + 1]
    span = b.t - a.t
    f = 0.0 if span <= 0 else (t - a.t) / span
    return Position(a.pos.x + f * (b.pos.x - a.pos.x), a.pos.y + f * (b.pos.y - a.pos.y))


# --- ns-2 style movement files ------------------------------------------------

MOVEMENT_HEADER = "# tschmob movement file v1"

_SET_RE = re.compile(r"^\$node_\((\d+)\) set ([XY])_ (\S+)$")
_DEST_RE = re.compile(r'^\$ns_ at (\S+) "\$node_\((\d+)\) setdest (\S+) (\S+) (\S+)"$')


class MovementFileError(ValueError):
    def __init__(self, lineno: int, line: str, reason: str):
        super().__init__(f"line {lineno}: {reason}: {line!r}")
        self.lineno = lineno


def write_movement_file(traces: Iterable[MobilityTrace]) -> str:
    """Serialize traces.

    Each waypoint ``i`` becomes ``at t_i setdest <waypoint i+1> <speed>``; the
    last waypoint is written as a zero-speed setdest onto itself so that the
    trace end time survives the round trip.
    """
    traces = sorted(traces, key=lambda tr: tr.node)
    lines = [MOVEMENT_HEADER]
    for tr in traces:
        p0 = tr.waypoints[0].pos
        lines.append(f"$node_({tr.node}) set X_ {p0.x:.6f}")
        lines.append(f"$node_({tr.node}) set Y_ {p0.y:.6f}")
    events = []
    for tr in traces:
        wps = tr.waypoints
        for i, w in enumerate(wps):
            if i + 1 < len(wps):
                nxt = wps[i + 1]
                span = nxt.t - w.t
                speed = w.pos.distance(nxt.pos) / span if span > 0 else 0.0
                dest = nxt.pos
            else:
                speed, dest = 0.0, w.pos
            events.append((w.t, tr.node, i, dest, speed))
    events.sort(key=lambda e: (e[0], e[1], e[2]))
    for t, node, _, dest, speed in events:
        lines.append(f'$ns_ at {t:.6f} "$node_({node}) setdest {dest.x:.6f} {dest.y:.6f} {speed:.6f}"')
    return "\n".join(lines) + "\n"


def read_movement_file(text: str) -> list[MobilityTrace]:
    initial: dict[int, dict[str, float]] = {}
    moves: dict[int, list[tuple[float, float, float]]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _SET_RE.match(line)
        try:
            if m:
                initial.setdefault(int(m.group(1)), {})[m.group(2)] = float(m.group(3))
                continue
            m = _DEST_RE.match(line)
            if m:
                moves.setdefault(int(m.group(2)), []).append(
                    (float(m.group(1)), float(m.group(3)), float(m.group(4)))
                )
                continue
        except ValueError as exc:
            raise MovementFileError(lineno, raw, f"bad number ({exc})") from None
        raise MovementFileError(lineno, raw, "unrecognized command")

    traces = []
    for node in sorted(set(initial) | set(moves)):
        xy = initial.get(node, {})
        if "X" not in xy or "Y" not in xy:
            raise ValueError(f"node {node} has no initial X_/Y_ position")
        pos = Position(xy["X"], xy["Y"])
        wps = []
        for t, x, y in moves.get(node, []):
            wps.append(Waypoint(t, pos))
            pos = Position(x, y)
        if not wps:
            wps.append(Waypoint(0.0, pos))
        traces.append(MobilityTrace(node, wps))
    return traces
