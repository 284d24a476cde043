"""Scenario and matrix configuration, the ``key = value`` config file, config digests.

Config file grammar (INI-style, parsed with :mod:`configparser`)::

    # comment
    [common]                     ; knobs shared by every scenario
    speed = 2.0                  ; m/s
    range = 450                  ; radio range, m
    duration = 14400             ; s
    slot_duration = 0.01         ; s
    traffic_period = 6           ; s
    traffic_phase_per_id = 0.1   ; s
    fhs = 16 17 23 18            ; hopping sequence
    link_loss = 0.0              ; per-delivery loss probability inside range
    unicast_len = 17             ; Orchestra/ALICE unicast slotframe
    keepalive_period = 12
    desync_timeout = 36
    max_retx = 8
    backoff_exponent_min = 1
    backoff_exponent_max = 7
    eb_period = 4
    eb_jitter = 0.1
    scan_dwell = 1
    queue_capacity = 16
    parent_window = 30

    [agri]
    trail = 265,250 735,250 735,750 265,750   ; polyline points x,y
    near_spacing = 30            ; trail spacing of coordinator and near nodes
    remote_offset = 720          ; trail offset of the remote node (node n-1)

    [warehouse]
    placements = 500,500 350,350 650,350 350,650 650,650

    [matrix]
    scenarios = agri warehouse
    schedulers = orchestra alice msf
    nodes = 3 4 5
    seeds = 1-20                 ; ranges and single values, space separated

Any key of ``[common]`` may also appear in a scenario section, where it
overrides the common value for that scenario only. Unknown sections or keys
are rejected.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .mac import SyncPolicy
from .mobility import Position, TrailSpec, default_trail
from .phy import DEFAULT_FHS, DEFAULT_RANGE, Fhs
from .schedulers import SCHEDULERS

AGRI = "agri"
WAREHOUSE = "warehouse"
SCENARIOS = (AGRI, WAREHOUSE)

DEFAULT_TRAIL = tuple((p.x, p.y) for p in default_trail().polyline)
DEFAULT_WAREHOUSE_PLACEMENTS = ((500.0, 500.0), (350.0, 350.0), (650.0, 350.0), (350.0, 650.0), (650.0, 650.0))
MIN_NODES, MAX_NODES = 3, 5
# AGRI placement rule: near nodes start close together, the remote node far from all of them
NEAR_SPREAD_MAX = 200.0
REMOTE_SEPARATION_MIN = 600.0


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    """Every behavioral knob of one simulated network, minus the seed."""

    pattern: str = AGRI
    n_nodes: int = 3
    scheduler: str = "orchestra"
    coordinator: int = 0
    speed: float = 2.0
    radio_range: float = DEFAULT_RANGE
    duration: float = 4 * 3600.0
    slot_duration: float = 0.010
    traffic_period: float = 6.0
    traffic_phase_per_id: float = 0.1
    fhs: tuple[int, ...] = DEFAULT_FHS
    link_loss: float = 0.0
    unicast_len: int = 17
    sync: SyncPolicy = field(default_factory=SyncPolicy)
    trail: tuple[tuple[float, float], ...] = DEFAULT_TRAIL
    near_spacing: float = 30.0
    remote_offset: float = 720.0
    placements: tuple[tuple[float, float], ...] = DEFAULT_WAREHOUSE_PLACEMENTS

    def __post_init__(self):
        if self.pattern not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.pattern!r}; choose from {SCENARIOS}")
        if self.scheduler not in SCHEDULERS:
            raise ConfigError(f"unknown scheduler {self.scheduler!r}; choose from {sorted(SCHEDULERS)}")
        if not MIN_NODES <= self.n_nodes <= MAX_NODES:
            raise ConfigError(f"n_nodes must be in [{MIN_NODES}, {MAX_NODES}], got {self.n_nodes}")
        if self.coordinator != 0:
            raise ConfigError("the coordinator is node 0")
        if self.speed <= 0 or self.radio_range <= 0 or self.duration <= 0 or self.slot_duration <= 0:
            raise ConfigError("speed, range, duration and slot duration must be positive")
        if self.traffic_period <= 0:
            raise ConfigError("traffic period must be positive")
        if not 0.0 <= self.link_loss < 1.0:
            raise ConfigError("link_loss must be in [0, 1)")
        if self.unicast_len < 1:
            raise ConfigError("unicast_len must be positive")
        try:
            Fhs(self.fhs)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if len(self.trail) < 2:
            raise ConfigError("trail needs at least two points")
        if self.pattern == AGRI:
            spread = (self.n_nodes - 2) * self.near_spacing
            if self.near_spacing < 0 or spread > NEAR_SPREAD_MAX:
                raise ConfigError(f"near nodes span {spread:g} m of trail; at most {NEAR_SPREAD_MAX:g} m allowed")
            if self.remote_offset - spread < REMOTE_SEPARATION_MIN:
                raise ConfigError(
                    f"remote node starts {self.remote_offset - spread:g} m from a near node; "
                    f"needs at least {REMOTE_SEPARATION_MIN:g} m"
                )
            if self.remote_offset > self.trail_spec().total_length:
                raise ConfigError("remote offset lies beyond the end of the trail")
        if self.pattern == WAREHOUSE and len(self.placements) < self.n_nodes:
            raise ConfigError(f"{self.n_nodes} nodes but only {len(self.placements)} warehouse placements")

    # --- derived objects ---

    def trail_spec(self) -> TrailSpec:
        return TrailSpec([Position(x, y) for x, y in self.trail])

    def fhs_obj(self) -> Fhs:
        return Fhs(self.fhs)

    def label(self) -> str:
        return f"{self.pattern}/{self.scheduler}/{self.n_nodes}"

    def with_(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    # --- serialization ---

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["fhs"] = list(self.fhs)
        d["trail"] = [list(p) for p in self.trail]
        d["placements"] = [list(p) for p in self.placements]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        d["sync"] = SyncPolicy(**d.get("sync", {}))
        d["fhs"] = tuple(d.get("fhs", DEFAULT_FHS))
        d["trail"] = tuple(tuple(map(float, p)) for p in d.get("trail", DEFAULT_TRAIL))
        d["placements"] = tuple(tuple(map(float, p)) for p in d.get("placements", DEFAULT_WAREHOUSE_PLACEMENTS))
        return cls(**d)

    def digest(self) -> str:
        """sha256 over the canonical JSON of every knob."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class MatrixConfig:
    scenarios: tuple[str, ...] = SCENARIOS
    schedulers: tuple[str, ...] = ("orchestra", "alice", "msf")
    node_counts: tuple[int, ...] = (3, 4, 5)
    seeds: tuple[int, ...] = tuple(range(1, 21))
    # per-scenario base configs; the matrix fills in scheduler and n_nodes
    base: dict = field(default_factory=lambda: {s: ScenarioConfig(pattern=s) for s in SCENARIOS})

    def __post_init__(self):
        for s in self.scenarios:
            if s not in self.base:
                raise ConfigError(f"no base config for scenario {s!r}")
        if not self.seeds:
            raise ConfigError("the matrix needs at least one seed")

    def expand(self) -> list[tuple[ScenarioConfig, int]]:
        """Every (config, seed) pair in the fixed scenario, scheduler, nodes, seed order."""
        runs = []
        for scen in self.scenarios:
            for sched in self.schedulers:
                for n in self.node_counts:
                    cfg = self.base[scen].with_(scheduler=sched, n_nodes=n)
                    runs.extend((cfg, seed) for seed in self.seeds)
        return runs

    def __len__(self) -> int:
        return len(self.scenarios) * len(self.schedulers) * len(self.node_counts) * len(self.seeds)


# --- config file --------------------------------------------------------------

_COMMON_KEYS = {
    "speed": ("speed", float),
    "range": ("radio_range", float),
    "duration": ("duration", float),
    "slot_duration": ("slot_duration", float),
    "traffic_period": ("traffic_period", float),
    "traffic_phase_per_id": ("traffic_phase_per_id", float),
    "fhs": ("fhs", lambda v: tuple(int(x) for x in v.split())),
    "link_loss": ("link_loss", float),
    "unicast_len": ("unicast_len", int),
}
_SYNC_KEYS = {f.name: f.type for f in dataclasses.fields(SyncPolicy)}
_AGRI_KEYS = {
    "trail": ("trail", lambda v: _points(v)),
    "near_spacing": ("near_spacing", float),
    "remote_offset": ("remote_offset", float),
}
_WAREHOUSE_KEYS = {"placements": ("placements", lambda v: _points(v))}
_MATRIX_KEYS = {"scenarios", "schedulers", "nodes", "seeds"}


def _points(text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for tok in text.split():
        try:
            x, y = tok.split(",")
            out.append((float(x), float(y)))
        except ValueError:
            raise ConfigError(f"bad point {tok!r}; expected x,y") from None
    return tuple(out)


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"1-3 7 9-10"`` -> (1, 2, 3, 7, 9, 10)."""
    seeds: list[int] = []
    for tok in text.replace(",", " ").split():
        if "-" in tok:
            lo, hi = tok.split("-", 1)
            a, b = int(lo), int(hi)
            if b < a:
                raise ConfigError(f"empty seed range {tok!r}")
            seeds.extend(range(a, b + 1))
        else:
            seeds.append(int(tok))
    return tuple(seeds)


def _sync_value(name: str, raw: str):
    typ = _SYNC_KEYS[name]
    return int(raw) if typ in ("int", int) else float(raw)


def _apply(section: configparser.SectionProxy, allowed: dict, values: dict, sync: dict) -> None:
    for key, raw in section.items():
        try:
            if key in allowed:
                attr, conv = allowed[key]
                values[attr] = conv(raw)
            elif key in _SYNC_KEYS:
                sync[key] = _sync_value(key, raw)
            else:
                raise ConfigError(f"unknown key {key!r} in [{section.name}]")
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(f"[{section.name}] {key} = {raw!r}: {e}") from None


def parse_config(text: str) -> MatrixConfig:
    """Parse a config file into a matrix whose base configs carry the file's knobs."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), default_section="__none__")
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    unknown = set(cp.sections()) - {"common", AGRI, WAREHOUSE, "matrix"}
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")

    common: dict = {}
    common_sync: dict = {}
    if cp.has_section("common"):
        _apply(cp["common"], _COMMON_KEYS, common, common_sync)

    base = {}
    for scen, extra in ((AGRI, _AGRI_KEYS), (WAREHOUSE, _WAREHOUSE_KEYS)):
        values, sync = dict(common), dict(common_sync)
        if cp.has_section(scen):
            _apply(cp[scen], {**_COMMON_KEYS, **extra}, values, sync)
        try:
            base[scen] = ScenarioConfig(pattern=scen, sync=SyncPolicy(**sync), **values)
        except ValueError as e:
            raise ConfigError(f"[{scen}] {e}") from None

    kwargs: dict = {"base": base}
    if cp.has_section("matrix"):
        sec = cp["matrix"]
        for key in sec:
            if key not in _MATRIX_KEYS:
                raise ConfigError(f"unknown key {key!r} in [matrix]")
        if "scenarios" in sec:
            kwargs["scenarios"] = tuple(sec["scenarios"].split())
        if "schedulers" in sec:
            kwargs["schedulers"] = tuple(s.lower() for s in sec["schedulers"].split())
        if "nodes" in sec:
            kwargs["node_counts"] = tuple(int(x) for x in sec["nodes"].split())
        if "seeds" in sec:
            kwargs["seeds"] = parse_seeds(sec["seeds"])
    m = MatrixConfig(**kwargs)
    for s in m.schedulers:
        if s not in SCHEDULERS:
            raise ConfigError(f"unknown scheduler {s!r} in [matrix]")
    for n in m.node_counts:
        if not MIN_NODES <= n <= MAX_NODES:
            raise ConfigError(f"node count {n} outside [{MIN_NODES}, {MAX_NODES}]")
    return m


def load_config(path) -> MatrixConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())


def default_config_text() -> str:
    """The built-in defaults written out in the config grammar."""
    cfg = ScenarioConfig()
    sync = cfg.sync
    fmt = lambda pts: " ".join(f"{x:g},{y:g}" for x, y in pts)  # noqa: E731
    lines = [
        "[common]",
        f"speed = {cfg.speed:g}",
        f"range = {cfg.radio_range:g}",
        f"duration = {cfg.duration:g}",
        f"slot_duration = {cfg.slot_duration:g}",
        f"traffic_period = {cfg.traffic_period:g}",
        f"traffic_phase_per_id = {cfg.traffic_phase_per_id:g}",
        "fhs = " + " ".join(map(str, cfg.fhs)),
        f"link_loss = {cfg.link_loss:g}",
        f"unicast_len = {cfg.unicast_len}",
    ]
    lines += [f"{f.name} = {getattr(sync, f.name):g}" for f in dataclasses.fields(SyncPolicy)]
    lines += [
        "",
        "[agri]",
        f"trail = {fmt(cfg.trail)}",
        f"near_spacing = {cfg.near_spacing:g}",
        f"remote_offset = {cfg.remote_offset:g}",
        "",
        "[warehouse]",
        f"placements = {fmt(cfg.placements)}",
        "",
        "[matrix]",
        "scenarios = agri warehouse",
        "schedulers = orchestra alice msf",
        "nodes = 3 4 5",
        "seeds = 1-20",
        "",
    ]
    return "\n".join(lines)
