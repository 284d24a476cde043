import pytest
from hypothesis import given
from hypothesis import strategies as st

from tschmob.config import (
    AGRI,
    WAREHOUSE,
    ConfigError,
    MatrixConfig,
    ScenarioConfig,
    default_config_text,
    load_config,
    parse_config,
    parse_seeds,
)
from tschmob.mac import SyncPolicy


def test_default_matrix_has_360_runs_in_fixed_order():
    m = MatrixConfig()
    runs = m.expand()
    assert len(runs) == len(m) == 360
    assert [(c.pattern, c.scheduler, c.n_nodes, s) for c, s in runs[:2]] == [
        (AGRI, "orchestra", 3, 1),
        (AGRI, "orchestra", 3, 2),
    ]
    assert (runs[-1][0].label(), runs[-1][1]) == ("warehouse/msf/5", 20)


def test_parse_seeds():
    assert parse_seeds("1-3 7, 9-10") == (1, 2, 3, 7, 9, 10)
    with pytest.raises(ConfigError):
        parse_seeds("5-2")


@pytest.mark.parametrize(
    "changes",
    [
        {"pattern": "city"},
        {"scheduler": "minimal"},
        {"n_nodes": 2},
        {"n_nodes": 6},
        {"coordinator": 1},
        {"speed": 0.0},
        {"link_loss": 1.0},
        {"fhs": ()},
        {"trail": ((0.0, 0.0),)},
        {"pattern": WAREHOUSE, "n_nodes": 5, "placements": ((1.0, 1.0),)},
    ],
)
def test_invalid_scenarios_rejected(changes):
    with pytest.raises(ConfigError):
        ScenarioConfig(**changes)


def test_sync_policy_validation():
    with pytest.raises(ValueError):
        SyncPolicy(keepalive_period=40.0)
    with pytest.raises(ValueError):
        SyncPolicy(eb_jitter=1.0)


def test_digest_tracks_every_knob():
    a = ScenarioConfig()
    assert a.digest() == ScenarioConfig().digest()
    assert a.digest() != a.with_(speed=2.5).digest()
    assert a.digest() != a.with_(sync=SyncPolicy(max_retx=3)).digest()


@given(
    st.sampled_from([AGRI, WAREHOUSE]),
    st.sampled_from(["orchestra", "alice", "msf"]),
    st.integers(3, 5),
    st.floats(0.1, 10.0),
    st.floats(0.0, 0.9),
)
def test_dict_round_trip(pattern, sched, n, speed, loss):
    cfg = ScenarioConfig(pattern=pattern, scheduler=sched, n_nodes=n, speed=speed, link_loss=loss)
    back = ScenarioConfig.from_dict(cfg.to_dict())
    assert back == cfg and back.digest() == cfg.digest()


def test_default_text_parses_to_defaults():
    m = parse_config(default_config_text())
    assert m == MatrixConfig()


def test_file_overrides(tmp_path):
    text = """
    [common]
    speed = 1.5        ; slower
    max_retx = 3
    [warehouse]
    speed = 3
    [matrix]
    schedulers = ALICE msf
    nodes = 4
    seeds = 1-2 5
    """
    p = tmp_path / "exp.ini"
    p.write_text("\n".join(line.strip() for line in text.splitlines()))
    m = load_config(p)
    assert m.base[AGRI].speed == 1.5 and m.base[WAREHOUSE].speed == 3.0
    assert m.base[AGRI].sync.max_retx == 3
    assert m.schedulers == ("alice", "msf") and m.node_counts == (4,) and m.seeds == (1, 2, 5)
    assert len(m.expand()) == 2 * 2 * 1 * 3


@pytest.mark.parametrize(
    "text",
    [
        "[common]\nspeeed = 2\n",
        "[mystery]\nx = 1\n",
        "[common]\nspeed = fast\n",
        "[matrix]\nnodes = 9\n",
        "[matrix]\nschedulers = tsch\n",
        "[matrix]\nwhat = 1\n",
        "[agri]\ntrail = 1,2 3\n",
        "speed = 2\n",
    ],
)
def test_bad_files_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)
