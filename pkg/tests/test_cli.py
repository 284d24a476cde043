import json
import subprocess
import sys

import pytest

from tschmob.cli import main
from tschmob.mobility import read_movement_file

SHORT = "[common]\nduration = 120\n[matrix]\nscenarios = agri\nschedulers = orchestra\nnodes = 3\nseeds = 1-2\n"


@pytest.fixture
def short_cfg(tmp_path):
    p = tmp_path / "short.ini"
    p.write_text(SHORT)
    return str(p)


def test_run_writes_csv_and_event_log(tmp_path, short_cfg, capsys):
    out = tmp_path / "one"
    assert main(["run", "--config", short_cfg, "--scheduler", "alice", "--verbose-trace", "--out-dir", str(out)]) == 0
    assert "agri/alice/3 seed=1" in capsys.readouterr().out
    assert (out / "run.csv").read_text().startswith("scenario,scheduler")
    log = (out / "events.log").read_text().splitlines()
    assert log[0] == "asn,node,event,detail" and any(",join," in line for line in log)


def test_matrix_and_rerun_from_manifest(tmp_path, short_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["matrix", "--config", short_cfg, "--out-dir", str(a), "--quiet"]) == 0
    assert len(json.loads((a / "manifest.json").read_text())["runs"]) == 2
    assert (a / "plotdata" / "agri_prr.csv").exists()
    assert main(["matrix", "--manifest", str(a / "manifest.json"), "--out-dir", str(b), "--quiet"]) == 0
    assert (a / "runs.csv").read_bytes() == (b / "runs.csv").read_bytes()


def test_matrix_filters_and_empty_selection(tmp_path, short_cfg, capsys):
    assert main(["matrix", "--config", short_cfg, "--seed", "2", "--out-dir", str(tmp_path), "--quiet"]) == 0
    assert len(list((tmp_path / "runs").iterdir())) == 1
    assert main(["matrix", "--config", short_cfg, "--nodes", "5", "--out-dir", str(tmp_path)]) == 2
    assert "no runs selected" in capsys.readouterr().err


def test_schedule_dump_stdout(capsys):
    assert main(["schedule-dump", "--scheduler", "msf", "--nodes", "3", "--count", "5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("asn,node,slotframe") and len(lines) > 1


def test_gen_mobility_round_trips(tmp_path, short_cfg):
    assert main(["gen-mobility", "--config", short_cfg, "--scenario", "warehouse", "--nodes", "4",
                 "--out-dir", str(tmp_path)]) == 0
    (f,) = tmp_path.glob("*.movements")
    traces = read_movement_file(f.read_text())
    assert [t.node for t in traces] == [0, 1, 2, 3]


def test_plotdata_from_summary(tmp_path, short_cfg, capsys):
    main(["matrix", "--config", short_cfg, "--out-dir", str(tmp_path / "m"), "--quiet"])
    assert main(["plotdata", "--summary", str(tmp_path / "m" / "summary.json"), "--out-dir", str(tmp_path / "p")]) == 0
    assert len(list((tmp_path / "p").glob("*.csv"))) == 3


def test_bad_config_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[common]\nwarp = 9\n")
    assert main(["run", "--config", str(p)]) == 2
    assert "unknown key" in capsys.readouterr().err
    assert main(["run", "--nodes", "9"]) == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "tschmob", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "schedule-dump" in r.stdout
