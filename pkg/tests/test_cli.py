import subprocess
import sys
from pathlib import Path

import pytest

from schedaware import load_scenario
from schedaware.cli import main, parse_rates, parse_seeds

SMALL_VALIDATE = ["validate", "--scenarios", "2", "--nodes", "30", "--area", "600", "--links", "4",
                  "--duration", "0.3"]
SMALL_COMPARE = ["compare", "--grid", "4", "--connections", "2", "--seeds", "1..2", "--duration", "0.3",
                 "--max-configs", "5", "--rates", "saturated,100000"]


def files(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.fixture(scope="module")
def scenarios(tmp_path_factory):
    d = tmp_path_factory.mktemp("scen")
    links = d / "links.txt"
    grid = d / "grid.txt"
    assert main(["gen", "-o", str(links), "--seed", "3", "--nodes", "30", "--area", "600", "--links", "4"]) == 0
    assert main(["gen", "-o", str(grid), "--seed", "2", "--grid", "4", "--connections", "2"]) == 0
    return links, grid


def test_gen_writes_loadable_scenarios_with_header(scenarios):
    links, grid = scenarios
    lines = links.read_text().splitlines()
    assert lines[1].startswith("# schedaware gen ")
    assert "seed=3" in lines[1] and "out=" not in lines[1]
    sc = load_scenario(links)
    assert len(sc.connections) == 4 and sc.n == 30
    g = load_scenario(grid)
    assert g.n == 16 and len(g.connections) == 2


def test_gen_is_byte_identical(tmp_path):
    args = ["--seed", "5", "--nodes", "20", "--area", "500", "--links", "3"]
    assert main(["gen", "-o", str(tmp_path / "a.txt"), *args]) == 0
    assert main(["gen", "-o", str(tmp_path / "b.txt"), *args]) == 0
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


def run_twice(tmp_path, argv):
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        assert main([*argv, "--out-dir", str(d)]) == 0
        outs.append(files(d))
    assert outs[0] == outs[1]
    return outs[0]


def test_rate(tmp_path, scenarios):
    out = run_twice(tmp_path, ["rate", str(scenarios[0])])
    assert set(out) == {"ratings.csv", "mics.txt"}
    text = out["ratings.csv"].decode().splitlines()
    assert text[0].startswith("# schedaware rate ")
    assert text[1].startswith("link,src,dst,rts_rating")
    assert len(text) == 2 + 4


def test_simulate(tmp_path, scenarios):
    out = run_twice(tmp_path, ["simulate", str(scenarios[0]), "--duration", "0.2", "--trace"])
    assert set(out) == {"sim_links.csv", "sim_histogram.csv", "sim_flows.csv", "trace.txt"}
    assert b"TX_START" in out["trace.txt"]


def test_route_and_simulate_routes(tmp_path, scenarios):
    out = run_twice(tmp_path, ["route", str(scenarios[1]), "--max-configs", "5"])
    assert {"sar_paths.txt", "sp_paths.txt", "iar_paths.txt", "sar_search.log"} <= set(out)
    assert b"stop:" in out["sar_search.log"]
    paths = tmp_path / "a" / "sar_paths.txt"
    sim = run_twice(tmp_path / "sim", ["simulate", str(scenarios[1]), "--routes", str(paths),
                                       "--duration", "0.2", "--rate", "100000"])
    flows = sim["sim_flows.csv"].decode().splitlines()
    assert len(flows) == 2 + 2


def test_validate(tmp_path):
    out = run_twice(tmp_path, SMALL_VALIDATE)
    assert set(out) == {"validation_report.txt", "correlations.csv", "validation_links.csv",
                        "cause_histogram.csv", "capacity_series.csv"}
    assert b"intra-MICS share" in out["validation_report.txt"]


def test_compare(tmp_path):
    out = run_twice(tmp_path, SMALL_COMPARE)
    table = out["compare_table.csv"].decode().splitlines()
    assert table[1] == "rate,SAR,SP,IAR,SAR/SP,SAR/IAR"
    assert table[2].startswith("saturated,") and table[3].startswith("100000.0,")


@pytest.mark.parametrize("argv, code", [
    (["frobnicate"], 2),
    (["rate"], 2),
    (["compare", "--seeds", "x..y"], 2),
    (["rate", "/nonexistent/scenario.txt"], 3),
])
def test_exit_codes(tmp_path, argv, code, capsys):
    assert main(argv) == code
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("schedaware:")


def test_malformed_scenario_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("[bogus]\n")
    assert main(["rate", str(bad), "--out-dir", str(tmp_path)]) == 3


def test_multi_hop_connections_need_routes(tmp_path, scenarios, capsys):
    assert main(["rate", str(scenarios[1]), "--out-dir", str(tmp_path)]) == 1
    assert "route it first" in capsys.readouterr().err


def test_disconnected_routing_exit_code(tmp_path):
    import numpy as np
    from schedaware import Topology, make_scenario, save_scenario
    pos = np.array([[0.0, 0.0], [200.0, 0.0], [5000.0, 0.0]])
    sc = tmp_path / "far.txt"
    save_scenario(make_scenario(Topology(pos, (5001.0, 1.0)), connections=[(0, 2, 1000.0)]), sc)
    assert main(["route", str(sc), "--out-dir", str(tmp_path), "--method", "sp"]) == 4


def test_parse_helpers():
    assert parse_seeds("1..3") == [1, 2, 3]
    assert parse_seeds("4,7") == [4, 7]
    assert parse_rates("saturated,2e5") == (None, 200000.0)


def test_console_entry_point_runs():
    out = subprocess.run([sys.executable, "-m", "schedaware.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "validate" in out.stdout
