import csv
import filecmp
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from extrabi import cli, harness, semiclassics

EXAMPLES = Path(__file__).resolve().parents[1] / "docs" / "examples"
SUBCOMMANDS = ["spectrum", "phases", "quench", "sweep", "wigner", "scaling"]


def read_table(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def assert_same_outputs(ref: Path, new: Path):
    ref_files = sorted(p.name for p in ref.iterdir())
    assert ref_files == sorted(p.name for p in new.iterdir())
    for name in ref_files:
        a, b = ref / name, new / name
        if name.endswith(".json"):
            ja, jb = json.loads(a.read_text()), json.loads(b.read_text())
            ja.pop("version", None) if isinstance(ja, dict) else None
            jb.pop("version", None) if isinstance(jb, dict) else None
            assert_close_json(ja, jb)
        elif name.startswith("wigner") or "_wigner_" in name:
            assert np.allclose(np.loadtxt(a, delimiter=","), np.loadtxt(b, delimiter=","), rtol=1e-8, atol=1e-12)
        else:
            ha, ra = read_table(a)
            hb, rb = read_table(b)
            assert ha == hb and len(ra) == len(rb)
            for x, y in zip(ra, rb):
                for u, v in zip(x, y):
                    try:
                        fu, fv = float(u), float(v)
                    except ValueError:
                        assert u == v
                        continue
                    assert fu == pytest.approx(fv, rel=1e-8, abs=1e-12, nan_ok=True)


def assert_close_json(a, b):
    if isinstance(a, dict):
        assert set(a) == set(b)
        for k in a:
            assert_close_json(a[k], b[k])
    elif isinstance(a, list):
        assert len(a) == len(b)
        for u, v in zip(a, b):
            assert_close_json(u, v)
    elif isinstance(a, float) and not isinstance(b, str):
        assert a == pytest.approx(b, rel=1e-8, abs=1e-12)
    else:
        assert a == b


# -- configuration -----------------------------------------------------------


@pytest.mark.parametrize(
    "spec, expected",
    [
        ("0:1:3", [0, 0.5, 1]),
        ("0.1,0.2", [0.1, 0.2]),
        ("[0.3, 0.4]", [0.3, 0.4]),
        ("0.7", [0.7]),
        ({"start": 1, "stop": 2, "num": 2}, [1, 2]),
        ({"log_start": -1, "log_stop": 1, "num": 3}, [0.1, 1, 10]),
        ([1, 2], [1, 2]),
    ],
)
def test_grid_forms(spec, expected):
    assert np.allclose(harness.grid(spec), expected)


@pytest.mark.parametrize("spec", [[], None, "[]"])
def test_empty_grid(spec):
    with pytest.raises(harness.ConfigError, match="empty grid"):
        harness.grid(spec)


def test_bad_grid_strings():
    with pytest.raises(harness.ConfigError):
        harness.grid("0:1")
    with pytest.raises(harness.ConfigError):
        harness.grid({"start": 0, "num": 3})


def test_resolve_rejects_unknown_keys():
    with pytest.raises(harness.ConfigError, match="unknown config"):
        harness.resolve_config("sweep", {"bogus": 1})
    with pytest.raises(harness.ConfigError, match="unknown model"):
        harness.resolve_config("sweep", {"params": {"kappa": 1}})
    with pytest.raises(harness.ConfigError, match="delta"):
        harness.resolve_config("sweep", {"params": {"delta": 2}})


def test_moving_average():
    x = np.linspace(0, 1, 11)
    y = np.sin(7 * x)
    assert np.array_equal(harness.moving_average(x, y, 0), y)
    sm = harness.moving_average(x, y, 0.2)
    assert sm[0] == y[0] and sm[-1] == y[-1]
    assert sm[5] == pytest.approx(np.mean(y[4:7]))
    assert np.allclose(harness.moving_average(x, 2 * x + 1, 0.4), 2 * x + 1)


def test_static_blocks():
    blocks = harness._blocks(10, 3)
    assert [list(b) for b in blocks] == [[0, 1, 2], [3, 4, 5, 6], [7, 8, 9]]


def _square(x):
    if x == 3:
        raise RuntimeError("boom")
    return x * x


def test_parallel_map_ordering_and_failures():
    serial = harness.parallel_map(_square, range(8), workers=1)
    par = harness.parallel_map(_square, range(8), workers=3)
    assert serial == par
    assert par[3][0] is False and "boom" in par[3][1]
    assert [v for ok, v in par if ok] == [0, 1, 4, 16, 25, 36, 49]


def test_default_lambdas():
    assert harness.default_lambdas(semiclassics.ModelParams(delta=0.5)) == pytest.approx([0.4, 0.75, 1.5])
    with pytest.raises(harness.ConfigError):
        harness.default_lambdas(semiclassics.ModelParams(delta=0))


# -- CLI ---------------------------------------------------------------------


def test_exit_code_config_error(tmp_path, capsys):
    assert cli.main(["sweep", "--lambdas=[]", "--out", str(tmp_path / "o")]) == 2
    assert "empty grid" in capsys.readouterr().err
    assert cli.main(["sweep", "--delta", "3", "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["scaling", "--R-list", "30,10", "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["quench", "--config", str(tmp_path / "missing.json")]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["nonsense"])
    assert exc.value.code == 2


def test_exit_code_partial_failure(tmp_path, monkeypatch):
    real = semiclassics.semiclassical_level_density

    def flaky(p, m, eps, *a, **k):
        if p.lam == 0.5:
            raise FloatingPointError("synthetic failure")
        return real(p, m, eps, *a, **k)

    monkeypatch.setattr(semiclassics, "semiclassical_level_density", flaky)
    out = tmp_path / "o"
    code = cli.main(["spectrum", "--lambdas", "0.25,0.5", "--eps=-0.6:0:4", "--out", str(out)])
    assert code == 1
    status = json.loads((out / "status.json").read_text())
    assert status["n_failed"] == 1 and "synthetic failure" in status["failures"][0]["error"]
    _, rows = read_table(out / "density.csv")
    assert len(rows) == 4


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"params": {"R": 10, "delta": 0.5}, "lambdas": [0.4]}))
    out = tmp_path / "o"
    assert cli.main(["sweep", "--config", str(cfg), "--delta=-0.5", "--window", "0", "--out", str(out)]) == 0
    resolved = json.loads((out / "config.json").read_text())
    assert resolved["params"]["delta"] == -0.5 and resolved["params"]["R"] == 10
    header, rows = read_table(out / "sweep.csv")
    assert rows[0][header.index("P")] == rows[0][header.index("P_smooth")]


def test_phase_diagram_boundaries(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["phases", "--lambdas", "0.001:1.5:1500", "--deltas=-1,-0.5,0,0.5", "--out", str(out)]) == 0
    header, rows = read_table(out / "phases.csv")
    rows = [(float(r[0]), float(r[1]), float(r[2]), r[3]) for r in rows]
    for d in (-1, -0.5, 0, 0.5):
        line = [r for r in rows if r[1] == d and r[2] != 0]
        flips = [b[0] for a, b in zip(line, line[1:]) if np.sign(a[2]) != np.sign(b[2])]
        # at |delta| = 1 both boundaries coincide and the determinant only touches zero
        expected = [] if abs(d) == 1 else [0.5] + ([0.5 / abs(d)] if d else [])
        assert np.allclose(flips, expected, atol=1.1e-3)
        labels = {r[3] for r in rows if r[1] == d and abs(r[0] - 0.5) > 2e-3 and abs(r[0] - 0.5 / max(abs(d), 1e-9)) > 2e-3}
        if abs(d) == 1:
            assert labels == {"N", "S2"}
        else:
            assert labels == ({"N", "S1", "S2"} if d else {"N", "S1"})
    assert not any(r[3] == "S2" for r in rows if r[1] == 0)


def test_module_entry_point(tmp_path):
    out = tmp_path / "o"
    res = subprocess.run([sys.executable, "-m", "extrabi", "phases", "--lambdas", "0.4,0.75",
                          "--deltas", "0.5", "--out", str(out)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (out / "phases.csv").exists()


# -- golden examples ---------------------------------------------------------


@pytest.mark.parametrize("sub", SUBCOMMANDS)
def test_golden_example(sub, tmp_path):
    ex = EXAMPLES / sub
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.main([sub, "--config", str(ex / "config.json"), "--out", str(out1)]) == 0
    assert_same_outputs(ex / "output", out1)
    # a rerun of the same config is byte-identical
    assert cli.main([sub, "--config", str(ex / "config.json"), "--out", str(out2)]) == 0
    names = sorted(p.name for p in out1.iterdir())
    match, mismatch, errors = filecmp.cmpfiles(out1, out2, names, shallow=False)
    assert not mismatch and not errors


def test_parallel_run_matches_serial(tmp_path):
    args = ["scaling", "--lambdas", "0.75,1.5", "--R-list", "10,20", "--delta", "0.5"]
    assert cli.main(args + ["--out", str(tmp_path / "s")]) == 0
    assert cli.main(args + ["--workers", "2", "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "s" / "scaling.csv").read_bytes() == (tmp_path / "p" / "scaling.csv").read_bytes()
