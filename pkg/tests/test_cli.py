import json
import math
import subprocess
import sys

import numpy as np
import pytest

from spinlab.cli import fmt_float, main
from spinlab.graphs import read_graph
from spinlab.spectral import ary_percolation_pmf


def run(tmp_path, *argv):
    return main([str(a) for a in argv])


def test_gen_is_rerun_identical(tmp_path):
    a, b = tmp_path / "a.el", tmp_path / "b.el"
    assert run(tmp_path, "gen", "--family", "ising-bipartite", "--n", 100, "--delta", 3, "--seed", 7, "--out", a) == 0
    assert run(tmp_path, "gen", "--family", "ising-bipartite", "--n", 100, "--delta", 3, "--seed", 7, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    g = read_graph(a)
    assert g.n_vertices == 200 and len(g.edges) == 300
    man = json.loads((tmp_path / "a.el.manifest.json").read_text())
    assert man["config"]["seed"] == 7 and "version" in man


def test_count_matches_exact(tmp_path):
    g = tmp_path / "g.el"
    run(tmp_path, "gen", "--family", "random-regular", "--n", 12, "--delta", 3, "--seed", 1, "--out", g)
    c1, c2, ex = tmp_path / "c1.json", tmp_path / "c2.json", tmp_path / "ex.json"
    for out in (c1, c2):
        assert run(tmp_path, "count", "--model", "hardcore", "--graph", g, "--lambda", "critical", "--theta", 0.5,
                   "--eps", 0.05, "--eps0", 0.05, "--out", out) == 0
    assert c1.read_bytes() == c2.read_bytes()
    assert run(tmp_path, "exact", "--model", "hardcore", "--graph", g, "--lambda", "critical", "--out", ex) == 0
    res = json.loads(c1.read_text())
    assert set(res) >= {"log_Z_hat", "k", "n_terms", "epsilon", "epsilon0"}
    assert abs(math.exp(res["log_Z_hat"] - json.loads(ex.read_text())["log_Z"]) - 1) <= 0.1
    assert "count_wall_time" in json.loads((tmp_path / "c1.json.manifest.json").read_text())


def test_percolate_pmf(tmp_path):
    out = tmp_path / "pmf.csv"
    assert run(tmp_path, "percolate", "--d", 2, "--p", 0.5, "--pmf-max", 1000, "--out", out) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "ell,pmf" and len(rows) == 1001
    vals = np.array([float(r.split(",")[1]) for r in rows[1:]])
    assert np.allclose(vals, ary_percolation_pmf(2, 0.5, np.arange(1, 1001)), rtol=1e-15)
    assert vals[:2] == pytest.approx([0.25, 0.125], rel=1e-15)


def test_other_commands_rerun_identical(tmp_path):
    g = tmp_path / "g.el"
    run(tmp_path, "gen", "--family", "random-regular", "--n", 8, "--delta", 3, "--seed", 2, "--out", g)
    cmds = [
        ["sample", "--model", "ising", "--graph", g, "--beta", "critical", "--steps", 500, "--thin", 5],
        ["mix", "--model", "hardcore", "--graph", g, "--lambda", 1.0],
        ["spectral", "--model", "ising", "--graph", g, "--beta", 0.3, "--trials", 50],
        ["lowerbound", "--kind", "ising", "--n", 50, "--task", "checksums", "anti"],
        ["exact", "--model", "ising", "--graph", g, "--beta", 0.3, "--what", "influence", "distribution"],
    ]
    for i, c in enumerate(cmds):
        outs = []
        for rep in range(2):
            d = tmp_path / f"r{i}_{rep}"
            d.mkdir()
            assert run(tmp_path, *c, "--seed", 3, "--out", d / "out.json") == 0
            outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir()) if "manifest" not in p.name})
        assert outs[0] == outs[1] and outs[0]


def test_exit_codes(tmp_path, capsys):
    assert run(tmp_path, "gen", "--family", "nope", "--out", tmp_path / "x.el") == 2
    assert run(tmp_path, "lowerbound", "--kind", "hardcore", "--n", 1000, "--out", tmp_path / "x.json") == 3
    assert main(["count", "--no-such-flag"]) == 2
    assert "usage" in capsys.readouterr().err


def test_config_overrides_flags(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"d": 2, "p": 0.6, "pmf_max": 3}))
    out = tmp_path / "pmf.csv"
    assert run(tmp_path, "percolate", "--d", 3, "--p", 0.1, "--config", cfg, "--out", out) == 0
    assert len(out.read_text().splitlines()) == 4
    info = json.loads((tmp_path / "pmf.json").read_text())
    assert info["extinction_probability"] == pytest.approx(4 / 9)
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(tmp_path, "percolate", "--d", 2, "--p", 0.5, "--config", cfg, "--out", out) == 2


def test_float_format():
    assert fmt_float(0.1) == "0.10000000000000001"
    assert float(fmt_float(math.pi)) == math.pi


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-c", "import sys; from spinlab.cli import main; sys.exit(main())",
                        "percolate", "--d", "2", "--p", "0.5", "--pmf-max", "5", "--out", str(tmp_path / "p.csv")],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "p.csv").exists()
