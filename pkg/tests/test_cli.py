import json

import numpy as np
import pytest

from hessapprox import cli, hpf1

TINY = """
[run]
output_dir = {out}
[model]
nx = 12
nz = 10
n_modes = 4
[prior]
corr_length = 3
[probe]
points_x = 2
points_z = 2
[laplace]
correction_rank = 5
[chain]
n_samples = 400
pilot = 100
"""


@pytest.fixture
def cfg_file(tmp_path):
    f = tmp_path / "tiny.ini"
    f.write_text(TINY.format(out=tmp_path / "run"))
    return f


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if code == 0 else None)


def test_full_pipeline(cfg_file, tmp_path, capsys):
    c = str(cfg_file)
    code, res = _run(capsys, "approx", "--config", c)
    assert code == 0 and set(res["errors"]) == {"psf", "pdo", "psfplus"}
    assert (tmp_path / "run/approx/psfplus").exists()
    code, res = _run(capsys, "invert", "--config", c, "--precond", "prior")
    assert code == 0 and res["converged"]
    code, _ = _run(capsys, "sample", "--config", c, "--method", "gpcn", "--hessian", "psfplus")
    assert code == 0
    code, res = _run(capsys, "sample", "--config", c, "--method", "pcn")
    assert code == 0 and len(res["ess"]) == 5
    traces = (tmp_path / "run/sample/pcn/traces.csv").read_text().splitlines()
    assert traces[0] == "step,x1,x2,x3,x4,x5" and len(traces) == 401
    code, res = _run(capsys, "diagnose", "--config", c)
    assert code == 0 and set(res) == {"pcn", "gpcn-psfplus"}
    code, res = _run(capsys, "oracle", "--config", c)
    assert code == 0 and res["n"] == 120
    assert hpf1.read_array(tmp_path / "run/oracle/posterior_std.hpf").shape == (10, 12)
    code, res = _run(capsys, "report", "--config", c)
    assert code == 0 and {"lbfgs_iterations", "ess", "std_error"} <= set(res)


def test_stage_cache(cfg_file, tmp_path, capsys):
    c = str(cfg_file)
    _, first = _run(capsys, "invert", "--config", c, "--precond", "none")
    sol = tmp_path / "run/invert/none/solution.hpf"
    stamp = sol.stat().st_mtime_ns
    _, again = _run(capsys, "invert", "--config", c, "--precond", "none")
    assert again == first and sol.stat().st_mtime_ns == stamp
    fp = json.loads((tmp_path / "run/invert/none/stage.json").read_text())["fingerprint"]
    _run(capsys, "invert", "--config", c, "--precond", "none", "--seed", "5")
    assert json.loads((tmp_path / "run/invert/none/stage.json").read_text())["fingerprint"] != fp


def test_sample_is_reproducible(cfg_file, tmp_path, capsys):
    c = str(cfg_file)
    _run(capsys, "sample", "--config", c, "--method", "pcn")
    a = hpf1.read_array(tmp_path / "run/sample/pcn/std.hpf")
    _run(capsys, "sample", "--config", c, "--method", "pcn", "--output", str(tmp_path / "run2"))
    b = hpf1.read_array(tmp_path / "run2/sample/pcn/std.hpf")
    np.testing.assert_array_equal(a, b)


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["approx", "--config", str(tmp_path / "missing.ini")]) == cli.EXIT_CONFIG
    bad = tmp_path / "bad.ini"
    bad.write_text("[model]\nnx = 1\n")
    assert cli.main(["approx", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["diagnose", "--output", str(tmp_path / "empty")]) == cli.EXIT_CONFIG
    assert cli.main(["report", "--output", str(tmp_path / "empty")]) == cli.EXIT_CONFIG
    assert cli.main(["oracle", "--output", str(tmp_path / "o"), "--grid-scale", "3"]) == cli.EXIT_CONFIG
    with pytest.raises(SystemExit):
        cli.main(["invert", "--precond", "magic"])


def test_numerical_failure_exit_code(monkeypatch, tmp_path):
    from hessapprox import pipeline
    from hessapprox.errors import LineSearchFailed

    def boom(cfg, precond):
        raise LineSearchFailed("forced")

    monkeypatch.setattr(pipeline, "cmd_invert", boom)
    assert cli.main(["invert", "--output", str(tmp_path)]) == cli.EXIT_NUMERIC


def test_target_file(tmp_path):
    from hessapprox import pipeline
    from hessapprox.config import parse_config

    hpf1.write_array(tmp_path / "m.hpf", np.random.default_rng(0).standard_normal((10, 12)))
    with_target = TINY.replace("n_modes = 4", "n_modes = 4\ntarget_file = {target}")
    cfg = parse_config(with_target.format(out=tmp_path / "run", target=tmp_path / "m.hpf"))
    assert np.abs(pipeline.make_problem(cfg).m_star).max() > 0
    bad = tmp_path / "bad.ini"
    bad.write_text(with_target.format(out=tmp_path / "run", target=tmp_path / "nope.hpf"))
    assert cli.main(["approx", "--config", str(bad)]) == cli.EXIT_CONFIG
