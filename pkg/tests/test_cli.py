import json
import os

import numpy as np
import pytest

from villain import cli, sampler
from villain.cli import ConfigError
from villain.lattice import FREE, LatticeSpec
from villain.stats import MeasureReport, PASS


def _write(tmp_path, name, body):
    path = tmp_path / name
    path.write_text(body)
    return str(path)


def test_load_config_unknown_experiment(tmp_path):
    path = _write(tmp_path, "bad.cfg", "[run]\nexperiment = frobnicate\n")
    with pytest.raises(ConfigError, match="frobnicate"):
        cli.load_config(path)


def test_load_config_unknown_key_named(tmp_path):
    path = _write(tmp_path, "bad.cfg",
                  "[run]\nexperiment = ranks\nwibble = 3\n")
    with pytest.raises(ConfigError, match="wibble"):
        cli.load_config(path)


def test_load_config_requires_run_section(tmp_path):
    path = _write(tmp_path, "bad.cfg", "[other]\nexperiment = ranks\n")
    with pytest.raises(ConfigError, match="run"):
        cli.load_config(path)
    with pytest.raises(ConfigError):
        cli.load_config(str(tmp_path / "missing.cfg"))


def test_preflight_cell_ceiling(tmp_path):
    with pytest.raises(ConfigError, match="ceiling"):
        cli._spec_of({"n": "4", "j": "40"})


def test_run_ranks_exit_zero_and_artifacts(tmp_path):
    out = tmp_path / "out"
    path = _write(tmp_path, "ranks.cfg",
                  f"[run]\nexperiment = ranks\nn = 4\nj = 1\nout = {out}\n")
    code = cli.main(["run", path])
    assert code == 0
    assert (out / "ranks.csv").exists()
    tree = json.loads((out / "ranks.json").read_text())
    assert tree["verdict"] == PASS
    resolved = (out / "ranks.resolved.cfg").read_text()
    assert tree["meta"]["config_hash"] in resolved


def test_run_is_deterministic_byte_identical(tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        path = _write(tmp_path, f"v_{tag}.cfg",
                      "[run]\nexperiment = villain\nn = 2\nj = 1\n"
                      "beta = 1.0\nsamples = 40\nburn_in = 10\n"
                      f"replicas = 2\nseed = 3\ndegree = 0\nout = {out}\n")
        cli.main(["run", path])
        outs.append((out / "villain.csv").read_bytes())
    assert outs[0] == outs[1]


def test_seed_flag_changes_output(tmp_path):
    outs = []
    for tag, seed in (("c", 1), ("d", 2)):
        out = tmp_path / tag
        path = _write(tmp_path, f"v_{tag}.cfg",
                      "[run]\nexperiment = villain\nn = 2\nj = 1\n"
                      "beta = 1.0\nsamples = 40\nburn_in = 10\n"
                      f"replicas = 2\ndegree = 0\nout = {out}\n")
        cli.main(["--seed", str(seed), "run", path])
        outs.append((out / "villain.csv").read_bytes())
    assert outs[0] != outs[1]


def test_run_calculus_exit_zero(tmp_path):
    out = tmp_path / "calc"
    path = _write(tmp_path, "calc.cfg",
                  f"[run]\nexperiment = calculus-check\nn = 2\nout = {out}\n")
    assert cli.main(["run", path]) == 0


def test_run_ivg_table_plain_tables_exit_zero(tmp_path):
    out = tmp_path / "ivg"
    path = _write(tmp_path, "ivg.cfg",
                  "[run]\nexperiment = ivg-table\nbeta = 0.5\n"
                  f"beta_max = 1.0\nbeta_step = 0.5\nout = {out}\n")
    assert cli.main(["run", path]) == 0


def test_describe_known_and_unknown(capsys):
    assert cli.main(["describe", "wilson"]) == 0
    text = capsys.readouterr().out
    assert "wilson" in text and "config keys" in text
    assert cli.main(["describe", "nonsense"]) == 1


def test_describe_covers_every_experiment(capsys):
    for name in cli.EXPERIMENTS:
        assert cli.main(["describe", name]) == 0


def test_run_bad_config_exit_one(tmp_path):
    path = _write(tmp_path, "bad.cfg", "[run]\nexperiment = nothing\n")
    assert cli.main(["run", path]) == 1


def test_resume_from_checkpoint(tmp_path, capsys):
    spec = LatticeSpec.cube(2, 1, FREE)
    cfg = sampler.ChainConfig(beta=1.0, n_samples=5, burn_in=0, replicas=2,
                              seed=4)
    st = sampler.initial_state(spec, 0, replicas=2)
    rng = sampler.make_rng(4)
    for _ in range(10):
        sampler.sweep(st, 1.0, rng)
    ck = tmp_path / "chain.ck"
    sampler.save_checkpoint(ck, st, cfg)
    out = tmp_path / "resumed"
    path = _write(tmp_path, "resume.cfg",
                  "[run]\nexperiment = villain\nn = 2\nj = 1\nbeta = 1.0\n"
                  f"samples = 5\ndegree = 0\nout = {out}\n")
    assert cli.main(["resume", path, str(ck)]) == 0
    text = capsys.readouterr().out
    assert "resumed 5 sweeps from sweep 10" in text
    st2, _, header = sampler.load_checkpoint(out / "resumed.ck")
    assert st2.sweep == 15


def test_exit_code_semantics():
    passing = MeasureReport("a", 1.0, 0.1, 10)
    passing.compare("t", 1.0)
    failing = MeasureReport("b", 9.0, 0.1, 10)
    failing.compare("t", 1.0)
    inconclusive = MeasureReport("c", 0.01, 0.1, 10)
    inconclusive.compare("t", 0.01)
    table = MeasureReport("d", 2.0, 0.0, 1)
    assert cli._exit_code([passing]) == 0
    assert cli._exit_code([passing, failing]) == 1
    assert cli._exit_code([passing, inconclusive]) == 2
    assert cli._exit_code([table]) == 0
    assert cli._exit_code([passing, table]) == 0


def test_env_seed_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("VILLAIN_SEED", "77")
    out = tmp_path / "env"
    path = _write(tmp_path, "env.cfg",
                  "[run]\nexperiment = villain\nn = 2\nj = 1\nbeta = 1.0\n"
                  f"samples = 10\nburn_in = 5\ndegree = 0\nout = {out}\n")
    cli.main(["run", path])
    resolved = (out / "villain.resolved.cfg").read_text()
    assert "seed = 77" in resolved
