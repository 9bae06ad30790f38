import json

import numpy as np
import pytest

from stochfeyn import cli
from stochfeyn.sde import PathEnsemble


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def body(path):
    data = json.loads(path.read_text())
    data.pop("metadata")
    return data


def write_config(tmp_path, text):
    p = tmp_path / "run.yaml"
    p.write_text(text)
    return str(p)


def test_missing_seed_is_config_error(tmp_path, capsys):
    assert run(tmp_path, "evolve") == 2
    assert "seed" in capsys.readouterr().err


@pytest.mark.parametrize("seed", ["-1", "abc", str(2 ** 64)])
def test_bad_seed(tmp_path, seed):
    assert run(tmp_path, "evolve", "--seed", seed) == 2


def test_unknown_scenario(tmp_path):
    assert run(tmp_path, "evolve", "--seed", "1", "--scenario", "nope") == 2


def test_unknown_subcommand_or_suite(tmp_path):
    assert cli.main(["frobnicate"]) == 2
    assert run(tmp_path, "verify", "nope", "--seed", "1") == 2


@pytest.mark.parametrize("text", ["schema_version: 2\nseed: 1\n",
                                  "schema_version: 1\nseed: 1\ncolour: red\n",
                                  "seed: 1\n",
                                  "schema_version: 1\nseed: 1\ngrid: 5\n",
                                  "- a\n- b\n"])
def test_config_validation(tmp_path, text):
    assert run(tmp_path, "evolve", "--config", write_config(tmp_path, text)) == 2


def test_evolve_from_config(tmp_path):
    cfg = write_config(tmp_path, "schema_version: 1\nseed: 3\nscenario: harmonic_coherent\n"
                                 "grid: {half_width: 10.0, n_points: 512}\nstate: {q0: 0.5}\n")
    assert run(tmp_path, "evolve", "--config", cfg, "--t", "0.2") == 0
    out = json.loads((tmp_path / "evolve.json").read_text())
    assert out["config"]["seed"] == 3
    assert out["scenario"]["params"]["q0"] == 0.5
    assert out["l2_error_vs_closed_form_at_end"] < 1e-3
    assert (tmp_path / "record.csv").exists()


def test_flags_override_config(tmp_path):
    cfg = write_config(tmp_path, "schema_version: 1\nseed: 3\nscenario: free_packet\n")
    assert run(tmp_path, "evolve", "--config", cfg, "--seed", "9", "--scenario",
               "harmonic_ground", "--t", "0.05") == 0
    out = json.loads((tmp_path / "evolve.json").read_text())
    assert out["config"]["seed"] == 9 and out["config"]["scenario"] == "harmonic_ground"


def test_fields(tmp_path):
    assert run(tmp_path, "fields", "--seed", "1", "--scenario", "harmonic_ground") == 0
    assert json.loads((tmp_path / "fields.json").read_text())["nelson_relation"]["pass"]


def test_fields_rejects_heat_scenario(tmp_path):
    assert run(tmp_path, "fields", "--seed", "1", "--scenario", "ou_feynman_kac") == 2


def test_sample_outputs_and_reproducibility(tmp_path):
    cfg = write_config(tmp_path, "schema_version: 1\nseed: 5\nscenario: harmonic_ground\n"
                                 "sde: {t_end: 0.1, n_paths: 4000}\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["sample", "--config", cfg, "--out", str(a)]) == 0
    assert cli.main(["sample", "--config", cfg, "--out", str(b)]) == 0
    for name in ("paths.bin", "ensemble_summary.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert body(a / "sample.json") == body(b / "sample.json")
    dt, pos = PathEnsemble.read_binary(a / "paths.bin")
    assert dt == pytest.approx(1e-3) and pos.shape == (4000, 101)
    assert np.isfinite(pos).all()


def test_feynman_kac(tmp_path):
    assert run(tmp_path, "feynman-kac", "--seed", "2", "--n-paths", "2000") == 0
    out = json.loads((tmp_path / "feynman_kac.json").read_text())
    assert out["target"] == pytest.approx(np.exp(-0.5))


def test_trotter_both_kinds(tmp_path):
    assert run(tmp_path, "trotter", "--seed", "1", "--l", "8,16") == 0
    assert run(tmp_path, "trotter", "--seed", "1", "--kind", "heat", "--l", "8,16") == 0
    lines = (tmp_path / "trotter_heat.csv").read_text().splitlines()
    assert lines[0] == "kind,l,l2_error,ratio_to_prev" and len(lines) == 3


def test_trotter_bad_slice_counts(tmp_path):
    assert run(tmp_path, "trotter", "--seed", "1", "--l", "8,x") == 2


def test_verify_measure(tmp_path, capsys):
    assert run(tmp_path, "verify", "measure", "--seed", "4") == 0
    printed = capsys.readouterr().out
    assert "PASS  measure/polar_reassembly" in printed
    out = json.loads((tmp_path / "verify_measure.json").read_text())
    assert out["pass"] and out["failures"] == []
