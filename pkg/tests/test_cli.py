import json
from dataclasses import replace
from pathlib import Path

import pytest

from ddsgps.cli import (EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_INVARIANT, EXIT_OK,
                        EXIT_VERIFY_FAILED, main, run_experiment)
from ddsgps.config import (OutputConfig, dump_config, load_config, parse_config,
                           with_overrides)
from ddsgps.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def small_config(tmp_path, body=""):
    return write(tmp_path, f"""
iterations = 60
problem = "ieee57"
[outputs]
csv = "{tmp_path / 'trace.csv'}"
summary = "{tmp_path / 'summary.json'}"
{body}
""")


# --- config loading -------------------------------------------------------------

def test_ieee57_defaults():
    cfg = parse_config('problem = "ieee57"')
    assert cfg.iterations == 1500 and cfg.mu0 == "zero"
    assert cfg.schedule.kind == "static" and cfg.schedule.m == 7 and cfg.schedule.B == 1
    assert cfg.stepsize.kind == "inverse-sqrt" and cfg.stepsize.c == 2.0
    assert cfg.build_problem().m == 7


@pytest.mark.parametrize("text, field", [
    ('problem = "ieee57"\n[schedule]\nm = 5', "schedule.m"),
    ('problem = "ieee57"\niterations = 0', "iterations"),
    ('problem = "ieee57"\n[stepsize]\nkind = "cosine"', "stepsize.kind"),
    ('problem = "ieee57"\n[schedule]\nkind = "ring-rotation"\nedges = [[0, 1]]', "schedule.edges"),
    ('problem = "ieee30"', "problem"),
    ('problem = "ieee57"\nmu0 = [[1.0]]', "mu0"),
    ('problem = "ieee57"\ncolour = 3', "colour"),
    ('problem = "ieee57"\n[stepsize]\nc = -1.0', "stepsize"),
    ('iterations = 5', "problem"),
    ('problem = "ieee57"\n[schedule]\nkind = "static"\nedges = [[0, 9]]', "edge"),
    ('problem = { agents = [{ a = [1.0], b = [0.0], lo = [2.0], hi = [1.0], A = [[1.0]], '
     'offset = [1.0] }] }', "problem.agents[0]"),
])
def test_config_errors_name_the_field(text, field):
    with pytest.raises(ConfigError, match=field.replace("[", r"\[").replace("]", r"\]")):
        parse_config(text)


def test_parse_error_reports_line():
    with pytest.raises(ConfigError, match=r"parse error.*line 2"):
        parse_config('problem = "ieee57"\niterations = = 3\n', "bad.toml")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="missing.toml"):
        load_config(tmp_path / "missing.toml")


@pytest.mark.parametrize("name", ["ieee57_static.toml", "ieee57_ring_rotation.toml",
                                  "small_random.toml"])
def test_dump_parse_round_trip(name):
    cfg = load_config(CONFIGS / name)
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert dump_config(again) == dump_config(cfg)


def test_overrides():
    cfg = load_config(CONFIGS / "small_random.toml")
    new = with_overrides(cfg, iterations=10, seed=3, c=0.5, out="x.csv")
    assert (new.iterations, new.schedule.seed, new.stepsize.c, new.outputs.csv) == (10, 3, 0.5, "x.csv")
    with pytest.raises(ConfigError):
        with_overrides(cfg, iterations=0)


# --- subcommands -----------------------------------------------------------------

def test_run_writes_csv_and_summary(tmp_path, capsys):
    path = small_config(tmp_path)
    assert main(["run", str(path)]) == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["status"] == "ok" and summary["iterations"] == 60
    assert summary["lambda_star"][0] == pytest.approx(-57.40437429692635, rel=1e-12)
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert len(lines) == 61 and lines[0].startswith("t,beta,")
    assert main(["verify", str(tmp_path / "trace.csv")]) == EXIT_OK
    assert "60 rows ok" in capsys.readouterr().out


def test_run_overrides_from_flags(tmp_path):
    path = small_config(tmp_path, '[schedule]\nkind = "random-window"\nB = 3')
    out = tmp_path / "other.csv"
    assert main(["run", str(path), "--iterations", "25", "--seed", "4", "--c", "1.0",
                 "--out", str(out)]) == EXIT_OK
    assert len(out.read_text().splitlines()) == 26
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["iterations"] == 25


def test_bad_config_exit_code(tmp_path, capsys):
    path = write(tmp_path, 'problem = "ieee57"\n[schedule]\nm = 5\n')
    assert main(["run", str(path)]) == EXIT_CONFIG
    assert "schedule.m" in capsys.readouterr().err


def test_infeasible_exit_code(tmp_path):
    path = write(tmp_path, """
problem = { agents = [{ a = [1.0], b = [0.0], lo = [0.0], hi = [1.0], A = [[1.0]], offset = [5.0] }] }
""")
    assert main(["run", str(path)]) == EXIT_INFEASIBLE


def test_invariant_failure_exit_code(tmp_path, monkeypatch):
    from ddsgps import metrics
    monkeypatch.setattr(metrics, "IDENTITY_TOL", -1.0)
    path = small_config(tmp_path)
    assert main(["run", str(path)]) == EXIT_INVARIANT
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["status"] == "invariant-failure"
    assert "identity" in summary["error"]


def test_verify_rejects_tampered_trace(tmp_path, capsys):
    path = small_config(tmp_path)
    assert main(["run", str(path)]) == EXIT_OK
    csv_path = tmp_path / "trace.csv"
    lines = csv_path.read_text().splitlines()
    cells = lines[3].split(",")
    cells[-1] = "0.5"
    lines[3] = ",".join(cells)
    csv_path.write_text("\n".join(lines) + "\n")
    assert main(["verify", str(csv_path)]) == EXIT_VERIFY_FAILED
    assert "t=3: identity_residual" in capsys.readouterr().out


def test_oracle_subcommand(tmp_path, capsys):
    out = tmp_path / "oracle.json"
    assert main(["oracle", str(CONFIGS / "ieee57_static.toml"), "--cross-check", "--step0", "0.1",
                 "--out", str(out)]) == EXIT_OK
    payload = json.loads(out.read_text())
    assert payload["f_star"] == pytest.approx(55870.04898645655, rel=1e-12)
    assert abs(payload["cross_check"]["f_star_rel_diff"]) <= 1e-6
    assert payload["duality_gap"] <= 1e-8 * payload["f_star"]
    assert json.loads(capsys.readouterr().out) == payload


def test_run_experiment_is_byte_deterministic(tmp_path):
    cfg = load_config(CONFIGS / "small_random.toml")
    texts = []
    for k, workers in enumerate((None, None, 3)):
        outputs = OutputConfig(str(tmp_path / f"t{k}.csv"), str(tmp_path / f"s{k}.json"))
        status, _ = run_experiment(replace(cfg, iterations=300, outputs=outputs), workers=workers)
        assert status == EXIT_OK
        texts.append((tmp_path / f"t{k}.csv").read_bytes())
    assert texts[0] == texts[1] == texts[2]


def test_python_module_entry_point(tmp_path):
    import subprocess
    import sys
    path = small_config(tmp_path)
    proc = subprocess.run([sys.executable, "-m", "ddsgps", "run", str(path), "--iterations", "5"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "5 rounds" in proc.stdout

