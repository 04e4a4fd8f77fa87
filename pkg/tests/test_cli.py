import math

import pytest

from driftfem.cli import CONFIG_KEYS, ConfigError, RunConfig, run


def _run(argv, tmp_path, capsys):
    code = run(argv + ["--out", str(tmp_path / "out")])
    return code, capsys.readouterr()


def test_constants_d3(tmp_path, capsys):
    code, io = _run(["constants", "--d", "3", "--q", "2", "--lambda", "1", "--volume", "1"], tmp_path, capsys)
    assert code == 0
    vals = dict(line.split(" = ") for line in io.out.splitlines())
    assert float(vals["N"]) == 4.0
    assert float(vals["sigma"]) == 3.0
    assert abs(float(vals["K1"]) - 27 / 256) < 1e-15
    assert float(vals["C1"]) == 17.0
    assert (tmp_path / "out" / "constants.txt").read_text() == io.out


def test_constants_rejects_q(tmp_path, capsys):
    code, io = _run(["constants", "--d", "3", "--q", "1.5"], tmp_path, capsys)
    assert code == 1
    assert "exponent q" in io.err


def test_verify_zero_config(tmp_path, capsys):
    code, io = _run(["verify", "--levels", "8"], tmp_path, capsys)
    assert code == 0
    lines = (tmp_path / "out" / "report.csv").read_text().splitlines()
    assert lines[0].startswith("# generated ")
    assert lines[1] == "case_id,check,paper_ref,measured,bound,slack,verdict"
    for row in lines[2:]:
        cells = row.split(",")
        assert float(cells[3]) == 0.0 and cells[-1] == "pass"


def test_mms(tmp_path, capsys):
    code, io = _run(["mms", "--levels", "8,16,32"], tmp_path, capsys)
    assert code == 0
    last = (tmp_path / "out" / "mms.csv").read_text().splitlines()[-1].split(",")
    assert float(last[5]) > 1.8 and float(last[6]) > 0.9


def test_mms_failure_exit_code(tmp_path, capsys):
    # one interior node on the finer level: far from the asymptotic regime
    code, _ = _run(["mms", "--levels", "1,2"], tmp_path, capsys)
    assert code == 2


@pytest.mark.parametrize(
    "argv",
    [["bogus"], ["verify", "--nope"], ["verify", "--levels", "a,b"], ["verify", "positional"],
     ["verify", "--config", "/nonexistent.ini"]],
)
def test_usage_errors(argv, tmp_path, capsys):
    code, io = _run(argv, tmp_path, capsys)
    assert code == 1
    assert io.err.startswith("driftfem:")


def _cfg(tmp_path, body):
    p = tmp_path / "c.ini"
    p.write_text("[driftfem]\n" + body)
    return str(p)


def test_config_violating_divergence(tmp_path, capsys):
    code, io = _run(["verify", "--config", _cfg(tmp_path, "levels = 8\nB = x; y\nf = 1\n")], tmp_path, capsys)
    assert code == 1 and "div B <= 0" in io.err


def test_config_violating_ellipticity(tmp_path, capsys):
    code, io = _run(["verify", "--config", _cfg(tmp_path, "levels = 8\nlam = 2\n")], tmp_path, capsys)
    assert code == 1 and "ellipticity" in io.err


def test_config_bad_expression(tmp_path, capsys):
    code, io = _run(["verify", "--config", _cfg(tmp_path, "f = 1 +* x\n")], tmp_path, capsys)
    assert code == 1 and "expression" in io.err


def test_config_unknown_key(tmp_path, capsys):
    code, io = _run(["verify", "--config", _cfg(tmp_path, "colour = red\n")], tmp_path, capsys)
    assert code == 1 and "colour" in io.err


def test_config_two_sections(tmp_path, capsys):
    p = tmp_path / "c.ini"
    p.write_text("[driftfem]\nq = 2\n[other]\nx = 1\n")
    code, _ = _run(["verify", "--config", str(p)], tmp_path, capsys)
    assert code == 1


def test_check_failure_exit_code(tmp_path, capsys):
    body = "levels = 8\nf = 1\nslack = -0.999\n"
    code, io = _run(["verify", "--config", _cfg(tmp_path, body)], tmp_path, capsys)
    assert code == 2
    assert "FAIL" in io.out


def test_roundtrip():
    cfg = RunConfig(levels=(16, 32), rs=(1.0, 3.5, math.inf), B="-x; -y", alpha=0.25, suite=True)
    text = cfg.to_text()
    again = RunConfig.from_text(text)
    assert again == cfg
    assert again.to_text() == text
    assert set(CONFIG_KEYS) == {line.split(" = ")[0] for line in text.splitlines()[1:]}


def test_canonicalisation():
    a = RunConfig.from_text("[driftfem]\nlevels=16,32\nalpha = 1e0\nrs = 1 2 inf\n")
    b = RunConfig.from_text("[driftfem]\nrs=1.0, 2.0, inf\nalpha=1.0\nlevels = 16, 32\n")
    assert a.to_text() == b.to_text()


def test_config_errors():
    with pytest.raises(ConfigError):
        RunConfig.from_text("[driftfem]\nlevels = 0\n")
    with pytest.raises(ConfigError):
        RunConfig.from_text("[driftfem]\ndomain = 0, 0, -1, 1\n")
    with pytest.raises(ConfigError):
        RunConfig.from_text("not ini at all")


def test_output_dir_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("DRIFTFEM_OUTPUT_DIR", str(tmp_path / "envdir"))
    assert run(["constants"]) == 0
    assert (tmp_path / "envdir" / "constants.txt").exists()
    # an explicit flag still wins
    assert run(["constants", "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "constants.txt").exists()


def test_reports_byte_identical(tmp_path, capsys):
    outs = []
    for k in range(2):
        d = tmp_path / f"r{k}"
        assert run(["verify", "--suite", "--levels", "8", "--seed", "5", "--out", str(d)]) == 0
        outs.append((d / "report.csv").read_text().splitlines()[1:])
        outs[-1].append((d / "cases.txt").read_text())
    assert outs[0] == outs[1]


def test_solve_exports(tmp_path, capsys):
    body = "levels = 4\nf = 1\nB = -(x - 0.5); -(y - 0.5)\n"
    code, io = _run(["solve", "--config", _cfg(tmp_path, body)], tmp_path, capsys)
    assert code == 0
    out = tmp_path / "out"
    for name in ("mesh.txt", "K.coo", "b.coo", "solution.csv", "norms.txt", "config.ini"):
        assert (out / name).exists()
    assert (out / "solution.csv").read_text().startswith("vertex,x,y,u\n")
    assert RunConfig.from_text((out / "config.ini").read_text()).levels == (4,)


def test_stability_command(tmp_path, capsys):
    body = "levels = 32\nf = 1\nB = -(x - 0.5); -(y - 0.5)\nn_max = 16\n"
    code, io = _run(["stability", "--config", _cfg(tmp_path, body)], tmp_path, capsys)
    assert code == 0
    assert (tmp_path / "out" / "stability.csv").read_text().startswith("n,diff_L1,bound")


def test_stability_short_schedule_fails_threshold(tmp_path, capsys):
    body = "levels = 16\nf = 1\nB = -(x - 0.5); -(y - 0.5)\nn_max = 4\n"
    code, io = _run(["stability", "--config", _cfg(tmp_path, body)], tmp_path, capsys)
    assert code == 2
    assert "[FAIL]  stability stability_final" in io.out


def test_resolvent_command(tmp_path, capsys):
    body = "levels = 8\nf = 1\nn_cases = 3\n"
    code, io = _run(["resolvent", "--config", _cfg(tmp_path, body)], tmp_path, capsys)
    assert code == 0
    assert (tmp_path / "out" / "continuity.csv").exists()


def test_echo_config(capsys):
    assert run(["mms", "--levels", "4,8", "--echo-config"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("[driftfem]\ncommand = mms\n")
    assert "levels = 4, 8\n" in out


def test_d3_mesh_commands_rejected(tmp_path, capsys):
    code, io = _run(["verify", "--d", "3", "--q", "2", "--two-star", "1.2"], tmp_path, capsys)
    assert code == 1
