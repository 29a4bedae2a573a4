import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from finsler_zeta import cli, poincare
from finsler_zeta.geometry import ConvexTarget, SupportBody

BALL = """\
dim: 2
family: ball
parameters: {radius: 1}
target: [1, 1]
"""

ELLIPSE = """\
dim: 2
family: ellipsoid
parameters: {axes: [1, 1.3]}
target: {point: [1, 1]}
ximax: 30
"""


@pytest.fixture
def write(tmp_path):
    def _write(text, name="config.yaml"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return _write


def run(argv, capsys=None):
    code = cli.run(argv)
    out = capsys.readouterr() if capsys else None
    return code, out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_minimal_config_loads(write):
    body, target, cfg = cli.parse_config(write(BALL))
    assert body.family == "ball" and body.dim == 2
    np.testing.assert_allclose(target.point, [1, 1])
    assert (cfg.N, cfg.kappa1, cfg.xi_max, cfg.cuts) == (3.0, 3.0, 60.0, "horizontal-left")
    assert cfg.eps0 == pytest.approx(poincare.default_eps0(body))


def test_ball_target_and_overrides(write):
    text = BALL.replace("target: [1, 1]", "target: {family: ball, parameters: {radius: 0.2}, center: [1, 1]}")
    body, target, cfg = cli.parse_config(write(text + "N: 2\nkappa1: 6\neps0: 0.3\n"))
    assert not target.is_point
    assert (cfg.N, cfg.kappa1, cfg.eps0) == (2.0, 6.0, 0.3)


def test_unknown_key_lists_accepted(write, tmp_path, capsys):
    code, out = run(["body", write(BALL + "colour: red\n"), "-o", str(tmp_path)], capsys)
    assert code == 1
    assert "colour" in out.err and "kappa1" in out.err and "ximax" in out.err


def test_nonconvex_profile_rejected(write, tmp_path, capsys):
    text = "dim: 2\nfamily: trig2d\nparameters: {c0: 1, harmonics: [[2, 0.4, 0]]}\ntarget: [1, 1]\n"
    code, out = run(["body", write(text), "-o", str(tmp_path)], capsys)
    assert code == 1 and "ĥ+ĥ″ ≤ 0" in out.err


def test_malformed_yaml_reports_line(write, tmp_path, capsys):
    code, out = run(["body", write("dim: 2\nfamily: [ball\ntarget: 1\n"), "-o", str(tmp_path)], capsys)
    assert code == 1 and "line" in out.err


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.run(["zeta", "evaluate"])
    assert exc.value.code == 1


def test_body_report(write, tmp_path, capsys):
    assert run(["body", write(BALL), "-o", str(tmp_path)], capsys)[0] == 0
    data = json.loads((tmp_path / "body.json").read_text())
    assert data["volume"] == pytest.approx(np.pi)
    np.testing.assert_allclose(data["mixed_volumes"], [0, 0, np.pi], atol=1e-10)
    assert data["morse_bounds_hold"]


def test_count_table(write, tmp_path, capsys):
    assert run(["count", write(BALL), "-o", str(tmp_path), "--tmax", "100", "--points", "5"], capsys)[0] == 0
    rows = read_csv(tmp_path / "count.csv")
    assert rows[0] == ["T", "N", "ratio"]
    assert len(rows) == 6
    assert float(rows[-1][2]) == pytest.approx(1.0, abs=0.1)


def test_spectrum_table(write, tmp_path, capsys):
    assert run(["spectrum", write(BALL), "-o", str(tmp_path), "--lam-max", "2.1"], capsys)[0] == 0
    rows = read_csv(tmp_path / "spectrum.csv")
    assert rows[0] == ["xi1", "xi2", "value", "sign"]
    plus = sorted({float(r[2]) for r in rows[1:] if r[3] == "+"})
    np.testing.assert_allclose(plus, [1, np.sqrt(2), 2])


def test_zeta_eval(write, tmp_path, capsys):
    assert run(["zeta", "eval", write(BALL), "-o", str(tmp_path), "--s", "1+0.5j"], capsys)[0] == 0
    data = json.loads((tmp_path / "evaluation.json").read_text())
    ref = poincare.direct(SupportBody.ball(2), ConvexTarget.at_point([1, 1]), 1 + 0.5j).value
    assert complex(*data["value"]) == pytest.approx(ref, rel=1e-12)
    assert data["region"] == "direct"


def test_zeta_scan_matches_spectrum(write, tmp_path, capsys):
    cfg = write(ELLIPSE)
    assert run(["zeta", "scan", cfg, "-o", str(tmp_path), "--eps", "0.05"], capsys)[0] == 0
    assert run(["spectrum", cfg, "-o", str(tmp_path), "--lam-max", "2.2"], capsys)[0] == 0
    rows = read_csv(tmp_path / "scan.csv")
    assert rows[0] == ["re_s", "im_s", "abs_p", "arg_p", "region"]
    peaks = json.loads((tmp_path / "peaks.json").read_text())["peaks"]
    strong = [p["tau"] for p in peaks if p["prominence"] > 0.5 * min(q["prominence"] for q in peaks if
                                                                         abs(q["offset"]) < 0.02)]
    values = {float(r[2]) for r in read_csv(tmp_path / "spectrum.csv")[1:] if 0.5 <= float(r[2]) <= 2.2}
    for v in values:
        assert min(abs(t - v) for t in strong) <= 0.02


def test_zeta_continue_on_cut(write, tmp_path, capsys):
    code, out = run(["zeta", "continue", write(ELLIPSE), "-o", str(tmp_path), "--s=-0.1+1j"], capsys)
    assert code == 2 and "cut" in out.err


def test_residue_report(write, tmp_path, capsys):
    assert run(["residue", write(BALL), "-o", str(tmp_path)], capsys)[0] == 0
    data = json.loads((tmp_path / "residue.json").read_text())
    assert data["max_difference"] <= 1e-8


@pytest.mark.parametrize("command,files", [
    (["coarea"], ["density.csv", "coarea.json"]),
    (["coarea", "--function", "height"], ["density.csv", "coarea.json"]),
    (["resolvent"], ["resolvent.csv", "resolvent.json"]),
    (["branch"], ["branch.csv", "monodromy.json"]),
])
def test_demo_commands(command, files, tmp_path, capsys):
    assert run(command + ["-o", str(tmp_path)], capsys)[0] == 0
    for name in files:
        assert (tmp_path / name).stat().st_size > 0


def test_branch_monodromy_demo(tmp_path, capsys):
    run(["branch", "-o", str(tmp_path)], capsys)
    demo = json.loads((tmp_path / "monodromy.json").read_text())
    shift = demo["d=2 turns=2"]["shift"]
    assert abs(complex(*shift) if isinstance(shift, list) else complex(shift)) < 1e-10


def test_verify_subset(tmp_path, capsys):
    code, out = run(["verify", "--criteria", "2,5,14", "-o", str(tmp_path)], capsys)
    assert code == 0
    data = json.loads((tmp_path / "verify.json").read_text())
    assert data["passed"] and [c["number"] for c in data["criteria"]] == [2, 5, 14]
    assert out.out.count("[PASS]") == 3


def test_report_figures(write, tmp_path, capsys):
    code, _ = run(["report", write(BALL), "-o", str(tmp_path), "--tmax", "30", "--tau-max", "1.6"], capsys)
    assert code == 0
    for name in ("count.png", "scan.png", "branch_exponent.png"):
        assert (tmp_path / name).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_reproducible_outputs(write, tmp_path, capsys, monkeypatch):
    cfg = write(ELLIPSE)
    a, b = tmp_path / "a", tmp_path / "b"
    run(["zeta", "scan", cfg, "-o", str(a), "--tau-max", "1.2", "--threads", "1"], capsys)
    monkeypatch.setenv("MP_THREADS", "2")
    run(["zeta", "scan", cfg, "-o", str(b), "--tau-max", "1.2"], capsys)
    for name in ("scan.csv", "peaks.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "finsler_zeta", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
