import json
import subprocess
import sys

import pytest

from soapbound.cli import analyze, main, render_json, render_text

from conftest import KERNELS, kernel, kernel_path

KEYS = {"program", "statements", "sdg_bound", "leading", "full_bound", "X0", "rho", "tiles", "cases",
        "warnings", "version", "fusion"}


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cholesky_json(capsys):
    code, out, _ = run(capsys, "analyze", kernel_path("cholesky"), "--format", "json")
    assert code == 0
    report = json.loads(out)
    assert set(report) == KEYS
    assert report["leading"] == "N^3/(3*sqrt(S))"


def test_gemm_text_trace(capsys):
    code, out, _ = run(capsys, "analyze", kernel_path("gemm"), "--format", "text")
    assert code == 0
    assert "chi(X) = sqrt(3)*X^(3/2)/9" in out
    assert "leading bound: 2*N^3/sqrt(S)" in out
    assert "X0 = 3*S" in out
    assert "versioned: C along k" in out


def test_broken_file(tmp_path, capsys):
    f = tmp_path / "broken.soap"
    f.write_text("params: N, S\nfor i in range(N)\n    B[i] = f(A[i])\n")
    code, _, err = run(capsys, "analyze", f)
    assert code == 2
    assert "line 2, column" in err


def test_missing_file(capsys):
    code, _, _ = run(capsys, "analyze", "/nonexistent/x.soap")
    assert code == 2


def test_soap_error_exit(tmp_path, capsys):
    f = tmp_path / "t.soap"
    f.write_text("params: N, S\nfor i in range(N):\n    for j in range(N):\n        Z[i, j] = f(A[i, j], A[j, i])\n")
    code, _, err = run(capsys, "analyze", f)
    assert code == 3 and "cannot prove" in err


def test_solver_error_exit(tmp_path, capsys):
    f = tmp_path / "t.soap"
    f.write_text("params: N, S\nfor i in range(N):\n    for j in range(N):\n        B[i] = f(A[i])\n")
    code, _, err = run(capsys, "analyze", f)
    assert code == 4 and "solver" in err


def test_bad_assumption(capsys):
    code, _, _ = run(capsys, "analyze", kernel_path("stencil_example"), "--assume", "T << N")
    assert code == 2


def test_assumption_applied(capsys):
    code, out, _ = run(capsys, "analyze", kernel_path("stencil_example"), "--format", "json",
                       "--assume", "T < N/2")
    assert code == 0 and json.loads(out)["leading"] == "4*N*T/S"


def test_cap_exceeded(capsys):
    code, _, err = run(capsys, "analyze", kernel_path("3mm"), "--cap", "2")
    assert code == 4 and "--cap" in err


def test_no_sdg_single_statement(capsys):
    code, out, _ = run(capsys, "analyze", kernel_path("gemm"), "--format", "json", "--no-sdg")
    report = json.loads(out)
    assert code == 0 and report["sdg_bound"] is None and report["leading"] == "2*N^3/sqrt(S)"


@pytest.mark.parametrize("name", ["gemm", "conv", "2mm", "lu"])
def test_json_deterministic_and_roundtrip(name, capsys):
    _, a, _ = run(capsys, "analyze", kernel_path(name), "--format", "json")
    _, b, _ = run(capsys, "analyze", kernel_path(name), "--format", "json")
    assert a == b
    report = json.loads(a)
    assert render_json(report) == a
    assert json.loads(render_json(report)) == report


def _strings(obj):
    if isinstance(obj, str):
        yield obj
    elif isinstance(obj, dict):
        for v in obj.values():
            yield from _strings(v)
    elif isinstance(obj, list):
        for v in obj:
            yield from _strings(v)


@pytest.mark.parametrize("name", sorted(p.stem for p in KERNELS.glob("*.soap")))
def test_text_and_json_agree(name):
    report = analyze(kernel(name))
    text = render_text(report)
    for key in ("leading", "full_bound", "X0", "rho"):
        if report[key] is not None:
            assert str(report[key]) in text
    for var, expr in report["tiles"].items():
        assert f"{var} = {expr}" in text
    for st in report["statements"]:
        for c in st["cases"]:
            for key in ("leading", "full_bound", "rho", "chi", "domain"):
                assert c[key] in text


def test_oracle_gemm(capsys):
    code, out, _ = run(capsys, "oracle", kernel_path("gemm"), "--param", "N=2", "--S", "4")
    assert code == 0
    lines = dict(line.split(None, 1) for line in out.splitlines() if " " in line)
    assert float(lines["bound"]) <= float(lines["exact"]) <= float(lines["greedy"])
    assert out.strip().endswith("PASS")


def test_oracle_json(capsys):
    code, out, _ = run(capsys, "oracle", kernel_path("gemm"), "--param", "N=2", "--S", "4", "--format", "json")
    r = json.loads(out)
    assert code == 0 and r["status"] == "PASS" and r["bound"] <= r["exact"] <= r["greedy"]


def test_oracle_jacobi(capsys):
    code, out, _ = run(capsys, "oracle", kernel_path("jacobi1d"), "--param", "N=8", "--param", "T=3", "--S", "4")
    assert code == 0 and "PASS" in out


def test_oracle_too_large(capsys):
    code, _, err = run(capsys, "oracle", kernel_path("gemm"), "--param", "N=50", "--S", "4")
    assert code == 5 and "130000" in err


def test_oracle_missing_param(capsys):
    code, _, _ = run(capsys, "oracle", kernel_path("stencil_example"), "--param", "N=6", "--S", "4")
    assert code == 2


def test_oracle_bad_param_syntax(capsys):
    code, _, _ = run(capsys, "oracle", kernel_path("gemm"), "--param", "N", "--S", "4")
    assert code == 2


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["oracle", str(kernel_path("gemm"))])
    assert exc.value.code == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "soapbound", "analyze", str(kernel_path("trisolv")),
                        "--format", "json"], capture_output=True, text=True, check=True)
    assert json.loads(r.stdout)["leading"] == "N^2/2"
