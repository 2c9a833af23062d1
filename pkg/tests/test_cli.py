import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from nccerf.cli import main

SHORT = ["--iterations", "120", "--burn-in", "60", "-K", "5"]


def sha(p):
    return hashlib.sha256(p.read_bytes()).hexdigest()


def rows(p):
    with open(p, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--scenario", "2", "--n", "1000", "--seed", "7",
                 "--out", str(out / "full")]) == 0
    assert main(["simulate", "--scenario", "2", "--n", "1000", "--seed", "7",
                 "--mask-u", "--out", str(out / "masked")]) == 0
    return out


def test_simulate(sim, tmp_path):
    r = rows(sim / "full" / "data.csv")
    assert r[0] == ["y", "x", "z", "w", "u"] and len(r) == 1001
    m = rows(sim / "masked" / "data.csv")
    assert m[0] == ["y", "x", "z", "w"]
    assert [row[:4] for row in r] == m
    main(["simulate", "--scenario", "2", "--n", "1000", "--seed", "7",
          "--out", str(tmp_path)])
    assert sha(tmp_path / "data.csv") == sha(sim / "full" / "data.csv")
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["command"] == "simulate" and man["seed"] == 7
    assert man["outputs"]["data.csv"] == sha(tmp_path / "data.csv")


def test_simulate_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["simulate", "--scenario", "5", "--out", str(tmp_path)])
    assert e.value.code == 2
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["simulate", "--scenario", "1", "--n", "10",
                 "--out", str(blocker / "sub")]) == 4


def test_fit_bnp_nc(sim, tmp_path):
    out = tmp_path / "fit"
    assert main(["fit", str(sim / "masked" / "data.csv"), "--out", str(out),
                 *SHORT]) == 0
    cerf = rows(out / "cerf.csv")
    assert len(cerf) == 101 and cerf[0][:4] == ["x", "median", "lo_50", "hi_50"]
    assert rows(out / "draws.csv")[0][0] == "theta_y.1.1"
    man = json.loads((out / "manifest.json").read_text())
    assert man["mode"] == "bnp_nc" and man["config"]["K"] == "5"
    data = str(sim / "masked" / "data.csv")
    assert man["inputs"][data] == sha(sim / "masked" / "data.csv")
    assert set(man["outputs"]) == {"draws.csv", "draws_meta.json", "cerf.csv",
                                   "cerf.json"}
    assert len(list(out.glob("manifest*"))) == 1
    meta = json.loads((out / "cerf.json").read_text())
    assert meta["label"] == "BNP-NC" and meta["identification_failures"] == 0


def test_fit_is_byte_deterministic(sim, tmp_path):
    data = str(sim / "masked" / "data.csv")
    for name in ("a", "b"):
        assert main(["fit", data, "--out", str(tmp_path / name), "--seed", "3",
                     *SHORT]) == 0
    for f in ("draws.csv", "cerf.csv"):
        assert sha(tmp_path / "a" / f) == sha(tmp_path / "b" / f)


def test_rerun_from_manifest(sim, tmp_path):
    data = str(sim / "masked" / "data.csv")
    main(["fit", data, "--out", str(tmp_path / "a"), "--seed", "4", *SHORT])
    main(["fit", data, "--out", str(tmp_path / "b"),
          "--config", str(tmp_path / "a" / "manifest.json")])
    assert sha(tmp_path / "a" / "cerf.csv") == sha(tmp_path / "b" / "cerf.csv")


def test_fit_yxu_without_u(sim, tmp_path, capsys):
    code = main(["fit", str(sim / "masked" / "data.csv"), "--mode", "yxu",
                 "--out", str(tmp_path)])
    assert code == 2
    assert "u" in capsys.readouterr().err


def test_fit_linear_nc(tmp_path):
    from nccerf import linear_generator, save_csv
    save_csv(linear_generator(5000, seed=1), tmp_path / "lin.csv")
    assert main(["fit", str(tmp_path / "lin.csv"), "--mode", "linear-nc",
                 "--n-boot", "200", "--out", str(tmp_path / "o")]) == 0
    r = rows(tmp_path / "o" / "effect.csv")
    assert len(r) == 2 and r[0][:3] == ["estimate", "ci_low", "ci_high"]
    est, lo, hi = map(float, r[1][:3])
    assert abs(est - 2) < 0.05 and lo < est < hi


def test_fit_identification_failure(tmp_path, capsys):
    n = 200
    x = np.linspace(0, 1, n)
    np.savetxt(tmp_path / "d.csv",
               np.column_stack([x ** 2, x, np.cos(7 * x), 2 * x + 1]),
               delimiter=",", header="y,x,z,w", comments="")
    code = main(["fit", str(tmp_path / "d.csv"), "--mode", "linear-nc",
                 "--out", str(tmp_path / "o")])
    assert code == 3 and "A6/A7" in capsys.readouterr().err


def test_fit_column_mapping(tmp_path):
    from nccerf import Scenario, simulate
    d = simulate(Scenario(1, 300, seed=1))
    np.savetxt(tmp_path / "d.csv", np.column_stack([d.x, d.y, d.w, d.z]),
               delimiter=",", header="dose,resp,nco,nce", comments="")
    assert main(["fit", str(tmp_path / "d.csv"), "--x", "dose", "--y", "resp",
                 "--z", "nce", "--w", "nco", "--out", str(tmp_path / "o"),
                 *SHORT]) == 0
    assert main(["fit", str(tmp_path / "d.csv"), "--out", str(tmp_path / "p"),
                 *SHORT]) == 2


def test_plot(sim, tmp_path):
    data = str(sim / "full" / "data.csv")
    for mode in ("bnp-nc", "yx", "yxu"):
        assert main(["fit", data, "--mode", mode, "--out",
                     str(tmp_path / mode), *SHORT]) == 0
    files = [str(tmp_path / m / "cerf.csv") for m in ("bnp-nc", "yx", "yxu")]
    assert main(["plot", *files, "--truth-scenario", "2",
                 "--out", str(tmp_path / "fig")]) == 0
    svg = (tmp_path / "fig" / "cerf.svg").read_text()
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    for label in ("BNP-NC", "YX", "YXU", "truth"):
        assert f">{label}</text>" in svg
    truth = tmp_path / "truth.csv"
    truth.write_text("x,truth\n4,1\n5,2\n6,3\n")
    assert main(["plot", files[0], "--truth", str(truth),
                 "--out", str(tmp_path / "fig2")]) == 0


def test_plot_grids_and_errors(sim, tmp_path):
    data = str(sim / "masked" / "data.csv")
    main(["fit", data, "--out", str(tmp_path / "a"), *SHORT])
    main(["fit", data, "--out", str(tmp_path / "b"), "--grid-points", "40",
          *SHORT])
    a, b = str(tmp_path / "a" / "cerf.csv"), str(tmp_path / "b" / "cerf.csv")
    assert main(["plot", a, b, "--out", str(tmp_path / "p")]) == 2
    assert main(["plot", a, b, "--interpolate",
                 "--out", str(tmp_path / "p")]) == 0
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["plot", str(empty), "--out", str(tmp_path / "p")]) == 2


def test_check(sim, tmp_path, capsys):
    assert main(["check", str(sim / "full" / "data.csv"), "--u-column", "u",
                 "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "A6" in text and "Conclusion" in text
    assert rows(tmp_path / "assumptions.csv")[0][0] == "assumption"
    tiny = tmp_path / "tiny.csv"
    tiny.write_text("y,x,z,w,u\n1,2,3,4,5\n2,3,4,5,7\n3,5,1,2,3\n4,1,1,1,2\n")
    assert main(["check", str(tiny), "--u-column", "u"]) == 2


def test_benchmark_smoke(tmp_path, capsys):
    assert main(["benchmark", "--scenario", "2", "--n", "200",
                 "--replicates", "2", "--iterations", "500", "--burn-in",
                 "250", "-K", "5", "--modes", "bnp-nc,yx", "--quiet",
                 "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "scenario2_summary.json").read_text())
    assert set(s["acceptance"]) == {"coverage_95_central",
                                    "rmse_bnp_nc_below_yx"}
    assert "pass" in s["acceptance"]["coverage_95_central"]
    header = rows(tmp_path / "scenario2_bnp_nc.csv")[0]
    assert header[:4] == ["x", "truth", "median", "central"]
    assert "lo_95" in header and "coverage_50" in header
    with pytest.raises(SystemExit):
        main(["benchmark", "--scenario", "5", "--out", str(tmp_path)])


def test_config_command(capsys):
    assert main(["config", "--defaults"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("[model]") and "K = 20" in out
    assert main(["config", "-K", "3"]) == 0
    assert "K = 3" in capsys.readouterr().out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "nccerf", "--version"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("nccerf ")
