"""Builds the extension with cargo, imports it and exercises the main calls."""

import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "crates" / "core" / "fixtures"


def build():
    subprocess.run(
        ["cargo", "build", "-p", "demcoh-py", "--release", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release" / "libpydemcoh.so"
    out = pathlib.Path(tempfile.mkdtemp())
    shutil.copy(lib, out / "pydemcoh.so")
    sys.path.insert(0, str(out))


def main():
    build()
    import pydemcoh as d

    assert d.wasserstein1([-1.0], [1.0]) == 2.0
    assert abs(d.wasserstein1([0.0, 1.0], [0.5, 0.5]) - 0.5) < 1e-12

    g = d.gamma_from_maxinfo(0.0, 1.0, 0.16, 1)
    assert g["gamma"] == 80.0 and g["active_term"] == "floor", g

    mi = d.exact_max_information([[0.5, 0.0], [0.0, 0.5]])
    assert abs(mi - math.log(2)) < 1e-12

    lo, hi = d.clopper_pearson(5, 10)
    assert abs(lo - 0.187086) < 1e-5 and abs(hi - 0.812914) < 1e-5

    try:
        d.gamma_approx_dp(0.01, 1e-15, 1.0, 0.1, 1000)
    except d.DemcohError as e:
        assert "delta-above-ceiling" in str(e)
    else:
        raise AssertionError("expected DemcohError")

    data = d.Dataset.from_csv(str(FIXTURES / "distinct200.csv"))
    assert len(data) == 200 and data.features == ["id", "group"]
    report = data.audit(
        {"name": "clear_release"},
        {"name": "memorizing"},
        alpha=1.0,
        gamma=10,
        trials=20,
        seed=1,
        subpopulations=[("all", "")],
    )
    assert report["estimate"]["estimate"] == 1.0, report["estimate"]
    assert report["verdict"] == "inconclusive"

    report = d.run_audit(str(FIXTURES / "constant.json"))
    assert report["verdict"] == "pass"

    print("smoke test ok")


if __name__ == "__main__":
    main()
