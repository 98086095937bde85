"""Acceptance checks, one test per criterion.

Each test records a ``criterion N: PASS|FAIL ...`` line that is printed in
the terminal summary (see conftest.py).  Running this file directly prints
the same lines without pytest.  The presets run at full length, which takes
a few minutes.
"""

import hashlib
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import check_rule1_oracle, geometric_sample, zeta_sample  # noqa: E402
from schumpeter_soc.analysis import Verdict, compare_families, fit_exponential, fit_powerlaw  # noqa: E402
from schumpeter_soc.cli import main  # noqa: E402
from schumpeter_soc.experiment import read_summary  # noqa: E402

RESULTS: dict = {}
FIG3_P = ("0.0002", "0.0003", "0.0005")
JOBS = str(min(3, os.cpu_count() or 1))


def record(n, ok, detail):
    RESULTS[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Runs:
    """Each preset run once (twice for the determinism check), lazily."""

    def __init__(self, root):
        self.root = Path(root)
        self._done = {}

    def get(self, name, tag="a"):
        key = (name, tag)
        if key not in self._done:
            out = self.root / tag / name
            argv = ["preset", name, "--out", str(out)]
            if name == "fig3":
                argv += ["--jobs", JOBS]
            code = main(argv)
            self._done[key] = (code, out)
        return self._done[key]

    def thurner_dirs(self, tag="a"):
        dirs = [self.get("fig1", tag)[1], self.get("fig2", tag)[1]]
        fig3 = self.get("fig3", tag)[1]
        return dirs + [fig3 / f"p={p}_seed=1" for p in FIG3_P]


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return Runs(tmp_path_factory.mktemp("acceptance"))


def criterion_1(runs):
    code, out = runs.get("fig1")
    s = read_summary(out / "summary.txt")
    r2 = float(s["r2_semilog"])
    ok = code == 0 and s["verdict"] == Verdict.EXPONENTIAL.value and r2 >= 0.95
    return record(1, ok, f"fig1 verdict={s['verdict']} r2_semilog={r2:.4f} (need ExponentialPreferred, >= 0.95)")


def criterion_2(runs):
    code, out = runs.get("fig3")
    parts, ok = [], code == 0
    for p in FIG3_P:
        s = read_summary(out / f"p={p}_seed=1" / "summary.txt")
        slope, alpha = float(s["slope_loglog"]), float(s["alpha_mle"])
        ok &= (s["verdict"] == Verdict.POWER_LAW.value and -2.5 <= slope <= -1.9
               and 1.8 <= alpha <= 2.6)
        parts.append(f"p={p}: {s['verdict']} slope={slope:.3f} alpha={alpha:.3f}")
    return record(2, ok, "; ".join(parts) + " (need PowerLawPreferred, slope in [-2.5,-1.9], alpha in [1.8,2.6])")


def criterion_3(runs):
    code, out = runs.get("fig2")
    s = read_summary(out / "summary.txt")
    ratio, analyzed = float(s["max_over_median"]), int(s["analyzed_length"])
    ok = code == 0 and ratio >= 100 and analyzed == 1_000_000
    return record(3, ok, f"fig2 max/median tau={ratio:.0f} over {analyzed} analyzed steps (need >= 100 over 10^6)")


def criterion_4(runs):
    code, out = runs.get("bs-control")
    s = read_summary(out / "summary.txt")
    ext, rnd = s["extremal_verdict"], s["random_extinction_verdict"]
    ok = code == 0 and ext == Verdict.POWER_LAW.value and rnd != Verdict.POWER_LAW.value
    return record(4, ok, f"extremal={ext} (llr/sample={float(s['extremal_llr_per_sample']):.3f}), "
                         f"random-extinction={rnd} (need PowerLawPreferred vs not PowerLawPreferred)")


def criterion_5():
    bad = {n: check_rule1_oracle(n, count=1000) for n in (3, 4)}
    return record(5, not any(bad.values()),
                  f"mismatches vs dense oracle over 2^n states x 1000 tensor pairs: {bad}")


def criterion_6():
    lam = fit_exponential(geometric_sample(0.1, 10**5, seed=0), tau_min=1).parameter
    alpha = fit_powerlaw(zeta_sample(2.2, 10**5, seed=0), tau_min=1).parameter
    wrong = 0
    for seed in range(20):
        wrong += compare_families(geometric_sample(0.1, 10**5, seed + 100)) is not Verdict.EXPONENTIAL
        wrong += compare_families(zeta_sample(2.2, 10**5, seed + 100)) is not Verdict.POWER_LAW
    ok = abs(lam - 0.1) <= 0.003 and abs(alpha - 2.2) <= 0.1 and wrong == 0
    return record(6, ok, f"lambda={lam:.5f} (0.1 +-3%), alpha={alpha:.4f} (2.2 +-0.1), "
                         f"misclassified {wrong}/40")


def criterion_7(runs):
    pairs = []
    for name in ("fig1", "fig2", "fig3", "bs-control"):
        a, b = runs.get(name, "a")[1], runs.get(name, "b")[1]
        if name == "fig3":
            files = [Path(f"p={p}_seed=1") / "timeseries.csv" for p in FIG3_P]
        elif name == "bs-control":
            files = [Path(v) / "avalanches.csv" for v in ("extremal", "random_extinction")]
        else:
            files = [Path("timeseries.csv")]
        pairs += [(f"{name}/{f}", sha256(a / f) == sha256(b / f)) for f in files]
    diff = [f for f, same in pairs if not same]
    return record(7, not diff, f"{len(pairs) - len(diff)}/{len(pairs)} artifacts byte-identical across reruns"
                               + (f"; differing: {diff}" if diff else ""))


def criterion_8(runs):
    checked, bad = 0, []
    for tag in ("a", "b"):
        for d in runs.thurner_dirs(tag):
            s = read_summary(d / "summary.txt")
            taus = np.loadtxt(d / "plateaus.csv", skiprows=1, dtype=np.int64, ndmin=1)
            checked += 1
            if not int(s["plateau_sum"]) == int(taus.sum()) == int(s["analyzed_length"]):
                bad.append(str(d))
    return record(8, not bad, f"sum(tau) == analyzed length on {checked - len(bad)}/{checked} runs")


def test_criterion_1_fig1_exponential(runs):
    assert criterion_1(runs), RESULTS[1]


def test_criterion_2_fig3_power_law(runs):
    assert criterion_2(runs), RESULTS[2]


def test_criterion_3_fig2_punctuated(runs):
    assert criterion_3(runs), RESULTS[3]


def test_criterion_4_bs_control_contrast(runs):
    assert criterion_4(runs), RESULTS[4]


def test_criterion_5_rule1_oracle():
    assert criterion_5(), RESULTS[5]


def test_criterion_6_estimator_recovery():
    assert criterion_6(), RESULTS[6]


def test_criterion_7_determinism(runs):
    assert criterion_7(runs), RESULTS[7]


def test_criterion_8_conservation(runs):
    assert criterion_8(runs), RESULTS[8]


if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as tmp:
        r = Runs(tmp)
        for fn in (criterion_1, criterion_2, criterion_3, criterion_4):
            fn(r)
        criterion_5()
        criterion_6()
        criterion_7(r)
        criterion_8(r)
    for n in sorted(RESULTS):
        print(RESULTS[n])
    sys.exit(0 if all("PASS" in v for v in RESULTS.values()) else 1)
