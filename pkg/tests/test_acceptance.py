"""End-to-end acceptance suite.

Each test checks one numbered criterion, prints a single PASS/FAIL line
(visible even under pytest's output capture), and enforces the criterion's
runtime budget.
"""

import itertools
import json
import time
from math import log
from pathlib import Path

import numpy as np
import pytest

from radarcount.augment import drop_and_interpolate, flip, random_scale
from radarcount.cli import EXIT_OK, main
from radarcount.core import clip_and_normalize, Dataset
from radarcount.metrics import (
    ami,
    expected_mutual_information,
    fisher_score,
    improvement_pct,
)
from radarcount.model import CountModel
from radarcount.preprocess import (
    SigmoidParams,
    StdMap,
    apply_method,
    design_butterworth_bandpass,
    design_two_stage_highpass,
    sigmoid_weight_map,
    std_map,
    threshold_zero,
)
from radarcount.scenes import make_environment_suite
from radarcount.studies import ExperimentConfig, run_preprocess_study, run_transfer_study

from conftest import make_cube


def _report(capsys, number, name, ok, elapsed, detail=""):
    line = (f"[acceptance] criterion {number:>2} "
            f"{'PASS' if ok else 'FAIL'}  {name} ({elapsed:.2f}s)"
            f"{'  ' + detail if detail else ''}")
    with capsys.disabled():
        print(line)
    assert ok, line


def test_criterion_1_sigmoid_threshold_exactness(capsys):
    t0 = time.perf_counter()
    checks = []

    # w(sigma = tau) = 0.5 within 1e-12 across a spread of taus
    for tau in (0.005, 0.02, 0.2):
        w = sigmoid_weight_map(StdMap(values=np.full((4, 4), tau)),
                               SigmoidParams(tau=tau)).values
        checks.append(np.all(np.abs(w - 0.5) < 1e-12))

    rng = np.random.default_rng(0)
    a = np.abs(rng.normal(0.5, 0.05, size=(60, 12, 91)))
    cube = make_cube(a)
    sm = std_map(cube).values
    tau = float(np.median(sm))

    # threshold_zero zeroes exactly the sigma <= tau cells
    out = threshold_zero(cube, tau)
    zeroed = np.all(out.amplitudes == 0.0, axis=0)
    checks.append(np.array_equal(zeroed, sm <= tau))
    kept = ~zeroed
    checks.append(np.array_equal(out.amplitudes[:, kept],
                                 cube.amplitudes[:, kept]))

    # steep sigmoid (s -> 1e-6) agrees with the hard mask away from tau
    w = sigmoid_weight_map(StdMap(values=sm),
                           SigmoidParams(tau=tau, s=1e-6)).values
    away = np.abs(sm - tau) > 1e-3
    checks.append(bool(np.all(np.abs(w[away] - (sm > tau)[away]) < 1e-9)))

    elapsed = time.perf_counter() - t0
    _report(capsys, 1, "sigmoid/threshold exactness",
            all(checks) and elapsed < 1.0, elapsed)


def test_criterion_2_filter_design_oracle(capsys):
    t0 = time.perf_counter()
    hp = 1.0 / np.sqrt(2.0)
    bp = design_butterworth_bandpass()
    two = design_two_stage_highpass()
    checks = [
        abs(bp.gain_at(0.1) - hp) < 1e-6,
        abs(bp.gain_at(0.5) - hp) < 1e-6,
        abs(two.stage1.gain_at(0.05) - hp) < 1e-6,
        abs(two.stage2.gain_at(0.1) - hp) < 1e-6,
        np.all(np.abs(bp.poles()) < 1.0),
        np.all(np.abs(two.stage1.poles()) < 1.0),
        np.all(np.abs(two.stage2.poles()) < 1.0),
        bp.gain_at(0.0) <= 1e-3,
        two.stage1.gain_at(0.0) <= 1e-3,
        two.stage2.gain_at(0.0) <= 1e-3,
    ]
    elapsed = time.perf_counter() - t0
    _report(capsys, 2, "filter design oracle",
            all(checks) and elapsed < 1.0, elapsed)


def _enumerated_expected_mi(row_marginals, col_marginals):
    """Average MI over all distinct arrangements of one labeling (equivalent
    to the expectation over all n! permutations)."""
    n = sum(row_marginals)
    a_labels = tuple(i for i, c in enumerate(row_marginals) for _ in range(c))
    b_labels = tuple(j for j, c in enumerate(col_marginals) for _ in range(c))
    total, count = 0.0, 0
    for arrangement in set(itertools.permutations(b_labels)):
        table = np.zeros((len(row_marginals), len(col_marginals)))
        for i, j in zip(a_labels, arrangement):
            table[i, j] += 1
        mi = 0.0
        for i, ai in enumerate(row_marginals):
            for j, bj in enumerate(col_marginals):
                nij = table[i, j]
                if nij:
                    mi += (nij / n) * log(n * nij / (ai * bj))
        total += mi
        count += 1
    return total / count


def _partitions(n, max_parts):
    def rec(remaining, max_val, parts):
        if remaining == 0:
            yield tuple(parts)
            return
        if len(parts) == max_parts:
            return
        for v in range(min(remaining, max_val), 0, -1):
            parts.append(v)
            yield from rec(remaining - v, v, parts)
            parts.pop()
    yield from rec(n, n, [])


def _table_with_marginals(row, col):
    row, col = list(row), list(col)
    t = np.zeros((len(row), len(col)), dtype=np.int64)
    i = j = 0
    while i < len(row) and j < len(col):
        v = min(row[i], col[j])
        t[i, j] = v
        row[i] -= v
        col[j] -= v
        if row[i] == 0:
            i += 1
        if j < len(col) and col[j] == 0:
            j += 1
    return t


def test_criterion_3_ami_oracle(capsys):
    t0 = time.perf_counter()
    checks = []

    # closed-form E[MI] vs exhaustive permutation enumeration for every
    # marginal shape with n <= 8 and <= 3 clusters per side (E[MI] depends
    # only on the marginals)
    max_err = 0.0
    for n in range(2, 9):
        for row in _partitions(n, 3):
            for col in _partitions(n, 3):
                closed = expected_mutual_information(
                    _table_with_marginals(row, col))
                oracle = _enumerated_expected_mi(row, col)
                max_err = max(max_err, abs(closed - oracle))
    checks.append(max_err <= 1e-9)

    # identical partitions
    labels = np.array([0, 0, 1, 1, 2, 2, 2, 3])
    checks.append(ami(labels, labels) == 1.0)

    # random labelings near zero at n = 1000 over 100 shuffles
    rng = np.random.default_rng(0)
    base = np.repeat(np.arange(4), 250)
    worst = max(abs(ami(base, rng.permutation(base))) for _ in range(100))
    checks.append(worst <= 0.05)

    elapsed = time.perf_counter() - t0
    _report(capsys, 3, "AMI oracle equivalence",
            all(checks) and elapsed < 30.0, elapsed,
            f"max EMI err {max_err:.2e}, max |AMI(random)| {worst:.4f}")


def _fd_gradient(net, x, y, eps=1e-6):
    out = []
    for name in ("w1", "b1", "w2", "b2"):
        p = net.params()[name]
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + eps
            lp = net.loss_and_grad(x, y)[0]
            p[idx] = orig - eps
            lm = net.loss_and_grad(x, y)[0]
            p[idx] = orig
            g[idx] = (lp - lm) / (2 * eps)
            it.iternext()
        out.append(g.ravel())
    return np.concatenate(out)


def test_criterion_4_gradient_check(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    checked = 0
    attempts = 0
    while checked < 100 and attempts < 1000:
        attempts += 1
        net = CountModel.init(n_in=6, hidden=5,
                              seed=int(rng.integers(1 << 30)))
        x = rng.normal(size=(4, 6))
        y = rng.normal(size=4)
        # central differences are ill-posed right at the ReLU kink
        if np.any(np.abs(x @ net.w1 + net.b1) < 1e-4):
            continue
        _, grads = net.loss_and_grad(x, y)
        analytic = np.concatenate([grads[k].ravel()
                                   for k in ("w1", "b1", "w2", "b2")])
        fd = _fd_gradient(net, x, y)
        rel = np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-12)
        worst = max(worst, rel)
        checked += 1
    elapsed = time.perf_counter() - t0
    _report(capsys, 4, "gradient check",
            checked == 100 and worst <= 1e-4 and elapsed < 10.0, elapsed,
            f"max rel err {worst:.2e} over {checked} draws")


def test_criterion_5_augmentation_properties(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    checks = []

    for trial in range(10):
        cube = make_cube(rng.normal(0.5, 0.2, size=(60, 12, 91)))
        for axis in ("azimuth", "range", "both"):
            twice = flip(flip(cube, axis), axis)
            checks.append(np.array_equal(twice.amplitudes, cube.amplitudes))
        out = drop_and_interpolate(cube, seed=trial)
        orig = np.asarray(cube.amplitudes, dtype=np.float64)
        for t in out.meta.augment[1]:
            expected = (0.5 * (orig[t - 1] + orig[t + 1])).astype(np.float32)
            checks.append(np.array_equal(out.amplitudes[t], expected))

    small = make_cube(rng.normal(0.5, 0.2, size=(5, 3, 3)))
    factors = [random_scale(small, seed).meta.augment[1]
               for seed in range(500)]
    checks.append(all(0.95 <= k <= 1.05 for k in factors))

    elapsed = time.perf_counter() - t0
    _report(capsys, 5, "augmentation properties",
            all(checks) and elapsed < 5.0, elapsed)


def _std_features(cubes):
    return np.stack([std_map(c).values.ravel() for c in cubes])


def test_criterion_6_separability_directions(capsys):
    t0 = time.perf_counter()
    per_seed = {"before_p": [], "before_l": [], "sig_p": [], "sig_l": [],
                "bp_p": []}
    for seed in range(5):
        ds_a, _, _ = make_environment_suite(seed, 100, n_per_class_c=1)
        cubes = [clip_and_normalize(c)[0] for c in ds_a.cubes]
        person = np.array([c.meta.label for c in cubes])
        layout = np.array([c.meta.environment for c in cubes])
        raw = _std_features(cubes)
        sig = _std_features([apply_method(c, "sigmoid_weight")
                             for c in cubes])
        bp = _std_features([apply_method(c, "butterworth_bandpass")
                            for c in cubes])
        per_seed["before_p"].append(fisher_score(raw, person))
        per_seed["before_l"].append(fisher_score(raw, layout))
        per_seed["sig_p"].append(fisher_score(sig, person))
        per_seed["sig_l"].append(fisher_score(sig, layout))
        per_seed["bp_p"].append(fisher_score(bp, person))
    med = {k: float(np.median(v)) for k, v in per_seed.items()}
    checks = [
        med["sig_p"] > med["before_p"],     # person separability up
        med["sig_l"] < med["before_l"],     # layout separability down
        med["bp_p"] <= 0.10 * med["before_p"],  # band-pass drops >= 90%
    ]
    elapsed = time.perf_counter() - t0
    _report(capsys, 6, "separability directions (sigmoid up/down, band-pass collapse)",
            all(checks) and elapsed < 300.0, elapsed,
            f"person {med['before_p']:.4f}->{med['sig_p']:.4f}, "
            f"layout {med['before_l']:.4f}->{med['sig_l']:.4f}, "
            f"band-pass person {med['bp_p']:.4f}")


@pytest.fixture(scope="module")
def full_config():
    return ExperimentConfig(n_per_class=250, seeds=(0, 1, 2, 3, 4))


def test_criterion_7_cross_environment_rmse(capsys, tmp_path, full_config):
    t0 = time.perf_counter()
    result = run_preprocess_study(full_config, tmp_path / "prep")
    med = result["performance"]
    base = med["none"]["rmse_b"]
    sig_gain = improvement_pct(base, med["sigmoid_weight"]["rmse_b"])
    checks = [
        sig_gain >= 20.0,
        med["butterworth_bandpass"]["rmse_b"] >= base,
        med["two_stage_highpass"]["rmse_b"] >= base,
    ]
    elapsed = time.perf_counter() - t0
    _report(capsys, 7, "cross-environment RMSE (sigmoid >=20% below baseline)",
            all(checks) and elapsed < 600.0, elapsed,
            f"sigmoid improvement {sig_gain:.1f}%, baseline {base:.4f}, "
            f"band-pass {med['butterworth_bandpass']['rmse_b']:.4f}, "
            f"two-stage {med['two_stage_highpass']['rmse_b']:.4f}")


def test_criterion_8_transfer_monotone(capsys, tmp_path, full_config):
    t0 = time.perf_counter()
    result = run_transfer_study(full_config, tmp_path / "transfer")
    med = result["medians"]
    sizes = full_config.transfer_sizes
    series = [med["no_transfer"]] + [med[s] for s in sizes]
    reduction = improvement_pct(med["no_transfer"], med[sizes[-1]])
    checks = [
        all(b < a for a, b in zip(series, series[1:])),  # monotone medians
        reduction >= 50.0,
        not result["warnings"],
    ]
    elapsed = time.perf_counter() - t0
    _report(capsys, 8, "transfer learning monotone improvement",
            all(checks) and elapsed < 600.0, elapsed,
            "medians " + " -> ".join(f"{v:.3f}" for v in series)
            + f", reduction {reduction:.1f}%")


def test_criterion_9_improvement_arithmetic(capsys):
    t0 = time.perf_counter()
    checks = [
        f"{improvement_pct(1.2474, 0.6219):.1f}" == "50.1",
        f"{improvement_pct(0.8678, 0.3888):.1f}" == "55.2",
    ]
    elapsed = time.perf_counter() - t0
    _report(capsys, 9, "improvement-rate arithmetic",
            all(checks) and elapsed < 1.0, elapsed,
            f"{improvement_pct(1.2474, 0.6219):.4f}%, "
            f"{improvement_pct(0.8678, 0.3888):.4f}%")


def test_criterion_10_study_determinism(capsys, tmp_path):
    t0 = time.perf_counter()
    cfg = {"n_per_class": 8, "seeds": [0], "n_per_class_c": 8,
           "max_epochs": 8, "patience": 4, "transfer_sizes": [4, 8],
           "kmeans_restarts": 2}
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    outputs = {"study-preprocess": ("performance.csv", "separability.csv"),
               "study-augment": ("augmentation.csv",),
               "study-transfer": ("transfer.csv",)}
    ok = True
    for command, files in outputs.items():
        runs = []
        for tag in ("run1", "run2"):
            out = tmp_path / command / tag
            assert main([command, "--config", str(cfg_path),
                         "--out", str(out)]) == EXIT_OK
            runs.append(out)
        for name in files:
            a = (runs[0] / name).read_bytes()
            b = (runs[1] / name).read_bytes()
            ok = ok and a == b
    elapsed = time.perf_counter() - t0
    _report(capsys, 10, "study CSV determinism (byte-identical reruns)",
            ok, elapsed)
