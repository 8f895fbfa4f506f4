"""Evaluation metrics: RMSE/MAE regression reports, Fisher Score, k-means
clustering, and adjusted mutual information with the chance-expected MI
computed under the permutation (hypergeometric) model."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import lgamma, log

import numpy as np

from .core import Dataset
from .preprocess import apply_method, std_map


@dataclass(frozen=True)
class RegressionReport:
    rmse: float
    mae: float
    n: int
    per_class_mae: dict


def rmse_mae(preds, labels) -> RegressionReport:
    """Root-mean-square and mean absolute error of raw predictions."""
    p = np.asarray(preds, dtype=float)
    y = np.asarray(labels, dtype=float)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise ValueError("need at least one prediction")
    resid = p - y
    per_class = {
        int(c): float(np.mean(np.abs(resid[y == c]))) for c in np.unique(y)
    }
    return RegressionReport(
        rmse=float(np.sqrt(np.mean(resid ** 2))),
        mae=float(np.mean(np.abs(resid))),
        n=int(p.size),
        per_class_mae=per_class,
    )


def fisher_score(features, labels, return_details: bool = False):
    """Mean over features of between-class scatter / within-class scatter.

    Per feature i: F_i = sum_j n_j (mu_ji - mu_i)^2 / sum_j n_j var_ji with
    population variances.  Features whose within-class scatter is below
    1e-12 are skipped (and reported when `return_details`).
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("need at least 2 classes")
    for c in classes:
        if np.sum(y == c) < 2:
            raise ValueError(f"class {c!r} has fewer than 2 samples")
    mu = x.mean(axis=0)
    num = np.zeros(x.shape[1])
    den = np.zeros(x.shape[1])
    for c in classes:
        xc = x[y == c]
        nj = len(xc)
        num += nj * (xc.mean(axis=0) - mu) ** 2
        den += nj * xc.var(axis=0, ddof=0)
    keep = den >= 1e-12
    scores = num[keep] / den[keep]
    value = float(scores.mean()) if keep.any() else 0.0
    if return_details:
        return value, {"skipped": np.flatnonzero(~keep).tolist(),
                       "per_feature": scores}
    return value


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    n_effective: int  # < k when fewer distinct points than clusters


def _kmeans_once(x: np.ndarray, k: int, rng) -> KMeansResult:
    n = len(x)
    # greedy probabilistic seeding: D^2-weighted draws
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = x[rng.integers(n)]
        else:
            centers[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))
    labels = None
    for _it in range(300):
        dists = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(dists, axis=1)  # ties -> lowest index
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = x[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    dists = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    inertia = float(dists[np.arange(n), labels].sum())
    return KMeansResult(labels=labels, centers=centers, inertia=inertia,
                        n_effective=len(np.unique(labels)))


def kmeans(features, k: int, restarts: int = 8, seed: int = 0) -> KMeansResult:
    """Best-inertia Lloyd run over `restarts` seeded initializations.

    Deterministic for a fixed seed; inertia ties resolve to the earliest
    restart.
    """
    x = np.asarray(features, dtype=np.float64)
    if len(x) < k:
        raise ValueError(f"need at least k={k} samples, got {len(x)}")
    best = None
    for r in range(restarts):
        rng = np.random.default_rng((seed, r))
        res = _kmeans_once(x, k, rng)
        if best is None or res.inertia < best.inertia:
            best = res
    return best


def _contingency(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise ValueError("need at least 2 samples")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _entropy(counts: np.ndarray) -> float:
    n = counts.sum()
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def mutual_information(table: np.ndarray) -> float:
    """MI in nats between the two partitions of a contingency table."""
    n = table.sum()
    a = table.sum(axis=1)
    b = table.sum(axis=0)
    mi = 0.0
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            nij = table[i, j]
            if nij:
                mi += (nij / n) * log(n * nij / (a[i] * b[j]))
    return mi


def expected_mutual_information(table: np.ndarray) -> float:
    """E[MI] under the permutation model with fixed marginals.

    Closed-form hypergeometric sum over all feasible cell counts, evaluated
    with log-gamma for stability.
    """
    n = int(table.sum())
    a = table.sum(axis=1).astype(int)
    b = table.sum(axis=0).astype(int)
    lg = lgamma
    log_const = lg(n + 1)
    emi = 0.0
    for ai in a:
        for bj in b:
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            for nij in range(lo, hi + 1):
                log_p = (
                    lg(ai + 1) + lg(bj + 1) + lg(n - ai + 1) + lg(n - bj + 1)
                    - log_const - lg(nij + 1) - lg(ai - nij + 1)
                    - lg(bj - nij + 1) - lg(n - ai - bj + nij + 1)
                )
                emi += (nij / n) * log(n * nij / (ai * bj)) * np.exp(log_p)
    return emi


def ami(a, b) -> float:
    """Adjusted mutual information (natural log), max-normalized.

    Identical partitions (up to relabeling) return exactly 1.0; two
    single-cluster partitions are defined as 1.0.
    """
    table = _contingency(a, b)
    row_marg = table.sum(axis=1)
    col_marg = table.sum(axis=0)
    # perfect match: exactly one non-zero cell per row and per column
    if (table.shape[0] == table.shape[1]
            and np.all((table > 0).sum(axis=0) == 1)
            and np.all((table > 0).sum(axis=1) == 1)):
        return 1.0
    h_a = _entropy(row_marg)
    h_b = _entropy(col_marg)
    if h_a == 0.0 and h_b == 0.0:
        return 1.0  # both single-cluster
    mi = mutual_information(table)
    emi = expected_mutual_information(table)
    denom = max(h_a, h_b) - emi
    if abs(denom) < 1e-15:
        return 0.0
    return (mi - emi) / denom


@dataclass(frozen=True)
class SeparabilityReport:
    labeling: str
    ami_before: float
    ami_after: float
    fisher_before: float
    fisher_after: float


def _std_map_features(cubes) -> np.ndarray:
    return np.stack([std_map(c).values.ravel() for c in cubes])


def separability_suite(ds: Dataset, method: str, seed: int = 0,
                       restarts: int = 4, **method_kwargs):
    """Before/after clustering separability under one preprocessing method.

    Features are flattened per-cube std maps.  Returns one report per
    labeling scheme: person count and layout type (the synthetic
    environment name).
    """
    person = np.array([c.meta.label for c in ds.cubes])
    layout = np.array([c.meta.environment for c in ds.cubes])
    if len(np.unique(layout)) < 2:
        raise ValueError("dataset must span at least 2 layouts")
    before = _std_map_features(ds.cubes)
    if method == "none":
        after = before
    else:
        after = _std_map_features(
            [apply_method(c, method, **method_kwargs) for c in ds.cubes])
    reports = []
    for name, labels in (("person_count", person), ("layout_type", layout)):
        k = len(np.unique(labels))
        reports.append(SeparabilityReport(
            labeling=name,
            ami_before=ami(kmeans(before, k, restarts, seed).labels, labels),
            ami_after=ami(kmeans(after, k, restarts, seed).labels, labels),
            fisher_before=fisher_score(before, labels),
            fisher_after=fisher_score(after, labels),
        ))
    return tuple(reports)


def improvement_pct(baseline: float, value: float) -> float:
    """Error-reduction percentage relative to a baseline: (1 - v/b) * 100."""
    if baseline == 0:
        raise ValueError("baseline must be non-zero")
    return (1.0 - value / baseline) * 100.0
