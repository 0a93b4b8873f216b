"""Support-recovery benchmark harness.

Sweeps each estimator over a geometric regularization grid anchored at its
own critical penalty, records (FPR, TPR) per grid point against the true
support, and aggregates trapezoidal AUC over the observed FPR range.  Grid
points are warm-started from the previous (larger-lambda) solution; distinct
estimators and seeds are independent and may run on a thread pool capped by
the ``CLAR_THREADS`` environment variable (sequential by default).
"""

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import InvalidInput, NumericalFailure
from .model import Coefficients, _beta_array
from .simulate import SimInstance, generate
from .solvers import EstimatorKind, lambda_max_for, solve


@dataclass(frozen=True)
class GridSpec:
    """Geometric grid description.

    The top point is always each estimator's own critical penalty.  By
    default the bottom point is ``lambda_max * lambda_min_ratio``; in
    adaptive mode the sweep instead stops at the first grid point whose
    false-positive rate exceeds ``fpr_target``.
    """

    n_points: int = 160
    lambda_min_ratio: float = 1e-3
    fpr_target: float = 0.4
    adaptive: bool = False

    def __post_init__(self):
        if int(self.n_points) < 2:
            raise InvalidInput(f"n_points must be >= 2, "
                               f"got {self.n_points}")
        if not 0.0 < self.lambda_min_ratio < 1.0:
            raise InvalidInput(f"lambda_min_ratio must lie in (0, 1), "
                               f"got {self.lambda_min_ratio}")
        if not 0.0 < self.fpr_target <= 1.0:
            raise InvalidInput(f"fpr_target must lie in (0, 1], "
                               f"got {self.fpr_target}")


@dataclass(frozen=True)
class RocCurve:
    """ROC path: (fpr, tpr, lambda) triples with lambda strictly decreasing,
    and the trapezoidal AUC over the observed FPR range (normalized by that
    range; 0.0 when the range is degenerate)."""

    points: tuple
    auc: float

    def __post_init__(self):
        lams = [lam for _, _, lam in self.points]
        if any(b >= a for a, b in zip(lams, lams[1:])):
            raise InvalidInput("grid must be strictly decreasing in lambda")
        for fpr, tpr, _ in self.points:
            if not (0.0 <= fpr <= 1.0 and 0.0 <= tpr <= 1.0):
                raise InvalidInput(f"rates must lie in [0, 1], "
                                   f"got ({fpr}, {tpr})")


@dataclass(frozen=True)
class EstimatorReport:
    """One estimator's sweep on one instance: curve, timing, failures."""

    estimator: EstimatorKind
    curve: RocCurve
    wall_time: float
    failures: tuple


def support_metrics(estimated, truth):
    """True/false positive rates of the estimated support.

    tpr = |est ∩ true| / |true| and fpr = |est \\ true| / (p - |true|).  An
    empty true support defines tpr = 1 for an empty estimate and is an error
    otherwise (no true rows to recover).
    """
    est = estimated if isinstance(estimated, Coefficients) \
        else Coefficients(_beta_array(estimated))
    tru = truth if isinstance(truth, Coefficients) \
        else Coefficients(_beta_array(truth))
    if est.p != tru.p:
        raise InvalidInput(f"row-count mismatch: estimated p={est.p}, "
                           f"truth p={tru.p}")
    s_est, s_tru = est.support, tru.support
    if not s_tru:
        if s_est:
            raise InvalidInput("true support is empty but the estimate is "
                               "not; TPR undefined")
        return 1.0, 0.0
    tpr = len(s_est & s_tru) / len(s_tru)
    n_negative = tru.p - len(s_tru)
    fpr = len(s_est - s_tru) / n_negative if n_negative > 0 else 0.0
    return tpr, fpr


def _auc_over_observed_range(points):
    """Trapezoidal area under (fpr, tpr) normalized by the FPR span."""
    if len(points) < 2:
        return 0.0
    fpr = np.array([pt[0] for pt in points])
    tpr = np.array([pt[1] for pt in points])
    order = np.argsort(fpr, kind="stable")
    fpr, tpr = fpr[order], tpr[order]
    span = float(fpr[-1] - fpr[0])
    if span <= 0.0:
        return 0.0
    area = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1])) / 2.0)
    return area / span


def lambda_grid(lam_max, grid):
    """Geometric grid of grid.n_points from lam_max down to
    lam_max * grid.lambda_min_ratio."""
    if not lam_max > 0:
        raise InvalidInput(f"lambda_max must be positive, got {lam_max}")
    k = int(grid.n_points)
    exponents = np.linspace(0.0, 1.0, k)
    return lam_max * grid.lambda_min_ratio ** exponents


def roc_sweep(instance, estimator, grid, config, failures=None):
    """One warm-started sweep of ``estimator`` down its grid.

    Solves once per grid point, warm-starting the coefficients from the
    previous point (noise re-estimated from scratch at each point, so convex
    per-point optima are certificate-guaranteed regardless of the start).
    Points whose solve raises NumericalFailure are skipped and recorded in
    the optional ``failures`` list as (lambda, message).
    """
    if isinstance(estimator, str):
        estimator = EstimatorKind(estimator)
    if not isinstance(instance, SimInstance):
        raise InvalidInput("instance must be a SimInstance")
    lam_max = lambda_max_for(estimator, instance.obs, instance.x,
                             sigma_min=config.sigma_min)
    lams = lambda_grid(lam_max, grid)
    points = []
    warm = None
    for lam in lams:
        point_config = replace(config, lam=float(lam))
        try:
            result = solve(estimator, instance.obs, instance.x, point_config,
                           beta0=warm)
        except NumericalFailure as exc:
            if failures is not None:
                failures.append((float(lam), str(exc)))
            continue
        warm = result.beta.beta
        tpr, fpr = support_metrics(result.beta, instance.beta_star)
        points.append((fpr, tpr, float(lam)))
        if grid.adaptive and fpr > grid.fpr_target:
            break
    return RocCurve(points=tuple(points),
                    auc=_auc_over_observed_range(points))


def _worker_cap():
    """Thread cap from CLAR_THREADS (>= 1; unset or invalid means 1)."""
    raw = os.environ.get("CLAR_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def compare_estimators(instance, estimators, grid, config):
    """Sweep every requested estimator on one instance.

    Returns one EstimatorReport per estimator, in input order.  Estimators
    run on a thread pool when CLAR_THREADS > 1; reports are ordered by input
    position, so results do not depend on scheduling.
    """
    kinds = [EstimatorKind(e) if isinstance(e, str) else e
             for e in estimators]

    def _run(kind):
        failures = []
        start = time.perf_counter()
        curve = roc_sweep(instance, kind, grid, config, failures=failures)
        return EstimatorReport(estimator=kind, curve=curve,
                               wall_time=time.perf_counter() - start,
                               failures=tuple(failures))

    cap = min(_worker_cap(), len(kinds)) if kinds else 1
    if cap > 1:
        with ThreadPoolExecutor(max_workers=cap) as pool:
            return list(pool.map(_run, kinds))
    return [_run(kind) for kind in kinds]


def median_auc_over_seeds(sim_config, estimator, grid, config, n_seeds=10):
    """Median AUC of one estimator across reseeded instances.

    Instance k uses seed ``sim_config.seed + k``; sweeps run on the thread
    pool when CLAR_THREADS > 1.
    """
    if int(n_seeds) < 1:
        raise InvalidInput(f"n_seeds must be >= 1, got {n_seeds}")

    def _one(k):
        instance = generate(replace(sim_config, seed=sim_config.seed + k))
        return roc_sweep(instance, estimator, grid, config).auc

    seeds = range(int(n_seeds))
    cap = min(_worker_cap(), int(n_seeds))
    if cap > 1:
        with ThreadPoolExecutor(max_workers=cap) as pool:
            aucs = list(pool.map(_one, seeds))
    else:
        aucs = [_one(k) for k in seeds]
    return float(np.median(aucs))
