"""Quadratic a-variations and the moment estimator of the local scale ``C``.

Given observations ``X(j delta)``, ``j = 1..n``, and a variation sequence
``a`` of length ``L``, the quadratic a-variation is::

    V_{a,n} = sum_{i=1}^{n'} (sum_j a_j X((i + j) delta))^2,   n' = n - L + 1

and the estimator divides it by its leading-order expectation,
``N (-1)^D delta^{2D+s} R(0, 1, 2D, |.|^s, a^{2*})``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg, stats

from .calculus import remainder_power, series_R2
from .models import ModelSpec
from .seqalg import Filter, VariationSequence, convolve, order, self_convolve, validate_clt
from .simulate import PathSample, covariance_matrix

DENOMINATOR_MODES = ("paper-n", "unbiased-nprime")
EIGEN_RATIO_MIN = 1e-10
MAX_EXACT_N = 5000


def filtered_values(values, a: Filter) -> np.ndarray:
    """``Delta_{a,i} X = sum_j a_j X_{i+j}`` along the last axis (``n'`` entries)."""
    x = np.asarray(values, dtype=float)
    n = x.shape[-1]
    L = len(a)
    if n < L:
        raise ValueError(f"path has {n} points but the sequence has length {L}")
    m = n - L + 1
    out = np.zeros(x.shape[:-1] + (m,))
    for j, aj in enumerate(a.coefficients):
        out += aj * x[..., j:j + m]
    return out


def quadratic_variation(path: PathSample | np.ndarray, a: VariationSequence) -> float | np.ndarray:
    """``V_{a,n}``; a 2-D array gives one value per row."""
    values = path.values if isinstance(path, PathSample) else path
    f = filtered_values(values, a)
    return np.sum(f * f, axis=-1) if f.ndim > 1 else float(np.sum(f * f))


def power_moment(b: Filter, D: int, s: float) -> float:
    """``R(0, 1, 2D, |.|^s, b)``, which is ``(-1)^D``-positive for ``b = a^{2*}`` when ``M(a) > D``."""
    return float(remainder_power(0, D, s, b))


def estimator_denominator(a: VariationSequence, n: int, delta: float, D: int, s: float,
                          mode: str = "paper-n") -> float:
    """``N (-1)^D delta^{2D+s} R(0, 1, 2D, |.|^s, a^{2*})``."""
    if mode not in DENOMINATOR_MODES:
        raise ValueError(f"denominator mode must be one of {DENOMINATOR_MODES}, got {mode!r}")
    if not 0.0 < s < 2.0:
        raise ValueError("s must lie in (0, 2)")
    if order(a) <= D:
        raise ValueError(f"sequence order {order(a)} must exceed D={D}")
    N = n if mode == "paper-n" else n - len(a) + 1
    r0 = (-1) ** D * power_moment(self_convolve(a), D, s)
    # Positive whenever M(a) > D; a failure here is a bug, not a user error.
    assert r0 > 0.0, "sign property violated"
    return float(N) * float(delta) ** (2 * D + s) * r0


@lru_cache(maxsize=1024)
def _cross_series(b: Filter, D: int, s: float) -> float:
    return series_R2(b, D, s).value


def normalized_asymptotic_variance(a: VariationSequence, D: int, s: float) -> float:
    """``v~_{a,s} = 2 sum_i R(i)^2 / R(0)^2`` for ``b = a^{2*}``.

    Raises :class:`~qvar.calculus.DivergenceError` when ``M(a) <= D + s/2 + 1/4``:
    the variance of the estimator then decays slower than ``1/n``.
    """
    b = self_convolve(a)
    return 2.0 * _cross_series(b, int(D), float(s)) / power_moment(b, D, s) ** 2


def asymptotic_R_matrix(sequences, D: int, s: float) -> np.ndarray:
    """Normalized asymptotic covariance of ``sqrt(n)/C * C_{a^(j), n}``, ``j = 1..k``."""
    seqs = list(sequences)
    if not seqs:
        raise ValueError("need at least one sequence")
    r0 = [power_moment(self_convolve(a), D, s) for a in seqs]
    k = len(seqs)
    R = np.empty((k, k))
    for j in range(k):
        for l in range(j, k):
            b = self_convolve(seqs[j]) if j == l else convolve(seqs[j], seqs[l])
            R[j, l] = R[l, j] = 2.0 * _cross_series(b, int(D), float(s)) / (r0[j] * r0[l])
    return R


def aggregate(R) -> tuple[np.ndarray, float]:
    """Minimum-variance unit-sum weights ``R^{-1} 1 / (1' R^{-1} 1)`` and the attained variance."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape[0] != R.shape[1] or not np.allclose(R, R.T, rtol=1e-12, atol=0.0):
        raise ValueError("R must be a symmetric square matrix")
    eig = np.linalg.eigvalsh(R)
    if eig[0] <= EIGEN_RATIO_MIN * eig[-1]:
        raise ValueError(
            f"R is singular or indefinite (eigenvalue ratio {eig[0] / eig[-1]:.3g}); "
            "sequences are (nearly) redundant, drop one of them"
        )
    x = linalg.cho_solve(linalg.cho_factor(R, lower=True), np.ones(R.shape[0]))
    total = float(np.sum(x))
    return x / total, 1.0 / total


def independent_subset(R, ratio: float = EIGEN_RATIO_MIN) -> list[int]:
    """Indices kept by a greedy scan that skips any entry making ``R`` near-singular.

    Asymptotically each ``V_{a,n}`` is a linear combination of the lag-k
    empirical variograms ``k < L(a)``, further constrained by the vanishing
    moments of ``a^{2*}``; short sequences therefore often span fewer
    dimensions than there are sequences.  A dropped entry is a combination of
    the kept ones, so the optimal aggregated variance is unchanged.
    """
    R = np.asarray(R, dtype=float)
    kept: list[int] = []
    for j in range(R.shape[0]):
        trial = kept + [j]
        eig = np.linalg.eigvalsh(R[np.ix_(trial, trial)])
        if eig[0] > ratio * eig[-1]:
            kept = trial
    return kept


@dataclass(frozen=True)
class AggregationPlan:
    """Weights over ``sequences``; dropped (redundant) sequences get weight 0."""

    sequences: tuple
    R: np.ndarray
    weights: np.ndarray
    vtilde_agg: float
    dropped: tuple = ()


def plan_aggregation(sequences, D: int, s: float, reduce: bool = True) -> AggregationPlan:
    """Validate, build ``R`` and solve for the optimal weights.

    Identical sequences are always rejected.  With ``reduce``, sequences that are
    asymptotically redundant with earlier ones are dropped (listed in ``dropped``);
    otherwise a singular ``R`` raises.
    """
    seqs = tuple(sequences)
    for a in seqs:
        ok, msg = validate_clt(a, D, s)
        if not ok:
            raise ValueError(f"sequence {a.label}: {msg}")
    if len(set(seqs)) != len(seqs):
        raise ValueError("duplicate sequences give a singular R matrix; drop the repeated sequence")
    R = asymptotic_R_matrix(seqs, D, s)
    kept = independent_subset(R) if reduce else list(range(len(seqs)))
    lam_kept, v = aggregate(R[np.ix_(kept, kept)])
    lam = np.zeros(len(seqs))
    lam[kept] = lam_kept
    dropped = tuple(seqs[j].label for j in range(len(seqs)) if j not in kept)
    return AggregationPlan(seqs, R, lam, v, dropped)


@dataclass
class EstimateReport:
    """Outcome of one estimation; ``std_error = C_hat * sqrt(vtilde / n)``."""

    C_hat: float
    V_an: float
    n: int
    n_prime: int
    denominator_mode: str
    vtilde: float
    std_error: float
    ci: tuple
    level: float
    validity: bool
    message: str
    sequence: str
    D: int
    s: float
    delta: float
    weights: tuple | None = None
    vtilde_agg: float | None = None
    components: tuple | None = None
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def clean(x):
            if isinstance(x, (float, np.floating)):
                return None if not math.isfinite(x) else float(x)
            if isinstance(x, (tuple, list, np.ndarray)):
                return [clean(v) for v in x]
            if isinstance(x, np.integer):
                return int(x)
            return x

        return {k: clean(v) for k, v in self.__dict__.items()}

    CSV_FIELDS = ("sequence", "D", "s", "n", "n_prime", "delta", "denominator_mode", "C_hat",
                  "V_an", "vtilde", "std_error", "ci_lo", "ci_hi", "level", "validity")

    def csv_row(self) -> str:
        vals = dict(self.__dict__, ci_lo=self.ci[0], ci_hi=self.ci[1])
        return ",".join(format_value(vals[k]) for k in self.CSV_FIELDS)


def format_value(x) -> str:
    """Round-trip text for CSV cells (17 significant digits for floats)."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    s = str(x)
    return f'"{s}"' if "," in s else s


def _interval(C_hat: float, v: float, n: int, level: float) -> tuple[float, tuple]:
    if not (0.0 < level < 1.0):
        raise ValueError("level must lie in (0, 1)")
    se = C_hat * math.sqrt(v / n) if math.isfinite(v) else math.nan
    z = float(stats.norm.ppf(0.5 + level / 2.0))
    return se, (C_hat - z * se, C_hat + z * se)


def estimate_C(path: PathSample, a: VariationSequence, D: int, s: float,
               denominator_mode: str = "paper-n", level: float = 0.95) -> EstimateReport:
    """Estimate ``C`` from one path; an invalid ``(a, D, s)`` is flagged, not rejected."""
    ok, msg = validate_clt(a, D, s)
    V = quadratic_variation(path, a)
    denom = estimator_denominator(a, path.n, path.delta, D, s, denominator_mode)
    C_hat = V / denom
    vt = normalized_asymptotic_variance(a, D, s) if ok else math.nan
    se, ci = _interval(C_hat, vt, path.n, level)
    return EstimateReport(
        C_hat=C_hat, V_an=V, n=path.n, n_prime=path.n - len(a) + 1,
        denominator_mode=denominator_mode, vtilde=vt, std_error=se, ci=ci, level=level,
        validity=ok, message=msg, sequence=a.label, D=int(D), s=float(s), delta=path.delta,
        warnings=[] if ok else [msg],
    )


def estimate_C_aggregated(path: PathSample, sequences, D: int, s: float,
                          denominator_mode: str = "paper-n", level: float = 0.95,
                          reduce: bool = True) -> EstimateReport:
    """``sum_j lambda*_j C_{a^(j), n}`` with asymptotically optimal weights."""
    seqs = list(sequences)
    if len(seqs) == 1:
        return estimate_C(path, seqs[0], D, s, denominator_mode, level)
    plan = plan_aggregation(seqs, D, s, reduce=reduce)
    parts = [estimate_C(path, a, D, s, denominator_mode, level) for a in seqs]
    C_hat = float(np.dot(plan.weights, [p.C_hat for p in parts]))
    se, ci = _interval(C_hat, plan.vtilde_agg, path.n, level)
    return EstimateReport(
        C_hat=C_hat, V_an=math.nan, n=path.n, n_prime=min(p.n_prime for p in parts),
        denominator_mode=denominator_mode, vtilde=plan.vtilde_agg, std_error=se, ci=ci,
        level=level, validity=True, message="aggregated estimator",
        sequence="+".join(a.label for a in seqs), D=int(D), s=float(s), delta=path.delta,
        weights=tuple(float(w) for w in plan.weights), vtilde_agg=plan.vtilde_agg,
        components=tuple(p.C_hat for p in parts),
        warnings=[f"dropped redundant sequences: {', '.join(plan.dropped)}"] if plan.dropped else [],
    )


def aggregated_estimates(X: np.ndarray, delta: float, plan: AggregationPlan, D: int, s: float,
                         denominator_mode: str = "paper-n") -> np.ndarray:
    """Aggregated estimates for every row of ``X`` (Monte Carlo helper)."""
    n = X.shape[-1]
    cols = [quadratic_variation(X, a) / estimator_denominator(a, n, delta, D, s, denominator_mode)
            for a in plan.sequences]
    return np.stack(cols, axis=-1) @ plan.weights


def _filtered_covariance(model: ModelSpec, a: VariationSequence, n: int, delta: float) -> np.ndarray:
    n = int(n)
    if n > MAX_EXACT_N:
        raise ValueError(f"n={n} exceeds the exact-moment guard ({MAX_EXACT_N})")
    L = len(a)
    if n < L:
        raise ValueError("n must be at least the sequence length")
    K = covariance_matrix(model, delta * np.arange(1, n + 1))
    m = n - L + 1
    S = np.zeros((m, m))
    c = a.coefficients
    for j in range(L):
        for l in range(L):
            S += c[j] * c[l] * K[j:j + m, l:l + m]
    return S


def exact_variation_moments(model: ModelSpec, a: VariationSequence, n: int,
                            delta: float) -> tuple[float, float]:
    """Exact ``(E[V_{a,n}], Var[V_{a,n}])`` for a centered Gaussian path.

    With ``S`` the covariance of the filtered vector, ``E = tr S`` and, by
    the Gaussian identity ``Cov(X^2, Y^2) = 2 Cov(X, Y)^2``, ``Var = 2 sum S^2``.
    """
    S = _filtered_covariance(model, a, n, delta)
    return float(np.trace(S)), float(2.0 * np.sum(S * S))


def exact_variation_shape(model: ModelSpec, a: VariationSequence, n: int,
                          delta: float) -> tuple[float, float]:
    """Exact skewness and excess kurtosis of ``V_{a,n}`` (hence of ``C_hat``).

    ``V`` is a Gaussian quadratic form, so its cumulants are
    ``k_r = 2^{r-1} (r-1)! tr S^r``, computed from the eigenvalues of ``S``.
    """
    lam = np.linalg.eigvalsh(_filtered_covariance(model, a, n, delta))
    k2, k3, k4 = 2.0 * np.sum(lam**2), 8.0 * np.sum(lam**3), 48.0 * np.sum(lam**4)
    return float(k3 / k2**1.5), float(k4 / k2**2)
