"""Monte Carlo and asymptotic-variance studies, emitted as CSV tables.

Every table is a :class:`Table`: ``#`` comment lines documenting the columns,
a header row, then data rows.  Floats use 17 significant digits so a table
can be re-read without loss, and identical configurations give identical bytes.
"""
from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .estimator import (aggregated_estimates, estimator_denominator, format_value,
                        normalized_asymptotic_variance, plan_aggregation, quadratic_variation)
from .fisher import efficiency
from .models import drift_condition, drift_from_dict, model_from_dict
from .seqalg import elementary, order, parse_sequence, validate_clt
from .simulate import SimConfig, sample_matrix

STUDIES = ("histogram", "variance-curve", "aggregation-curve", "drift-robustness")
FULL_N = 10_000


@dataclass
class Table:
    columns: tuple
    rows: list = field(default_factory=list)
    comments: list = field(default_factory=list)

    def add(self, **values) -> None:
        unknown = set(values) - set(self.columns)
        if unknown:
            raise KeyError(f"unknown columns {sorted(unknown)}")
        self.rows.append(values)

    def column(self, name: str, **match) -> list:
        return [r.get(name) for r in self.rows if all(r.get(k) == v for k, v in match.items())]

    def to_csv(self) -> str:
        out = io.StringIO()
        for c in self.comments:
            out.write(f"# {c}\n")
        out.write(",".join(self.columns) + "\n")
        for r in self.rows:
            out.write(",".join("" if r.get(c) is None else format_value(r[c]) for c in self.columns))
            out.write("\n")
        return out.getvalue()

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def _grid(values) -> list[float]:
    return [round(float(v), 10) for v in values]


def default_s_grid(lo: float = 0.1, hi: float = 1.9, step: float = 0.1) -> list[float]:
    return _grid(np.arange(lo, hi + step / 2, step))


@dataclass
class StudyConfig:
    """Settings for one study; ``from_dict`` accepts the JSON form used by the CLI."""

    study: str
    models: list = field(default_factory=lambda: [{"model": "exp", "C": 3.0}])
    sequences: list = field(default_factory=list)
    sequence_sets: list = field(default_factory=list)
    D: int | None = None
    n_values: list = field(default_factory=lambda: [200])
    N: int = 2000
    s_grid: list = field(default_factory=list)
    seed: int = 0
    alpha: float = 1.0
    drift: dict | None = None
    denominator_mode: str = "paper-n"
    full: bool = False
    out: str | None = None

    def __post_init__(self) -> None:
        if self.study not in STUDIES:
            raise ValueError(f"study must be one of {STUDIES}, got {self.study!r}")
        if self.full:
            self.N = max(int(self.N), FULL_N)
        if int(self.N) < 1:
            raise ValueError("N must be at least 1")
        for s in self.s_grid:
            if not 0.0 < float(s) < 2.0:
                raise ValueError(f"s-grid value {s} is outside (0, 2)")
        if any(int(n) < 2 for n in self.n_values):
            raise ValueError("every n must be at least 2")

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown study config keys {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def _moments(x: np.ndarray) -> tuple[float, float, float, float]:
    """Mean, unbiased variance, skewness and excess kurtosis (nan where undefined)."""
    N = x.size
    mean = float(np.mean(x))
    if N < 2:
        return mean, math.nan, math.nan, math.nan
    d = x - mean
    m2 = float(np.mean(d**2))
    var = float(np.sum(d**2) / (N - 1))
    if m2 == 0.0:
        return mean, var, math.nan, math.nan
    return mean, var, float(np.mean(d**3) / m2**1.5), float(np.mean(d**4) / m2**2 - 3.0)


def _setup(desc: dict, sequences: list, D_override):
    model = model_from_dict(desc)
    loc = model.local_behavior()
    D = loc.D if D_override is None else int(D_override)
    a = parse_sequence(sequences[0]) if sequences else elementary(D + 1)
    return model, loc, D, a


HIST_COLUMNS = ("kind", "model", "D", "s", "sequence", "n", "N", "replicate", "C_hat", "mean",
                "variance", "theory_mean", "theory_variance", "skewness", "excess_kurtosis")


def _estimates(config: StudyConfig, block: int, model, a, D: int, s: float, n: int,
               drift=None) -> np.ndarray:
    sim = SimConfig(model, n, alpha=config.alpha, drift=drift, seed=config.seed, stream=(block, n))
    X = sample_matrix(sim, config.N)
    den = estimator_denominator(a, n, sim.step, D, s, config.denominator_mode)
    return quadratic_variation(X, a) / den


def histogram_study(config: StudyConfig) -> Table:
    """Finite-sample distribution of ``C_hat``: replicate rows plus one summary row per block."""
    t = Table(HIST_COLUMNS, comments=[
        "histogram study: finite-sample distribution of the quadratic-variation estimator",
        "kind=replicate rows: one C_hat per simulated path (replicate index from 0)",
        "kind=summary rows: mean, unbiased variance, skewness and excess kurtosis of C_hat;",
        "theory_mean is the local scale C, theory_variance is C^2 vtilde / n",
        f"seed={config.seed} N={config.N} alpha={config.alpha} denominator={config.denominator_mode}",
    ])
    for block, desc in enumerate(config.models):
        model, loc, D, a = _setup(desc, config.sequences, config.D)
        ok, msg = validate_clt(a, D, loc.s)
        if not ok:
            raise ValueError(f"{model.name} with sequence {a.label}: {msg}")
        vt = normalized_asymptotic_variance(a, D, loc.s)
        for n in config.n_values:
            C_hat = _estimates(config, block, model, a, D, loc.s, int(n))
            base = dict(model=model.name, D=D, s=loc.s, sequence=a.label, n=int(n), N=config.N)
            for r, c in enumerate(C_hat):
                t.add(kind="replicate", replicate=r, C_hat=float(c), **base)
            mean, var, skew, kurt = _moments(C_hat)
            t.add(kind="summary", mean=mean, variance=var, theory_mean=loc.C,
                  theory_variance=loc.C**2 * vt / int(n), skewness=skew, excess_kurtosis=kurt, **base)
    return t


CURVE_COLUMNS = ("sequence", "D", "s", "vtilde", "efficiency")


def variance_curve_study(sequences, D: int, s_grid) -> Table:
    """``vtilde_{a,s}`` over ``s_grid``; pairs violating the CLT condition are skipped."""
    t = Table(CURVE_COLUMNS, comments=[
        "normalized asymptotic variance vtilde of sqrt(n)/C (C_hat - C) per sequence and s",
        "efficiency = 2 / vtilde; rows labelled cramer-rao give the reference value 2",
    ])
    seqs = [parse_sequence(x) if isinstance(x, str) else x for x in sequences]
    grid = _grid(s_grid)
    for a in seqs:
        for s in grid:
            if validate_clt(a, D, s)[0]:
                v = normalized_asymptotic_variance(a, D, s)
                t.add(sequence=a.label, D=D, s=s, vtilde=v, efficiency=efficiency(v))
    for s in grid:
        t.add(sequence="cramer-rao", D=D, s=s, vtilde=2.0, efficiency=1.0)
    return t


AGG_COLUMNS = ("set", "sequence", "D", "s", "vtilde", "weight", "status", "eigen_ratio", "dropped")


def aggregation_curve_study(sequence_sets, D: int, s_grid) -> Table:
    """Individual and aggregated ``vtilde`` per set and ``s``.

    ``status`` is ``ok``, ``reduced`` (R singular; redundant sequences listed in
    ``dropped`` carry weight 0, the optimum is unaffected) or ``invalid``
    (some sequence violates the CLT condition at this ``s``; no aggregate row).
    """
    t = Table(AGG_COLUMNS, comments=[
        "aggregation of quadratic-variation estimators with optimal unit-sum weights",
        "sequence=aggregated rows give vtilde_agg = 1 / (1' R^-1 1) over the kept sequences",
        "eigen_ratio is min/max eigenvalue of the full asymptotic R matrix",
    ])
    for idx, labels in enumerate(sequence_sets):
        seqs = [parse_sequence(x) if isinstance(x, str) else x for x in labels]
        name = "+".join(a.label for a in seqs)
        for s in _grid(s_grid):
            bad = [a.label for a in seqs if not validate_clt(a, D, s)[0]]
            if bad:
                t.add(set=name, sequence="aggregated", D=D, s=s, status="invalid",
                      dropped=" ".join(bad))
                continue
            plan = plan_aggregation(seqs, D, s)
            eig = np.linalg.eigvalsh(plan.R)
            status = "reduced" if plan.dropped else "ok"
            ratio = float(eig[0] / eig[-1])
            for a, w, v in zip(seqs, plan.weights, np.diag(plan.R)):
                t.add(set=name, sequence=a.label, D=D, s=s, vtilde=float(v), weight=float(w),
                      status=status, eigen_ratio=ratio)
            t.add(set=name, sequence="aggregated", D=D, s=s, vtilde=plan.vtilde_agg, weight=1.0,
                  status=status, eigen_ratio=ratio, dropped=" ".join(plan.dropped))
    return t


DRIFT_COLUMNS = ("kind", "model", "sequence", "n", "N", "replicate", "C_hat", "C_hat_drift",
                 "abs_diff", "rel_diff", "mean_bias", "bias_se", "exact_bias", "max_rel_diff", "K", "scale", "ratio")


def drift_robustness_study(config: StudyConfig) -> Table:
    """Paired runs with and without drift (same seeds, same paths)."""
    drift = drift_from_dict(config.drift)
    t = Table(DRIFT_COLUMNS, comments=[
        "drift robustness: C_hat on the same simulated paths with and without drift",
        f"drift={config.drift} seed={config.seed} N={config.N} alpha={config.alpha}",
        "summary rows: mean_bias = mean(C_hat_drift - C_hat) with its standard error bias_se;",
        "exact_bias = V_a(f) / denominator is the expectation of that difference;",
        "K, scale, ratio compare",
        "sup |f^(M)| on the observation window with n^-1/4 delta^(D-M+s/2)",
    ])
    for block, desc in enumerate(config.models):
        model, loc, D, a = _setup(desc, config.sequences, config.D)
        for n in config.n_values:
            n = int(n)
            plain = _estimates(config, block, model, a, D, loc.s, n)
            drifted = plain if drift is None else _estimates(config, block, model, a, D, loc.s, n, drift)
            diff = drifted - plain
            rel = np.abs(diff) / np.abs(plain)
            base = dict(model=model.name, sequence=a.label, n=n, N=config.N)
            for r in range(plain.size):
                t.add(kind="replicate", replicate=r, C_hat=float(plain[r]), C_hat_drift=float(drifted[r]),
                      abs_diff=float(abs(diff[r])), rel_diff=float(rel[r]), **base)
            cond = (drift_condition(drift, order(a), D, loc.s, n, config.alpha) if drift is not None
                    else {"K": 0.0, "scale": math.nan, "ratio": 0.0})
            den = estimator_denominator(a, n, float(n) ** -config.alpha, D, loc.s, config.denominator_mode)
            exact = 0.0 if drift is None else quadratic_variation(
                drift(float(n) ** -config.alpha * np.arange(1, n + 1)), a) / den
            se = float(np.std(diff, ddof=1) / math.sqrt(diff.size)) if diff.size > 1 else math.nan
            t.add(kind="summary", mean_bias=float(np.mean(diff)), bias_se=se, exact_bias=float(exact),
                  max_rel_diff=float(np.max(rel)),
                  K=cond["K"], scale=cond["scale"], ratio=cond["ratio"], **base)
    return t


def run_study(config: StudyConfig) -> Table:
    if config.study == "histogram":
        return histogram_study(config)
    if config.study == "drift-robustness":
        return drift_robustness_study(config)
    D = 0 if config.D is None else int(config.D)
    grid = config.s_grid or default_s_grid()
    if config.study == "variance-curve":
        return variance_curve_study(config.sequences, D, grid)
    return aggregation_curve_study(config.sequence_sets or [config.sequences], D, grid)


def aggregated_mc_variances(model_desc: dict, sequences, n: int, N: int, seed: int,
                            D: int | None = None) -> dict:
    """Monte Carlo variances of each single-sequence estimator and of their aggregate."""
    model = model_from_dict(model_desc)
    loc = model.local_behavior()
    D = loc.D if D is None else D
    seqs = [parse_sequence(x) if isinstance(x, str) else x for x in sequences]
    plan = plan_aggregation(seqs, D, loc.s)
    sim = SimConfig(model, n, alpha=1.0, seed=seed)
    X = sample_matrix(sim, N)
    out = {}
    for a in seqs:
        c = quadratic_variation(X, a) / estimator_denominator(a, n, sim.step, D, loc.s)
        out[a.label] = float(np.var(c, ddof=1))
    out["aggregated"] = float(np.var(aggregated_estimates(X, sim.step, plan, D, loc.s), ddof=1))
    return out
