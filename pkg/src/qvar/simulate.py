"""Exact Gaussian path simulation on a regular grid.

Paths are drawn as ``L z`` with ``L`` the lower Cholesky factor of the
covariance of ``(X(t_1), ..., X(t_n))``, ``t_j = j delta``.  Replicate ``r``
uses its own generator seeded from ``(seed, r)``, so any replicate can be
reproduced on its own and results do not depend on batching or threads.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import linalg

from .models import DriftSpec, ModelSpec, covariance

log = logging.getLogger(__name__)

JITTER_MAX = 1e-9


class SimulationError(RuntimeError):
    """Covariance factorization failed even after jitter escalation."""


@dataclass(frozen=True)
class PathSample:
    """One discretized realization: ``values[j-1] = X(j * delta)``, ``j = 1..n``."""

    delta: float
    values: np.ndarray
    alpha: float | None = None

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float).ravel()
        if vals.size < 2:
            raise ValueError("a path needs at least two observations")
        if not self.delta > 0.0:
            raise ValueError("delta must be positive")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def times(self) -> np.ndarray:
        return self.delta * np.arange(1, self.n + 1)


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings; give ``delta`` directly or ``alpha`` for ``delta = n^-alpha``."""

    model: ModelSpec
    n: int
    delta: float | None = None
    alpha: float | None = None
    drift: DriftSpec | None = None
    seed: int = 0
    jitter: float = 1e-12
    stream: tuple = ()

    def __post_init__(self) -> None:
        if int(self.n) < 2:
            raise ValueError("n must be at least 2")
        if (self.delta is None) == (self.alpha is None):
            raise ValueError("give exactly one of delta or alpha")
        if self.alpha is not None and not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.delta is not None and not self.delta > 0.0:
            raise ValueError("delta must be positive")
        if self.jitter < 0.0:
            raise ValueError("jitter must be non-negative")

    @property
    def step(self) -> float:
        return float(self.delta) if self.delta is not None else float(self.n) ** (-self.alpha)

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(1, int(self.n) + 1)


def covariance_matrix(model: ModelSpec, times) -> np.ndarray:
    """Exact covariance of ``X`` at ``times`` (distinct; positive for FBM)."""
    t = np.asarray(times, dtype=float).ravel()
    if np.unique(t).size != t.size:
        raise ValueError("times must be distinct")
    if model.name == "fbm" and np.any(t <= 0.0):
        raise ValueError("FBM is pinned at X(0)=0; times must be positive")
    K = np.asarray(covariance(model, t[:, None], t[None, :]), dtype=float)
    return 0.5 * (K + K.T)


@dataclass(frozen=True)
class Factorization:
    lower: np.ndarray
    jitter: float = 0.0
    warnings: tuple = field(default_factory=tuple)


def factorize(K: np.ndarray, jitter: float = 1e-12) -> Factorization:
    """Lower Cholesky factor; adds ``jitter * max diag`` only if plain factorization fails.

    Jitter escalates by factors of 10 up to ``1e-9`` relative.
    """
    try:
        return Factorization(linalg.cholesky(K, lower=True, check_finite=True))
    except linalg.LinAlgError:
        pass
    scale = float(np.max(np.diag(K)))
    level = jitter if jitter > 0.0 else 1e-12
    while level <= JITTER_MAX * (1 + 1e-9):
        try:
            L = linalg.cholesky(K + level * scale * np.eye(K.shape[0]), lower=True)
        except linalg.LinAlgError:
            level *= 10.0
            continue
        msg = f"covariance not numerically positive definite; added jitter {level:g} x max diagonal"
        log.warning(msg)
        return Factorization(L, level, (msg,))
    raise SimulationError(
        f"Cholesky factorization failed even with {JITTER_MAX:g} relative jitter"
    )


@lru_cache(maxsize=32)
def _cached_factor(model: ModelSpec, n: int, step: float, jitter: float) -> Factorization:
    times = step * np.arange(1, n + 1)
    return factorize(covariance_matrix(model, times), jitter)


def replicate_generator(seed: int, replicate: int, stream: tuple = ()) -> np.random.Generator:
    """Independent generator for ``(seed, stream..., replicate)``."""
    key = tuple(int(k) for k in stream) + (int(replicate),)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def max_workers() -> int:
    """Thread cap from ``QVAR_THREADS`` (default: 1)."""
    raw = os.environ.get("QVAR_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _draw(L: np.ndarray, seed: int, stream: tuple, rows: range) -> np.ndarray:
    out = np.empty((len(rows), L.shape[0]))
    for k, r in enumerate(rows):
        z = replicate_generator(seed, r, stream).standard_normal(L.shape[0])
        out[k] = L @ z
    return out


def sample_matrix(config: SimConfig, N: int, start: int = 0, workers: int | None = None) -> np.ndarray:
    """``(N, n)`` array of replicates ``start .. start + N - 1``."""
    if int(N) < 1:
        raise ValueError("N must be at least 1")
    fac = _cached_factor(config.model, int(config.n), config.step, float(config.jitter))
    workers = max_workers() if workers is None else max(1, int(workers))
    replicas = range(int(start), int(start) + int(N))
    if workers == 1 or N < 2 * workers:
        X = _draw(fac.lower, config.seed, config.stream, replicas)
    else:
        bounds = np.linspace(0, len(replicas), workers + 1).astype(int)
        chunks = [replicas[bounds[k]:bounds[k + 1]] for k in range(workers)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda rows: _draw(fac.lower, config.seed, config.stream, rows), chunks))
        X = np.concatenate(parts, axis=0)
    if config.drift is not None:
        X = X + np.asarray(config.drift(config.times), dtype=float)[None, :]
    return X


def simulation_warnings(config: SimConfig) -> tuple:
    return _cached_factor(config.model, int(config.n), config.step, float(config.jitter)).warnings


def sample_paths(config: SimConfig, N: int, start: int = 0) -> list[PathSample]:
    """``N`` exact draws as :class:`PathSample` objects."""
    X = sample_matrix(config, N, start)
    return [PathSample(config.step, row, config.alpha) for row in X]


def gaussian_pair_moment_check(cov, nodes: int = 40) -> tuple[float, float]:
    """``(Cov(X^2, Y^2), 2 Cov(X, Y)^2)`` for a centered Gaussian pair.

    The left side is computed by tensor Gauss-Hermite quadrature, independently
    of the identity it is compared with.
    """
    c = np.asarray(cov, dtype=float)
    if c.shape != (2, 2) or not np.allclose(c, c.T):
        raise ValueError("cov must be a symmetric 2x2 matrix")
    a = np.sqrt(c[0, 0])
    b = c[0, 1] / a if a > 0 else 0.0
    d = np.sqrt(max(c[1, 1] - b * b, 0.0))
    z, w = hermegauss(nodes)
    w = w / np.sqrt(2.0 * np.pi)
    Z1, Z2 = np.meshgrid(z, z, indexing="ij")
    W = np.outer(w, w)
    X = a * Z1
    Y = b * Z1 + d * Z2
    ex2 = np.sum(W * X**2)
    ey2 = np.sum(W * Y**2)
    lhs = float(np.sum(W * X**2 * Y**2) - ex2 * ey2)
    return lhs, float(2.0 * c[0, 1] ** 2)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def path_to_csv(path: PathSample) -> str:
    """``index,t,x`` table with ``t = index * delta``."""
    lines = ["index,t,x"]
    lines += [f"{j},{_fmt(t)},{_fmt(x)}" for j, t, x in zip(range(1, path.n + 1), path.times, path.values)]
    return "\n".join(lines) + "\n"


def matrix_to_csv(X: np.ndarray, delta: float, comments: tuple = ()) -> str:
    """One replicate per row; ``#`` lines document the layout."""
    head = [f"# {c}" for c in comments]
    head.append(f"# rows: replicates; column j holds X(j * delta), j = 1..{X.shape[1]}; delta={_fmt(delta)}")
    body = [",".join(_fmt(v) for v in row) for row in np.atleast_2d(X)]
    return "\n".join(head + body) + "\n"


def read_path_csv(text: str, delta: float | None = None, row: int = 0) -> PathSample:
    """Parse an ``index,t,x`` table, or row ``row`` of a replicate matrix.

    For the ``index,t,x`` layout, ``delta`` defaults to the spacing of ``t``;
    for a matrix it is taken from ``delta`` or from the ``delta=`` comment.
    """
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    comments = [ln for ln in lines if ln.startswith("#")]
    data = [ln for ln in lines if not ln.startswith("#")]
    if not data:
        raise ValueError("path file has no data")
    if data[0].replace(" ", "") == "index,t,x":
        try:
            arr = np.array([[float(c) for c in ln.split(",")] for ln in data[1:]])
        except ValueError as exc:
            raise ValueError(f"non-numeric entry in path file: {exc}") from None
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError("path file rows must have exactly three fields index,t,x")
        if delta is None:
            steps = np.diff(arr[:, 1])
            if steps.size == 0 or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
                raise ValueError("t column is not a regular grid; pass delta explicitly")
            delta = float(steps[0])
        return PathSample(delta, arr[:, 2])
    if delta is None:
        for c in comments:
            if "delta=" in c:
                delta = float(c.split("delta=")[1].split()[0].rstrip(";,"))
    if delta is None:
        raise ValueError("matrix input needs delta (flag or 'delta=' comment)")
    if not 0 <= row < len(data):
        raise ValueError(f"row {row} out of range (file has {len(data)} rows)")
    try:
        vals = [float(c) for c in data[row].split(",")]
    except ValueError as exc:
        raise ValueError(f"non-numeric entry in row {row}: {exc}") from None
    return PathSample(float(delta), np.array(vals))
