"""Fisher information for ``C`` from increment observations.

The observations are the ``n - 1`` increments of ``Y = X^{(D)}`` on the grid
``t_i = i delta``, ``i = 0..n-1``.  Two families are built in:

* ``fbm``: ``Y`` has semivariogram ``V_C(h) = C |h|^s``;
* ``slepian``: ``Y`` has covariance ``(1 - (C/2) |h|^s)^+``, so ``V_C(h) = (C/2)|h|^s``
  as long as every lag stays inside the support, i.e. ``(C/2) ((n-1) delta)^s < 1``.

Both are linear in ``C`` there, hence ``1 / I_C = 2 C^2 / (n - 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

FAMILIES = ("fbm", "slepian")
FD_REL_STEP = 1e-5


@dataclass(frozen=True)
class IncrementFamily:
    """Increment-observation family on ``n`` grid points with spacing ``delta``."""

    kind: str
    s: float
    n: int
    delta: float = 0.0
    D: int = 0

    def __post_init__(self) -> None:
        if self.kind not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.kind!r}")
        if not 0.0 < self.s < 2.0:
            raise ValueError("s must lie in (0, 2)")
        if self.kind == "slepian" and self.s > 1.0:
            raise ValueError("the Slepian family needs s <= 1")
        if int(self.n) < 2:
            raise ValueError("n must be at least 2")
        if self.D < 0:
            raise ValueError("D must be non-negative")
        if self.delta == 0.0:
            object.__setattr__(self, "delta", 1.0 / int(self.n))
        if not self.delta > 0.0:
            raise ValueError("delta must be positive")

    def linear_in_C(self, C: float) -> bool:
        """``R_C = C R_1`` holds for every admissible ``C`` near the given one."""
        if self.kind == "fbm":
            return True
        return 0.5 * C * ((self.n - 1) * self.delta) ** self.s < 1.0


def _lag_covariance(family: IncrementFamily, C: float, h: np.ndarray) -> np.ndarray:
    """``Cov(Y(t), Y(t+h))`` up to an additive constant that increments cancel."""
    h = np.abs(h)
    if family.kind == "fbm":
        return -C * h**family.s
    return np.maximum(1.0 - 0.5 * C * h**family.s, 0.0)


def increment_covariance(family: IncrementFamily, C: float) -> np.ndarray:
    """Covariance of ``Y(t_i) - Y(t_{i-1})``, ``i = 1..n-1``."""
    if not C > 0.0:
        raise ValueError("C must be positive")
    m = family.n - 1
    k = np.arange(m)
    lag = (k[:, None] - k[None, :]).astype(float) * family.delta
    d = family.delta
    g = lambda h: _lag_covariance(family, C, h)
    # Cov(Y_i - Y_{i-1}, Y_j - Y_{j-1}) = 2 g(lag) - g(lag + d) - g(lag - d)
    return 2.0 * g(lag) - g(lag + d) - g(lag - d)


def _derivative(family: IncrementFamily, C: float) -> np.ndarray:
    if family.linear_in_C(C):
        return increment_covariance(family, 1.0) if family.kind == "fbm" else (
            increment_covariance(family, C) / C)
    h = FD_REL_STEP * C
    return (increment_covariance(family, C + h) - increment_covariance(family, C - h)) / (2.0 * h)


def fisher_information(family: IncrementFamily, C: float, analytic: bool = True) -> float:
    """``I_C = Tr(R^{-1} R' R^{-1} R') / 2``; ``analytic=False`` forces a finite-difference ``R'``."""
    R = increment_covariance(family, C)
    if analytic:
        dR = _derivative(family, C)
    else:
        h = FD_REL_STEP * C
        dR = (increment_covariance(family, C + h) - increment_covariance(family, C - h)) / (2.0 * h)
    try:
        cf = linalg.cho_factor(R, lower=True)
    except linalg.LinAlgError as exc:
        raise ValueError("increment covariance is singular") from exc
    A = linalg.cho_solve(cf, dR)
    return 0.5 * float(np.sum(A * A.T))


def cramer_rao_bound(family: IncrementFamily, C: float) -> float:
    """Lower bound ``1 / I_C`` on the variance of unbiased estimators of ``C``."""
    return 1.0 / fisher_information(family, C)


def efficiency(vtilde: float) -> float:
    """``2 / vtilde``: normalized Cramer-Rao variance over the estimator's."""
    if not vtilde > 0.0:
        raise ValueError("vtilde must be positive")
    return 2.0 / float(vtilde)
