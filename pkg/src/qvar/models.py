"""Variogram / covariance models and their local behaviour at the origin.

Every model is described by its local expansion

    V^{(2D)}(h) = V^{(2D)}(0) + C (-1)^D |h|^s + o(|h|^s),

which is what the quadratic-variation estimators target.  Stationary models
carry a correlation function ``k`` (``k(0) = 1``); the fractional Brownian
motion only has stationary increments.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Union

import numpy as np

SQRT3 = math.sqrt(3.0)
SQRT5 = math.sqrt(5.0)


class ModelError(ValueError):
    """Invalid model or drift description."""


@dataclass(frozen=True)
class LocalBehavior:
    """Local parameters (D, s, C) of the semivariogram at 0."""

    D: int
    s: float
    C: float

    def __post_init__(self) -> None:
        if self.D < 0 or int(self.D) != self.D:
            raise ModelError("D must be a non-negative integer")
        if not 0.0 < self.s < 2.0:
            raise ModelError("s must lie in (0, 2)")
        if not self.C > 0.0:
            raise ModelError("C must be positive")

    @property
    def H(self) -> float:
        """Local Hoelder index ``D + s/2``."""
        return self.D + self.s / 2.0


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0.0 and math.isfinite(value)):
        raise ModelError(f"{name} must be positive and finite, got {value}")
    return value


@dataclass(frozen=True)
class Exponential:
    """``k(h) = exp(-C |h|)``."""

    C: float

    name = "exp"
    stationary = True

    def __post_init__(self) -> None:
        _positive("C", self.C)

    def correlation(self, h):
        return np.exp(-self.C * np.abs(h))

    def local_behavior(self) -> LocalBehavior:
        return LocalBehavior(0, 1.0, self.C)


@dataclass(frozen=True)
class GeneralizedExponential:
    """``k(h) = exp(-C |h|^s)`` with ``0 < s < 2``."""

    C: float
    s: float

    name = "genexp"
    stationary = True

    def __post_init__(self) -> None:
        _positive("C", self.C)
        if not 0.0 < self.s < 2.0:
            raise ModelError("generalized exponential needs 0 < s < 2")

    def correlation(self, h):
        return np.exp(-self.C * np.abs(h) ** self.s)

    def local_behavior(self) -> LocalBehavior:
        return LocalBehavior(0, self.s, self.C)


@dataclass(frozen=True)
class Slepian:
    """Generalized Slepian ``k(h) = (1 - (C/2) |h|^s)^+`` with ``0 < s <= 1``.

    Near the origin ``V(h) = (C/2)|h|^s`` exactly, so the local scale is
    ``C/2``.  The expansion holds on the whole unit observation window when
    ``C < 2``.
    """

    C: float
    s: float

    name = "slepian"
    stationary = True

    def __post_init__(self) -> None:
        _positive("C", self.C)
        if not 0.0 < self.s <= 1.0:
            raise ModelError("Slepian model needs 0 < s <= 1 (Polya convexity)")

    def correlation(self, h):
        return np.maximum(1.0 - 0.5 * self.C * np.abs(h) ** self.s, 0.0)

    def local_behavior(self) -> LocalBehavior:
        return LocalBehavior(0, self.s, self.C / 2.0)


@dataclass(frozen=True)
class Matern32:
    """``k(h) = (1 + sqrt(3)|h|/theta) exp(-sqrt(3)|h|/theta)``."""

    theta: float

    name = "matern32"
    stationary = True

    def __post_init__(self) -> None:
        _positive("theta", self.theta)

    def correlation(self, h):
        x = SQRT3 * np.abs(h) / self.theta
        return (1.0 + x) * np.exp(-x)

    def local_behavior(self) -> LocalBehavior:
        return LocalBehavior(1, 1.0, 6.0 * SQRT3 / self.theta**3)

    @classmethod
    def from_local_scale(cls, C: float) -> "Matern32":
        return cls((6.0 * SQRT3 / _positive("C", C)) ** (1.0 / 3.0))


@dataclass(frozen=True)
class Matern52:
    """``k(h) = (1 + sqrt(5)|h|/theta + 5h^2/(3 theta^2)) exp(-sqrt(5)|h|/theta)``."""

    theta: float

    name = "matern52"
    stationary = True

    def __post_init__(self) -> None:
        _positive("theta", self.theta)

    def correlation(self, h):
        x = SQRT5 * np.abs(h) / self.theta
        return (1.0 + x + x * x / 3.0) * np.exp(-x)

    def local_behavior(self) -> LocalBehavior:
        return LocalBehavior(2, 1.0, 200.0 * SQRT5 / (3.0 * self.theta**5))

    @classmethod
    def from_local_scale(cls, C: float) -> "Matern52":
        return cls((200.0 * SQRT5 / (3.0 * _positive("C", C))) ** 0.2)


@dataclass(frozen=True)
class FBM:
    """Fractional Brownian motion, ``Cov(B(u), B(t)) = C(|u|^s + |t|^s - |u-t|^s)``."""

    C: float
    s: float

    name = "fbm"
    stationary = False

    def __post_init__(self) -> None:
        _positive("C", self.C)
        if not 0.0 < self.s < 2.0:
            raise ModelError("FBM needs 0 < s < 2")

    def local_behavior(self) -> LocalBehavior:
        return LocalBehavior(0, self.s, self.C)


ModelSpec = Union[Exponential, GeneralizedExponential, Slepian, Matern32, Matern52, FBM]


def semivariogram(model: ModelSpec, h):
    """``V(h) = E[(X(t+h) - X(t))^2] / 2``; vectorised over ``h``."""
    h = np.abs(np.asarray(h, dtype=float))
    if isinstance(model, FBM):
        out = model.C * h**model.s
    else:
        out = 1.0 - model.correlation(h)
    return out if out.ndim else float(out)


def covariance(model: ModelSpec, t, u):
    """``Cov(X(t), X(u))``; vectorised with numpy broadcasting."""
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    if isinstance(model, FBM):
        s = model.s
        out = model.C * (np.abs(t) ** s + np.abs(u) ** s - np.abs(t - u) ** s)
    else:
        out = model.correlation(t - u)
    return out if np.ndim(out) else float(out)


def local_behavior(model: ModelSpec) -> LocalBehavior:
    return model.local_behavior()


@dataclass(frozen=True)
class HypothesisReport:
    """Which of the working hypotheses H0-H3 hold for ``model`` at mesh exponent ``alpha``."""

    model: str
    alpha: float
    H0: bool
    H1: bool
    H2: bool
    H3: bool
    notes: str = ""

    @property
    def all_hold(self) -> bool:
        return self.H0 and self.H1 and self.H2 and self.H3


def hypothesis_report(model: ModelSpec, alpha: float = 1.0) -> HypothesisReport:
    """Flag H0-H3 from the per-model conditions (``delta_n = n^-alpha``)."""
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ModelError("alpha must lie in (0, 1]")
    name = model.name
    if isinstance(model, Exponential):
        return HypothesisReport(name, alpha, True, True, True, alpha > 0.5,
                                "H3 requires alpha > 1/2")
    if isinstance(model, GeneralizedExponential):
        return HypothesisReport(name, alpha, True, True, True, 1.0 / (2.0 * alpha) < model.s,
                                "H3 requires s > 1/(2 alpha)")
    if isinstance(model, (Matern32, Matern52)):
        s = model.local_behavior().s
        return HypothesisReport(name, alpha, True, True, True, s < 2.0 - 1.0 / (2.0 * alpha),
                                "H3 requires s < 2 - 1/(2 alpha)")
    if isinstance(model, Slepian):
        # (1 - (C/2)|h|^s)^+ equals (1 - c|h|^s)^+ with c = C/2; validity needs c < 1.
        ok = alpha == 1.0 and model.C < 2.0
        return HypothesisReport(name, alpha, True, ok, ok, ok,
                                "established in the infill case only, for C/2 < 1")
    if isinstance(model, FBM):
        # V(h) = C|h|^s exactly: the remainder vanishes identically.
        return HypothesisReport(name, alpha, True, True, True, True, "remainder is identically 0")
    raise ModelError(f"unknown model {model!r}")


def model_from_dict(desc: dict) -> ModelSpec:
    """Build a model from ``{"model": "exp", "C": 3}``-style descriptors."""
    if not isinstance(desc, dict) or "model" not in desc:
        raise ModelError('model descriptor needs a "model" key')
    kind = str(desc["model"]).lower()
    try:
        if kind == "exp":
            return Exponential(desc["C"])
        if kind == "genexp":
            return GeneralizedExponential(desc["C"], desc["s"])
        if kind == "slepian":
            return Slepian(desc["C"], desc["s"])
        if kind in ("matern32", "matern52"):
            cls = Matern32 if kind == "matern32" else Matern52
            if "theta" in desc:
                return cls(desc["theta"])
            return cls.from_local_scale(desc["C"])
        if kind == "fbm":
            return FBM(desc["C"], desc["s"])
    except KeyError as exc:
        raise ModelError(f"model {kind!r} is missing parameter {exc.args[0]!r}") from None
    raise ModelError(f"unknown model {kind!r}")


def model_to_dict(model: ModelSpec) -> dict:
    return {"model": model.name, **asdict(model)}


# -- drifts -----------------------------------------------------------------


@dataclass(frozen=True)
class PolynomialDrift:
    """``f(t) = sum_k coefficients[k] t^k``."""

    coefficients: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if not self.coefficients:
            raise ModelError("polynomial drift needs at least one coefficient")

    @property
    def degree(self) -> int:
        nz = [k for k, c in enumerate(self.coefficients) if c != 0.0]
        return nz[-1] if nz else 0

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), self.coefficients)

    def derivative(self, m: int) -> Callable:
        coefs = np.polynomial.polynomial.polyder(self.coefficients, m) if m else self.coefficients
        return lambda t: np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), coefs)


@dataclass(frozen=True)
class SineDrift:
    """``f(t) = amp * sin(2 pi freq t)``."""

    amp: float
    freq: float

    @property
    def degree(self) -> float:
        return math.inf

    def __call__(self, t):
        return self.amp * np.sin(2.0 * np.pi * self.freq * np.asarray(t, dtype=float))

    def derivative(self, m: int) -> Callable:
        w = 2.0 * np.pi * self.freq
        return lambda t: self.amp * w**m * np.sin(w * np.asarray(t, dtype=float) + m * np.pi / 2.0)


DriftSpec = Union[PolynomialDrift, SineDrift]


def drift_from_dict(desc: dict | None) -> DriftSpec | None:
    if desc is None:
        return None
    if "poly" in desc:
        return PolynomialDrift(tuple(desc["poly"]))
    if "sine" in desc:
        return SineDrift(float(desc["sine"]["amp"]), float(desc["sine"]["freq"]))
    raise ModelError('drift descriptor needs a "poly" or "sine" key')


def drift_to_dict(drift: DriftSpec | None) -> dict | None:
    if drift is None:
        return None
    if isinstance(drift, PolynomialDrift):
        return {"poly": list(drift.coefficients)}
    return {"sine": {"amp": drift.amp, "freq": drift.freq}}


def drift_condition(drift: DriftSpec, M: int, D: int, s: float, n: int, alpha: float,
                    grid: int = 4097) -> dict:
    """Evaluate ``K = sup_{[0, n^{1-alpha}]} |f^{(M)}|`` against ``n^{-1/4} delta^{D-M+s/2}``.

    The drift is harmless when the returned ``ratio`` tends to 0 as ``n`` grows.
    """
    delta = n ** (-alpha)
    t = np.linspace(0.0, n ** (1.0 - alpha), grid)
    K = float(np.max(np.abs(drift.derivative(M)(t))))
    scale = n ** (-0.25) * delta ** (D - M + s / 2.0)
    return {"K": K, "scale": scale, "ratio": K / scale}
