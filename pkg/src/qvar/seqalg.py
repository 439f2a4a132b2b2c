"""Finite variation sequences (zero-sum filters) and their algebra.

A variation sequence ``a`` is a finite list of reals ``a_0, ..., a_{L-1}``
summing to zero.  Its *order* ``M(a)`` is the index of its first
non-vanishing discrete moment ``sum_j a_j j^M``.  Convolving two sequences
gives a filter indexed over negative and positive offsets; ``a^{2*}`` (the
self-convolution) is symmetric with order ``2 M(a)``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from math import comb

import numpy as np

ZERO_SUM_TOL = 1e-9
ROUNDED_ZERO_SUM_TOL = 1e-6
MOMENT_RTOL = 1e-6

_DAUBECHIES = {
    2: (-0.1830127, -0.3169873, 1.1830127, -0.6830127),
    3: (0.0498175, 0.12083221, -0.19093442, -0.650365, 1.14111692, -0.47046721),
}


class MalformedSequenceError(ValueError):
    """Raised when coefficients do not describe a usable variation sequence."""


def _moment_threshold(coefficients: np.ndarray, span: int, k: int) -> float:
    return MOMENT_RTOL * float(np.max(np.abs(coefficients))) * float(span) ** k


@dataclass(frozen=True)
class Filter:
    """Finite real filter ``b_j`` for ``j = start, ..., start + len - 1``.

    The general result of :func:`convolve`.  Immutable; ``coefficients`` is a
    read-only float array.
    """

    coefficients: np.ndarray
    start: int = 0

    def __post_init__(self) -> None:
        coefs = np.array(self.coefficients, dtype=float).ravel()
        if coefs.size == 0:
            raise MalformedSequenceError("filter needs at least one coefficient")
        if not np.all(np.isfinite(coefs)):
            raise MalformedSequenceError("filter coefficients must be finite")
        coefs.setflags(write=False)
        object.__setattr__(self, "coefficients", coefs)
        object.__setattr__(self, "start", int(self.start))

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.coefficients.size)

    @property
    def stop(self) -> int:
        """Last index carrying a coefficient."""
        return self.start + self.coefficients.size - 1

    @property
    def reach(self) -> int:
        """Largest ``|j|`` in the support."""
        return max(abs(self.start), abs(self.stop))

    def moment(self, k: int) -> float:
        j = self.indices.astype(float)
        return float(np.sum(self.coefficients * j**k))

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        if self.start != -self.stop:
            return False
        c = self.coefficients
        return bool(np.allclose(c, c[::-1], rtol=0.0, atol=tol * np.max(np.abs(c))))

    def __len__(self) -> int:
        return int(self.coefficients.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Filter):
            return NotImplemented
        return self.start == other.start and np.array_equal(
            self.coefficients, other.coefficients
        )

    def __hash__(self) -> int:
        return hash((self.start, self.coefficients.tobytes()))


@dataclass(frozen=True, eq=False)
class VariationSequence(Filter):
    """Zero-sum sequence ``a_0, ..., a_{L-1}`` with non-zero end coefficients.

    ``sum_tol`` is the absolute zero-sum tolerance relative to ``max|a_j|``;
    it is relaxed to ``1e-6`` for coefficient lists published with rounding.
    """

    label: str = ""
    sum_tol: float = field(default=ZERO_SUM_TOL, repr=False)

    def __post_init__(self) -> None:
        super().__post_init__()
        c = self.coefficients
        if self.start != 0:
            raise MalformedSequenceError("variation sequences are indexed from 0")
        if c.size < 2:
            raise MalformedSequenceError("a variation sequence needs at least two coefficients")
        if c[0] == 0.0 or c[-1] == 0.0:
            raise MalformedSequenceError("first and last coefficients must be non-zero")
        scale = float(np.max(np.abs(c)))
        if abs(float(np.sum(c))) > self.sum_tol * scale:
            raise MalformedSequenceError(
                f"coefficients sum to {np.sum(c):.3g}, not zero (tolerance {self.sum_tol:g})"
            )
        if not self.label:
            object.__setattr__(self, "label", ",".join(f"{x:g}" for x in c))
        # Fails loudly for sequences whose moments all vanish.
        order(self)

    @property
    def length(self) -> int:
        return int(self.coefficients.size)


def order(a: Filter) -> int:
    """First non-vanishing moment index ``M >= 1`` of a zero-sum filter.

    A moment counts as zero when ``|sum_j a_j j^k|`` is below
    ``1e-6 * max|a_j| * span^k``, with ``span`` the support width (``L`` for
    a sequence indexed from 0).
    """
    c = a.coefficients
    span = a.reach + 1 if a.start < 0 else len(a)
    for k in range(1, len(a)):
        if abs(a.moment(k)) > _moment_threshold(c, span, k):
            return k
    raise MalformedSequenceError(
        f"all moments up to {len(a) - 1} vanish; coefficients {c.tolist()} are not a valid sequence"
    )


def elementary(k: int) -> VariationSequence:
    """Order-``k`` elementary sequence ``a_j = (-1)^{k-j} binom(k, j)``."""
    k = int(k)
    if k < 1:
        raise MalformedSequenceError("elementary sequences need k >= 1")
    coefs = [(-1) ** (k - j) * comb(k, j) for j in range(k + 1)]
    return VariationSequence(np.array(coefs, dtype=float), label=f"elem{k}")


def daubechies(order_: int) -> VariationSequence:
    """Published (rounded) Daubechies wavelet sequence of order 2 or 3."""
    try:
        coefs = _DAUBECHIES[int(order_)]
    except KeyError:
        raise MalformedSequenceError(
            f"Daubechies sequence of order {order_} is not available (supported: 2, 3)"
        ) from None
    return VariationSequence(
        np.array(coefs), label=f"daub{order_}", sum_tol=ROUNDED_ZERO_SUM_TOL
    )


def convolve(a: Filter, b: Filter) -> Filter:
    """``c_j = sum_{k - l = j} a_k b_l``, supported on ``start_a - stop_b .. stop_a - start_b``."""
    coefs = np.convolve(a.coefficients, b.coefficients[::-1])
    return Filter(coefs, start=a.start - b.stop)


def self_convolve(a: Filter) -> Filter:
    """Symmetric filter ``a^{2*} = a * a``."""
    return convolve(a, a)


def validate_clt(a: Filter, D: int, s: float) -> tuple[bool, str]:
    """Check the asymptotic-normality condition ``M(a) > D + s/2 + 1/4``."""
    if D < 0:
        raise ValueError("D must be non-negative")
    if not 0.0 < s < 2.0:
        raise ValueError("s must lie in (0, 2)")
    M = order(a)
    bound = D + s / 2.0 + 0.25
    if M > bound:
        return True, f"M={M} > D+s/2+1/4={bound:g}: central limit theorem applies"
    return False, (
        f"M={M} <= D+s/2+1/4={bound:g}: condition M > D+s/2+1/4 fails; the variance "
        "decays slower than 1/n and the estimator is not asymptotically normal "
        f"(use a sequence of order >= {int(np.floor(bound)) + 1})"
    )


PRESETS = {
    "elem1": lambda: elementary(1),
    "elem2": lambda: elementary(2),
    "elem3": lambda: elementary(3),
    "elem4": lambda: elementary(4),
    "seq123": lambda: VariationSequence(np.array([-1.0, -2.0, 3.0]), label="seq123"),
    "daub2": lambda: daubechies(2),
    "daub3": lambda: daubechies(3),
}


def parse_sequence(text: str) -> VariationSequence:
    """Build a sequence from a preset name (``elem2``, ``daub3``...) or ``"c0,c1,..."``."""
    key = text.strip()
    if key in PRESETS:
        return PRESETS[key]()
    m = re.fullmatch(r"elem(\d+)", key)
    if m:
        return elementary(int(m.group(1)))
    try:
        coefs = [float(tok) for tok in key.split(",") if tok.strip()]
    except ValueError:
        raise MalformedSequenceError(
            f"unknown sequence {text!r}: expected one of {sorted(PRESETS)} or a comma-separated list"
        ) from None
    return VariationSequence(np.array(coefs), label=key)


def parse_sequences(text: str) -> list[VariationSequence]:
    """Parse ``"elem1,seq123"``-style preset lists or ``;``-separated explicit lists."""
    if ";" in text:
        return [parse_sequence(part) for part in text.split(";") if part.strip()]
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if parts and all(p in PRESETS or re.fullmatch(r"elem\d+", p) for p in parts):
        return [parse_sequence(p) for p in parts]
    return [parse_sequence(text)]
