"""Fuzzy-logic algebra: t-norms, t-conorms, negation, and the small
vector/matrix containers every search step is built from.

Truth values are float64 in [0, 1].  Public kernels validate their inputs
and clamp results at the unit-interval boundaries so no composition can
drift outside [0, 1].
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Iterable, Union

import numpy as np

__all__ = [
    "TNormKind",
    "tnorm",
    "tconorm",
    "negate",
    "fold_tnorm",
    "binary_tnorm",
    "binary_tconorm",
    "FuzzyVector",
    "ScoreMatrix",
    "max_reduce",
]

ArrayLike = Union[float, np.ndarray]


class TNormKind(str, enum.Enum):
    """Supported t-norm families; each t-conorm is the De Morgan dual."""

    GODEL = "godel"
    PRODUCT = "product"
    LUKASIEWICZ = "lukasiewicz"

    @classmethod
    def coerce(cls, value: "TNormKind | str") -> "TNormKind":
        if isinstance(value, TNormKind):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown t-norm kind {value!r}; expected one of: {names}") from None


def as_truth_array(x: ArrayLike, name: str = "value") -> np.ndarray:
    """Coerce to float64 and verify every entry lies in [0, 1]."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.size:
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite truth values")
        lo = float(arr.min())
        hi = float(arr.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"{name} outside [0, 1] (min={lo!r}, max={hi!r})")
    return arr


def binary_tnorm(kind: TNormKind | str) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Unvalidated elementwise t-norm for inner loops over known-good arrays."""
    kind = TNormKind.coerce(kind)
    if kind is TNormKind.GODEL:
        return np.minimum
    if kind is TNormKind.PRODUCT:
        return np.multiply
    return lambda a, b: np.maximum(a + b - 1.0, 0.0)


def binary_tconorm(kind: TNormKind | str) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Unvalidated elementwise t-conorm (De Morgan dual of `binary_tnorm`)."""
    kind = TNormKind.coerce(kind)
    if kind is TNormKind.GODEL:
        return np.maximum
    if kind is TNormKind.PRODUCT:
        return lambda a, b: a + b - a * b
    return lambda a, b: np.minimum(a + b, 1.0)


def _finish(out: np.ndarray, scalar: bool) -> ArrayLike:
    out = np.clip(out, 0.0, 1.0)
    if scalar and out.ndim == 0:
        return float(out)
    return out


def tnorm(a: ArrayLike, b: ArrayLike, kind: TNormKind | str = TNormKind.PRODUCT) -> ArrayLike:
    """Elementwise t-norm of two truth values or broadcastable arrays.

    Godel: min(a, b); product: a * b; Lukasiewicz: max(a + b - 1, 0).
    """
    scalar = np.isscalar(a) and np.isscalar(b)
    a = as_truth_array(a, "a")
    b = as_truth_array(b, "b")
    return _finish(binary_tnorm(kind)(a, b), scalar)


def tconorm(a: ArrayLike, b: ArrayLike, kind: TNormKind | str = TNormKind.PRODUCT) -> ArrayLike:
    """Elementwise t-conorm 1 - tnorm(1-a, 1-b), in closed form per kind."""
    scalar = np.isscalar(a) and np.isscalar(b)
    a = as_truth_array(a, "a")
    b = as_truth_array(b, "b")
    return _finish(binary_tconorm(kind)(a, b), scalar)


def negate(a: ArrayLike) -> ArrayLike:
    """Fuzzy negation 1 - a."""
    scalar = np.isscalar(a)
    a = as_truth_array(a, "a")
    return _finish(1.0 - a, scalar)


def fold_tnorm(values: Iterable[ArrayLike], kind: TNormKind | str = TNormKind.PRODUCT) -> ArrayLike:
    """Left fold of `values` under the t-norm; empty fold is the neutral 1."""
    op = binary_tnorm(kind)
    acc: ArrayLike | None = None
    for v in values:
        v = as_truth_array(v, "fold operand")
        acc = v if acc is None else op(acc, v)
    if acc is None:
        return 1.0
    return _finish(np.asarray(acc), np.ndim(acc) == 0)


def _check_domain(domain: np.ndarray, name: str) -> np.ndarray:
    # Empty domains are legal (0-width matrices); ids must stay sorted and
    # unique so searchsorted lookups are valid everywhere downstream.
    domain = np.asarray(domain, dtype=np.int64)
    if domain.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if domain.size > 1 and not np.all(np.diff(domain) > 0):
        raise ValueError(f"{name} must be strictly ascending entity ids")
    if domain.size > 0 and int(domain[0]) < 0:
        raise ValueError(f"{name} contains negative entity ids")
    return domain


@dataclass(frozen=True)
class FuzzyVector:
    """Membership values over an ascending entity-id domain."""

    domain: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        domain = _check_domain(self.domain, "domain")
        values = as_truth_array(self.values, "values")
        if values.ndim != 1 or values.shape[0] != domain.shape[0]:
            raise ValueError("values must align one-to-one with domain")
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "values", values)

    @classmethod
    def ones(cls, domain: np.ndarray) -> "FuzzyVector":
        domain = _check_domain(np.asarray(domain), "domain")
        return cls(domain, np.ones(domain.shape[0]))

    def __len__(self) -> int:
        return int(self.domain.shape[0])

    def combined(self, other: "FuzzyVector | ArrayLike", kind: TNormKind | str) -> "FuzzyVector":
        """Return a new vector with `other` folded in by the t-norm; a
        FuzzyVector operand must live on the same domain."""
        if isinstance(other, FuzzyVector):
            if not np.array_equal(self.domain, other.domain):
                raise ValueError("cannot combine vectors over different domains")
            other = other.values
        return FuzzyVector(self.domain, tnorm(self.values, other, kind))


@dataclass(frozen=True)
class ScoreMatrix:
    """Truth values over the cross product of two entity-id domains."""

    row_domain: np.ndarray
    col_domain: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        rows = _check_domain(self.row_domain, "row_domain")
        cols = _check_domain(self.col_domain, "col_domain")
        values = as_truth_array(self.values, "values")
        if values.shape != (rows.shape[0], cols.shape[0]):
            raise ValueError(
                f"values shape {values.shape} does not match domains "
                f"({rows.shape[0]}, {cols.shape[0]})"
            )
        object.__setattr__(self, "row_domain", rows)
        object.__setattr__(self, "col_domain", cols)
        object.__setattr__(self, "values", values)


def max_reduce(m: ScoreMatrix, axis: str) -> tuple[FuzzyVector, np.ndarray]:
    """Maximize away one axis of a score matrix.

    axis="cols" keeps the rows: result[i] = max_j m[i, j];
    axis="rows" keeps the cols: result[j] = max_i m[i, j].
    Returns the surviving fuzzy vector plus the argmax index (first maximum,
    i.e. the smallest surviving id on ties) along the reduced axis.
    """
    if m.values.size == 0:
        raise ValueError("cannot max-reduce an empty matrix")
    if axis == "cols":
        values = m.values.max(axis=1)
        arg = m.values.argmax(axis=1)
        return FuzzyVector(m.row_domain, values), arg.astype(np.int64)
    if axis == "rows":
        values = m.values.max(axis=0)
        arg = m.values.argmax(axis=0)
        return FuzzyVector(m.col_domain, values), arg.astype(np.int64)
    raise ValueError(f"axis must be 'rows' or 'cols', got {axis!r}")
