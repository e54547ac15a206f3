"""User-specified basis functions for the density ratio model."""

import math
from dataclasses import dataclass
from typing import Callable, Dict, Tuple, Union

import numpy as np
from scipy import stats

from .exceptions import DomainError, ValidationError


def _log(x: np.ndarray) -> np.ndarray:
    if np.any(x <= 0):
        raise DomainError("Basis term 'logx' needs positive data")
    return np.log(x)


_TERMS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "x": lambda x: x,
    "x2": lambda x: x * x,
    "logx": _log,
    "log1p_abs": lambda x: np.log1p(np.abs(x)),
    "sqrt_abs": lambda x: np.sqrt(np.abs(x)),
}

RICH_TERMS = ("sqrt_abs", "x", "x2", "log1p_abs")


@dataclass(frozen=True)
class FixedBasis:
    """A basis built from named terms.

    Terms are ``x``, ``x2``, ``logx``, ``log1p_abs``, ``sqrt_abs`` and
    ``normpdf:<c>`` (the standard normal density shifted to c).

    Attributes:
        terms: Term names, one per basis coordinate
    """

    terms: Tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.terms:
            raise ValidationError("A fixed basis needs at least one term")
        for term in self.terms:
            _term_function(term)

    @property
    def d(self) -> int:
        return len(self.terms)

    def __call__(self, x: Union[float, np.ndarray]) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.column_stack([_term_function(t)(x) for t in self.terms])

    @property
    def spec(self) -> str:
        return "poly:" + ",".join(self.terms)


def _term_function(term: str) -> Callable[[np.ndarray], np.ndarray]:
    if term in _TERMS:
        return _TERMS[term]
    if term.startswith("normpdf:"):
        try:
            center = float(term.split(":", 1)[1])
        except ValueError:
            raise ValidationError(f"Bad normpdf center in basis term {term!r}")
        if not math.isfinite(center):
            raise ValidationError(f"Bad normpdf center in basis term {term!r}")
        return lambda x: stats.norm.pdf(x - center)
    raise ValidationError(
        f"Unknown basis term {term!r}; use x, x2, logx, log1p_abs, sqrt_abs or "
        "normpdf:<c>"
    )


def rich_basis() -> FixedBasis:
    """The broad-coverage basis (|x|^(1/2), x, x^2, log(1 + |x|))."""
    return FixedBasis(RICH_TERMS)


def parse_basis_spec(spec: str) -> FixedBasis:
    """Parse ``rich`` or ``poly:<term>,<term>,...``.

    Example:
        ```python
        basis = parse_basis_spec("poly:x,logx")
        basis(np.array([1.0, 2.0]))  # 2 x 2 matrix
        ```
    """
    spec = spec.strip()
    if spec == "rich":
        return rich_basis()
    if not spec.startswith("poly:"):
        raise ValidationError(f"Basis spec must be 'rich' or 'poly:<terms>', got {spec!r}")
    terms = tuple(t.strip() for t in spec[len("poly:"):].split(",") if t.strip())
    return FixedBasis(terms)
