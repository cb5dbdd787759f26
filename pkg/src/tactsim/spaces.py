"""Tensor-product Hilbert space descriptors.

A space is an ordered list of factors; the basis is row-major over the
factors in the declared order, so the first factor varies slowest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadFactor, DimensionOverflow

DEFAULT_DIMENSION_CAP = 4_000_000


@dataclass(frozen=True)
class AtomLevels:
    """n atoms with d internal levels each; dimension d**n."""

    d: int
    n: int

    @property
    def dimension(self) -> int:
        return self.d**self.n

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise BadFactor(f"AtomLevels({self.d}, {self.n}): need d, n >= 1")


@dataclass(frozen=True)
class Fock:
    """Bosonic mode truncated at photon number n_max; dimension n_max + 1."""

    n_max: int

    @property
    def dimension(self) -> int:
        return self.n_max + 1

    def __post_init__(self):
        if self.n_max < 0:
            raise BadFactor(f"Fock({self.n_max}): need n_max >= 0")


@dataclass(frozen=True)
class Dicke:
    """Single collective-spin sector of total spin S; dimension 2S + 1.

    Basis states are |S, m> ordered by m = S, S-1, ..., -S.
    """

    S: float

    @property
    def dimension(self) -> int:
        return round(2 * self.S) + 1

    def __post_init__(self):
        two_s = 2 * self.S
        if two_s < 0 or abs(two_s - round(two_s)) > 1e-12:
            raise BadFactor(f"Dicke(S={self.S}): 2S must be a non-negative integer")


Factor = AtomLevels | Fock | Dicke


@dataclass(frozen=True)
class HilbertSpace:
    factors: tuple[Factor, ...]

    @property
    def factor_dims(self) -> tuple[int, ...]:
        return tuple(f.dimension for f in self.factors)

    @property
    def dimension(self) -> int:
        return math.prod(self.factor_dims)

    def index(self, multi: tuple[int, ...]) -> int:
        """Flat basis index of a multi-index over the factors (row-major)."""
        dims = self.factor_dims
        if len(multi) != len(dims):
            raise BadFactor(f"multi-index length {len(multi)} != {len(dims)} factors")
        flat = 0
        for i, d in zip(multi, dims):
            if not 0 <= i < d:
                raise BadFactor(f"multi-index {multi} out of range for dims {dims}")
            flat = flat * d + i
        return flat

    def multi_index(self, flat: int) -> tuple[int, ...]:
        """Inverse of index(); round-trips exactly."""
        if not 0 <= flat < self.dimension:
            raise BadFactor(f"flat index {flat} out of range for dimension {self.dimension}")
        out = []
        for d in reversed(self.factor_dims):
            out.append(flat % d)
            flat //= d
        return tuple(reversed(out))

    def basis_state(self, multi: tuple[int, ...]) -> np.ndarray:
        psi = np.zeros(self.dimension, dtype=complex)
        psi[self.index(multi)] = 1.0
        return psi


def make_space(factors, cap: int = DEFAULT_DIMENSION_CAP) -> HilbertSpace:
    """Build a HilbertSpace, failing fast if the dimension exceeds the cap."""
    factors = tuple(factors)
    dim = math.prod(f.dimension for f in factors)
    if dim > cap:
        raise DimensionOverflow(f"dimension {dim} exceeds cap {cap}")
    return HilbertSpace(factors)
