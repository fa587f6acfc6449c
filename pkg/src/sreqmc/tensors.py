"""Replica-coupling tensors evaluated as closed-form predicates on spin patterns.

A slice pattern lists, for one lattice site, the spin of every replica just
below the coupling slice (``in_legs``) and just above it (``out_legs``).
Nothing here materialises a dense tensor.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._backend import jit


class ConnectionTensorKind(enum.IntEnum):
    """Integer values double as kernel codes."""

    SRE = 0  # sum over {I,X,Y,Z} of sigma^{(x) 2n}
    ERE = 1  # cyclic replica permutation
    PRE = 2  # projector onto all-equal legs
    ERN = 3  # anti-cyclic permutation (oracle only)
    IDENTITY = 4


def replicas_for(kind: ConnectionTensorKind, n: int) -> int:
    """Number of coupled replicas: 2n for the magic tensor, n otherwise."""
    return 2 * n if ConnectionTensorKind(kind) == ConnectionTensorKind.SRE else n


@dataclass(frozen=True)
class SlicePattern:
    n: int
    in_legs: tuple
    out_legs: tuple

    def __post_init__(self):
        object.__setattr__(self, "in_legs", tuple(int(b) for b in self.in_legs))
        object.__setattr__(self, "out_legs", tuple(int(b) for b in self.out_legs))
        if len(self.in_legs) != len(self.out_legs):
            raise ValueError("in_legs and out_legs must have equal length")
        if any(b not in (0, 1) for b in self.in_legs + self.out_legs):
            raise ValueError("legs are bits")

    @property
    def legs(self) -> int:
        return len(self.in_legs)


def sre_entry(pattern: SlicePattern) -> int:
    """Element of sum_sigma sigma^{(x) 2n}; always 0 or 2.

    I and Z contribute on diagonal patterns (in == out), X and Y on fully
    anti-diagonal ones (in == NOT out). The Y product carries (-1)^(n + sum in),
    so the anti-diagonal parity condition depends on n.
    """
    if pattern.legs != 2 * pattern.n:
        raise ValueError(f"need 2n={2 * pattern.n} legs, got {pattern.legs}")
    s = sum(pattern.in_legs)
    if pattern.in_legs == pattern.out_legs:
        return 2 if s % 2 == 0 else 0
    if all(a != b for a, b in zip(pattern.in_legs, pattern.out_legs)):
        return 2 if (s + pattern.n) % 2 == 0 else 0
    return 0


def ere_entry(pattern: SlicePattern) -> int:
    """Cyclic shift: delta(j_1,k_2) delta(j_2,k_3) ... delta(j_r,k_1)."""
    j, k = pattern.in_legs, pattern.out_legs
    r = len(j)
    return int(all(j[i] == k[(i + 1) % r] for i in range(r)))


def ern_entry(pattern: SlicePattern) -> int:
    """Anti-cyclic shift: delta(j_1,k_r) delta(j_2,k_1) ... delta(j_r,k_{r-1})."""
    j, k = pattern.in_legs, pattern.out_legs
    r = len(j)
    return int(all(j[i] == k[(i - 1) % r] for i in range(r)))


def pre_entry(pattern: SlicePattern) -> int:
    legs = pattern.in_legs + pattern.out_legs
    return int(all(b == legs[0] for b in legs))


def identity_entry(pattern: SlicePattern) -> int:
    return int(pattern.in_legs == pattern.out_legs)


_ENTRY = {
    ConnectionTensorKind.SRE: sre_entry,
    ConnectionTensorKind.ERE: ere_entry,
    ConnectionTensorKind.ERN: ern_entry,
    ConnectionTensorKind.PRE: pre_entry,
    ConnectionTensorKind.IDENTITY: identity_entry,
}


def tensor_entry(kind: ConnectionTensorKind, pattern: SlicePattern) -> int:
    return _ENTRY[ConnectionTensorKind(kind)](pattern)


def is_connectable(pattern: SlicePattern, kind: ConnectionTensorKind = ConnectionTensorKind.SRE) -> bool:
    return tensor_entry(kind, pattern) != 0


def tensor_normalization(kind: ConnectionTensorKind) -> float:
    """Per-site prefactor of a connected site (the magic tensor carries 1/2)."""
    return 0.5 if ConnectionTensorKind(kind) == ConnectionTensorKind.SRE else 1.0


def dense_tensor(kind: ConnectionTensorKind, n: int, legs: int) -> np.ndarray:
    """Dense ``(2**legs, 2**legs)`` matrix <in|T|out>, for small oracle contractions.

    Leg 0 is the most significant bit of the row/column index.
    """
    dim = 2 ** legs
    out = np.zeros((dim, dim))
    bits = [tuple((x >> (legs - 1 - i)) & 1 for i in range(legs)) for x in range(dim)]
    for a in range(dim):
        for b in range(dim):
            out[a, b] = tensor_entry(kind, SlicePattern(n, bits[a], bits[b]))
    return out


@dataclass(frozen=True)
class ConnectionSet:
    mask: tuple

    @classmethod
    def from_mask(cls, mask: Sequence) -> "ConnectionSet":
        return cls(tuple(bool(b) for b in mask))

    @property
    def n_connected(self) -> int:
        return sum(self.mask)

    @property
    def n_sites(self) -> int:
        return len(self.mask)


# ---------------------------------------------------------------------------
# log of the interpolation weight g(lambda, N_B) = lambda^N_B (1-lambda)^(N-N_B)


class SentinelArithmeticError(ArithmeticError):
    pass


class _NegInf:
    """Marks an exactly-zero weight. Comparable, but refuses arithmetic."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NEG_INF"

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("sreqmc.NEG_INF")

    def __lt__(self, other):
        return other is not self

    def __le__(self, other):
        return True

    def __gt__(self, other):
        return False

    def __ge__(self, other):
        return other is self

    def _refuse(self, *args):
        raise SentinelArithmeticError("arithmetic on a zero-weight (-inf) sentinel")

    __add__ = __radd__ = __sub__ = __rsub__ = _refuse
    __mul__ = __rmul__ = __truediv__ = __rtruediv__ = _refuse
    __neg__ = __pos__ = __abs__ = __float__ = _refuse


NEG_INF = _NegInf()


def log_g(lam: float, n_b: int, n: int):
    """ln[lambda^n_b (1 - lambda)^(n - n_b)], or ``NEG_INF`` if the weight is zero."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if not 0 <= n_b <= n:
        raise ValueError(f"need 0 <= n_b <= n, got n_b={n_b}, n={n}")
    if (lam == 0.0 and n_b > 0) or (lam == 1.0 and n_b < n):
        return NEG_INF
    return _log_g(lam, n_b, n)


# ---------------------------------------------------------------------------
# kernel versions operating on (R, N) slice arrays


@jit
def _log_g(lam, n_b, n):
    # float -inf at the zero-weight endpoints, identically in both backends
    out = 0.0
    if n_b > 0:
        out += n_b * math.log(lam) if lam > 0.0 else -math.inf
    if n - n_b > 0:
        out += (n - n_b) * math.log1p(-lam) if lam < 1.0 else -math.inf
    return out


@jit
def slice_identity_ok(below, above, s):
    for r in range(below.shape[0]):
        if below[r, s] != above[r, s]:
            return False
    return True


@jit
def slice_nonzero(kind, renyi_n, below, above, s):
    """Nonzero test of the connection tensor at site ``s`` (kernel codes)."""
    R = below.shape[0]
    if kind == 0:
        diag = True
        anti = True
        par = 0
        for r in range(R):
            if below[r, s] == above[r, s]:
                anti = False
            else:
                diag = False
            par += below[r, s]
        if diag:
            return par % 2 == 0
        if anti:
            return (par + renyi_n) % 2 == 0
        return False
    elif kind == 1:
        for r in range(R):
            if below[r, s] != above[(r + 1) % R, s]:
                return False
        return True
    elif kind == 2:
        v = below[0, s]
        for r in range(R):
            if below[r, s] != v or above[r, s] != v:
                return False
        return True
    elif kind == 3:
        for r in range(R):
            if below[r, s] != above[(r - 1) % R, s]:
                return False
        return True
    return slice_identity_ok(below, above, s)
