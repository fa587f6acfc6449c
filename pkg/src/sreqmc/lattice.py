"""Lattice geometries and transverse-field Ising model parameters."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

PERIODIC = "periodic"
OPEN = "open"


@dataclass(frozen=True)
class LatticeGeometry:
    """Sites and nearest-neighbour bonds of a 1D chain or 2D rectangular lattice.

    Sites are indexed row-major over ``dims``. ``bonds`` is an ``(Nb, 2)`` int64
    array with ``i < j`` in every row, sorted lexicographically.
    """

    dims: tuple
    bc: tuple
    bonds: np.ndarray = field(repr=False)

    def __post_init__(self):
        bonds = np.asarray(self.bonds, dtype=np.int64).reshape(-1, 2)
        bonds.setflags(write=False)
        object.__setattr__(self, "bonds", bonds)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "bc", tuple(self.bc))
        if len(self.dims) != len(self.bc):
            raise ValueError("dims and bc must have equal length")
        n = self.n_sites
        if bonds.size:
            if bonds.min() < 0 or bonds.max() >= n:
                raise ValueError("bond references an invalid site")
            if np.any(bonds[:, 0] == bonds[:, 1]):
                raise ValueError("self-bond")
            canon = {tuple(sorted(b)) for b in bonds.tolist()}
            if len(canon) != len(bonds):
                raise ValueError("duplicate bond")

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_bonds(self) -> int:
        return int(self.bonds.shape[0])

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_sites, dtype=np.int64)
        np.add.at(deg, self.bonds.ravel(), 1)
        return deg

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "bc": list(self.bc)}

    def __eq__(self, other):
        if not isinstance(other, LatticeGeometry):
            return NotImplemented
        return (self.dims == other.dims and self.bc == other.bc
                and np.array_equal(self.bonds, other.bonds))

    def __hash__(self):
        return hash((self.dims, self.bc, self.bonds.tobytes()))


def build_lattice(dims: Sequence[int], bc: Union[str, Sequence[str]] = PERIODIC) -> LatticeGeometry:
    """Build a nearest-neighbour chain (``len(dims) == 1``) or rectangle (``2``).

    ``bc`` is one flag per dimension (a single string applies to all). Periodic
    dimensions need length >= 3 so that no bond is generated twice.
    """
    dims = [int(d) for d in dims]
    if not 1 <= len(dims) <= 2:
        raise ValueError(f"only 1D and 2D lattices are supported, got dims={dims}")
    if isinstance(bc, str):
        bc = [bc] * len(dims)
    bc = [str(b).lower() for b in bc]
    if len(bc) != len(dims):
        raise ValueError("need one boundary flag per dimension")
    for d, b in zip(dims, bc):
        if b not in (PERIODIC, OPEN):
            raise ValueError(f"unknown boundary condition {b!r}")
        if d < 2:
            raise ValueError(f"every dimension must have length >= 2, got {d}")
        if b == PERIODIC and d < 3:
            raise ValueError("a periodic dimension of length 2 would double its bonds")

    strides = [int(np.prod(dims[k + 1:])) for k in range(len(dims))]
    bonds = set()
    for coord in itertools.product(*[range(d) for d in dims]):
        i = sum(c * s for c, s in zip(coord, strides))
        for axis, (d, b) in enumerate(zip(dims, bc)):
            c = coord[axis] + 1
            if c == d:
                if b == OPEN:
                    continue
                c = 0
            nb = list(coord)
            nb[axis] = c
            j = sum(x * s for x, s in zip(nb, strides))
            bonds.add((min(i, j), max(i, j)))
    arr = np.array(sorted(bonds), dtype=np.int64).reshape(-1, 2)
    return LatticeGeometry(tuple(dims), tuple(bc), arr)


def single_site() -> LatticeGeometry:
    """One isolated spin; handy for brute-force checks of the driver."""
    return LatticeGeometry((1,), (OPEN,), np.zeros((0, 2), dtype=np.int64))


@dataclass(frozen=True)
class ModelParams:
    """H = -J sum_<ij> Z_i Z_j - h sum_i X_i and the Renyi order n."""

    J: float = 1.0
    h: float = 1.0
    renyi_n: int = 2

    def __post_init__(self):
        if not self.J > 0:
            raise ValueError("J must be positive (sign-problem-free regime)")
        if not self.h >= 0:
            raise ValueError("h must be non-negative")
        if int(self.renyi_n) != self.renyi_n or self.renyi_n < 2:
            raise ValueError("renyi_n must be an integer >= 2")

    def energy_shift(self, geometry: LatticeGeometry) -> float:
        """Constant C with C - H = sum of non-negative SSE vertex operators."""
        return geometry.n_bonds * self.J + geometry.n_sites * self.h


@dataclass(frozen=True)
class FiniteT:
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class Projector:
    """Ground-state projection (C - H)^m |0...0> with m operators per side."""

    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be a positive integer")


RunMode = Union[FiniteT, Projector]


def mode_to_dict(mode: RunMode) -> dict:
    if isinstance(mode, FiniteT):
        return {"beta": mode.beta}
    return {"m": mode.m}
