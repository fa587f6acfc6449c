"""Brute-force reference values for small systems.

Qubit ``s`` is the ``s``-th tensor factor (most significant bit of a basis
index), matching ``np.kron`` ordering.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .lattice import FiniteT, LatticeGeometry, ModelParams, Projector, RunMode, build_lattice
from .tensors import ConnectionTensorKind, log_g, NEG_INF

MAX_DENSE_SITES = 12
MAX_SPARSE_SITES = 20
MAX_PAULI_SITES = 8

I2 = np.eye(2)
X = np.array([[0.0, 1.0], [1.0, 0.0]])
Y = np.array([[0.0, -1j], [1j, 0.0]])
Z = np.diag([1.0, -1.0])


def _check_sites(n: int, cap: int, what: str):
    if n > cap:
        raise ValueError(f"{what} is capped at N <= {cap}, got N={n}")


def build_dense_hamiltonian(geometry: LatticeGeometry, params: ModelParams, sparse: bool = False):
    """H = -J sum_<ij> Z_i Z_j - h sum_i X_i as a real symmetric matrix.

    Dense output up to 12 sites; ``sparse=True`` returns CSR and allows more.
    """
    n = geometry.n_sites
    _check_sites(n, MAX_SPARSE_SITES if sparse else MAX_DENSE_SITES, "Hamiltonian construction")
    dim = 2 ** n
    idx = np.arange(dim)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    spins = 1 - 2 * bits
    diag = np.zeros(dim)
    for i, j in geometry.bonds:
        diag -= params.J * spins[:, i] * spins[:, j]
    rows = [idx]
    cols = [idx]
    vals = [diag]
    if params.h != 0:
        for s in range(n):
            rows.append(idx)
            cols.append(idx ^ (1 << (n - 1 - s)))
            vals.append(np.full(dim, -params.h))
    H = scipy.sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                shape=(dim, dim)).tocsr()
    return H if sparse else H.toarray()


def tfim_ring_ground_energy(n: int, J: float, h: float) -> float:
    """Free-fermion ground energy of the periodic chain (even n)."""
    if n % 2:
        raise ValueError("closed form used here needs an even ring")
    k = np.pi * (2 * np.arange(n) + 1) / n
    eps = 2.0 * np.sqrt(J * J + h * h - 2.0 * J * h * np.cos(k))
    return float(-0.5 * eps.sum())


@dataclass
class GroundState:
    energy: float
    gap: float
    vector: np.ndarray
    degenerate: bool
    ground_space: np.ndarray
    anchored: np.ndarray  # |0...0> projected onto the ground space
    symmetric: np.ndarray  # Z2-even member of the ground space


def ground_state(H, tol: float = 1e-9, k: int = 6) -> GroundState:
    """Lowest eigenpair, gap to the next distinct level, and degeneracy data."""
    if scipy.sparse.issparse(H):
        k = min(k, H.shape[0] - 2)
        vals, vecs = scipy.sparse.linalg.eigsh(H, k=k, which="SA", tol=1e-12)
    else:
        vals, vecs = np.linalg.eigh(H)
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    e0 = vals[0]
    in_ground = np.abs(vals - e0) < tol
    higher = vals[~in_ground]
    if higher.size == 0:
        raise ValueError("could not resolve a gap; increase k")
    gap = float(higher[0] - e0)
    space = vecs[:, in_ground]
    dim = H.shape[0]
    zero = np.zeros(dim)
    zero[0] = 1.0
    anchored = space @ (space.T.conj() @ zero)
    sym_seed = zero.copy()
    sym_seed[-1] += 1.0
    symmetric = space @ (space.T.conj() @ sym_seed)
    anchored = anchored / np.linalg.norm(anchored) if np.linalg.norm(anchored) > 1e-12 else space[:, 0]
    symmetric = symmetric / np.linalg.norm(symmetric) if np.linalg.norm(symmetric) > 1e-12 else space[:, 0]
    return GroundState(float(e0), gap, vecs[:, 0], bool(in_ground.sum() > 1), space, anchored, symmetric)


def gibbs(H, beta: float) -> np.ndarray:
    H = H.toarray() if scipy.sparse.issparse(H) else np.asarray(H)
    _check_sites(int(round(math.log2(H.shape[0]))), MAX_DENSE_SITES, "Gibbs state")
    vals, vecs = np.linalg.eigh(H)
    w = np.exp(-beta * (vals - vals[0]))
    w /= w.sum()
    return (vecs * w) @ vecs.T.conj()


def log_partition(H, beta: float) -> float:
    H = H.toarray() if scipy.sparse.issparse(H) else np.asarray(H)
    vals = np.linalg.eigvalsh(H)
    return float(-beta * vals[0] + np.log(np.sum(np.exp(-beta * (vals - vals[0])))))


def projector_state(H, params: ModelParams, geometry: LatticeGeometry, m: int) -> np.ndarray:
    """Normalised (C - H)^m |0...0>, the state sampled by projector runs of length m."""
    shift = params.energy_shift(geometry)
    P = shift * scipy.sparse.identity(H.shape[0], format="csr") - (H if scipy.sparse.issparse(H) else scipy.sparse.csr_matrix(H))
    v = np.zeros(H.shape[0])
    v[0] = 1.0
    for _ in range(m):
        v = P @ v
        v /= np.linalg.norm(v)
    return v


def as_density(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state)
    if state.ndim == 1:
        return np.outer(state, state.conj())
    return state


def _n_qubits(rho: np.ndarray) -> int:
    n = int(round(math.log2(rho.shape[0])))
    if 2 ** n != rho.shape[0]:
        raise ValueError("dimension is not a power of two")
    return n


def pauli_expectations(state: np.ndarray) -> np.ndarray:
    """Tr[rho sigma] for all 4^N Pauli strings (real), indexed by (x, z) bit masks.

    Entry ``[x, z]`` belongs to i^{|x&z|} X^x Z^z. Each row is a Walsh-Hadamard
    transform of the ``x``-th off-diagonal of rho.
    """
    rho = as_density(state)
    n = _n_qubits(rho)
    _check_sites(n, MAX_PAULI_SITES, "Pauli enumeration")
    dim = 2 ** n
    j = np.arange(dim)
    xs = j[:, None]
    off = rho[j[None, :], j[None, :] ^ xs]  # off[x, j] = rho[j, j^x]
    had = scipy.linalg.hadamard(dim)  # had[z, j] = (-1)^{popcount(z&j)}
    tr = off @ had.T  # tr[x, z] = sum_j (-1)^{z.j} rho[j, j^x]
    pc = np.array([bin(v).count("1") for v in range(dim)])
    phase = (1j) ** pc[(xs & j[None, :])]
    return np.real(tr * phase)


def exact_m_n(state: np.ndarray, n: int) -> float:
    """First term of the stabilizer Renyi entropy: ln[sum_sigma Tr(rho sigma)^2n / 2^N] / (1-n)."""
    t = pauli_expectations(state)
    nq = _n_qubits(as_density(state))
    return float(np.log(np.sum(t ** (2 * n)) / 2 ** nq) / (1 - n))


def exact_s_n(state: np.ndarray, n: int) -> float:
    rho = as_density(state)
    _check_sites(_n_qubits(rho), MAX_DENSE_SITES, "Renyi entropy")
    p = np.clip(np.linalg.eigvalsh(rho), 0.0, None)
    p = p / p.sum()
    return float(np.log(np.sum(p ** n)) / (1 - n))


def exact_sre(state: np.ndarray, n: int) -> float:
    """Stabilizer Renyi entropy with the mixedness term subtracted."""
    return exact_m_n(state, n) - exact_s_n(state, n)


def exact_pre(state: np.ndarray, n: int) -> float:
    """Participation Renyi entropy of the computational-basis distribution."""
    state = np.asarray(state)
    p = np.abs(state) ** 2 if state.ndim == 1 else np.real(np.diag(state))
    p = p / p.sum()
    return float(np.log(np.sum(p ** n)) / (1 - n))


def partial_transpose(rho: np.ndarray, region: Iterable[int]) -> np.ndarray:
    n = _n_qubits(rho)
    t = rho.reshape((2,) * (2 * n))
    axes = list(range(2 * n))
    for s in region:
        if not 0 <= s < n:
            raise ValueError(f"site {s} outside the system")
        axes[s], axes[n + s] = axes[n + s], axes[s]
    return t.transpose(axes).reshape(rho.shape)


def exact_ern(state: np.ndarray, region: Sequence[int], n: int) -> float:
    """Renyi negativity ln{Tr[(rho^T_A)^n] / Tr[rho^n]} / (1-n)."""
    rho = as_density(state)
    _check_sites(_n_qubits(rho), MAX_DENSE_SITES, "Renyi negativity")
    num = np.sum(np.linalg.eigvalsh(partial_transpose(rho, region)) ** n)
    den = np.sum(np.linalg.eigvalsh(rho) ** n)
    return float(np.log(num / den) / (1 - n))


def partial_trace(rho: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    n = _n_qubits(rho)
    keep = sorted(keep)
    trace_out = [s for s in range(n) if s not in keep]
    t = rho.reshape((2,) * (2 * n))
    for k, s in enumerate(sorted(trace_out, reverse=True)):
        cur = t.ndim // 2
        t = np.trace(t, axis1=s, axis2=s + cur)
    d = 2 ** len(keep)
    return t.reshape(d, d)


# ---------------------------------------------------------------------------
# replica partition functions


def sampled_operator(geometry: LatticeGeometry, params: ModelParams, mode: RunMode) -> np.ndarray:
    """Unnormalised operator A whose replicas the sampler couples.

    Finite T: exp(-beta H). Projector: (C-H)^m |0><0| (C-H)^m, with the same
    shift C as the SSE vertices (normalised, since only ratios matter).
    """
    H = build_dense_hamiltonian(geometry, params)
    if isinstance(mode, FiniteT):
        vals, vecs = np.linalg.eigh(H)
        return (vecs * np.exp(-mode.beta * vals)) @ vecs.T
    v = projector_state(H, params, geometry, mode.m)
    return np.outer(v, v)


def _subset_mask(n: int, B: Iterable[int]) -> int:
    mask = 0
    for s in B:
        if not 0 <= s < n:
            raise ValueError(f"site {s} outside the system")
        mask |= 1 << (n - 1 - s)
    return mask


def _zb_from_operator(A: np.ndarray, n_sites: int, n: int, B: Sequence[int],
                      kind: ConnectionTensorKind, pauli=None) -> float:
    B = sorted(set(B))
    kind = ConnectionTensorKind(kind)
    if kind == ConnectionTensorKind.SRE:
        t = pauli_expectations(A) if pauli is None else pauli
        mask = _subset_mask(n_sites, B)
        dim = 2 ** n_sites
        xs = np.arange(dim)
        ok = (xs & ~mask) == 0
        sel = t[np.ix_(ok, ok)]
        return float(np.sum(sel ** (2 * n)) / 2 ** len(B))
    reduced = partial_trace(A, B) if B else np.array([[np.trace(A).real]])
    if kind == ConnectionTensorKind.ERE:
        vals = np.linalg.eigvalsh(reduced)
        return float(np.sum(vals ** n))
    if kind == ConnectionTensorKind.PRE:
        return float(np.sum(np.real(np.diag(reduced)) ** n))
    raise ValueError(f"no replica partition function for {kind.name}")


def exact_zb(geometry: LatticeGeometry, params: ModelParams, mode: RunMode, n: Optional[int],
             B: Sequence[int], kind: ConnectionTensorKind = ConnectionTensorKind.SRE) -> float:
    """Replica partition function Z_B for the coupling tensor ``kind``.

    Magic tensor: 2^{-N_B} sum over Pauli strings supported on B of Tr[A sigma]^{2n}.
    Cyclic tensor: Tr[(Tr_{not B} A)^n]. Diagonal tensor: sum_z <z|Tr_{not B} A|z>^n.
    """
    n = params.renyi_n if n is None else n
    nsites = geometry.n_sites
    _check_sites(nsites, MAX_PAULI_SITES, "replica partition functions")
    A = sampled_operator(geometry, params, mode)
    return _zb_from_operator(A, nsites, n, B, kind)


def exact_nb_weights(geometry: LatticeGeometry, params: ModelParams, mode: RunMode, n: Optional[int],
                     kind: ConnectionTensorKind = ConnectionTensorKind.SRE) -> np.ndarray:
    """W[k] = sum_{|B|=k} Z_B for k = 0..N (the lambda-independent part of P(N_B))."""
    n = params.renyi_n if n is None else n
    nsites = geometry.n_sites
    _check_sites(nsites, MAX_PAULI_SITES, "replica partition functions")
    A = sampled_operator(geometry, params, mode)
    pauli = pauli_expectations(A) if ConnectionTensorKind(kind) == ConnectionTensorKind.SRE else None
    out = np.zeros(nsites + 1)
    for k in range(nsites + 1):
        for B in itertools.combinations(range(nsites), k):
            out[k] += _zb_from_operator(A, nsites, n, B, kind, pauli)
    return out


def exact_nb_distribution(geometry, params, mode, n, lam: float,
                          kind: ConnectionTensorKind = ConnectionTensorKind.SRE) -> np.ndarray:
    """Stationary P(N_B) of the lambda ensemble, proportional to g(lambda, N_B) sum Z_B."""
    w = exact_nb_weights(geometry, params, mode, n, kind)
    nsites = geometry.n_sites
    p = np.zeros(nsites + 1)
    for k in range(nsites + 1):
        lg = log_g(lam, k, nsites)
        p[k] = 0.0 if lg is NEG_INF else math.exp(lg) * w[k]
    return p / p.sum()


def exact_z_lambda(geometry, params, mode, n, lam: float,
                   kind: ConnectionTensorKind = ConnectionTensorKind.SRE) -> float:
    w = exact_nb_weights(geometry, params, mode, n, kind)
    total = 0.0
    for k, wk in enumerate(w):
        lg = log_g(lam, k, geometry.n_sites)
        if lg is not NEG_INF:
            total += math.exp(lg) * wk
    return total


# ---------------------------------------------------------------------------
# targets for a whole run


def model_state(geometry: LatticeGeometry, params: ModelParams, mode: RunMode, anchored: bool = True):
    """Density matrix (finite T) or state vector (projector) the sampler targets.

    For projector mode the limit m -> infinity is returned: the ground state, or
    with a degenerate ground space the projection of |0...0> onto it
    (``anchored=False`` gives the Z2-symmetric member instead).
    """
    sparse = geometry.n_sites > MAX_DENSE_SITES
    H = build_dense_hamiltonian(geometry, params, sparse=sparse)
    if isinstance(mode, FiniteT):
        return gibbs(H, mode.beta)
    gs = ground_state(H)
    if gs.degenerate:
        return gs.anchored if anchored else gs.symmetric
    return gs.vector


def exact_quantity(geometry: LatticeGeometry, params: ModelParams, mode: RunMode, quantity: str,
                   finite_m: bool = False) -> dict:
    """Exact value of ``quantity`` (sre, ere or pre) with the related numbers.

    ``finite_m`` evaluates the projector state at the configured m instead of
    the ground state.
    """
    n = params.renyi_n
    if isinstance(mode, Projector) and finite_m:
        H = build_dense_hamiltonian(geometry, params)
        state = projector_state(H, params, geometry, mode.m)
    else:
        state = model_state(geometry, params, mode)
    out = {}
    q = quantity.lower()
    if q == "sre":
        mn = exact_m_n(state, n)
        sn = exact_s_n(state, n)
        out.update(estimate=mn, m_n=mn, s_n=sn, sre_tilde=mn - sn)
    elif q == "ere":
        sn = exact_s_n(state, n)
        out.update(estimate=sn, s_n=sn)
    elif q == "pre":
        out.update(estimate=exact_pre(state if np.ndim(state) == 1 else state, n))
    else:
        raise ValueError(f"unknown quantity {quantity!r}")
    return out


# ---------------------------------------------------------------------------
# stabilizer mixtures


def _pauli_string(labels: str) -> np.ndarray:
    mats = {"I": I2, "X": X, "Y": Y, "Z": Z}
    out = np.array([[1.0]])
    for c in labels:
        out = np.kron(out, mats[c])
    return out


def stabilizer_code_state(generators: Sequence[str], logicals: Sequence[str], signs: Sequence[int]) -> np.ndarray:
    """Projector onto the joint +1 eigenspace of generators and signed logical Zs."""
    n = len(generators[0])
    rho = np.eye(2 ** n, dtype=complex)
    for g in generators:
        rho = rho @ (np.eye(2 ** n) + _pauli_string(g)) / 2
    for lz, s in zip(logicals, signs):
        rho = rho @ (np.eye(2 ** n) + s * _pauli_string(lz)) / 2
    return rho / np.trace(rho)


def ghz_state(n: int) -> np.ndarray:
    v = np.zeros(2 ** n)
    v[0] = v[-1] = 1 / np.sqrt(2)
    return v


def stabilizer_fixture_checks(tol: float = 1e-9) -> dict:
    """Mixed stabilizer states with known magic.

    Traced GHZ and equal code mixtures carry no magic once the mixedness is
    subtracted; an unequal mixture of the same codes does.
    """
    report = {}
    ghz_a = partial_trace(as_density(ghz_state(3)), [0, 1])
    report["ghz3_traced"] = exact_sre(ghz_a, 2)
    codes = [stabilizer_code_state(["ZZ"], ["ZI"], [s]) for s in (1, -1)]
    report["equal_code_mixture"] = exact_sre(0.5 * codes[0] + 0.5 * codes[1], 2)
    report["unequal_code_mixture"] = exact_sre(0.9 * codes[0] + 0.1 * codes[1], 2)
    xcodes = [stabilizer_code_state(["XXX", "ZZI"], ["ZIZ"], [s]) for s in (1, -1)]
    report["equal_x_code_mixture"] = exact_sre(0.5 * xcodes[0] + 0.5 * xcodes[1], 2)
    report["passed"] = (abs(report["ghz3_traced"]) < tol and abs(report["equal_code_mixture"]) < tol
                        and abs(report["equal_x_code_mixture"]) < tol
                        and report["unequal_code_mixture"] > tol)
    return report


# ---------------------------------------------------------------------------
# projector-length inputs


def projector_spectrum(geometry: LatticeGeometry, params: ModelParams) -> dict:
    """Spectral inputs of the projector-length bound for the shifted operator C - H.

    Returns the shifted |E_g| = C - E_g, the gap, and r0 = |c_e / c_g| with
    c the overlaps of |0...0> with the ground and first excited states.
    """
    sparse = geometry.n_sites > MAX_DENSE_SITES
    H = build_dense_hamiltonian(geometry, params, sparse=sparse)
    if sparse:
        vals, vecs = scipy.sparse.linalg.eigsh(H, k=4, which="SA", tol=1e-12)
    else:
        vals, vecs = np.linalg.eigh(H)
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    gap = float(vals[1] - vals[0])
    c_g, c_e = abs(vecs[0, 0]), abs(vecs[0, 1])
    r0 = c_e / c_g if c_g > 1e-14 else math.inf
    return {"e_g": float(vals[0]), "shifted_e_g": float(params.energy_shift(geometry) - vals[0]),
            "gap": gap, "r0": float(r0)}
