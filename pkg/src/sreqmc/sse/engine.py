"""Replica configurations and the update operations acting on them."""
from __future__ import annotations

import copy
import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..lattice import FiniteT, LatticeGeometry, ModelParams, Projector, RunMode, mode_to_dict
from ..tensors import (ConnectionTensorKind, SlicePattern, log_g, replicas_for, tensor_entry,
                       tensor_normalization, NEG_INF)
from . import kernels as K

INITIAL_LENGTH = 16
DEFAULT_THERMALIZE = 200


@dataclass
class ReplicaConfig:
    """Extended configuration: operator strings of every replica, slice spins, B.

    Mutated in place by the update functions. ``rng`` is the generator that
    drives this configuration; copying the config copies the generator state.
    """

    geometry: LatticeGeometry
    params: ModelParams
    mode: RunMode
    kind: ConnectionTensorKind
    optype: np.ndarray
    opidx: np.ndarray
    nops: np.ndarray
    above: np.ndarray
    connected: np.ndarray
    rng: np.random.Generator = field(repr=False)

    @property
    def n_replicas(self) -> int:
        return self.above.shape[0]

    @property
    def n_sites(self) -> int:
        return self.geometry.n_sites

    @property
    def renyi_n(self) -> int:
        return self.params.renyi_n

    @property
    def finite(self) -> bool:
        return isinstance(self.mode, FiniteT)

    @property
    def beta(self) -> float:
        return self.mode.beta if self.finite else 0.0

    @property
    def m(self) -> int:
        return 0 if self.finite else self.mode.m

    @property
    def length(self) -> int:
        return self.optype.shape[1]

    @property
    def n_connected(self) -> int:
        return int(self.connected.sum())

    @property
    def op_count(self) -> int:
        return int(self.nops.sum())

    def below(self) -> np.ndarray:
        out = np.empty_like(self.above)
        K.propagate_below(self.optype, self.opidx, self.above, self.finite, self.m, out)
        return out

    def slice_pattern(self, site: int) -> SlicePattern:
        below = self.below()
        return SlicePattern(self.renyi_n, below[:, site], self.above[:, site])

    def kernel_args(self):
        """Static arguments shared by the update kernels."""
        return (self.geometry.bonds, float(self.params.h), float(self.params.J),
                float(self.beta), self.finite, int(self.m))

    def copy(self) -> "ReplicaConfig":
        out = copy.copy(self)
        for name in ("optype", "opidx", "nops", "above", "connected"):
            setattr(out, name, getattr(self, name).copy())
        out.rng = copy.deepcopy(self.rng)
        return out

    def arrays(self):
        return self.optype, self.opidx, self.nops, self.above, self.connected


def _empty_arrays(n_rep: int, n_sites: int, length: int):
    return (np.zeros((n_rep, length), np.int8), np.zeros((n_rep, length), np.int64),
            np.zeros(n_rep, np.int64), np.zeros((n_rep, n_sites), np.int8),
            np.zeros(n_sites, np.int8))


def init_config(geometry: LatticeGeometry, params: ModelParams, mode: RunMode, n: Optional[int] = None,
                seed: Union[int, np.random.Generator, None] = 0,
                kind: ConnectionTensorKind = ConnectionTensorKind.SRE,
                thermalize: int = DEFAULT_THERMALIZE) -> ReplicaConfig:
    """Fresh configuration with B empty, every replica thermalised on its own.

    The projector trial state is |0...0> at both time ends.
    """
    if n is not None and n != params.renyi_n:
        params = ModelParams(params.J, params.h, int(n))
    kind = ConnectionTensorKind(kind)
    if kind == ConnectionTensorKind.IDENTITY:
        raise ValueError("use a coupling tensor kind, not IDENTITY")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_rep = replicas_for(kind, params.renyi_n)
    nsites = geometry.n_sites
    if isinstance(mode, FiniteT):
        arrays = _empty_arrays(n_rep, nsites, INITIAL_LENGTH)
        arrays[3][:] = rng.integers(0, 2, size=(n_rep, nsites), dtype=np.int8)
    else:
        arrays = _empty_arrays(n_rep, nsites, 2 * mode.m)
        optype, opidx, nops = arrays[:3]
        if params.h > 0:
            optype[:] = K.OP_SITE
            opidx[:] = rng.integers(0, nsites, size=optype.shape)
        else:
            optype[:] = K.OP_BOND
            opidx[:] = rng.integers(0, geometry.n_bonds, size=optype.shape)
        nops[:] = optype.shape[1]
    cfg = ReplicaConfig(geometry, params, mode, kind, *arrays, rng=rng)
    if thermalize:
        config_sweeps(cfg, thermalize)
    return cfg


def diagonal_update(cfg: ReplicaConfig) -> ReplicaConfig:
    """One diagonal sweep over all replicas; grows finite-T lists if crowded."""
    bonds, h, J, beta, finite, m = cfg.kernel_args()
    K.diagonal_update(cfg.optype, cfg.opidx, cfg.nops, cfg.above, bonds, h, J, beta, finite, m, cfg.rng)
    if finite:
        new_m = K.target_length(cfg.nops, cfg.length)
        if new_m != cfg.length:
            cfg.optype, cfg.opidx = K.grow_oplists(cfg.optype, cfg.opidx, cfg.nops, new_m, cfg.rng)
    return cfg


def cluster_update(cfg: ReplicaConfig) -> ReplicaConfig:
    bonds, h, J, beta, finite, m = cfg.kernel_args()
    K.cluster_update(cfg.optype, cfg.opidx, cfg.above, cfg.connected, int(cfg.kind), cfg.renyi_n,
                     bonds, finite, m, cfg.rng)
    return cfg


def config_sweeps(cfg: ReplicaConfig, nsweeps: int = 1) -> ReplicaConfig:
    """``nsweeps`` rounds of diagonal + cluster updates at fixed B."""
    bonds, h, J, beta, finite, m = cfg.kernel_args()
    cfg.optype, cfg.opidx = K.config_sweeps(cfg.optype, cfg.opidx, cfg.nops, cfg.above, cfg.connected,
                                            bonds, h, J, beta, finite, m, int(cfg.kind), cfg.renyi_n,
                                            int(nsweeps), cfg.rng)
    return cfg


def equilibrate(cfg: ReplicaConfig, lam: float, nsweeps: int, record: bool = False):
    """Sweeps at fixed lambda including topology moves; optionally the N_B trace."""
    bonds, h, J, beta, finite, m = cfg.kernel_args()
    cfg.optype, cfg.opidx, trace = K.equilibrium_sweeps(
        cfg.optype, cfg.opidx, cfg.nops, cfg.above, cfg.connected, bonds, h, J, beta, finite, m,
        int(cfg.kind), cfg.renyi_n, float(lam), int(nsweeps), bool(record), cfg.rng)
    return trace if record else cfg


def measure_energy(cfg: ReplicaConfig) -> np.ndarray:
    """Per-replica energy estimate C - n_ops/beta from the current configuration.

    Meaningful as a thermal average only when sampled with B empty.
    """
    if not cfg.finite:
        raise ValueError("energy estimator is only defined at finite temperature")
    shift = cfg.params.energy_shift(cfg.geometry)
    return shift - cfg.nops / cfg.beta


def log_weight(cfg: ReplicaConfig, lam: float):
    """ln Wt of the extended configuration, up to a lambda-independent constant.

    Returns ``NEG_INF`` when any factor vanishes.
    """
    problems = audit(cfg, raise_on_error=False)
    if problems:
        return NEG_INF
    lg = log_g(lam, cfg.n_connected, cfg.n_sites)
    if lg is NEG_INF:
        return NEG_INF
    bonds, h, J, beta, finite, m = cfg.kernel_args()
    out = lg + K.vertex_log_weight(cfg.optype, cfg.opidx, cfg.nops, h, J, beta, finite)
    below = cfg.below()
    norm = tensor_normalization(cfg.kind)
    for s in np.flatnonzero(cfg.connected):
        val = tensor_entry(cfg.kind, SlicePattern(cfg.renyi_n, below[:, s], cfg.above[:, s]))
        out += math.log(val * norm)
    return out


def audit(cfg: ReplicaConfig, raise_on_error: bool = True) -> list:
    """Check every configuration invariant; returns the list of violations."""
    problems = []
    R, M = cfg.optype.shape
    bonds = cfg.geometry.bonds
    for r in range(R):
        state = cfg.above[r].copy() if cfg.finite else np.zeros(cfg.n_sites, np.int8)
        count = 0
        for p in range(M):
            if not cfg.finite and p == cfg.m:
                state = cfg.above[r].copy()
            t = cfg.optype[r, p]
            if t == K.OP_FILL:
                if not cfg.finite:
                    problems.append(f"unit operator in projector list r={r} p={p}")
                continue
            count += 1
            if t == K.OP_FLIP:
                state[cfg.opidx[r, p]] ^= 1
                if cfg.params.h == 0:
                    problems.append(f"flip operator with h=0 r={r} p={p}")
            elif t == K.OP_BOND:
                i, j = bonds[cfg.opidx[r, p]]
                if state[i] != state[j]:
                    problems.append(f"bond operator on anti-aligned spins r={r} p={p}")
            elif t == K.OP_SITE:
                if cfg.params.h == 0:
                    problems.append(f"site operator with h=0 r={r} p={p}")
        if count != cfg.nops[r]:
            problems.append(f"operator count mismatch r={r}: {count} != {cfg.nops[r]}")
        if not cfg.finite and np.any(state != 0):
            problems.append(f"projector replica {r} does not return to |0...0>")
    below = cfg.below()
    for s in range(cfg.n_sites):
        pat = SlicePattern(cfg.renyi_n, below[:, s], cfg.above[:, s])
        if cfg.connected[s]:
            if tensor_entry(cfg.kind, pat) == 0:
                problems.append(f"connected site {s} has a zero tensor entry")
        elif pat.in_legs != pat.out_legs:
            problems.append(f"disconnected site {s} is not transparent")
    if problems and raise_on_error:
        raise AssertionError("; ".join(problems))
    return problems


# ---------------------------------------------------------------------------
# checkpoints

_MAGIC = b"SREQMCK\x00"
CHECKPOINT_VERSION = 1


def save_checkpoint(cfg: ReplicaConfig, path: Union[str, Path]) -> None:
    """Binary snapshot: magic, u16 version, u32 header length, JSON header, arrays.

    The header names every array with its dtype and shape, in storage order.
    """
    arrays = {"optype": cfg.optype, "opidx": cfg.opidx, "nops": cfg.nops,
              "above": cfg.above, "connected": cfg.connected}
    header = {
        "version": CHECKPOINT_VERSION,
        "geometry": cfg.geometry.to_dict(),
        "bonds": cfg.geometry.bonds.tolist(),
        "params": {"J": cfg.params.J, "h": cfg.params.h, "renyi_n": cfg.params.renyi_n},
        "mode": mode_to_dict(cfg.mode),
        "kind": cfg.kind.name,
        "rng": {"bit_generator": type(cfg.rng.bit_generator).__name__,
                "state": cfg.rng.bit_generator.state},
        "arrays": [{"name": k, "dtype": v.dtype.str, "shape": list(v.shape)} for k, v in arrays.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HI", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v).tobytes())


def load_checkpoint(path: Union[str, Path]) -> ReplicaConfig:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:len(_MAGIC)] != _MAGIC:
        raise ValueError("not a replica checkpoint")
    off = len(_MAGIC)
    version, hlen = struct.unpack_from("<HI", data, off)
    if version > CHECKPOINT_VERSION:
        raise ValueError(f"checkpoint version {version} is newer than supported {CHECKPOINT_VERSION}")
    off += struct.calcsize("<HI")
    header = json.loads(data[off:off + hlen].decode("utf-8"))
    off += hlen
    buf = io.BytesIO(data[off:])
    arrays = {}
    for spec in header["arrays"]:
        dt = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"]))
        raw = buf.read(dt.itemsize * count)
        arrays[spec["name"]] = np.frombuffer(raw, dtype=dt).reshape(spec["shape"]).copy()
    g = header["geometry"]
    geometry = LatticeGeometry(tuple(g["dims"]), tuple(g["bc"]), np.array(header["bonds"], np.int64))
    p = header["params"]
    params = ModelParams(p["J"], p["h"], p["renyi_n"])
    md = header["mode"]
    mode = FiniteT(md["beta"]) if "beta" in md else Projector(md["m"])
    bitgen = getattr(np.random, header["rng"]["bit_generator"])()
    bitgen.state = header["rng"]["state"]
    return ReplicaConfig(geometry, params, mode, ConnectionTensorKind[header["kind"]],
                         arrays["optype"], arrays["opidx"], arrays["nops"], arrays["above"],
                         arrays["connected"], rng=np.random.Generator(bitgen))
