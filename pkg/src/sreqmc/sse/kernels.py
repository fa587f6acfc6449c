"""Stochastic series expansion kernels for R coupled replicas.

Layout shared by every kernel:

* ``optype[r, p]`` / ``opidx[r, p]``: operator in slot ``p`` of replica ``r``
  (``OP_FILL`` unit operator, ``OP_SITE`` h*I_k, ``OP_FLIP`` h*X_k, ``OP_BOND``
  J(1 + Z_i Z_j)); ``opidx`` is the site or bond index.
* ``above[r, s]``: spin leaving the coupling slice upward.
* ``below[r, s]``: spin reaching the slice from underneath (derived).
* ``connected[s]``: 1 where site ``s`` is coupled across replicas.

Finite temperature (``finite=True``): each replica is one expansion of
exp(-beta H) in ``M`` slots; the slice sits between slot ``M-1`` and slot 0.
Projector mode: ``M = 2m`` slots, all non-unit, the slice sits between slots
``m-1`` and ``m`` and both time ends are pinned to |0...0>.
"""
import math

import numpy as np

from .._backend import jit
from ..tensors import _log_g, slice_identity_ok, slice_nonzero

OP_FILL = 0
OP_SITE = 1
OP_FLIP = 2
OP_BOND = 3

GROW_THRESHOLD = 0.8
GROW_FACTOR = 1.25


@jit
def propagate_below(optype, opidx, above, finite, m, below):
    R, M = optype.shape
    nsites = above.shape[1]
    upto = M if finite else m
    for r in range(R):
        for s in range(nsites):
            below[r, s] = above[r, s] if finite else 0
        for p in range(upto):
            if optype[r, p] == OP_FLIP:
                s = opidx[r, p]
                below[r, s] = 1 - below[r, s]


@jit
def diagonal_update(optype, opidx, nops, above, bonds, h, J, beta, finite, m, rng):
    """Standard SSE diagonal update, replica by replica.

    Finite T: unit <-> diagonal exchanges with the usual Metropolis factors.
    Projector: every diagonal operator is re-drawn from the allowed diagonal
    vertices in proportion to their weights.
    """
    R, M = optype.shape
    nsites = above.shape[1]
    nb = bonds.shape[0]
    wsite = nsites * h
    wbond = 2.0 * J
    wtot = wsite + nb * wbond
    if wtot <= 0.0:
        return
    state = np.empty(nsites, np.int8)
    for r in range(R):
        for s in range(nsites):
            state[s] = above[r, s] if finite else 0
        n = nops[r]
        for p in range(M):
            if (not finite) and p == m:
                for s in range(nsites):
                    state[s] = above[r, s]
            t = optype[r, p]
            if t == OP_FLIP:
                s = opidx[r, p]
                state[s] = 1 - state[s]
                continue
            if finite:
                if t == OP_FILL:
                    if rng.random() * (M - n) < beta * wtot:
                        x = rng.random() * wtot
                        if x < wsite:
                            s = min(int(x / h), nsites - 1)
                            optype[r, p] = OP_SITE
                            opidx[r, p] = s
                            n += 1
                        else:
                            b = min(int((x - wsite) / wbond), nb - 1)
                            if state[bonds[b, 0]] == state[bonds[b, 1]]:
                                optype[r, p] = OP_BOND
                                opidx[r, p] = b
                                n += 1
                elif rng.random() * beta * wtot < (M - n + 1):
                    optype[r, p] = OP_FILL
                    opidx[r, p] = 0
                    n -= 1
            else:
                x = rng.random() * wtot
                if x < wsite:
                    optype[r, p] = OP_SITE
                    opidx[r, p] = min(int(x / h), nsites - 1)
                else:
                    b = min(int((x - wsite) / wbond), nb - 1)
                    if state[bonds[b, 0]] == state[bonds[b, 1]]:
                        optype[r, p] = OP_BOND
                        opidx[r, p] = b
        nops[r] = n


@jit
def grow_oplists(optype, opidx, nops, new_m, rng):
    """Re-embed each operator sequence into ``new_m`` slots at uniform positions.

    The reduced sequence has an M-independent distribution and placements are
    uniform given it, so growth is exact at any point of a run.
    """
    R, M = optype.shape
    nt = np.zeros((R, new_m), np.int8)
    ni = np.zeros((R, new_m), np.int64)
    for r in range(R):
        need = nops[r]
        q = 0
        for p in range(new_m):
            if need > 0 and rng.random() * (new_m - p) < need:
                while optype[r, q] == OP_FILL:
                    q += 1
                nt[r, p] = optype[r, q]
                ni[r, p] = opidx[r, q]
                q += 1
                need -= 1
    return nt, ni


@jit
def target_length(nops, M):
    """Finite-T list length after growth (unchanged when occupancy is fine)."""
    mx = 0
    for r in range(nops.shape[0]):
        if nops[r] > mx:
            mx = nops[r]
    new_m = M
    while mx > GROW_THRESHOLD * new_m:
        new_m = int(new_m * GROW_FACTOR) + 1
    return new_m


@jit
def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@jit
def _union(parent, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra != rb:
        if ra < rb:
            parent[rb] = ra
        else:
            parent[ra] = rb


@jit
def _link(parent, frozen, nfrozen, prev, node):
    """Join ``node`` to the leg below it; a missing leg (time end) freezes it."""
    if prev < 0:
        frozen[nfrozen] = node
        return nfrozen + 1
    _union(parent, prev, node)
    return nfrozen


@jit
def _decide(root, decision, rng):
    d = decision[root]
    if d == 0:
        d = 2 if rng.random() < 0.5 else 1
        decision[root] = d
    return d == 2


@jit
def cluster_update(optype, opidx, above, connected, kind, renyi_n, bonds, finite, m, rng):
    """Swendsen-Wang cluster flips over operator legs, all replicas at once.

    Bond vertices glue their four legs; single-site vertices end clusters.
    At a disconnected site each replica's worldline runs straight through the
    slice. At a connected site the legs are glued according to the tensor so
    that any flip maps a nonzero slice pattern onto another nonzero one.
    Clusters touching a pinned projector end never flip.
    """
    R, M = optype.shape
    nsites = above.shape[1]
    # node 2*(r*M + p): a bond vertex, or the lower leg of a site vertex (+1 upper)
    # slice legs: below(r, s) = slice0 + 2*(r*nsites + s), above = below + 1
    slice0 = 2 * R * M
    total = slice0 + 2 * R * nsites
    parent = np.arange(total)
    frozen = np.empty(2 * R * nsites, np.int64)
    nfrozen = 0
    last = np.empty(nsites, np.int64)

    for r in range(R):
        base = 2 * r * M
        for s in range(nsites):
            last[s] = slice0 + 2 * (r * nsites + s) + 1 if finite else -1
        for p in range(M):
            if (not finite) and p == m:
                for s in range(nsites):
                    bnode = slice0 + 2 * (r * nsites + s)
                    nfrozen = _link(parent, frozen, nfrozen, last[s], bnode)
                    last[s] = bnode + 1
            t = optype[r, p]
            if t == OP_FILL:
                continue
            v = base + 2 * p
            if t == OP_BOND:
                b = opidx[r, p]
                i = bonds[b, 0]
                j = bonds[b, 1]
                nfrozen = _link(parent, frozen, nfrozen, last[i], v)
                nfrozen = _link(parent, frozen, nfrozen, last[j], v)
                last[i] = v
                last[j] = v
            else:
                s = opidx[r, p]
                nfrozen = _link(parent, frozen, nfrozen, last[s], v)
                last[s] = v + 1
        for s in range(nsites):
            if finite:
                _union(parent, last[s], slice0 + 2 * (r * nsites + s))
            else:
                frozen[nfrozen] = last[s]
                nfrozen += 1

    for s in range(nsites):
        if connected[s] == 0:
            for r in range(R):
                bnode = slice0 + 2 * (r * nsites + s)
                _union(parent, bnode, bnode + 1)
        elif kind == 0:
            b0 = slice0 + 2 * s
            for r in range(1, R):
                bnode = slice0 + 2 * (r * nsites + s)
                if renyi_n % 2 == 0:
                    # same-side legs of all replicas move together
                    _union(parent, b0, bnode)
                    _union(parent, b0 + 1, bnode + 1)
                else:
                    _union(parent, b0, bnode + 1)
                    _union(parent, b0 + 1, bnode)
        elif kind == 1:
            for r in range(R):
                bnode = slice0 + 2 * (r * nsites + s)
                anode = slice0 + 2 * (((r + 1) % R) * nsites + s) + 1
                _union(parent, bnode, anode)
        elif kind == 3:
            for r in range(R):
                bnode = slice0 + 2 * (r * nsites + s)
                anode = slice0 + 2 * (((r - 1) % R) * nsites + s) + 1
                _union(parent, bnode, anode)
        else:
            b0 = slice0 + 2 * s
            _union(parent, b0, b0 + 1)
            for r in range(1, R):
                bnode = slice0 + 2 * (r * nsites + s)
                _union(parent, b0, bnode)
                _union(parent, b0, bnode + 1)

    # 0 undecided, 1 keep, 2 flip
    decision = np.zeros(total, np.int8)
    for k in range(nfrozen):
        decision[_find(parent, frozen[k])] = 1

    for r in range(R):
        base = 2 * r * M
        for p in range(M):
            t = optype[r, p]
            if t == OP_SITE or t == OP_FLIP:
                v = base + 2 * p
                fb = _decide(_find(parent, v), decision, rng)
                fa = _decide(_find(parent, v + 1), decision, rng)
                if fb != fa:
                    optype[r, p] = OP_FLIP if t == OP_SITE else OP_SITE
    for r in range(R):
        for s in range(nsites):
            anode = slice0 + 2 * (r * nsites + s) + 1
            if _decide(_find(parent, anode), decision, rng):
                above[r, s] = 1 - above[r, s]


@jit
def topology_sweep(lam, connected, below, above, kind, renyi_n, rng):
    """Metropolis connect/disconnect sweep over all sites; returns N_B.

    Connecting a site multiplies the weight by lambda/(1-lambda) (the tensor
    value cancels its normalisation), disconnecting by the inverse. A connected
    site may only be released when every replica passes straight through.
    """
    if lam >= 1.0:
        pc = 1.0
    else:
        pc = min(lam / (1.0 - lam), 1.0)
    if lam <= 0.0:
        pd = 1.0
    else:
        pd = min((1.0 - lam) / lam, 1.0)
    nb = 0
    for s in range(connected.shape[0]):
        if connected[s] != 0:
            if pd > 0.0 and slice_identity_ok(below, above, s):
                if pd >= 1.0 or rng.random() < pd:
                    connected[s] = 0
        else:
            if pc > 0.0 and slice_nonzero(kind, renyi_n, below, above, s):
                if pc >= 1.0 or rng.random() < pc:
                    connected[s] = 1
        nb += connected[s]
    return nb


@jit
def count_connected(connected):
    nb = 0
    for s in range(connected.shape[0]):
        nb += connected[s]
    return nb


@jit
def config_sweeps(optype, opidx, nops, above, connected, bonds, h, J, beta, finite, m,
                  kind, renyi_n, nsweeps, rng):
    """``nsweeps`` x (diagonal update, optional growth, cluster update) at fixed B."""
    for _ in range(nsweeps):
        diagonal_update(optype, opidx, nops, above, bonds, h, J, beta, finite, m, rng)
        if finite:
            new_m = target_length(nops, optype.shape[1])
            if new_m != optype.shape[1]:
                optype, opidx = grow_oplists(optype, opidx, nops, new_m, rng)
        cluster_update(optype, opidx, above, connected, kind, renyi_n, bonds, finite, m, rng)
    return optype, opidx


@jit
def equilibrium_sweeps(optype, opidx, nops, above, connected, bonds, h, J, beta, finite, m,
                       kind, renyi_n, lam, nsweeps, record, rng):
    """Full sweeps at fixed lambda: topology, then configuration updates.

    With ``record`` set, returns N_B after every sweep's topology update.
    """
    below = np.empty_like(above)
    trace = np.zeros(nsweeps if record else 0, np.int64)
    for k in range(nsweeps):
        propagate_below(optype, opidx, above, finite, m, below)
        nb = topology_sweep(lam, connected, below, above, kind, renyi_n, rng)
        if record:
            trace[k] = nb
        optype, opidx = config_sweeps(optype, opidx, nops, above, connected, bonds, h, J,
                                      beta, finite, m, kind, renyi_n, 1, rng)
    return optype, opidx, trace


@jit
def side_walk_kernel(optype, opidx, nops, above, connected, bonds, h, J, beta, finite, m,
                     kind, renyi_n, lambdas, sweeps_per_step, rng):
    """One non-equilibrium path along ``lambdas``.

    Returns ``(work, abandoned, n_b, optype, opidx)``. A path is abandoned when
    a step lands on a zero interpolation weight (lambda = 1 with N_B < N).
    """
    nsites = above.shape[1]
    below = np.empty_like(above)
    work = 0.0
    nb = count_connected(connected)
    for i in range(lambdas.shape[0] - 1):
        lam = lambdas[i]
        lam_next = lambdas[i + 1]
        propagate_below(optype, opidx, above, finite, m, below)
        nb = topology_sweep(lam, connected, below, above, kind, renyi_n, rng)
        optype, opidx = config_sweeps(optype, opidx, nops, above, connected, bonds, h, J,
                                      beta, finite, m, kind, renyi_n, sweeps_per_step, rng)
        if (lam_next >= 1.0 and nb < nsites) or (lam_next <= 0.0 and nb > 0):
            return work, True, nb, optype, opidx
        work -= _log_g(lam_next, nb, nsites) - _log_g(lam, nb, nsites)
    return work, False, nb, optype, opidx


@jit
def vertex_log_weight(optype, opidx, nops, h, J, beta, finite):
    """Sum over replicas of the log SSE weight of the operator strings.

    Assumes every vertex is allowed (checked separately by the audit).
    """
    R, M = optype.shape
    out = 0.0
    for r in range(R):
        n = nops[r]
        if finite:
            out += n * math.log(beta) + math.lgamma(M - n + 1) - math.lgamma(M + 1)
        for p in range(M):
            t = optype[r, p]
            if t == OP_SITE or t == OP_FLIP:
                out += math.log(h)
            elif t == OP_BOND:
                out += math.log(2.0 * J)
    return out
