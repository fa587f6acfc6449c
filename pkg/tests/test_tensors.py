import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sreqmc.tensors import (NEG_INF, ConnectionTensorKind as CK, SentinelArithmeticError, SlicePattern,
                            dense_tensor, is_connectable, log_g, replicas_for, slice_nonzero, sre_entry,
                            tensor_entry, tensor_normalization)

PAULIS = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]


def brute_sre(in_legs, out_legs):
    """sum over single-site Paulis of prod_r sigma[in_r, out_r]."""
    total = 0j
    for s in PAULIS:
        total += np.prod([s[a, b] for a, b in zip(in_legs, out_legs)])
    return total


def all_patterns(legs):
    for bits in itertools.product((0, 1), repeat=2 * legs):
        yield bits[:legs], bits[legs:]


def test_order2_has_sixteen_nonzero_entries_of_two():
    values = [sre_entry(SlicePattern(2, a, b)) for a, b in all_patterns(4)]
    assert len(values) == 256
    nonzero = [v for v in values if v]
    assert len(nonzero) == 16
    assert set(nonzero) == {2}


@pytest.mark.parametrize("n", [1, 2, 3])
def test_sre_entry_matches_pauli_sum(n):
    for a, b in all_patterns(2 * n):
        ref = brute_sre(a, b)
        assert abs(ref.imag) < 1e-12
        assert sre_entry(SlicePattern(n, a, b)) == int(round(ref.real))


def test_order3_nonzero_count():
    count = sum(1 for a, b in all_patterns(6) if sre_entry(SlicePattern(3, a, b)))
    assert count == 2 ** 6


def test_odd_order_antidiagonal_parity_is_odd():
    # all-zero in-legs flipped to all-one out-legs: X gives +1, Y gives i^6 = -1
    pat = SlicePattern(3, (0,) * 6, (1,) * 6)
    assert sre_entry(pat) == 0
    assert sre_entry(SlicePattern(3, (1, 0, 0, 0, 0, 0), (0, 1, 1, 1, 1, 1))) == 2


def test_dense_sre_equals_pauli_tensor_power():
    n = 2
    ref = sum(np.kron(np.kron(s, s), np.kron(s, s)) for s in PAULIS)
    assert np.allclose(dense_tensor(CK.SRE, n, 4), ref.real)


def _random_mats(rng, k):
    return [rng.normal(size=(2, 2)) for _ in range(k)]


def _contract(T, mats):
    big = mats[0]
    for m in mats[1:]:
        big = np.kron(big, m)
    return float(np.trace(big @ T.T))


def test_cyclic_tensors_contract_to_ordered_traces():
    rng = np.random.default_rng(4)
    A, B, C = _random_mats(rng, 3)
    ere = _contract(dense_tensor(CK.ERE, 3, 3), [A, B, C])
    ern = _contract(dense_tensor(CK.ERN, 3, 3), [A, B, C])
    fwd = float(np.trace(A @ B @ C))
    rev = float(np.trace(C @ B @ A))
    assert math.isclose(ere, rev, rel_tol=1e-12) or math.isclose(ere, fwd, rel_tol=1e-12)
    assert {round(ere, 10), round(ern, 10)} == {round(fwd, 10), round(rev, 10)}


def test_cyclic_tensor_gives_trace_of_power():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(2, 2))
    for r in (2, 3, 4):
        val = _contract(dense_tensor(CK.ERE, r, r), [A] * r)
        assert math.isclose(val, np.trace(np.linalg.matrix_power(A, r)), rel_tol=1e-12)


def test_pre_tensor_is_diagonal_projector():
    rng = np.random.default_rng(2)
    A, B = _random_mats(rng, 2)
    val = _contract(dense_tensor(CK.PRE, 2, 2), [A, B])
    assert math.isclose(val, A[0, 0] * B[0, 0] + A[1, 1] * B[1, 1], rel_tol=1e-12)


def test_identity_pattern_and_normalization():
    assert tensor_entry(CK.IDENTITY, SlicePattern(2, (0, 1), (0, 1))) == 1
    assert tensor_entry(CK.IDENTITY, SlicePattern(2, (0, 1), (1, 1))) == 0
    assert tensor_normalization(CK.SRE) == 0.5
    assert tensor_normalization(CK.ERE) == 1.0
    assert replicas_for(CK.SRE, 3) == 6
    assert replicas_for(CK.ERE, 3) == 3


def test_pattern_validation():
    with pytest.raises(ValueError):
        SlicePattern(2, (0, 1), (0,))
    with pytest.raises(ValueError):
        SlicePattern(1, (0, 2), (0, 0))
    with pytest.raises(ValueError):
        sre_entry(SlicePattern(2, (0, 0), (0, 0)))


@settings(max_examples=300, deadline=None)
@given(kind=st.sampled_from([CK.SRE, CK.ERE, CK.PRE, CK.ERN, CK.IDENTITY]), n=st.integers(2, 4),
       data=st.data())
def test_kernel_predicate_agrees_with_entry(kind, n, data):
    R = replicas_for(kind, n) if kind != CK.IDENTITY else n
    below = np.array(data.draw(st.lists(st.integers(0, 1), min_size=R, max_size=R)), np.int8)
    mode = data.draw(st.sampled_from(["free", "same", "flip"]))
    if mode == "same":
        above = below.copy()
    elif mode == "flip":
        above = 1 - below
    else:
        above = np.array(data.draw(st.lists(st.integers(0, 1), min_size=R, max_size=R)), np.int8)
    pat = SlicePattern(n, below, above)
    got = slice_nonzero(int(kind), n, below[:, None], above[:, None], 0)
    assert bool(got) == is_connectable(pat, kind)


@given(n=st.integers(1, 3), data=st.data())
def test_sre_flip_closure(n, data):
    # flipping every leg of one side maps a nonzero pattern onto a nonzero one when n is even
    legs = data.draw(st.lists(st.integers(0, 1), min_size=4 * n, max_size=4 * n))
    pat = SlicePattern(n, legs[:2 * n], legs[2 * n:])
    if sre_entry(pat) and n % 2 == 0:
        flipped = SlicePattern(n, [1 - b for b in pat.in_legs], pat.out_legs)
        assert sre_entry(flipped) == 2


# ---------------------------------------------------------------------------
# interpolation weight


def test_log_g_values():
    assert math.isclose(log_g(0.5, 2, 4), 4 * math.log(0.5))
    assert math.isclose(log_g(0.9, 4, 4), 4 * math.log(0.9))
    assert log_g(0.0, 0, 3) == 0.0
    assert log_g(1.0, 3, 3) == 0.0
    assert log_g(1.0, 2, 3) is NEG_INF
    assert log_g(0.0, 1, 3) is NEG_INF


def test_single_step_work_to_full_connection():
    # lambda 0.9 -> 1.0 with every site connected
    dw = -(log_g(1.0, 4, 4) - log_g(0.9, 4, 4))
    assert math.isclose(dw, -4 * (math.log(1.0) - math.log(0.9)))


def test_sentinel_refuses_arithmetic():
    with pytest.raises(SentinelArithmeticError):
        NEG_INF + 1.0
    with pytest.raises(SentinelArithmeticError):
        float(NEG_INF)
    assert NEG_INF < -1e308
    assert not NEG_INF > -math.inf
    assert NEG_INF == NEG_INF


@pytest.mark.parametrize("lam,nb,n", [(-0.1, 0, 1), (1.1, 0, 1), (0.5, 3, 2), (0.5, -1, 2)])
def test_log_g_rejects_bad_input(lam, nb, n):
    with pytest.raises(ValueError):
        log_g(lam, nb, n)


def test_kernel_log_g_endpoints_are_minus_infinity():
    from sreqmc.tensors import _log_g

    assert _log_g(0.0, 1, 2) == -math.inf
    assert _log_g(1.0, 1, 2) == -math.inf
    assert _log_g(0.0, 0, 2) == 0.0 and _log_g(1.0, 2, 2) == 0.0
