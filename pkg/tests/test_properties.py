import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from fa_precode.channel import random_statistics, random_unitary
from fa_precode.complexity import addition_count, complete_count, format_count
from fa_precode.constellation import build_constellation
from fa_precode.metrics import finite_alphabet_metrics
from fa_precode.optimize import project_simplex
from fa_precode.structure import pair_subchannels, retract_unitary

BPSK = build_constellation("bpsk")
QPSK = build_constellation("qpsk")

vectors = st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=8)


@given(vectors, st.floats(0.01, 10))
def test_simplex_projection(v, total):
    p = project_simplex(v, total)
    assert np.all(p >= 0)
    assert np.isclose(p.sum(), total)
    # idempotent
    assert np.allclose(project_simplex(p, total), p, atol=1e-9)


@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=4).map(
    lambda x: x * 2), st.sampled_from([1, 2]))
def test_pairing_is_a_permutation(xi, N_s):
    part = pair_subchannels(xi, N_s)
    assert sorted(part.ell) == list(range(len(xi)))


@given(st.integers(2, 64), st.integers(1, 6), st.integers(1, 6))
def test_split_never_costs_more(M, S, N_s):
    n_t = S * N_s
    assert addition_count(M, n_t, N_s) <= complete_count(M, n_t)


@given(st.integers(1, 10**60))
def test_format_roundtrip_close(n):
    f = format_count(n)
    assert abs(float(f) - n) <= 5e-5 * n + 0.5


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 3.0))
def test_mi_bounds_and_mmse_range(seed, scale):
    rng = np.random.default_rng(seed)
    A = scale * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    mi, E, _ = finite_alphabet_metrics(A, QPSK)
    assert -1e-12 <= mi <= 4 + 1e-9
    w = np.linalg.eigvalsh(E)
    assert w.min() > -1e-9 and w.max() < 1 + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 2.0), st.floats(1.01, 3.0))
def test_mi_grows_with_gain(seed, scale, boost):
    rng = np.random.default_rng(seed)
    A = scale * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    a = finite_alphabet_metrics(A, BPSK, want_mmse=False)[0]
    b = finite_alphabet_metrics(boost * A, BPSK, want_mmse=False)[0]
    assert b >= a - 1e-7


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.floats(-3, 3))
def test_retraction_unitary(seed, t):
    rng = np.random.default_rng(seed)
    V = random_unitary(3, seed)
    G = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    W = retract_unitary(V, G, t)
    assert np.allclose(W.conj().T @ W, np.eye(3), atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 20))
def test_statistics_power(seed, K):
    s = random_statistics(3, 2, K, seed)
    total = s.G.sum() + np.sum(np.abs(s.H_bar) ** 2)
    assert np.isclose(total, 6.0)
