import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from covheat.bundle import make_bundle, min_spec_potential, scalar_embed, truncate_potential
from covheat.errors import BeyondHorizon, Censored
from covheat.fixtures import random_fixture, random_magnetic, rotation
from covheat.paths import PathSample, path_stream, sample_batch, sample_path
from covheat.transport import (
    adjoint_ordered_exponential,
    dyson_series,
    dyson_tail,
    evaluate_batch,
    integrand_pieces,
    inverse_ordered_exponential,
    ordered_exponential,
    parallel_transport,
    perturbation_bound,
    potential_path_integral,
    reversed_ordered_exponential,
    reversed_transport,
    shifted_ordered_exponential,
    shifted_transport,
)


def random_path(seed, nu=None, t=1.0):
    rng = np.random.default_rng(seed)
    g, b = random_fixture(rng, nu=nu)
    x = g.vertices[int(rng.integers(g.n))]
    return g, b, sample_path(g, x, t, path_stream(seed, 0))


def ode_oracle(path, bundle, t):
    """Integrate V' = V A(s) segment by segment with a high-order ODE solver."""
    nu = bundle.rank
    V = np.eye(nu, dtype=complex)
    for A, dt in integrand_pieces(path, bundle, t):
        if dt == 0:
            continue
        rhs = lambda s, y, A=A: (y.reshape(nu, nu) @ A).ravel()  # noqa: E731
        sol = solve_ivp(rhs, (0, dt), V.ravel(), method="DOP853", rtol=1e-12, atol=1e-14)
        V = sol.y[:, -1].reshape(nu, nu)
    return V


def test_no_jump_cases(g2, g2_rot):
    p = PathSample("a", ("a",), (), 1.0)
    assert np.allclose(parallel_transport(p, g2_rot, 1.0), np.eye(2))
    assert np.allclose(ordered_exponential(p, g2_rot, 1.0), np.diag([np.exp(-1), np.e]))
    assert np.allclose(inverse_ordered_exponential(p, g2_rot, 1.0), np.diag([np.e, np.exp(-1)]))
    assert np.allclose(adjoint_ordered_exponential(p, g2_rot, 1.0), ordered_exponential(p, g2_rot, 1.0))
    S, tail = dyson_series(p, g2_rot, 1.0, 20)
    assert np.allclose(S, np.diag([np.exp(-1), np.e]), atol=1e-15)
    assert tail < 1e-18


def test_round_trip_has_trivial_holonomy(g2):
    b = make_bundle(g2, 2, {("a", "b"): rotation(0.8)})
    p = PathSample("a", ("a", "b", "a"), (0.2, 0.5), 1.0)
    assert np.allclose(parallel_transport(p, b, 0.3), rotation(0.8))
    assert np.allclose(parallel_transport(p, b, 1.0), np.eye(2))


def test_magnetic_transport_is_line_integral(g2):
    b = scalar_embed(g2, {("a", "b"): 0.3}, {"a": 2.0, "b": -1.0})
    p = PathSample("a", ("a", "b", "a", "b"), (0.2, 0.5, 0.9), 1.0)
    assert np.allclose(parallel_transport(p, b, 1.0), [[np.exp(0.3j)]])
    expected = np.exp(-(2.0 * 0.2 - 1.0 * 0.3 + 2.0 * 0.4 - 1.0 * 0.1))
    assert np.allclose(ordered_exponential(p, b, 1.0), [[expected]])


def test_zero_potential_gives_identity():
    g, b, p = random_path(5, nu=2)
    b0 = b.with_potential(np.zeros_like(b.potential))
    assert np.allclose(ordered_exponential(p, b0, 1.0), np.eye(2))
    assert np.allclose(inverse_ordered_exponential(p, b0, 1.0), np.eye(2))


def test_dyson_zero_order():
    g, b, p = random_path(2, nu=2)
    S, tail = dyson_series(p, b, 1.0, 0)
    L = sum(np.linalg.norm(A, 2) * dt for A, dt in integrand_pieces(p, b, 1.0))
    assert np.allclose(S, np.eye(2))
    assert tail == pytest.approx(np.expm1(L))
    assert dyson_tail(0.0, 3) == 0.0


def test_time_checks():
    p = PathSample("a", ("a", "b"), (0.4,), 1.0, censored=True)
    g, b, _ = random_path(0, nu=1)
    with pytest.raises(BeyondHorizon):
        parallel_transport(PathSample("a", ("a",), (), 1.0), b, 2.0)
    with pytest.raises(Censored):
        ordered_exponential(p, b, 0.9)


@given(st.integers(0, 2**31))
def test_ordered_exponential_matches_ode(seed):
    g, b, p = random_path(seed)
    V = ordered_exponential(p, b, 1.0)
    ref = ode_oracle(p, b, 1.0)
    assert np.allclose(V, ref, rtol=1e-8, atol=1e-10 * max(1.0, np.abs(ref).max()))


@given(st.integers(0, 2**31), st.integers(0, 25))
def test_dyson_error_within_tail(seed, order):
    g, b, p = random_path(seed)
    V = ordered_exponential(p, b, 1.0)
    S, tail = dyson_series(p, b, 1.0, order)
    assert np.linalg.norm(V - S, 2) <= tail + 1e-12 * max(1.0, np.linalg.norm(V, 2))


@given(st.integers(0, 2**31))
def test_inverse_adjoint_norm_bound(seed):
    g, b, p = random_path(seed)
    V = ordered_exponential(p, b, 1.0)
    assert np.allclose(inverse_ordered_exponential(p, b, 1.0) @ V, np.eye(b.rank), atol=1e-9)
    assert np.allclose(adjoint_ordered_exponential(p, b, 1.0), V.conj().T, atol=1e-9)
    w = min_spec_potential(b)
    assert np.linalg.norm(V, 2) <= np.exp(-potential_path_integral(p, b, 1.0, w)) * (1 + 1e-12)
    T = parallel_transport(p, b, 1.0)
    assert np.allclose(T.conj().T @ T, np.eye(b.rank), atol=1e-9)


@given(st.integers(0, 2**31), st.floats(0.0, 3.0))
def test_truncation_perturbation_bound(seed, level):
    g, b, p = random_path(seed)
    bn = truncate_potential(b, level)
    gap = np.linalg.norm(ordered_exponential(p, b, 1.0) - ordered_exponential(p, bn, 1.0), 2)
    assert gap <= perturbation_bound(p, b, bn, 1.0) + 1e-12


@given(st.integers(0, 2**31), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_cocycle_reversal_flow(seed, u, v):
    g, b, p = random_path(seed, t=2.0)
    r, s = 2.0 * u * 0.5, 2.0 * v * 0.5
    T = lambda t: parallel_transport(p, b, t)  # noqa: E731
    assert np.allclose(T(r + s), shifted_transport(p, b, r, s) @ T(r), atol=1e-10)
    tq = r * v
    assert np.allclose(reversed_transport(p, b, r, tq), T(r - tq) @ T(r).conj().T, atol=1e-10)
    Vr = ordered_exponential(p, b, r)
    lhs = ordered_exponential(p, b, r + s) @ T(r + s).conj().T
    rhs = Vr @ T(r).conj().T @ shifted_ordered_exponential(p, b, r, s) @ shifted_transport(p, b, r, s).conj().T
    scale = max(1.0, np.abs(lhs).max())
    assert np.allclose(lhs, rhs, atol=1e-9 * scale)
    bridge = reversed_transport(p, b, r, r) @ reversed_ordered_exponential(p, b, r, r).conj().T
    assert np.allclose(bridge, Vr @ T(r).conj().T, atol=1e-9 * max(1.0, np.abs(Vr).max()))


def test_reversal_beyond_r_rejected():
    g, b, p = random_path(1)
    with pytest.raises(BeyondHorizon):
        reversed_transport(p, b, 0.5, 0.6)


@given(st.integers(0, 2**31))
def test_theta_independence(seed):
    rng = np.random.default_rng(seed)
    g, _ = random_fixture(rng, nu=1)
    v = rng.uniform(-3, 3, g.n)
    p = sample_path(g, g.vertices[0], 1.0, path_stream(seed, 0))
    ref = ordered_exponential(p, random_magnetic(rng, g, v), 1.0)
    for _ in range(10):
        assert np.allclose(ordered_exponential(p, random_magnetic(rng, g, v), 1.0), ref, rtol=1e-14, atol=0)


@given(st.integers(0, 2**31))
def test_batch_evaluation_matches_single_path(seed):
    rng = np.random.default_rng(seed)
    g, b = random_fixture(rng)
    x = g.vertices[0]
    times = np.array([0.0, 0.35, 1.0])
    batch = sample_batch(g, x, 1.0, seed, 0, 6)
    bt = evaluate_batch(batch, b, times)
    for k in range(6):
        p = batch.sample(k, g)
        for q, t in enumerate(times):
            V = ordered_exponential(p, b, t)
            scale = max(1.0, np.abs(V).max())
            assert np.allclose(bt.ordered_exp[k, q], V, atol=1e-12 * scale)
            assert np.allclose(bt.par_transport[k, q], parallel_transport(p, b, t), atol=1e-12)
            assert g.vertices[bt.position[k, q]] == p.chain[np.searchsorted(p.jump_times, t, side="right")]
            assert bt.alive[k, q]
