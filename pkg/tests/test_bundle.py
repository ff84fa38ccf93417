import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from covheat.bundle import (
    fibre_norms,
    lq_norm,
    make_bundle,
    min_spec_potential,
    negative_part_bound,
    potential_spec_bounds,
    reverse_connection,
    scalar_embed,
    truncate_potential,
    validate_bundle,
)
from covheat.errors import ExtraConnection, MissingConnection, NotAnEdge, NotAntisymmetric, RankMismatch
from covheat.fixtures import random_fixture, random_unitary, rotation
from covheat.graph import build_graph


def test_unit_phase_is_unitary(g2):
    b = make_bundle(g2, 1, {("a", "b"): [[np.exp(1j * np.pi / 3)]]}, {"a": [[2]], "b": [[-1]]})
    assert validate_bundle(g2, b).passed


def test_scaled_identity_not_unitary(g2):
    b = make_bundle(g2, 2, {("a", "b"): 2 * np.eye(2)})
    rep = validate_bundle(g2, b)
    assert not rep.passed
    assert rep.max_unitarity_defect == pytest.approx(3.0)


def test_jordan_block_not_hermitian(g2):
    b = make_bundle(g2, 2, None, {"a": [[0, 1], [0, 0]]})
    rep = validate_bundle(g2, b)
    assert not rep.passed
    assert rep.hermiticity_defect["a"] == pytest.approx(1.0)
    assert rep.failures()


def test_structural_errors(g2):
    b = make_bundle(g2, 2)
    with pytest.raises(MissingConnection):
        validate_bundle(g2, b.with_connection({}))
    with pytest.raises(RankMismatch):
        make_bundle(g2, 2, {("a", "b"): np.eye(3)})
    with pytest.raises(ExtraConnection):
        make_bundle(g2, 1, {("a", "b"): [[1]], ("b", "a"): [[1]]})
    with pytest.raises(ExtraConnection):
        validate_bundle(g2, b.with_connection({(0, 1): np.eye(2), (0, 2): np.eye(2)}))
    with pytest.raises(NotAnEdge):
        b.phi("a", "a")


def test_reverse_connection(g2):
    assert np.allclose(reverse_connection(make_bundle(g2, 2), "a", "b"), np.eye(2))
    b = make_bundle(g2, 2, {("a", "b"): rotation(0.7)})
    assert np.allclose(reverse_connection(b, "a", "b"), rotation(-0.7))
    b = scalar_embed(g2, {("a", "b"): 0.4})
    assert np.allclose(b.phi("b", "a"), [[np.exp(-0.4j)]])


def test_scalar_embed(g2):
    b = scalar_embed(g2, {("a", "b"): np.pi / 2})
    assert np.allclose(b.phi("a", "b"), [[1j]])
    assert validate_bundle(g2, b).passed
    b0 = scalar_embed(g2, {})
    assert np.allclose(b0.phi("a", "b"), [[1]]) and np.allclose(b0.potential, 0)
    with pytest.raises(NotAntisymmetric):
        scalar_embed(g2, {("a", "b"): 0.3, ("b", "a"): 0.3})
    scalar_embed(g2, {("a", "b"): 0.3, ("b", "a"): -0.3})


def test_lq_norms(g2):
    assert lq_norm(np.zeros((2, 2)), g2, 3) == 0.0
    f = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert lq_norm(f, g2, 2) == pytest.approx(np.sqrt(2))
    g = build_graph(["a", "b"], [("a", "b", 1.0)], {"a": 4.0, "b": 1.0})
    assert lq_norm(f, g, 1) == pytest.approx(5.0)
    assert lq_norm(f, g, np.inf) == 1.0


def test_potential_spec_bounds():
    g = build_graph(["x", "y", "z"], [("x", "y", 1), ("y", "z", 1)])
    b = make_bundle(g, 2, None, {"x": np.diag([1, -1]), "z": [[2, 1], [1, 2]]})
    assert potential_spec_bounds(b, "x") == pytest.approx((-1, 1))
    assert potential_spec_bounds(b, "y") == (0.0, 0.0)
    assert potential_spec_bounds(b, "z") == pytest.approx((1, 3))
    assert np.allclose(min_spec_potential(b), [-1, 0, 1])
    assert np.allclose(negative_part_bound(b), [1, 0, 0])


def test_truncation_is_spectral():
    g = build_graph(["x"], [])
    U = random_unitary(np.random.default_rng(3), 3)
    V = (U * np.array([-5.0, -0.5, 2.0])) @ U.conj().T
    b = truncate_potential(make_bundle(g, 3, None, {"x": V}), 1.0)
    lam = np.linalg.eigvalsh(b.potential[0])
    assert np.allclose(lam, [-1.0, -0.5, 2.0])


@given(st.integers(0, 2**32 - 1))
def test_random_fixtures_validate(seed):
    g, b = random_fixture(np.random.default_rng(seed))
    assert validate_bundle(g, b).passed
    lam, _ = b.potential_eigh()
    assert lam.min() >= -3 - 1e-12 and lam.max() <= 3 + 1e-12


@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_fibre_norm_unitary_invariance(nu, seed):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((6, nu)) + 1j * rng.standard_normal((6, nu))
    U = random_unitary(rng, nu)
    assert np.allclose(fibre_norms(f @ U.T), fibre_norms(f))
