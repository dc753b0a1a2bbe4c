import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipflat import (
    NormedSpace,
    adapted_basis,
    operator_norm,
    polytope_norm,
    unconditional_constant,
)
from lipflat.normgeom import p_norm, tilde_k_witness


def test_p_norm_exact_values():
    assert p_norm([3.0, 4.0], 2) == 5.0
    assert p_norm([3.0, -4.0], 1) == 7.0
    assert p_norm([3.0, -4.0], np.inf) == 4.0
    expected = (3.0**3 + 4.0**3) ** (1.0 / 3.0)
    assert abs(p_norm([3.0, 4.0], 3) - expected) < 1e-12


def test_p_norm_rejects_bad_input():
    with pytest.raises(ValueError):
        p_norm([1.0, 2.0], 0.5)
    with pytest.raises(ValueError):
        p_norm([np.nan, 0.0], 2)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-50, 50), min_size=1, max_size=6),
    st.lists(st.floats(-50, 50), min_size=1, max_size=6),
    st.one_of(st.just(1.0), st.just(2.0), st.floats(1.0, 8.0), st.just(np.inf)),
)
def test_p_norm_axioms(xs, ys, p):
    n = min(len(xs), len(ys))
    x = np.array(xs[:n])
    y = np.array(ys[:n])
    nx, ny, nxy = p_norm(x, p), p_norm(y, p), p_norm(x + y, p)
    assert nxy <= nx + ny + 1e-9 * (1 + nx + ny)
    assert abs(p_norm(2.5 * x, p) - 2.5 * nx) < 1e-9 * (1 + nx)
    assert p_norm(np.zeros(n), p) == 0.0


def test_polytope_norm_square_is_sup_norm():
    verts = np.array([[1.0, 1.0], [1.0, -1.0]])
    rng = np.random.default_rng(3)
    for v in rng.normal(size=(20, 2)):
        want = max(abs(v[0]), abs(v[1]))
        got = polytope_norm(v, np.vstack([verts, -verts]))
        assert abs(got - want) < 1e-8


def test_polytope_norm_diamond_is_one_norm():
    verts = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    rng = np.random.default_rng(4)
    for v in rng.normal(size=(20, 2)):
        want = abs(v[0]) + abs(v[1])
        assert abs(polytope_norm(v, verts) - want) < 1e-8


def test_polytope_norm_outside_span_raises():
    verts = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    with pytest.raises(ValueError):
        polytope_norm(np.array([0.0, 0.0, 1.0]), verts)


def test_equivalence_constants():
    assert abs(NormedSpace.lp(4, 1).C - 2.0) < 1e-12
    assert abs(NormedSpace.lp(9, np.inf).C - 3.0) < 1e-12
    assert abs(NormedSpace.euclidean(7).C - 1.0) < 1e-12
    square = NormedSpace.polytope([[1.0, 1.0], [1.0, -1.0]])
    assert abs(square.C - math.sqrt(2.0)) < 1e-9


def test_dual_norm_lp_pairs():
    rng = np.random.default_rng(5)
    y = rng.normal(size=4)
    assert abs(NormedSpace.lp(4, 1).dual_norm(y) - np.abs(y).max()) < 1e-12
    assert abs(NormedSpace.lp(4, np.inf).dual_norm(y) - np.abs(y).sum()) < 1e-12
    # independent oracle: maximize y.x over a dense grid of the l3 sphere
    space = NormedSpace.lp(2, 3)
    y2 = np.array([0.7, -1.3])
    ts = np.linspace(0, 2 * np.pi, 200001)
    xs = np.stack([np.cos(ts), np.sin(ts)], axis=1)
    xs = xs / p_norm(xs, 3)[:, None]
    want = float((xs @ y2).max())
    assert abs(space.dual_norm(y2) - want) < 1e-6


def test_dual_norm_polytope():
    square = NormedSpace.polytope([[1.0, 1.0], [1.0, -1.0]])
    y = np.array([0.4, -2.2])
    assert abs(square.dual_norm(y) - (abs(y[0]) + abs(y[1]))) < 1e-12


def test_descriptor_round_trip():
    rng = np.random.default_rng(6)
    vs = rng.normal(size=(30, 3))
    for space in [NormedSpace.lp(3, 1.5), NormedSpace.lp(3, np.inf)]:
        back = NormedSpace.from_descriptor(space.descriptor(), dim=3)
        assert np.allclose(space.norm(vs), back.norm(vs))
    poly = NormedSpace.polytope(rng.normal(size=(6, 3)))
    back = NormedSpace.from_descriptor(poly.descriptor())
    assert np.allclose(poly.norm(vs), back.norm(vs), atol=1e-8)


def test_space_rejects_degenerate_input():
    with pytest.raises(ValueError):
        NormedSpace(0, p=2)
    with pytest.raises(ValueError):
        NormedSpace(2, p=2, vertices=[[1.0, 0.0]])
    with pytest.raises(ValueError):
        NormedSpace.polytope([[1.0, 0.0], [2.0, 0.0]])


def test_operator_norm_columns_oracle_from_l1():
    rng = np.random.default_rng(7)
    T = rng.normal(size=(3, 5))
    want = max(float(np.linalg.norm(T[:, j])) for j in range(5))
    got = operator_norm(T, NormedSpace.lp(5, 1), NormedSpace.euclidean(3))
    assert abs(got - want) < 1e-12


def test_operator_norm_sign_oracle_from_sup():
    rng = np.random.default_rng(8)
    T = rng.normal(size=(4, 6))
    want = 0.0
    for bits in itertools.product([-1.0, 1.0], repeat=6):
        want = max(want, float(np.abs(T @ np.array(bits)).sum()))
    got = operator_norm(T, NormedSpace.lp(6, np.inf), NormedSpace.lp(4, 1))
    assert abs(got - want) < 1e-10


def test_operator_norm_euclidean_is_spectral():
    rng = np.random.default_rng(9)
    T = rng.normal(size=(5, 7))
    want = float(np.linalg.norm(T, 2))
    got = operator_norm(T, NormedSpace.euclidean(7), NormedSpace.euclidean(5))
    assert abs(got - want) < 1e-10


def test_operator_norm_functional_uses_dual():
    y = np.array([[1.0, -2.0, 0.5]])
    space = NormedSpace.lp(3, 3)
    assert abs(operator_norm(y, space) - space.dual_norm(y[0])) < 1e-12


def test_operator_norm_polytope_vertices():
    square = NormedSpace.polytope([[1.0, 1.0], [1.0, -1.0]])
    T = np.array([[2.0, 0.0], [0.0, 1.0]])
    verts = square.unit_ball_vertices()
    want = max(float(np.linalg.norm(T @ v)) for v in verts)
    got = operator_norm(T, square, NormedSpace.euclidean(2))
    assert abs(got - want) < 1e-12


def test_operator_norm_sampled_monotone_and_sharp_on_diagonal():
    # l3 -> l3 has no exact path; a diagonal map has norm max |d_i| there
    d = np.array([0.3, -1.7, 0.9, 1.1])
    T = np.diag(d)
    space = NormedSpace.lp(4, 3)
    want = float(np.abs(d).max())
    prev = -np.inf
    for samples in [64, 256, 600, 1024, 2048]:
        got = operator_norm(T, space, space, samples=samples, seed=11)
        assert got >= prev - 1e-15
        assert got <= want + 1e-9
        prev = got
    assert abs(prev - want) < 1e-9


def test_operator_norm_shape_checks():
    space = NormedSpace.euclidean(3)
    with pytest.raises(ValueError):
        operator_norm(np.eye(2), space, space)
    with pytest.raises(ValueError):
        operator_norm(np.ones((2, 3)), space)


def test_unconditional_constant_identity_basis():
    for space in [NormedSpace.lp(3, 1), NormedSpace.euclidean(3), NormedSpace.lp(3, np.inf)]:
        got = unconditional_constant(np.eye(3), space, samples=256, seed=0)
        assert abs(got - 1.0) < 1e-9


def test_unconditional_constant_skewed_basis_oracle():
    # basis e1, (e1+e2)/sqrt(2) in the plane: the worst ratio over the circle
    # and all four sign patterns is 1 + sqrt(2)
    space = NormedSpace.euclidean(2)
    B = np.array([[1.0, 1.0 / math.sqrt(2)], [0.0, 1.0 / math.sqrt(2)]])
    ts = np.linspace(0, 2 * np.pi, 400001)
    xs = np.stack([np.cos(ts), np.sin(ts)], axis=1)
    coords = xs @ np.linalg.inv(B).T
    want = 0.0
    for s1, s2 in itertools.product([-1.0, 1.0], repeat=2):
        flipped = coords * np.array([s1, s2])
        want = max(want, float(np.linalg.norm(flipped @ B.T, axis=1).max()))
    assert abs(want - (1.0 + math.sqrt(2.0))) < 1e-6
    got = unconditional_constant(B, space, samples=1024, seed=0)
    assert abs(got - want) < 2e-3


def test_unconditional_constant_rejects_rank_deficient():
    with pytest.raises(ValueError):
        unconditional_constant(np.ones((2, 2)), NormedSpace.euclidean(2))


def test_adapted_basis_euclidean_structure():
    rng = np.random.default_rng(12)
    space = NormedSpace.euclidean(6)
    W = np.linalg.qr(rng.normal(size=(6, 2)))[0]
    ab = adapted_basis(space, W, samples=512, seed=0)
    assert np.allclose(ab.P @ ab.P, ab.P, atol=1e-10)
    assert np.allclose(ab.P @ ab.W, ab.W, atol=1e-10)
    assert np.allclose(ab.P + ab.Q, np.eye(6), atol=1e-12)
    assert ab.K_d <= 1.0 + 1e-9
    assert ab.K_u <= 1.0 + 1e-9
    assert ab.tildeK <= 1.0 + 1e-9
    xs = rng.normal(size=(100, 6))
    assert np.allclose(ab.reconstruct(xs), xs, atol=1e-9)


def test_adapted_basis_zero_dimensional_subspace():
    space = NormedSpace.lp(4, np.inf)
    ab = adapted_basis(space, None, samples=256, seed=0)
    assert ab.d == 0
    assert np.allclose(ab.P, 0.0)
    assert np.allclose(ab.Q, np.eye(4))
    assert ab.tildeK <= 1.0 + 1e-9
    assert abs(space.norm(ab.basis.T).max() - 1.0) < 1e-12


def test_adapted_basis_sup_norm_projection_stays_small():
    space = NormedSpace.lp(2, np.inf)
    W = np.array([[1.0], [1.0]]) / math.sqrt(2.0)
    ab = adapted_basis(space, W, samples=512, seed=0)
    p_op = operator_norm(ab.P, space, space)
    assert p_op <= 1.0 + 1e-6
    assert ab.K_d <= 2.0 + 1e-6
    rng = np.random.default_rng(13)
    xs = rng.normal(size=(50, 2))
    assert np.allclose(ab.reconstruct(xs), xs, atol=1e-8)


def test_adapted_basis_reconstruction_general():
    rng = np.random.default_rng(14)
    space = NormedSpace.lp(4, np.inf)
    W = np.linalg.qr(rng.normal(size=(4, 2)))[0]
    ab = adapted_basis(space, W, samples=256, seed=0)
    xs = rng.normal(size=(200, 4))
    assert np.allclose(ab.reconstruct(xs), xs, atol=1e-8)


def test_adapted_basis_rejects_oversized_subspace():
    space = NormedSpace.euclidean(3)
    with pytest.raises(ValueError):
        adapted_basis(space, np.eye(3)[:, :2] @ np.ones((2, 4)))
    with pytest.raises(ValueError):
        adapted_basis(space, np.eye(4))


def test_tilde_k_witness_at_least_one_and_capped_for_lp():
    rng = np.random.default_rng(15)
    for p in [1.0, np.inf]:
        space = NormedSpace.lp(3, p)
        for d in [1, 2]:
            W = np.linalg.qr(rng.normal(size=(3, d)))[0]
            ab = adapted_basis(space, W, samples=512, seed=0)
            assert ab.tildeK >= 1.0 - 1e-12
            assert ab.tildeK <= math.sqrt(d) + 2.0 + 1e-6


def test_tilde_k_witness_full_subspace_is_norm_of_identity():
    space = NormedSpace.lp(3, 1)
    ab = adapted_basis(space, np.eye(3), samples=256, seed=0)
    assert abs(ab.tildeK - 1.0) < 1e-9
    got = tilde_k_witness(ab, space, samples=256, seed=0)
    assert abs(got - ab.tildeK) < 1e-12
