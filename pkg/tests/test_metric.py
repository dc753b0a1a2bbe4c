import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipflat import (
    FiniteMetricSpace,
    LipschitzMap,
    NormedSpace,
    kuratowski_embed,
    max_epsilon_net,
    neighborhood_graph,
)
from lipflat.metric import (
    fragment_from_path,
    load_csv,
    save_matrix_csv,
    save_points_csv,
    validate_metric,
)


def _square():
    return FiniteMetricSpace.from_coords(
        np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    )


def test_validate_metric_accepts_euclidean():
    pts = np.random.default_rng(0).normal(size=(12, 3))
    from scipy.spatial.distance import cdist

    assert validate_metric(cdist(pts, pts))["ok"]


def test_validate_metric_rejects_asymmetry_and_negative():
    D = np.array([[0.0, 1.0], [2.0, 0.0]])
    assert not validate_metric(D)["ok"]
    D = np.array([[0.0, -1.0], [-1.0, 0.0]])
    assert not validate_metric(D)["ok"]


def test_validate_metric_rejects_triangle_violation():
    D = np.array(
        [
            [0.0, 1.0, 5.0],
            [1.0, 0.0, 1.0],
            [5.0, 1.0, 0.0],
        ]
    )
    diag = validate_metric(D)
    assert not diag["ok"]
    assert diag["triangle"] is not None


def test_from_coords_matches_hand_distances():
    space = _square()
    assert space.distance(0, 3) == pytest.approx(np.sqrt(2.0))
    assert space.diameter() == pytest.approx(np.sqrt(2.0))
    assert space.separation() == pytest.approx(1.0)


def test_from_coords_linf_and_l1():
    pts = np.array([[0.0, 0.0], [3.0, 4.0]])
    s1 = FiniteMetricSpace.from_coords(pts, space=NormedSpace.lp(2, 1.0))
    si = FiniteMetricSpace.from_coords(pts, space=NormedSpace.lp(2, np.inf))
    assert s1.distance(0, 1) == pytest.approx(7.0)
    assert si.distance(0, 1) == pytest.approx(4.0)


def test_from_coords_rejects_coincident_points():
    with pytest.raises(ValueError):
        FiniteMetricSpace.from_coords(np.array([[0.0, 0.0], [0.0, 0.0]]))


def test_subset_keeps_distances():
    space = _square()
    sub = space.subset([0, 3])
    assert sub.n == 2
    assert sub.distance(0, 1) == pytest.approx(space.distance(0, 3))


def test_json_roundtrip_cloud_and_matrix():
    space = _square()
    again = FiniteMetricSpace.from_json(space.to_json())
    assert np.allclose(again.D, space.D)
    bare = FiniteMetricSpace(space.D, validate=False)
    again = FiniteMetricSpace.from_json(bare.to_json())
    assert np.allclose(again.D, space.D)


def test_csv_roundtrips(tmp_path):
    space = _square()
    ppath = str(tmp_path / "pts.csv")
    save_points_csv(ppath, space.coords)
    loaded = load_csv(ppath)
    assert np.array_equal(loaded.coords, space.coords)
    mpath = str(tmp_path / "mat.csv")
    save_matrix_csv(mpath, space.D)
    loaded = load_csv(mpath)
    assert np.array_equal(loaded.D, space.D)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(-50, 50), st.integers(-50, 50)),
        min_size=2,
        max_size=12,
        unique=True,
    ),
    st.sampled_from([1.0, 2.0, np.inf]),
)
def test_from_coords_is_metric(pts, p):
    coords = np.asarray(pts, dtype=float)
    space = FiniteMetricSpace.from_coords(coords, space=NormedSpace.lp(2, p))
    assert validate_metric(space.D)["ok"]


def test_complete_graph_covers_all_pairs():
    space = _square()
    g = neighborhood_graph(space, mode="complete")
    assert len(g.edges) == 6
    assert np.all(g.edges[:, 0] < g.edges[:, 1])
    assert np.allclose(g.lengths, space.D[g.edges[:, 0], g.edges[:, 1]])


def test_knn_graph_contains_nearest_neighbor():
    rng = np.random.default_rng(3)
    space = FiniteMetricSpace.from_coords(rng.normal(size=(30, 2)))
    g = neighborhood_graph(space, mode="knn", k=3)
    nbrs = g.neighbor_lists()
    off = space.D + np.diag(np.full(space.n, np.inf))
    for i in range(space.n):
        nearest = int(np.argmin(off[i]))
        assert nearest in [j for j, _ in nbrs[i]]


def test_radius_graph_filters_by_length():
    space = _square()
    g = neighborhood_graph(space, mode="radius", r=1.0)
    assert len(g.edges) == 4
    assert g.lengths.max() <= 1.0
    with pytest.raises(ValueError):
        neighborhood_graph(space, mode="radius")


def test_fragment_from_path_arc_length():
    space = _square()
    frag = fragment_from_path(space, [0, 1, 3])
    assert np.allclose(frag.params, [0.0, 1.0, 2.0])
    assert frag.total_length() == pytest.approx(2.0)
    lo, hi = frag.biLip
    # endpoints at distance sqrt(2) over parameter gap 2
    assert lo == pytest.approx(np.sqrt(2.0) / 2.0)
    assert hi == pytest.approx(1.0)


def test_fragment_rejects_revisits():
    space = _square()
    with pytest.raises(ValueError):
        fragment_from_path(space, [0, 1, 0])


def test_lipschitz_map_measures_scaling():
    space = _square()
    target = NormedSpace.euclidean(2)
    ident = LipschitzMap(space, target, space.coords)
    assert ident.lip == pytest.approx(1.0)
    doubled = LipschitzMap(space, target, 2.0 * space.coords)
    assert doubled.lip == pytest.approx(2.0)
    moved = LipschitzMap(space, target, space.coords + np.array([5.0, -1.0]))
    assert moved.displacement_from(ident) == pytest.approx(np.sqrt(26.0))


def test_max_epsilon_net_separated_and_covering():
    rng = np.random.default_rng(7)
    space = FiniteMetricSpace.from_coords(rng.uniform(size=(60, 2)))
    eps = 0.25
    net = max_epsilon_net(space, eps)
    sub = space.D[np.ix_(net, net)]
    off = sub + np.diag(np.full(len(net), np.inf))
    assert off.min() >= eps
    assert space.D[:, net].min(axis=1).max() < eps


def test_kuratowski_embed_is_one_lipschitz_with_slack():
    rng = np.random.default_rng(11)
    space = FiniteMetricSpace.from_coords(rng.uniform(size=(40, 2)))
    eps = 0.3
    net = max_epsilon_net(space, eps)
    F = kuratowski_embed(space, net)
    assert F.target.p == np.inf
    assert F.values.shape == (40, len(net))
    assert F.lip <= 1.0 + 1e-12
    for i in range(space.n - 1):
        img = F.target.norm(F.values[i][None, :] - F.values[i + 1 :])
        assert (img - space.D[i, i + 1 :]).min() >= -2.0 * eps - 1e-12


def test_net_of_net_point_distances_are_exact():
    # distance coordinates reproduce distances to net points exactly
    rng = np.random.default_rng(13)
    space = FiniteMetricSpace.from_coords(rng.uniform(size=(25, 2)))
    net = max_epsilon_net(space, 0.2)
    F = kuratowski_embed(space, net)
    for col, j in enumerate(net):
        assert np.allclose(F.values[:, col], space.D[:, j])
