import numpy as np
import pytest

from mlgssl.augment import (AugConfig, GraphView, drop_edges, generate_views,
                            identity_view, mask_features, shuffle_nodes)
from mlgssl.graph import SbmConfig, generate_sbm, make_graph


@pytest.fixture
def graph():
    return generate_sbm(
        SbmConfig(sizes=(12, 12), p_in=0.5, p_out=0.1, feature_dim=6,
                  noise_sigma=0.5), 4)


def test_aug_config_validation():
    with pytest.raises(ValueError):
        AugConfig(drop_edge_rate_1=1.5)
    with pytest.raises(ValueError):
        AugConfig(mask_feature_rate_2=-0.1)
    with pytest.raises(ValueError):
        AugConfig(scheme="degree")


def test_identity_view(graph):
    v = identity_view(graph)
    assert v.n == graph.n
    assert v.features is graph.features
    assert v.permutation is None


def test_drop_edges_subset_and_rates(graph):
    v = drop_edges(graph, 0.3, 8)
    kept = {tuple(e) for e in v.edges}
    assert kept <= graph.edge_set()
    assert drop_edges(graph, 0.0, 8).edges.shape == graph.edges.shape
    assert drop_edges(graph, 1.0, 8).edges.shape[0] == 0
    # features untouched
    assert v.features is graph.features
    with pytest.raises(ValueError):
        drop_edges(graph, 1.2, 8)


def test_drop_edges_empirical_rate():
    g = make_graph(200, [(i, i + 1) for i in range(199)], np.zeros((200, 2)))
    kept = np.mean([drop_edges(g, 0.4, s).edges.shape[0] / 199 for s in range(50)])
    assert abs(kept - 0.6) < 0.05


def test_mask_features_whole_columns(graph):
    v = mask_features(graph, 0.5, 8)
    zeroed = np.all(v.features == 0.0, axis=0)
    untouched = ~zeroed
    np.testing.assert_array_equal(v.features[:, untouched], graph.features[:, untouched])
    assert mask_features(graph, 0.0, 8).features.tolist() == graph.features.tolist()
    assert np.all(mask_features(graph, 1.0, 8).features == 0.0)
    # topology untouched
    np.testing.assert_array_equal(v.edges, graph.edges)


def test_shuffle_nodes_permutes_rows(graph):
    v = shuffle_nodes(graph, 8)
    assert v.permutation is not None
    assert sorted(v.permutation.tolist()) == list(range(graph.n))
    np.testing.assert_array_equal(v.features, graph.features[v.permutation])
    np.testing.assert_array_equal(v.edges, graph.edges)  # topology fixed
    v2 = shuffle_nodes(graph, 8)
    np.testing.assert_array_equal(v.permutation, v2.permutation)


def test_generate_views_structure(graph):
    cfg = AugConfig()
    v1, v2, v3 = generate_views(graph, cfg, 0)
    assert all(v.n == graph.n for v in (v1, v2, v3))
    # positive views never permute node identity
    assert v1.permutation is None and v2.permutation is None
    assert v3.permutation is not None
    # positives drop edges from the source edge set
    assert {tuple(e) for e in v1.edges} <= graph.edge_set()
    assert {tuple(e) for e in v2.edges} <= graph.edge_set()
    # negative view keeps full topology and permutes features
    np.testing.assert_array_equal(v3.edges, graph.edges)
    np.testing.assert_array_equal(v3.features, graph.features[v3.permutation])


def test_generate_views_deterministic(graph):
    a = generate_views(graph, AugConfig(), 123)
    b = generate_views(graph, AugConfig(), 123)
    for va, vb in zip(a, b):
        np.testing.assert_array_equal(va.edges, vb.edges)
        np.testing.assert_array_equal(va.features, vb.features)
    c = generate_views(graph, AugConfig(), 124)
    assert any(
        va.edges.shape != vc.edges.shape or not np.array_equal(va.features, vc.features)
        for va, vc in zip(a, c))


def test_views_differ_between_one_and_two(graph):
    v1, v2, _ = generate_views(graph, AugConfig(), 5)
    assert (v1.edges.shape != v2.edges.shape
            or not np.array_equal(v1.edges, v2.edges)
            or not np.array_equal(v1.features, v2.features))
