import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from socpgo.datasets import FIXTURES, make_fixture
from socpgo.exceptions import InvalidArgumentError
from socpgo.geometry import chordal_distance, translation_residual
from socpgo.graph import (
    PoseEstimate,
    PoseGraph,
    evaluate_objective,
    incident_edges,
    information_weights,
    partition_contiguous,
    require_connected,
    rotation_objective,
    validate_graph,
)

from conftest import random_rotations


def chain(n, rot=None, trans=None):
    m = n - 1
    rot = np.tile(np.eye(3), (m, 1, 1)) if rot is None else rot
    trans = np.zeros((m, 3)) if trans is None else trans
    return PoseGraph(n, np.arange(m), np.arange(1, n), rot, trans)


def random_graph(rng, n, extra):
    ei = list(range(n - 1))
    ej = list(range(1, n))
    for _ in range(extra):
        a, b = rng.choice(n, 2, replace=False)
        ei.append(a)
        ej.append(b)
    m = len(ei)
    return PoseGraph(n, ei, ej, random_rotations(rng, m), rng.normal(size=(m, 3)))


def test_two_node_hand_value():
    g = chain(2)
    est = PoseEstimate(np.tile(np.eye(3), (2, 1, 1)), [[0, 0, 0], [1, 0, 0]])
    assert evaluate_objective(g, est) == 1.0


def test_consistent_measurements_give_zero(rng):
    n = 6
    R = random_rotations(rng, n)
    t = rng.normal(size=(n, 3))
    ei, ej = np.arange(n - 1), np.arange(1, n)
    rot = np.transpose(R[ei], (0, 2, 1)) @ R[ej]
    trans = np.einsum("kba,kb->ka", R[ei], t[ej] - t[ei])
    g = PoseGraph(n, ei, ej, rot, trans)
    assert evaluate_objective(g, PoseEstimate(R, t)) <= 1e-18


def test_objective_matches_edgewise_geometry(rng):
    g = random_graph(rng, 8, 10)
    est = PoseEstimate(random_rotations(rng, 8), rng.normal(size=(8, 3)))
    total = 0.0
    for e in g.edges:
        Ri, Rj = est.rotations[e.i], est.rotations[e.j]
        total += translation_residual(est.translations[e.i], est.translations[e.j], Ri, e.trans) ** 2
        total += chordal_distance(Ri @ e.rot, Rj) ** 2
    assert evaluate_objective(g, est) == pytest.approx(total, rel=1e-9)
    F, ft, fr = evaluate_objective(g, est, split=True)
    assert F == pytest.approx(ft + fr)
    assert fr == pytest.approx(rotation_objective(g, est.rotations))


def test_objective_order_independent(rng):
    g = random_graph(rng, 10, 20)
    est = PoseEstimate(random_rotations(rng, 10), rng.normal(size=(10, 3)))
    p = rng.permutation(g.edge_count)
    h = PoseGraph(10, g.edge_i[p], g.edge_j[p], g.rot[p], g.trans[p])
    assert evaluate_objective(h, est) == pytest.approx(evaluate_objective(g, est), rel=1e-9)


def test_objective_size_mismatch():
    with pytest.raises(InvalidArgumentError):
        evaluate_objective(chain(3), PoseEstimate.identity(2))


@given(st.integers(0, 2**32 - 1))
def test_gauge_invariance(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 7, 8)
    est = PoseEstimate(random_rotations(rng, 7), 10 * rng.normal(size=(7, 3)))
    Q = random_rotations(rng, 1)[0]
    c = 100 * rng.normal(size=3)
    F0 = evaluate_objective(g, est)
    F1 = evaluate_objective(g, est.transformed(Q, c))
    assert abs(F1 - F0) <= 1e-7 * F0


def test_weights_scale_terms(rng):
    g = random_graph(rng, 5, 3)
    est = PoseEstimate(random_rotations(rng, 5), rng.normal(size=(5, 3)))
    _, ft, fr = evaluate_objective(g, est, split=True)
    h = g.with_weights(kappa=np.full(g.edge_count, 2.0), tau=np.full(g.edge_count, 3.0))
    assert evaluate_objective(h, est) == pytest.approx(3 * ft + 2 * fr)
    assert not h.unit_weights and g.unit_weights


def test_information_weights_identity():
    kappa, tau = information_weights(np.eye(6)[None])
    assert tau[0] == pytest.approx(1.0)
    assert kappa[0] == pytest.approx(0.5)


def test_graph_rejects_bad_input():
    with pytest.raises(InvalidArgumentError):
        PoseGraph(2, [0], [2], np.eye(3)[None], np.zeros((1, 3)))
    with pytest.raises(InvalidArgumentError):
        PoseGraph(2, [1], [1], np.eye(3)[None], np.zeros((1, 3)))


def test_graph_is_immutable():
    g = chain(3)
    with pytest.raises(ValueError):
        g.rot[0, 0, 0] = 5.0


# -- validation -----------------------------------------------------------------

def test_disjoint_chains_not_connected():
    g = PoseGraph(4, [0, 2], [1, 3], np.tile(np.eye(3), (2, 1, 1)), np.zeros((2, 3)))
    d = validate_graph(g)
    assert not d.connected and d.component_count == 2
    with pytest.raises(InvalidArgumentError):
        require_connected(g)


def test_single_node_connected_with_warning():
    g = PoseGraph(1, [], [], np.zeros((0, 3, 3)), np.zeros((0, 3)))
    d = validate_graph(g)
    assert d.connected
    assert any("no edges" in w for w in d.warnings)


def test_validate_flags_duplicates_and_bad_rotations():
    rot = np.stack([np.eye(3), np.eye(3), np.diag([1.0, 1.0, -1.0])])
    g = PoseGraph(3, [0, 1, 1], [1, 0, 2], rot, np.zeros((3, 3)))
    d = validate_graph(g)
    assert d.duplicate_edges == [(0, 1)]
    assert d.invalid_rotations == [2]
    assert not d.ok


# -- incidence --------------------------------------------------------------------

def test_incident_edges_chain():
    g = chain(3)
    assert incident_edges(g, 1) == ([1], [0])


def test_incident_edges_isolated():
    g = PoseGraph(1, [], [], np.zeros((0, 3, 3)), np.zeros((0, 3)))
    assert incident_edges(g, 0) == ([], [])
    with pytest.raises(InvalidArgumentError):
        incident_edges(g, 1)


def test_circle_degrees_sum():
    g = make_fixture("circle-25")[0]
    assert sum(len(o) + len(i) for o, i in (incident_edges(g, k) for k in range(25))) == 600


@given(st.integers(0, 2**32 - 1))
def test_incidence_partitions_edges(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 9, 12)
    outs, ins = [], []
    for k in range(9):
        o, i = incident_edges(g, k)
        outs += o
        ins += i
    assert sorted(outs) == list(range(g.edge_count))
    assert sorted(ins) == list(range(g.edge_count))


# -- partitions -----------------------------------------------------------------------

def test_partition_fig1_blocks():
    g = partition_contiguous(chain(16), 4)
    assert g.partition.tolist() == [0] * 4 + [1] * 4 + [2] * 4 + [3] * 4
    assert g.inter_mask.tolist() == [k in (3, 7, 11) for k in range(15)]


def test_partition_single_agent():
    g = partition_contiguous(chain(5), 1)
    assert not g.inter_mask.any()
    assert all(e.kind == "intra" for e in g.edges)


def test_partition_sizes_10_over_3():
    g = partition_contiguous(chain(10), 3)
    assert np.bincount(g.partition).tolist() == [4, 3, 3]


def test_partition_too_many_agents():
    with pytest.raises(InvalidArgumentError):
        partition_contiguous(chain(3), 4)


@given(st.integers(1, 40), st.integers(1, 40))
def test_partition_properties(n, a):
    if a > n:
        return
    g = partition_contiguous(chain(n) if n > 1 else
                             PoseGraph(1, [], [], np.zeros((0, 3, 3)), np.zeros((0, 3))), a)
    sizes = np.bincount(g.partition, minlength=a)
    assert sizes.max() - sizes.min() <= 1 and sizes.sum() == n
    assert np.all(np.diff(g.partition) >= 0)
    inter = g.partition[g.edge_i] != g.partition[g.edge_j]
    assert np.array_equal(inter, g.inter_mask)


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_fixture_gauge_invariance(name, rng):
    g, truth, _, _ = make_fixture(name, 3)
    Q = random_rotations(rng, 1)[0]
    F0 = evaluate_objective(g, truth)
    F1 = evaluate_objective(g, truth.transformed(Q, rng.normal(size=3) * 50))
    assert abs(F1 - F0) <= 1e-7 * F0
