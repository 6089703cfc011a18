import numpy as np
import pytest

from socpgo.datasets import FIXTURES, fig1_graph, make_fixture
from socpgo.exceptions import InvalidArgumentError
from socpgo.graph import PoseGraph, partition_contiguous
from socpgo.initialization import spanning_tree_init
from socpgo.runtime import ENTRY_BYTES, boundary_sets, comm_accounting, run_distributed
from socpgo.soc import SocConfig, scaled_config, solve_rotations

from conftest import random_rotations


def test_single_agent_is_centralized():
    g, _, _, _ = make_fixture("grid-27", 1)
    init = spanning_tree_init(g)
    cfg = scaled_config(g)
    R0, rep0 = solve_rotations(g, init, cfg)
    R1, rep1, stats = run_distributed(g, init, cfg, agents=1)
    assert np.array_equal(R0, R1) and rep0.same_run(rep1)
    assert stats.messages == 0 and stats.payload_bytes == 0
    assert stats.rounds == rep1.iterations


def test_fig1_messages_per_round():
    g, _ = fig1_graph()
    init = np.tile(np.eye(3), (16, 1, 1))
    _, rep, stats, run = run_distributed(g, init, SocConfig(max_iters=5, eps=1e-300), agents=4,
                                         keep_messages=True, full_output=True)
    part = run.graph.partition
    pairs = {frozenset((int(part[a]), int(part[b])))
             for a, b in zip(g.edge_i, g.edge_j) if part[a] != part[b]}
    assert all(len(r) == 2 * len(pairs) for r in run.messages)
    assert stats.messages == 5 * 2 * len(pairs)


@pytest.mark.parametrize("schedule", ["jacobi", "gs"])
def test_circle_five_agents_matches_centralized(schedule):
    g, _, _, _ = make_fixture("circle-25", 0)
    init = spanning_tree_init(g)
    cfg = scaled_config(g)
    R0, rep0 = solve_rotations(partition_contiguous(g, 5), init, cfg, schedule=schedule)
    R1, rep1, _ = run_distributed(g, init, cfg, agents=5, schedule=schedule)
    assert np.abs(R0 - R1).max() <= 1e-12
    assert rep0.iterations == rep1.iterations


def test_two_agents_ten_rounds():
    n = 4
    rng = np.random.default_rng(1)
    g = PoseGraph(n, [0, 1, 2], [1, 2, 3], random_rotations(rng, 3), np.zeros((3, 3)))
    _, rep, stats, run = run_distributed(g, random_rotations(rng, n),
                                         SocConfig(max_iters=10, eps=1e-300), agents=2,
                                         full_output=True)
    assert rep.iterations == 10 and not rep.converged
    assert stats.rounds == 10 and stats.messages == 20
    assert stats.payload_bytes == 20 * ENTRY_BYTES == 20 * (9 * 8 + 8)
    c = comm_accounting(run)
    assert (c.rounds, c.messages, c.payload_bytes) == (stats.rounds, stats.messages,
                                                       stats.payload_bytes)


def test_message_payload_invariants():
    g, _, _, _ = make_fixture("sphere-50", 2)
    _, _, _, run = run_distributed(g, spanning_tree_init(g), SocConfig(max_iters=3, eps=1e-300),
                                   agents=4, keep_messages=True, full_output=True)
    gp = run.graph
    part = gp.partition
    for rnd, msgs in enumerate(run.messages, start=1):
        for msg in msgs:
            assert msg.round == rnd and msg.from_agent != msg.to_agent
            for node, mat in msg.payload:
                assert part[node] == msg.from_agent
                touching = [(a, b) for a, b in zip(gp.edge_i, gp.edge_j)
                            if (a == node and part[b] == msg.to_agent)
                            or (b == node and part[a] == msg.to_agent)]
                assert touching
                assert mat.shape == (3, 3)


def test_comm_stats_monotone():
    g, _, _, _ = make_fixture("circle-25", 3)
    init = spanning_tree_init(g)
    prev = (0, 0, 0)
    for k in range(1, 6):
        _, _, s = run_distributed(g, init, SocConfig(max_iters=k, eps=1e-300), agents=3)
        cur = (s.rounds, s.messages, s.payload_bytes)
        assert all(c >= p for c, p in zip(cur, prev))
        prev = cur


def test_boundary_sets_partition_correctness():
    g = partition_contiguous(make_fixture("grid-27")[0], 4)
    for (a, b), nodes in boundary_sets(g).items():
        assert a != b and np.all(g.partition[nodes] == a)
    inter = g.partition[g.edge_i] != g.partition[g.edge_j]
    assert np.array_equal(inter, g.inter_mask)


@pytest.mark.parametrize("name", sorted(FIXTURES))
@pytest.mark.parametrize("agents", [2, 8])
def test_fidelity_and_recount(name, agents):
    g, _, _, _ = make_fixture(name, 4)
    init = spanning_tree_init(g)
    cfg = scaled_config(g)
    R0, rep0 = solve_rotations(g, init, cfg)
    R1, rep1, stats, run = run_distributed(g, init, cfg, agents=agents, full_output=True)
    assert np.abs(R0 - R1).max() <= 1e-12 and rep0.same_run(rep1)
    c = comm_accounting(run)
    assert (c.messages, c.payload_bytes) == (stats.messages, stats.payload_bytes)


def test_run_distributed_errors():
    g, _, _, _ = make_fixture("circle-25")
    with pytest.raises(InvalidArgumentError):
        run_distributed(g, np.tile(np.eye(3), (25, 1, 1)), agents=26)
    with pytest.raises(InvalidArgumentError):
        run_distributed(g, np.tile(np.eye(3), (24, 1, 1)))
    with pytest.raises(InvalidArgumentError):
        run_distributed(g, np.tile(np.eye(3), (25, 1, 1)), schedule="async")
