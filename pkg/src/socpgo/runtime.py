"""Simulated multi-agent execution of the SOC rotation solver.

Agents own contiguous blocks of poses. Every synchronous round each agent
sends the current estimates of its boundary poses to the agents it shares an
edge with, then runs the SOC steps on its own poses using its local copies of
the neighbours' values. A collector reduces the per-node residual pieces
(in global node order) and broadcasts the stopping decision and the next
penalty, so the run reproduces the single-process Jacobi solver exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidArgumentError
from .graph import PoseEstimate, PoseGraph, partition_contiguous, require_connected
from .soc import (
    SCHEDULES,
    SocConfig,
    SocReport,
    _Collector,
    _frob_norms,
    _graph_neighbors,
    _local_update,
    _residual_terms,
)

__all__ = ["Agent", "Message", "CommStats", "DistributedRun", "run_distributed",
           "comm_accounting", "boundary_sets"]

REAL_BYTES = 8
ID_BYTES = 8
ENTRY_BYTES = 9 * REAL_BYTES + ID_BYTES


@dataclass
class Message:
    from_agent: int
    to_agent: int
    round: int
    payload: list  # [(node id, 3x3 array), ...]

    @property
    def nbytes(self):
        return len(self.payload) * ENTRY_BYTES


@dataclass
class CommStats:
    rounds: int = 0
    messages: int = 0
    payload_bytes: int = 0

    def add(self, msg: Message):
        self.messages += 1
        self.payload_bytes += msg.nbytes


@dataclass
class Agent:
    """One worker. ``R``, ``omega`` and ``B`` are aligned with ``owned``."""

    id: int
    owned: np.ndarray
    neighbor_agents: list
    send_sets: dict  # to_agent -> sorted owned boundary nodes
    R: np.ndarray = None
    omega: np.ndarray = None
    B: np.ndarray = None
    view: np.ndarray = None  # full-size buffer: own values and received copies

    def outbox(self, rnd, source):
        X = self.omega if source == "omega" else self.R
        pos = {int(v): k for k, v in enumerate(self.owned)}
        return [Message(self.id, b, rnd, [(int(v), X[pos[int(v)]].copy()) for v in nodes])
                for b, nodes in self.send_sets.items()]

    def receive(self, msg: Message):
        for node, mat in msg.payload:
            self.view[node] = mat


@dataclass
class DistributedRun:
    graph: PoseGraph
    agents: list
    report: SocReport
    messages: list = field(default_factory=list)  # one list of Message per round
    keep_messages: bool = False


def boundary_sets(g: PoseGraph):
    """``{(a, b): sorted nodes of agent a adjacent to agent b}`` over inter edges."""
    part = g.partition
    inter = np.flatnonzero(g.inter_mask)
    out = {}
    for k in inter:
        i, j = int(g.edge_i[k]), int(g.edge_j[k])
        a, b = int(part[i]), int(part[j])
        out.setdefault((a, b), set()).add(i)
        out.setdefault((b, a), set()).add(j)
    return {key: np.array(sorted(v), dtype=int) for key, v in sorted(out.items())}


def _make_agents(g, rotations):
    bsets = boundary_sets(g)
    agents = []
    n = g.node_count
    for a in range(g.agent_count):
        owned = np.flatnonzero(g.partition == a)
        sends = {b: nodes for (x, b), nodes in bsets.items() if x == a}
        ag = Agent(a, owned, sorted(sends), sends)
        ag.R = rotations[owned].copy()
        ag.omega = rotations[owned].copy()
        ag.B = np.zeros_like(ag.R)
        ag.view = np.full((n, 3, 3), np.nan)
        agents.append(ag)
    return agents


def _agent_round(nb, g, ag, rho, cfg, schedule):
    """SOC step on the agent's own nodes. Returns the degenerate count."""
    X_own = ag.omega if cfg.neighbor_source == "omega" else ag.R
    ag.view[ag.owned] = X_own
    if schedule == "jacobi":
        R, omega, B, bad = _local_update(nb.data_sum(ag.owned, ag.view), nb.wdeg[ag.owned],
                                         ag.omega, ag.B, rho, cfg)
    else:
        prev = ag.view.copy()
        cur = ag.view  # own entries refreshed as the sweep proceeds
        R, omega, B = ag.R.copy(), ag.omega.copy(), ag.B.copy()
        part = g.partition
        bad = 0
        for k, i in enumerate(ag.owned):
            nbrs = nb.nbr[i]
            same = (part[nbrs] == part[i])[:, None, None]
            vals = np.where(same, cur[nbrs], prev[nbrs])
            data = np.zeros((1, 3, 3))
            for p in range(nb.width):
                data = data + nb.weight[i, p] * (vals[p] @ nb.factor[i, p])
            sl = slice(k, k + 1)
            Ri, wi, Bi, b = _local_update(data, nb.wdeg[i:i + 1], omega[sl], B[sl], rho, cfg)
            R[k], omega[k], B[k] = Ri[0], wi[0], Bi[0]
            cur[i] = wi[0] if cfg.neighbor_source == "omega" else Ri[0]
            bad += b
    ag.R, ag.omega, ag.B = R, omega, B
    return bad


def run_distributed(g: PoseGraph, init, cfg: SocConfig | None = None, agents=1,
                    schedule="jacobi", keep_messages=False, full_output=False):
    """Solve the rotation problem with ``agents`` simulated workers.

    Parameters
    ----------
    g : PoseGraph
        Connected graph. It is re-partitioned into ``agents`` contiguous
        blocks; the caller's partition is ignored.
    init : PoseEstimate or ndarray (n, 3, 3)
    cfg : SocConfig, optional
    agents : int
    schedule : {"jacobi", "gs"}
        ``"gs"`` sweeps each agent's own nodes sequentially; agents still
        exchange values only between rounds.
    keep_messages : bool
        Retain every :class:`Message` (memory grows with the run).
    full_output : bool
        Also return the :class:`DistributedRun`.

    Returns
    -------
    rotations : ndarray (n, 3, 3)
    report : SocReport
    stats : CommStats
    """
    cfg = cfg or SocConfig()
    if schedule not in SCHEDULES:
        raise InvalidArgumentError(f"schedule must be one of {SCHEDULES}")
    require_connected(g)
    gp = partition_contiguous(g, agents)
    rotations = init.rotations if isinstance(init, PoseEstimate) else init
    rotations = np.array(rotations, dtype=float).reshape(-1, 3, 3)
    if len(rotations) != g.node_count:
        raise InvalidArgumentError("initial rotations do not match the graph")
    nb = _graph_neighbors(gp)
    workers = _make_agents(gp, rotations)
    report = SocReport(schedule=schedule)
    run = DistributedRun(gp, workers, report, keep_messages=keep_messages)
    collector = _Collector(gp, cfg, report)
    n = g.node_count
    stats = CommStats()
    rho = float(cfg.rho0)
    omega = rotations.copy()
    it = 0
    t0 = time.perf_counter()
    while it < cfg.max_iters:
        # communication phase
        sent = []
        for ag in workers:
            for msg in ag.outbox(it + 1, cfg.neighbor_source):
                stats.add(msg)
                sent.append(msg)
        for msg in sent:
            workers[msg.to_agent].receive(msg)
        if keep_messages:
            run.messages.append(sent)
        # local computation phase
        omega_old = omega
        orth_sq, mis_sq, dn = np.empty(n), np.empty(n), np.empty(n)
        omega = np.empty((n, 3, 3))
        for ag in workers:
            prev = ag.omega
            report.degenerate_projections += _agent_round(nb, gp, ag, rho, cfg, schedule)
            o, m = _residual_terms(ag.R, ag.omega)
            orth_sq[ag.owned], mis_sq[ag.owned] = o, m
            dn[ag.owned] = _frob_norms(ag.omega - prev)
            omega[ag.owned] = ag.omega
        del omega_old
        it += 1
        stats.rounds = it
        done, new_rho = collector.finish_round(it, rho, omega, orth_sq, mis_sq, dn)
        if new_rho != rho:
            for ag in workers:
                ag.B *= rho / new_rho
            rho = new_rho
        if done:
            break
    report.wall_time = time.perf_counter() - t0
    if it == 0:
        o, m = _residual_terms(rotations, rotations)
        report.final_p_res = float(np.sqrt(np.sum(o) + np.sum(m)))
    out = (omega.copy(), report, stats)
    return out + (run,) if full_output else out


def comm_accounting(run: DistributedRun) -> CommStats:
    """Recount communication from the partition alone.

    Each round every ordered pair of adjacent agents exchanges one message
    whose payload is the sender's boundary set toward the receiver.
    """
    bsets = boundary_sets(run.graph)
    rounds = run.report.iterations
    per_round = len(bsets)
    entries = sum(len(v) for v in bsets.values())
    return CommStats(rounds, rounds * per_round, rounds * entries * ENTRY_BYTES)
