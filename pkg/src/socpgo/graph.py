"""Pose-graph problem instances and the global objective.

A :class:`PoseGraph` stores its ``m`` directed measurements as parallel
arrays (``edge_i``, ``edge_j``, ``rot``, ``trans``) so that residuals can be
evaluated in bulk. Per-edge weights ``kappa`` (rotation) and ``tau``
(translation) default to one, which gives the plain unweighted objective

    F = sum_(i,j) |t_j - t_i - R_i t_ij|^2 + |R_ij^T R_i^T - R_j^T|_F^2 .
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .exceptions import InvalidArgumentError
from .geometry import Pose, is_rotation

__all__ = [
    "MeasurementEdge",
    "PoseGraph",
    "PoseEstimate",
    "GraphDiagnostics",
    "evaluate_objective",
    "rotation_objective",
    "edge_residuals",
    "validate_graph",
    "require_connected",
    "incident_edges",
    "partition_contiguous",
    "information_weights",
]

INTRA, INTER = "intra", "inter"


@dataclass(frozen=True)
class MeasurementEdge:
    i: int
    j: int
    rot: np.ndarray
    trans: np.ndarray
    kind: str = INTRA


class PoseGraph:
    """Nodes ``0..n-1``, directed measurement edges and an agent partition.

    Instances are treated as immutable; the ``with_*`` methods return
    modified copies.

    Parameters
    ----------
    node_count : int
    edge_i, edge_j : array_like of int, shape (m,)
        Tail and head of each measurement.
    rot : array_like, shape (m, 3, 3)
        Relative rotations ``R_ij``.
    trans : array_like, shape (m, 3)
        Relative translations ``t_ij`` (expressed in frame ``i``).
    partition : array_like of int, shape (n,), optional
        Owning agent of each node. Defaults to a single agent.
    information : array_like, shape (m, 6, 6), optional
        g2o information blocks, kept for round-tripping and for
        :func:`information_weights`.
    kappa, tau : array_like, shape (m,), optional
        Rotation / translation residual weights (default 1).
    """

    def __init__(self, node_count, edge_i, edge_j, rot, trans, partition=None,
                 information=None, kappa=None, tau=None):
        n = int(node_count)
        if n < 0:
            raise InvalidArgumentError("node_count must be nonnegative")
        ei = np.array(edge_i, dtype=np.int64).reshape(-1)
        ej = np.array(edge_j, dtype=np.int64).reshape(-1)
        m = len(ei)
        rot = np.array(rot, dtype=float).reshape(m, 3, 3)
        trans = np.array(trans, dtype=float).reshape(m, 3)
        if len(ej) != m:
            raise InvalidArgumentError("edge_i and edge_j differ in length")
        if m and (ei.min() < 0 or ej.min() < 0 or ei.max() >= n or ej.max() >= n):
            raise InvalidArgumentError("edge endpoint out of range")
        if np.any(ei == ej):
            raise InvalidArgumentError("self-loop edges are not allowed")
        if partition is None:
            partition = np.zeros(n, dtype=np.int64)
        partition = np.array(partition, dtype=np.int64).reshape(-1)
        if len(partition) != n:
            raise InvalidArgumentError("partition must assign every node once")
        if information is not None:
            information = np.array(information, dtype=float).reshape(m, 6, 6)
        kappa = np.ones(m) if kappa is None else np.array(kappa, float).reshape(m)
        tau = np.ones(m) if tau is None else np.array(tau, float).reshape(m)
        if np.any(kappa < 0) or np.any(tau < 0):
            raise InvalidArgumentError("weights must be nonnegative")

        self.node_count = n
        self.edge_i = ei
        self.edge_j = ej
        self.rot = rot
        self.trans = trans
        self.partition = partition
        self.information = information
        self.kappa = kappa
        self.tau = tau
        for a in (ei, ej, rot, trans, partition, kappa, tau):
            a.flags.writeable = False

    def __repr__(self):
        return (f"PoseGraph(n={self.node_count}, m={self.edge_count}, "
                f"agents={self.agent_count})")

    @property
    def edge_count(self):
        return len(self.edge_i)

    @property
    def agent_count(self):
        return int(self.partition.max()) + 1 if self.node_count else 0

    @property
    def unit_weights(self):
        return bool(np.all(self.kappa == 1.0) and np.all(self.tau == 1.0))

    @cached_property
    def inter_mask(self):
        return self.partition[self.edge_i] != self.partition[self.edge_j]

    @property
    def edges(self):
        kinds = np.where(self.inter_mask, INTER, INTRA)
        return [MeasurementEdge(int(a), int(b), self.rot[k], self.trans[k], str(kinds[k]))
                for k, (a, b) in enumerate(zip(self.edge_i, self.edge_j))]

    @cached_property
    def _incidence(self):
        # CSR-style out/in edge lists, each ordered by edge index.
        n = self.node_count
        order_out = np.argsort(self.edge_i, kind="stable")
        order_in = np.argsort(self.edge_j, kind="stable")
        ptr_out = np.zeros(n + 1, dtype=np.int64)
        ptr_in = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.edge_i, minlength=n), out=ptr_out[1:])
        np.cumsum(np.bincount(self.edge_j, minlength=n), out=ptr_in[1:])
        return order_out, ptr_out, order_in, ptr_in

    def degrees(self):
        return (np.bincount(self.edge_i, minlength=self.node_count)
                + np.bincount(self.edge_j, minlength=self.node_count))

    def adjacency(self):
        """Symmetric sparse 0/1 adjacency of the undirected support."""
        n = self.node_count
        A = sp.coo_matrix((np.ones(self.edge_count), (self.edge_i, self.edge_j)),
                          shape=(n, n)).tocsr()
        A = ((A + A.T) > 0).astype(float)
        return A

    def _replace(self, **kw):
        args = dict(node_count=self.node_count, edge_i=self.edge_i,
                    edge_j=self.edge_j, rot=self.rot, trans=self.trans,
                    partition=self.partition, information=self.information,
                    kappa=self.kappa, tau=self.tau)
        args.update(kw)
        return PoseGraph(**args)

    def with_partition(self, partition):
        return self._replace(partition=partition)

    def with_measurements(self, rot, trans):
        return self._replace(rot=rot, trans=trans)

    def with_weights(self, kappa=None, tau=None):
        """Copy with the given weights; ``None`` resets to unit weights."""
        return self._replace(kappa=kappa, tau=tau)


@dataclass
class PoseEstimate:
    """Absolute poses of all nodes, stored as stacked arrays."""

    rotations: np.ndarray
    translations: np.ndarray = field(default=None)

    def __post_init__(self):
        self.rotations = np.array(self.rotations, dtype=float).reshape(-1, 3, 3)
        if self.translations is None:
            self.translations = np.zeros((len(self.rotations), 3))
        self.translations = np.array(self.translations, dtype=float).reshape(-1, 3)
        if len(self.rotations) != len(self.translations):
            raise InvalidArgumentError("rotations and translations differ in length")

    def __len__(self):
        return len(self.rotations)

    def __getitem__(self, k):
        return Pose(self.rotations[k], self.translations[k])

    @property
    def poses(self):
        return [self[k] for k in range(len(self))]

    @classmethod
    def identity(cls, n):
        return cls(np.tile(np.eye(3), (n, 1, 1)), np.zeros((n, 3)))

    @classmethod
    def from_poses(cls, poses):
        poses = list(poses)
        return cls(np.array([p.rotation for p in poses]).reshape(-1, 3, 3),
                   np.array([p.translation for p in poses]).reshape(-1, 3))

    def copy(self):
        return PoseEstimate(self.rotations.copy(), self.translations.copy())

    def transformed(self, Q, c=None):
        """Apply the rigid motion ``x -> Q x + c`` to every pose."""
        c = np.zeros(3) if c is None else np.asarray(c, dtype=float)
        return PoseEstimate(np.einsum("ab,nbc->nac", Q, self.rotations),
                            self.translations @ np.asarray(Q).T + c)


def _check_sizes(g, est):
    if len(est) != g.node_count:
        raise InvalidArgumentError(
            f"estimate has {len(est)} poses but graph has {g.node_count} nodes")


def edge_residuals(g: PoseGraph, est: PoseEstimate):
    """Per-edge residuals ``(r_t, r_R)``.

    ``r_t[k] = t_j - t_i - R_i t_ij`` with shape ``(m, 3)`` and
    ``r_R[k] = R_i R_ij - R_j`` with shape ``(m, 3, 3)``; the latter has the
    same Frobenius norm as ``R_ij^T R_i^T - R_j^T``.
    """
    _check_sizes(g, est)
    Ri = est.rotations[g.edge_i]
    Rj = est.rotations[g.edge_j]
    r_t = (est.translations[g.edge_j] - est.translations[g.edge_i]
           - np.einsum("kab,kb->ka", Ri, g.trans))
    r_R = Ri @ g.rot - Rj
    return r_t, r_R


def evaluate_objective(g: PoseGraph, est: PoseEstimate, split=False):
    """Global objective ``F`` at ``est`` using the graph's edge weights.

    With ``split=True`` returns ``(F, F_translation, F_rotation)``.
    """
    r_t, r_R = edge_residuals(g, est)
    ft = float(np.sum(g.tau * np.einsum("ka,ka->k", r_t, r_t)))
    fr = float(np.sum(g.kappa * np.einsum("kab,kab->k", r_R, r_R)))
    if split:
        return ft + fr, ft, fr
    return ft + fr


def rotation_objective(g: PoseGraph, rotations):
    """Rotation term of ``F`` alone: ``sum kappa |R_i R_ij - R_j|_F^2``."""
    R = np.asarray(rotations)
    r = R[g.edge_i] @ g.rot - R[g.edge_j]
    return float(np.sum(g.kappa * np.einsum("kab,kab->k", r, r)))


@dataclass
class GraphDiagnostics:
    node_count: int
    edge_count: int
    connected: bool
    component_count: int
    isolated_nodes: list
    duplicate_edges: list
    invalid_rotations: list
    warnings: list

    @property
    def ok(self):
        return self.connected and not self.invalid_rotations


def validate_graph(g: PoseGraph) -> GraphDiagnostics:
    """Structural report: connectivity, isolated nodes, duplicates, bad rotations."""
    n, m = g.node_count, g.edge_count
    warnings = []
    if n == 0:
        ncomp = 0
    else:
        ncomp, _ = connected_components(g.adjacency(), directed=False)
    deg = g.degrees()
    isolated = [int(k) for k in np.flatnonzero(deg == 0)] if n > 1 else []
    seen = {}
    dups = []
    for k, (a, b) in enumerate(zip(g.edge_i.tolist(), g.edge_j.tolist())):
        key = (min(a, b), max(a, b))
        if key in seen:
            dups.append((seen[key], k))
        else:
            seen[key] = k
    bad = [k for k in range(m) if not is_rotation(g.rot[k])]
    if m == 0:
        warnings.append("graph has no edges")
    if isolated:
        warnings.append(f"{len(isolated)} isolated node(s)")
    if dups:
        warnings.append(f"{len(dups)} duplicate edge(s)")
    if bad:
        warnings.append(f"{len(bad)} edge rotation(s) fail SO(3) checks")
    return GraphDiagnostics(n, m, ncomp <= 1, int(ncomp), isolated, dups, bad,
                            warnings)


def require_connected(g: PoseGraph):
    if g.node_count == 0:
        raise InvalidArgumentError("empty graph")
    if g.node_count > 1:
        ncomp, _ = connected_components(g.adjacency(), directed=False)
        if ncomp != 1:
            raise InvalidArgumentError(
                f"pose graph is disconnected ({ncomp} components)")


def incident_edges(g: PoseGraph, i: int):
    """Edge indices leaving and entering node ``i``, each in edge order."""
    if not 0 <= int(i) < g.node_count:
        raise InvalidArgumentError(f"node id {i} out of range")
    order_out, ptr_out, order_in, ptr_in = g._incidence
    out = order_out[ptr_out[i]:ptr_out[i + 1]].tolist()
    inc = order_in[ptr_in[i]:ptr_in[i + 1]].tolist()
    return out, inc


def partition_contiguous(g: PoseGraph, agents: int) -> PoseGraph:
    """Assign contiguous index blocks of near-equal size to ``agents`` agents.

    Earlier blocks take the remainder, e.g. 10 nodes over 3 agents gives
    sizes 4, 3, 3.
    """
    agents = int(agents)
    if agents < 1 or agents > g.node_count:
        raise InvalidArgumentError(
            f"agents must be in [1, {g.node_count}], got {agents}")
    base, extra = divmod(g.node_count, agents)
    sizes = [base + (a < extra) for a in range(agents)]
    labels = np.repeat(np.arange(agents), sizes)
    return g.with_partition(labels)


def information_weights(information):
    """Isotropic weights ``(kappa, tau)`` from g2o 6x6 information blocks.

    Follows the usual reduction for chordal objectives: ``tau = 3 /
    tr(Sigma_t)`` and ``kappa = 3 / (2 tr(Sigma_r))`` where the covariances
    are the inverses of the translation and rotation diagonal blocks.
    """
    info = np.asarray(information, dtype=float).reshape(-1, 6, 6)
    cov_t = np.linalg.inv(info[:, :3, :3])
    cov_r = np.linalg.inv(info[:, 3:, 3:])
    tau = 3.0 / np.trace(cov_t, axis1=1, axis2=2)
    kappa = 3.0 / (2.0 * np.trace(cov_r, axis1=1, axis2=2))
    return kappa, tau
