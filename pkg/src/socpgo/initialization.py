"""Initial pose estimates: simulated GPS, spanning tree and chordal relaxation."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import InvalidArgumentError, UnsupportedForDatasetError
from .geometry import project_to_so3_batch, so3_exp_batch
from .graph import PoseEstimate, PoseGraph, require_connected
from .recovery import solve_translations_ls

__all__ = ["InitConfig", "gps_init", "spanning_tree_init", "chordal_init", "initialize"]

METHODS = ("gps", "spanning_tree", "chordal")


@dataclass(frozen=True)
class InitConfig:
    method: str = "gps"
    gps_trans_sigma: float = 0.5
    gps_rot_sigma: float = np.deg2rad(30.0)
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgumentError(f"init method must be one of {METHODS}")
        if self.gps_trans_sigma < 0 or self.gps_rot_sigma < 0:
            raise InvalidArgumentError("sigmas must be nonnegative")


def gps_init(truth: PoseEstimate, cfg: InitConfig) -> PoseEstimate:
    """Ground truth perturbed like a GPS/IMU fix.

    ``t_i + e`` with ``e ~ N(0, sigma_t^2 I)`` and ``R_i exp(d)`` with
    ``d ~ N(0, sigma_r^2 I)``.
    """
    if truth is None:
        raise UnsupportedForDatasetError("GPS initialization needs ground truth")
    rng = np.random.default_rng(cfg.seed)
    n = len(truth)
    et = rng.normal(0.0, 1.0, (n, 3)) * cfg.gps_trans_sigma
    d = rng.normal(0.0, 1.0, (n, 3)) * cfg.gps_rot_sigma
    R = truth.rotations @ so3_exp_batch(d) if cfg.gps_rot_sigma > 0 else truth.rotations.copy()
    return PoseEstimate(R, truth.translations + et)


def spanning_tree_init(g: PoseGraph, root=0, return_tree=False):
    """Compose measurements along a breadth-first spanning tree.

    The root gets the identity pose. Neighbours are visited in edge-index
    order, so the tree is deterministic. Every tree edge has zero residual at
    the returned estimate (up to rounding).

    With ``return_tree=True`` also returns the list of tree edge indices.
    """
    require_connected(g)
    n = g.node_count
    adj = [[] for _ in range(n)]
    for k, (a, b) in enumerate(zip(g.edge_i.tolist(), g.edge_j.tolist())):
        adj[a].append(k)
        adj[b].append(k)
    R = np.zeros((n, 3, 3))
    t = np.zeros((n, 3))
    seen = np.zeros(n, dtype=bool)
    R[root] = np.eye(3)
    seen[root] = True
    tree = []
    queue = deque([root])
    while queue:
        p = queue.popleft()
        for k in adj[p]:
            a, b = int(g.edge_i[k]), int(g.edge_j[k])
            c = b if a == p else a
            if seen[c]:
                continue
            if a == p:
                R[c] = R[p] @ g.rot[k]
                t[c] = t[p] + R[p] @ g.trans[k]
            else:
                # edge c -> p: R_p = R_c R_cp, t_p = t_c + R_c t_cp
                R[c] = R[p] @ g.rot[k].T
                t[c] = t[p] - R[c] @ g.trans[k]
            seen[c] = True
            tree.append(k)
            queue.append(c)
    est = PoseEstimate(R, t)
    return (est, tree) if return_tree else est


def chordal_init(g: PoseGraph) -> PoseEstimate:
    """Unconstrained linear rotation relaxation, projected onto SO(3).

    Minimizes ``sum kappa |M_i R_ij - M_j|_F^2`` over 3x3 matrices with
    ``M_0 = I``, projects each ``M_i`` to the nearest rotation and then solves
    for translations by least squares.
    """
    require_connected(g)
    n, m = g.node_count, g.edge_count
    if n == 1:
        return PoseEstimate.identity(1)
    # Unknown X_i = M_i^T (3x3 block); residual block R_ij^T X_i - X_j.
    w = np.sqrt(g.kappa)
    rows = (3 * np.arange(m))[:, None, None] + np.arange(3)[None, :, None]
    rows = np.broadcast_to(rows, (m, 3, 3))
    cols_i = np.broadcast_to((3 * g.edge_i)[:, None, None] + np.arange(3)[None, None, :], (m, 3, 3))
    cols_j = (3 * g.edge_j)[:, None] + np.arange(3)[None, :]
    data_i = w[:, None, None] * np.transpose(g.rot, (0, 2, 1))
    A = sp.coo_matrix(
        (np.concatenate([data_i.ravel(), np.repeat(-w, 3)]),
         (np.concatenate([rows.ravel(), (3 * np.arange(m)[:, None] + np.arange(3)).ravel()]),
          np.concatenate([cols_i.ravel(), cols_j.ravel()]))),
        shape=(3 * m, 3 * n)).tocsc()
    A0, Af = A[:, :3], A[:, 3:]
    H = (Af.T @ Af).tocsc()
    rhs = -(Af.T @ A0).toarray()
    try:
        X = spla.splu(H).solve(rhs)
    except RuntimeError:
        raise InvalidArgumentError("chordal normal equations are singular") from None
    M = np.concatenate([np.eye(3)[None], X.reshape(n - 1, 3, 3)], axis=0)
    M = np.transpose(M, (0, 2, 1))
    R, _ = project_to_so3_batch(M)
    return PoseEstimate(R, solve_translations_ls(g, R, anchor=0))


def initialize(g: PoseGraph, cfg: InitConfig, truth=None) -> PoseEstimate:
    if cfg.method == "gps":
        return gps_init(truth, cfg)
    if cfg.method == "spanning_tree":
        return spanning_tree_init(g)
    return chordal_init(g)
