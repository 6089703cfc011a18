"""Full-pose recovery from solved rotations.

Translations are the linear least-squares solution of the translation terms
for fixed rotations. The joint objective is then refined by damped
Gauss-Newton over ``(rotation tangent, translation)`` per node, with one
node held fixed to remove the gauge freedom.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import InvalidArgumentError
from .geometry import so3_exp_batch
from .graph import PoseEstimate, PoseGraph, evaluate_objective, require_connected

__all__ = [
    "solve_translations_ls",
    "translation_normal_equations",
    "residual_vector",
    "residual_jacobian",
    "gauss_newton_refine",
    "recover_full_poses",
]

log = logging.getLogger(__name__)

# Generators of so(3); _GEN[k] = hat(e_k).
_GEN = np.array([
    [[0, 0, 0], [0, 0, -1], [0, 1, 0]],
    [[0, 0, 1], [0, 0, 0], [-1, 0, 0]],
    [[0, -1, 0], [1, 0, 0], [0, 0, 0]],
], dtype=float)


def translation_normal_equations(g: PoseGraph, rotations, anchor=0):
    """Anchored normal equations of the translation least-squares problem.

    Because every translation residual is ``t_j - t_i - b_ij`` the normal
    matrix is ``L (x) I_3`` with ``L`` the weighted graph Laplacian; it is
    returned in its scalar ``(n-1, n-1)`` form together with the ``(n-1, 3)``
    right-hand side and the kept node indices.
    """
    n = g.node_count
    R = np.asarray(rotations)
    b = np.einsum("kab,kb->ka", R[g.edge_i], g.trans)
    w = g.tau
    L = sp.coo_matrix(
        (np.concatenate([w, w, -w, -w]),
         (np.concatenate([g.edge_i, g.edge_j, g.edge_i, g.edge_j]),
          np.concatenate([g.edge_i, g.edge_j, g.edge_j, g.edge_i]))),
        shape=(n, n)).tocsr()
    rhs = np.zeros((n, 3))
    np.add.at(rhs, g.edge_j, w[:, None] * b)
    np.add.at(rhs, g.edge_i, -w[:, None] * b)
    keep = np.flatnonzero(np.arange(n) != anchor)
    return L[keep][:, keep].tocsc(), rhs[keep], keep


def solve_translations_ls(g: PoseGraph, rotations, anchor=0) -> np.ndarray:
    """Translations minimizing ``sum tau |t_j - t_i - R_i t_ij|^2`` with
    ``t_anchor = 0``.

    Returns an ``(n, 3)`` array. Raises :class:`InvalidArgumentError` when the
    graph is disconnected.
    """
    if not 0 <= anchor < g.node_count:
        raise InvalidArgumentError("anchor out of range")
    require_connected(g)
    t = np.zeros((g.node_count, 3))
    if g.node_count == 1:
        return t
    L, rhs, keep = translation_normal_equations(g, rotations, anchor)
    try:
        t[keep] = spla.splu(L).solve(rhs)
    except RuntimeError as exc:  # exactly singular factor
        raise InvalidArgumentError(f"translation system is singular: {exc}") from None
    return t


def _edge_blocks(g, est):
    """Weighted residuals and Jacobian blocks, all edges at once."""
    Ri = est.rotations[g.edge_i]
    Rj = est.rotations[g.edge_j]
    st = np.sqrt(g.tau)[:, None]
    sk = np.sqrt(g.kappa)[:, None]
    r_t = (est.translations[g.edge_j] - est.translations[g.edge_i]
           - np.einsum("kab,kb->ka", Ri, g.trans))
    r_R = (Ri @ g.rot - Rj).reshape(-1, 9)
    # d r_t / d theta_i = R_i [t_ij]x ; columns k: -R_i G_k t_ij
    Jt_th = -np.einsum("kab,cbd,kd->kac", Ri, _GEN, g.trans)
    # d vec(r_R) / d theta_i : R_i G_k R_ij ; d / d theta_j : -R_j G_k
    JR_thi = np.einsum("kab,cbd,kde->kaec", Ri, _GEN, g.rot).reshape(-1, 9, 3)
    JR_thj = -np.einsum("kab,cbd->kadc", Rj, _GEN).reshape(-1, 9, 3)
    return (st * r_t, sk * r_R, st[:, :, None] * Jt_th,
            sk[:, :, None] * JR_thi, sk[:, :, None] * JR_thj)


def residual_vector(g: PoseGraph, est: PoseEstimate) -> np.ndarray:
    """Stacked weighted residuals, 12 per edge: 3 translation then 9 rotation."""
    r_t, r_R, *_ = _edge_blocks(g, est)
    return np.hstack([r_t, r_R]).reshape(-1)


def residual_jacobian(g: PoseGraph, est: PoseEstimate):
    """Sparse Jacobian of :func:`residual_vector`, shape ``(12 m, 6 n)``.

    Node ``i`` owns columns ``6 i .. 6 i + 5`` ordered ``(theta, t)``, where a
    rotation increment acts on the right: ``R_i <- R_i exp(theta)``.
    """
    m, n = g.edge_count, g.node_count
    _, _, Jt_th, JR_thi, JR_thj = _edge_blocks(g, est)
    sw = np.sqrt(g.tau)
    row0 = 12 * np.arange(m)
    rows, cols, vals = [], [], []

    def block(r_off, nrows, c_base, ncols, data):
        rr = row0[:, None, None] + r_off + np.arange(nrows)[None, :, None]
        cc = c_base[:, None, None] + np.arange(ncols)[None, None, :]
        rr, cc = np.broadcast_arrays(rr, cc)
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(np.broadcast_to(data, rr.shape).ravel())

    ci, cj = 6 * g.edge_i, 6 * g.edge_j
    eye = np.eye(3)[None]
    block(0, 3, ci, 3, Jt_th)
    block(0, 3, ci + 3, 3, -sw[:, None, None] * eye)
    block(0, 3, cj + 3, 3, sw[:, None, None] * eye)
    block(3, 9, ci, 3, JR_thi)
    block(3, 9, cj, 3, JR_thj)
    return sp.coo_matrix((np.concatenate(vals),
                          (np.concatenate(rows), np.concatenate(cols))),
                         shape=(12 * m, 6 * n)).tocsr()


def _retract(est, delta):
    d = delta.reshape(-1, 6)
    return PoseEstimate(est.rotations @ so3_exp_batch(d[:, :3]),
                        est.translations + d[:, 3:])


def gauss_newton_refine(g: PoseGraph, est: PoseEstimate, steps=10, anchor=0,
                        rel_tol=1e-9, max_halvings=20, full_output=False):
    """Damped Gauss-Newton on the full objective.

    Each step solves the anchored normal equations ``J^T J d = -J^T r`` and
    halves the step (at most ``max_halvings`` times) until the objective does
    not increase, so the output objective never exceeds the input one.
    Iteration stops early once the relative decrease falls below ``rel_tol``.

    Parameters
    ----------
    g : PoseGraph
    est : PoseEstimate
        Starting point; rotations must be valid.
    steps : int
        Maximum number of Gauss-Newton iterations. ``0`` returns ``est``.
    anchor : int
        Node whose pose is held fixed.
    full_output : bool
        If true, also return a dict with ``objective_trace``, ``iterations``
        and ``singular`` (set when the normal equations could not be solved;
        the last good estimate is returned in that case).

    Returns
    -------
    PoseEstimate, or ``(PoseEstimate, dict)`` when ``full_output``.
    """
    if steps < 0:
        raise InvalidArgumentError("steps must be nonnegative")
    cur = est.copy()
    f = evaluate_objective(g, cur)
    info = {"objective_trace": [f], "iterations": 0, "singular": False}
    n = g.node_count
    free = np.ones(6 * n, dtype=bool)
    free[6 * anchor:6 * anchor + 6] = False
    for _ in range(steps):
        if f == 0.0:
            break
        J = residual_jacobian(g, cur)[:, free]
        r = residual_vector(g, cur)
        H = (J.T @ J).tocsc()
        rhs = -(J.T @ r)
        try:
            step = spla.splu(H).solve(rhs)
        except RuntimeError:
            log.warning("Gauss-Newton normal equations are singular")
            info["singular"] = True
            break
        if not np.all(np.isfinite(step)):
            info["singular"] = True
            break
        full = np.zeros(6 * n)
        alpha = 1.0
        for _ in range(max_halvings + 1):
            full[free] = alpha * step
            trial = _retract(cur, full)
            f_trial = evaluate_objective(g, trial)
            if f_trial <= f:
                break
            alpha *= 0.5
        else:
            break
        decrease = f - f_trial
        cur, f = trial, f_trial
        info["iterations"] += 1
        info["objective_trace"].append(f)
        if decrease <= rel_tol * max(f + decrease, np.finfo(float).tiny):
            break
    if full_output:
        return cur, info
    return cur


def recover_full_poses(g: PoseGraph, rotations, steps=10, anchor=0):
    """LS translations for ``rotations`` followed by Gauss-Newton refinement.

    Returns ``(estimate, F)``.
    """
    require_connected(g)
    R = np.array(rotations, dtype=float).reshape(g.node_count, 3, 3)
    est = PoseEstimate(R, solve_translations_ls(g, R, anchor))
    if steps:
        est = gauss_newton_refine(g, est, steps=steps, anchor=anchor)
    return est, evaluate_objective(g, est)
