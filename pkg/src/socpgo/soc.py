"""Rotation estimation by splitting of orthogonality constraints (SOC).

Each node keeps a triple ``(R_i, omega_i, B_i)``: an unconstrained estimate,
its feasible (special-orthogonal) copy and a scaled dual variable. One
iteration performs, for every node,

1. the R-step, an exact minimization of
   ``sum_e kappa_e |R_i - target_e|_F^2 + rho/2 |R_i - (omega_i - B_i)|_F^2``
   where the targets are the neighbours' predictions of ``R_i``;
2. the projection ``omega_i = proj_SO(3)(R_i + B_i)``;
3. the dual update ``B_i += R_i - omega_i``;

and stops when the primal residual drops below ``eps``. A generic
linearly-constrained Bregman iteration is provided alongside for checking
the two-step update against the method of multipliers.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .exceptions import InvalidArgumentError, RankDeficiencyError
from .geometry import project_to_so3, project_to_so3_batch
from .graph import PoseEstimate, PoseGraph, require_connected, rotation_objective

__all__ = [
    "SocConfig",
    "SocState",
    "SocReport",
    "LinearBregmanProblem",
    "rotation_step",
    "projection_step",
    "dual_step",
    "primal_residual",
    "dual_residual",
    "adapt_rho",
    "solve_rotations",
    "stable_penalty",
    "scaled_config",
    "solve_linear_bregman",
]

log = logging.getLogger(__name__)

SCHEDULES = ("jacobi", "gs")


@dataclass(frozen=True)
class SocConfig:
    """Solver settings.

    ``eps=None`` means ``1e-4 * sqrt(n)``. ``neighbor_source`` selects which
    neighbour iterate enters the R-step (``"omega"`` or ``"R"``) and
    ``r_solver`` whether the R-step is solved in closed form or by FISTA.
    """

    rho0: float = 1.0
    eps: float | None = None
    max_iters: int = 20000
    inner_iterations: int = 1
    mu: float = 10.0
    tau_incr: float = 2.0
    tau_decr: float = 2.0
    adapt_rho: bool = True
    neighbor_source: str = "omega"
    r_solver: str = "closed_form"
    fista_iters: int = 50
    rho_min: float = 0.0

    def __post_init__(self):
        if not self.rho0 > 0:
            raise InvalidArgumentError("rho0 must be positive")
        if self.eps is not None and not self.eps > 0:
            raise InvalidArgumentError("eps must be positive")
        if self.max_iters < 0 or self.inner_iterations < 1:
            raise InvalidArgumentError("max_iters >= 0 and inner_iterations >= 1 required")
        if not (self.mu > 1 and self.tau_incr > 1 and self.tau_decr > 1):
            raise InvalidArgumentError("mu, tau_incr and tau_decr must exceed 1")
        if self.neighbor_source not in ("omega", "R"):
            raise InvalidArgumentError("neighbor_source must be 'omega' or 'R'")
        if self.r_solver not in ("closed_form", "fista"):
            raise InvalidArgumentError("r_solver must be 'closed_form' or 'fista'")
        if self.rho_min < 0:
            raise InvalidArgumentError("rho_min must be nonnegative")

    def tolerance(self, n):
        return 1e-4 * np.sqrt(n) if self.eps is None else self.eps


@dataclass
class SocState:
    R: np.ndarray
    omega: np.ndarray
    B: np.ndarray
    rho: float
    iter: int = 0

    @classmethod
    def start(cls, rotations, rho):
        """``omega = R = rotations`` and ``B = 0``."""
        R = np.array(rotations, dtype=float).reshape(-1, 3, 3)
        return cls(R.copy(), R.copy(), np.zeros_like(R), float(rho), 0)

    def copy(self):
        return SocState(self.R.copy(), self.omega.copy(), self.B.copy(), self.rho, self.iter)


@dataclass
class SocReport:
    iterations: int = 0
    final_p_res: float = np.inf
    converged: bool = False
    wall_time: float = 0.0
    schedule: str = "jacobi"
    rho_trace: list = field(default_factory=list)
    p_res_trace: list = field(default_factory=list)
    dual_trace: list = field(default_factory=list)
    objective_trace: list = field(default_factory=list)
    degenerate_projections: int = 0

    def same_run(self, other):
        """Equality of everything except the wall-clock time."""
        a, b = dict(self.__dict__), dict(other.__dict__)
        a.pop("wall_time"), b.pop("wall_time")
        return a == b


# ---------------------------------------------------------------------------
# neighbour structure


class _Neighbors:
    """Per-node padded lists of ``(neighbour, factor, weight)``.

    The R-step target contributed by an edge is ``X_j @ factor`` where
    ``factor = R_ij^T`` for an out-edge ``i -> j`` and ``R_ji`` for an in-edge
    ``j -> i``. Out-edges come first, each group in edge order. Padding slots
    have weight 0 and point at the node itself.
    """

    def __init__(self, g: PoseGraph):
        n = g.node_count
        order_out, ptr_out, order_in, ptr_in = g._incidence
        deg = np.diff(ptr_out) + np.diff(ptr_in)
        width = int(deg.max()) if n and g.edge_count else 0
        self.nbr = np.tile(np.arange(n)[:, None], (1, width))
        self.factor = np.zeros((n, width, 3, 3))
        self.weight = np.zeros((n, width))
        rot_t = np.transpose(g.rot, (0, 2, 1))
        for i in range(n):
            out = order_out[ptr_out[i]:ptr_out[i + 1]]
            inc = order_in[ptr_in[i]:ptr_in[i + 1]]
            k = len(out)
            self.nbr[i, :k] = g.edge_j[out]
            self.factor[i, :k] = rot_t[out]
            self.weight[i, :k] = g.kappa[out]
            self.nbr[i, k:k + len(inc)] = g.edge_i[inc]
            self.factor[i, k:k + len(inc)] = g.rot[inc]
            self.weight[i, k:k + len(inc)] = g.kappa[inc]
        self.wdeg = self._sequential_sum(self.weight)
        self.width = width

    @staticmethod
    def _sequential_sum(a):
        acc = np.zeros(a.shape[:1] + a.shape[2:])
        for p in range(a.shape[1]):
            acc = acc + a[:, p]
        return acc

    def data_sum(self, nodes, X):
        """``sum_e w_e X[nbr_e] @ factor_e`` for each node, accumulated in slot order."""
        acc = np.zeros((len(nodes), 3, 3))
        for p in range(self.width):
            w = self.weight[nodes, p][:, None, None]
            acc = acc + w * (X[self.nbr[nodes, p]] @ self.factor[nodes, p])
        return acc


def _graph_neighbors(g):
    nb = g.__dict__.get("_soc_neighbors")
    if nb is None:
        nb = _Neighbors(g)
        g.__dict__["_soc_neighbors"] = nb
    return nb


def _fista_rstep(data, wdeg, prox_target, rho, iters):
    # minimize sum_e w|R - target_e|^2 + rho/2 |R - prox|^2; the gradient is
    # (2 wdeg + rho) R - (2 data + rho prox), so L = 2 wdeg + rho.
    L = (2.0 * wdeg + rho)[:, None, None]
    lin = 2.0 * data + rho * prox_target
    x = prox_target.copy()
    y, tk = x.copy(), 1.0
    for _ in range(iters):
        x_new = y - (L * y - lin) / L
        tk1 = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        y = x_new + ((tk - 1.0) / tk1) * (x_new - x)
        x, tk = x_new, tk1
    return x


def _local_update(data, wdeg, omega, B, rho, cfg):
    """SOC triple step for a block of nodes whose neighbour sums are ``data``.

    ``omega`` and ``B`` are the nodes' own slices. Returns new
    ``(R, omega, B, degenerate_count)``.
    """
    degenerate = 0
    for _ in range(cfg.inner_iterations):
        prox = omega - B
        if cfg.r_solver == "fista":
            R = _fista_rstep(data, wdeg, prox, rho, cfg.fista_iters)
        else:
            R = (data + (0.5 * rho) * prox) / (wdeg + 0.5 * rho)[:, None, None]
        proj, bad = project_to_so3_batch(R + B)
        if bad.any():
            degenerate += int(bad.sum())
            proj[bad] = omega[bad]
        omega = proj
    B = B + R - omega
    return R, omega, B, degenerate


# ---------------------------------------------------------------------------
# single-node step API


def rotation_step(g: PoseGraph, st: SocState, i: int, neighbors=None, cfg=None):
    """Exact R-step for node ``i``.

    Returns ``[sum_out R_j R_ij^T + sum_in R_j R_ji + rho/2 (omega_i - B_i)]
    / (d_i + rho/2)`` (with edge weights when the graph has them). Neighbour
    values are read from ``neighbors`` if given, else from ``st.omega`` (or
    ``st.R`` when ``cfg.neighbor_source == "R"``).
    """
    cfg = cfg or SocConfig()
    if not 0 <= i < g.node_count:
        raise InvalidArgumentError(f"node id {i} out of range")
    if not st.rho > 0:
        raise InvalidArgumentError("rho must be positive")
    nb = _graph_neighbors(g)
    if neighbors is None:
        neighbors = st.omega if cfg.neighbor_source == "omega" else st.R
    idx = np.array([i])
    data = nb.data_sum(idx, neighbors)
    prox = (st.omega[i] - st.B[i])[None]
    if cfg.r_solver == "fista":
        return _fista_rstep(data, nb.wdeg[idx], prox, st.rho, cfg.fista_iters)[0]
    return ((data + 0.5 * st.rho * prox) / (nb.wdeg[idx] + 0.5 * st.rho)[:, None, None])[0]


def projection_step(st: SocState, i: int):
    """``omega_i = proj_SO(3)(R_i + B_i)``; raises on a degenerate projection."""
    return project_to_so3(st.R[i] + st.B[i])


def dual_step(st: SocState, i: int):
    return st.B[i] + st.R[i] - st.omega[i]


def _residual_terms(R, omega):
    eye = np.eye(3)
    orth = omega.transpose(0, 2, 1) @ omega - eye
    orth_sq = np.einsum("nab,nab->n", orth, orth)
    mis = omega - R
    mis_sq = np.einsum("nab,nab->n", mis, mis)
    return orth_sq, mis_sq


def primal_residual(st: SocState) -> float:
    """``sqrt(sum |omega^T omega - I|_F^2 + sum |omega - R|_F^2)``."""
    orth_sq, mis_sq = _residual_terms(st.R, st.omega)
    return float(np.sqrt(np.sum(orth_sq) + np.sum(mis_sq)))


def dual_residual(omega_new, omega_old, rho) -> float:
    """``rho * sum_i |omega_i^k - omega_i^(k-1)|_F``."""
    d = np.asarray(omega_new) - np.asarray(omega_old)
    return float(rho * np.sum(np.sqrt(np.einsum("nab,nab->n", d, d))))


def _next_rho(rho, primal, dual, cfg):
    if primal > cfg.mu * dual:
        new = rho * cfg.tau_incr
    elif dual > cfg.mu * primal:
        new = rho / cfg.tau_decr
    else:
        return rho
    return max(new, cfg.rho_min)


def adapt_rho(st: SocState, primal: float, dual: float, cfg: SocConfig) -> float:
    """Residual balancing.

    Multiplies rho by ``tau_incr`` when ``primal > mu * dual``, divides it by
    ``tau_decr`` when ``dual > mu * primal``. On a change the scaled dual
    ``B`` is rescaled by ``old / new`` in place. rho never drops below
    ``cfg.rho_min``. Returns the new rho.
    """
    old = st.rho
    new = _next_rho(old, primal, dual, cfg)
    if new != old:
        st.B *= old / new
        st.rho = new
    return new


# ---------------------------------------------------------------------------
# driver


class _Collector:
    """Global reduction of per-node residual pieces, in node order.

    Only scalars and the feasible iterate (for the objective trace) reach the
    collector; it returns the stopping decision and the next penalty.
    """

    def __init__(self, g, cfg, report):
        self.g = g
        self.cfg = cfg
        self.report = report
        self.eps = cfg.tolerance(g.node_count)

    def finish_round(self, it, rho, omega, orth_sq, mis_sq, dual_norms):
        p_res = float(np.sqrt(np.sum(orth_sq) + np.sum(mis_sq)))
        dual = float(rho * np.sum(dual_norms))
        rep = self.report
        rep.iterations = it
        rep.final_p_res = p_res
        rep.p_res_trace.append(p_res)
        rep.dual_trace.append(dual)
        rep.objective_trace.append(rotation_objective(self.g, omega))
        rep.rho_trace.append(rho)
        converged = p_res <= self.eps
        rep.converged = converged
        new = rho
        if not converged and self.cfg.adapt_rho:
            new = _next_rho(rho, p_res, dual, self.cfg)
        return converged, new


def _frob_norms(d):
    return np.sqrt(np.einsum("nab,nab->n", d, d))


def _jacobi_round(nb, st, cfg, nodes=None):
    nodes = np.arange(len(st.R)) if nodes is None else nodes
    X = st.omega if cfg.neighbor_source == "omega" else st.R
    return _local_update(nb.data_sum(nodes, X), nb.wdeg[nodes], st.omega[nodes],
                         st.B[nodes], st.rho, cfg)


def _gs_round(nb, g, st, cfg):
    """Sequential sweep in node order. Neighbours owned by the same agent are
    read at their freshest value, all others at the previous iterate."""
    prev = st.omega if cfg.neighbor_source == "omega" else st.R
    R, omega, B = st.R.copy(), st.omega.copy(), st.B.copy()
    cur = omega if cfg.neighbor_source == "omega" else R
    part = g.partition
    bad = 0
    for i in range(g.node_count):
        nbrs = nb.nbr[i]
        same = (part[nbrs] == part[i])[:, None, None]
        vals = np.where(same, cur[nbrs], prev[nbrs])
        data = np.zeros((1, 3, 3))
        for p in range(nb.width):
            data = data + nb.weight[i, p] * (vals[p] @ nb.factor[i, p])
        sl = slice(i, i + 1)
        Ri, wi, Bi, b = _local_update(data, nb.wdeg[sl], omega[sl], B[sl], st.rho, cfg)
        R[i], omega[i], B[i] = Ri[0], wi[0], Bi[0]
        bad += b
    return R, omega, B, bad


def stable_penalty(g: PoseGraph, factor=1.25) -> float:
    """``factor`` times the largest weighted degree ``sum_e kappa_e``.

    Below roughly twice the weighted degree the fixed points with
    ``R = omega`` stop being attractive for noisy data and the iteration can
    wander; this value is a safe starting and floor penalty.
    """
    return float(factor * np.max(_graph_neighbors(g).wdeg))


def scaled_config(g: PoseGraph, factor=1.25, **overrides) -> SocConfig:
    """:class:`SocConfig` with ``rho0 = rho_min = stable_penalty(g, factor)``."""
    rho = stable_penalty(g, factor)
    kw = {"rho0": rho, "rho_min": rho}
    kw.update(overrides)
    return SocConfig(**kw)


def solve_rotations(g: PoseGraph, init, cfg: SocConfig | None = None, schedule="jacobi",
                    callback=None):
    """Run SOC from the rotations of ``init`` until ``p_res <= eps``.

    Parameters
    ----------
    g : PoseGraph
        Must be connected.
    init : PoseEstimate or array of shape (n, 3, 3)
        Starting rotations; ``omega^0 = R^0`` and ``B^0 = 0``.
    cfg : SocConfig, optional
    schedule : {"jacobi", "gs"}
        Jacobi updates every node from the previous iterate. Gauss-Seidel
        sweeps nodes in index order, reading the freshest values of nodes
        owned by the same agent (``g.partition``) and the previous iterate of
        all others.
    callback : callable, optional
        ``callback(state, report)`` after every iteration.

    Returns
    -------
    rotations : ndarray, shape (n, 3, 3)
        The feasible iterate ``omega``.
    report : SocReport
        ``converged`` is false when ``max_iters`` was reached first.
    """
    cfg = cfg or SocConfig()
    if schedule not in SCHEDULES:
        raise InvalidArgumentError(f"schedule must be one of {SCHEDULES}")
    require_connected(g)
    rotations = init.rotations if isinstance(init, PoseEstimate) else init
    st = SocState.start(rotations, cfg.rho0)
    if len(st.R) != g.node_count:
        raise InvalidArgumentError("initial rotations do not match the graph")
    nb = _graph_neighbors(g)
    report = SocReport(schedule=schedule)
    collector = _Collector(g, cfg, report)
    t0 = time.perf_counter()
    while st.iter < cfg.max_iters:
        omega_old = st.omega
        if schedule == "jacobi":
            R, omega, B, bad = _jacobi_round(nb, st, cfg)
        else:
            R, omega, B, bad = _gs_round(nb, g, st, cfg)
        st.R, st.omega, st.B = R, omega, B
        st.iter += 1
        report.degenerate_projections += bad
        orth_sq, mis_sq = _residual_terms(st.R, st.omega)
        d = st.omega - omega_old
        done, rho = collector.finish_round(st.iter, st.rho, st.omega, orth_sq, mis_sq,
                                           _frob_norms(d))
        if rho != st.rho:
            st.B *= st.rho / rho
            st.rho = rho
        if callback is not None:
            callback(st, report)
        if done:
            break
    report.wall_time = time.perf_counter() - t0
    if st.iter == 0:
        report.final_p_res = primal_residual(st)
    return st.omega.copy(), report


# ---------------------------------------------------------------------------
# linear Bregman iteration


@dataclass
class LinearBregmanProblem:
    """``min 1/2 x^T Q x + c^T x`` subject to ``K x = f``.

    ``b`` is the Bregman accumulator (default zero).
    """

    Q: np.ndarray
    c: np.ndarray
    K: np.ndarray
    f: np.ndarray
    alpha: float = 1.0
    b: np.ndarray | None = None

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        m = self.Q.shape[0]
        self.c = np.asarray(self.c, dtype=float).reshape(m)
        self.K = np.asarray(self.K, dtype=float).reshape(-1, m)
        s = self.K.shape[0]
        self.f = np.asarray(self.f, dtype=float).reshape(s)
        self.b = np.zeros(s) if self.b is None else np.asarray(self.b, float).reshape(s)
        if self.Q.shape != (m, m):
            raise InvalidArgumentError("Q must be square")
        if not self.alpha > 0:
            raise InvalidArgumentError("alpha must be positive")


def solve_linear_bregman(p: LinearBregmanProblem, iters: int) -> np.ndarray:
    """Two-step Bregman iteration; returns the ``(iters, m)`` trace of ``x``.

    ``x <- argmin J(x) + alpha/2 |K x - f + b|^2`` (a Cholesky solve of
    ``(Q + alpha K^T K) x = alpha K^T (f - b) - c``), then ``b <- b + K x - f``.
    """
    H = p.Q + p.alpha * p.K.T @ p.K
    try:
        factor = sla.cho_factor(H)
    except sla.LinAlgError:
        raise RankDeficiencyError("Q + alpha K^T K is not positive definite") from None
    if np.linalg.cond(H) > 1e14:
        raise RankDeficiencyError("Q + alpha K^T K is numerically singular")
    b = p.b.copy()
    trace = np.empty((iters, len(p.c)))
    for k in range(iters):
        x = sla.cho_solve(factor, p.alpha * p.K.T @ (p.f - b) - p.c)
        b = b + p.K @ x - p.f
        trace[k] = x
    return trace
