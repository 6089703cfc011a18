"""End-to-end runs: initialization, SOC rotations, translation recovery."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .graph import (
    PoseEstimate,
    PoseGraph,
    evaluate_objective,
    information_weights,
    partition_contiguous,
)
from .initialization import InitConfig, initialize
from .recovery import gauss_newton_refine, solve_translations_ls
from .runtime import CommStats, run_distributed
from .soc import SocConfig, SocReport, scaled_config, solve_rotations

__all__ = ["RunReport", "CSV_COLUMNS", "run_pipeline", "csv_header", "csv_row", "write_csv",
           "write_trace", "config_from_echo"]

CSV_COLUMNS = ("dataset", "n", "m", "init", "schedule", "agents", "seed", "F_init", "F_pre_gn",
               "F_post_gn", "iters", "p_res", "t_solve_s", "t_total_s", "rounds", "messages",
               "bytes")


@dataclass
class RunReport:
    dataset: str
    n: int
    m: int
    init: str
    schedule: str
    agents: int
    seed: int
    F_init: float
    F_pre_gn: float
    F_post_gn: float
    iters: int
    p_res: float
    converged: bool
    t_init_s: float
    t_solve_s: float
    t_recover_s: float
    t_total_s: float
    rounds: int
    messages: int
    bytes: int
    F_post_gn_weighted: float | None = None
    config: dict = field(default_factory=dict)
    soc: SocReport | None = field(default=None, repr=False)
    estimate: PoseEstimate | None = field(default=None, repr=False)

    def row(self):
        return [getattr(self, c) for c in CSV_COLUMNS]

    def summary(self):
        state = "converged" if self.converged else "NOT converged"
        return (f"{self.dataset}: n={self.n} m={self.m} init={self.init} "
                f"schedule={self.schedule} agents={self.agents}\n"
                f"  SOC {state} after {self.iters} iterations (p_res {self.p_res:.3e})\n"
                f"  F init {self.F_init:.6g}  pre-GN {self.F_pre_gn:.6g}  "
                f"post-GN {self.F_post_gn:.6g}"
                + (f" (information-weighted {self.F_post_gn_weighted:.6g})"
                   if self.F_post_gn_weighted is not None else "") + "\n"
                f"  time solve {self.t_solve_s:.3f}s total {self.t_total_s:.3f}s  "
                f"messages {self.messages} bytes {self.bytes}")


def _init_name(method):
    return {"spanning_tree": "tree"}.get(method, method)


def run_pipeline(g: PoseGraph, dataset="graph", init="spanning_tree", truth=None,
                 cfg: SocConfig | None = None, schedule="jacobi", agents=1, gn_steps=10,
                 seed=0, init_estimate=None):
    """Initialize, solve rotations, recover translations and refine.

    Parameters
    ----------
    g : PoseGraph
    init : {"gps", "spanning_tree", "chordal"}
        Ignored when ``init_estimate`` is given.
    truth : PoseEstimate, optional
        Needed by the GPS initializer.
    cfg : SocConfig, optional
        Defaults to :func:`socpgo.soc.scaled_config` for ``g``.
    agents : int
        ``1`` runs the centralized solver; more runs the simulated agents.
        The Gauss-Seidel schedule uses the same contiguous partition either
        way.
    seed : int
        Seed of the GPS perturbation.

    Returns
    -------
    RunReport
        ``F_post_gn_weighted`` is the final estimate scored with the graph's
        information weights, when it carries information blocks but is
        solved with unit weights.
    """
    t0 = time.perf_counter()
    cfg = cfg or scaled_config(g)
    if init_estimate is None:
        est0 = initialize(g, InitConfig(method=init, seed=seed), truth)
    else:
        est0 = init_estimate
    F_init = evaluate_objective(g, est0)
    t1 = time.perf_counter()
    if agents > 1:
        R, soc, comm = run_distributed(g, est0, cfg, agents, schedule=schedule)
    else:
        gp = partition_contiguous(g, 1)
        R, soc = solve_rotations(gp, est0, cfg, schedule=schedule)
        comm = CommStats(soc.iterations, 0, 0)
    t2 = time.perf_counter()
    est = PoseEstimate(R, solve_translations_ls(g, R))
    F_pre = evaluate_objective(g, est)
    est = gauss_newton_refine(g, est, steps=gn_steps) if gn_steps else est
    F_post = evaluate_objective(g, est)
    t3 = time.perf_counter()
    F_alt = None
    if g.information is not None and g.unit_weights:
        # same estimate scored with the file's information weights
        F_alt = evaluate_objective(g.with_weights(*information_weights(g.information)), est)
    config = asdict(cfg)
    config.update(init=init, schedule=schedule, agents=agents, gn_steps=gn_steps, seed=seed)
    return RunReport(
        dataset=dataset, n=g.node_count, m=g.edge_count, init=_init_name(init),
        schedule=schedule, agents=agents, seed=seed, F_init=F_init, F_pre_gn=F_pre,
        F_post_gn=F_post, iters=soc.iterations, p_res=soc.final_p_res,
        converged=soc.converged, t_init_s=t1 - t0, t_solve_s=t2 - t1, t_recover_s=t3 - t2,
        t_total_s=t3 - t0, rounds=comm.rounds, messages=comm.messages,
        bytes=comm.payload_bytes, F_post_gn_weighted=F_alt, config=config, soc=soc, estimate=est)


def csv_header():
    return list(CSV_COLUMNS)


def csv_row(report: RunReport):
    return report.row()


def write_csv(rows, stream=None, header=True):
    """RFC-4180 CSV of report rows; returns the text when ``stream`` is None."""
    buf = io.StringIO() if stream is None else stream
    w = csv.writer(buf, lineterminator="\r\n")
    if header:
        w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(_fmt_row(r.row() if isinstance(r, RunReport) else r))
    if stream is None:
        return buf.getvalue()


def _fmt_row(values):
    return [repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in values]


def write_trace(report: SocReport, stream):
    """One header line, then ``iteration p_res F`` per SOC iteration."""
    stream.write("iteration p_res F\n")
    for k, (p, f) in enumerate(zip(report.p_res_trace, report.objective_trace), start=1):
        stream.write(f"{k} {p!r} {f!r}\n")


def config_from_echo(config: dict) -> SocConfig:
    """Rebuild the :class:`SocConfig` recorded in ``RunReport.config``."""
    names = {f.name for f in fields(SocConfig)}
    return SocConfig(**{k: v for k, v in config.items() if k in names})
