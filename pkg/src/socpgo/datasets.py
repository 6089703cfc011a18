"""Pose-graph datasets: g2o I/O, synthetic generators and the noise model."""

from __future__ import annotations

import io
import logging
import os
from dataclasses import asdict, dataclass, replace

import numpy as np

from .exceptions import G2oParseError, InvalidArgumentError
from .geometry import quat_to_rot, rot_to_quat, so3_exp_batch
from .graph import PoseEstimate, PoseGraph, information_weights

__all__ = [
    "NoiseModel",
    "GeneratorSpec",
    "parse_g2o",
    "load_g2o",
    "write_g2o",
    "save_g2o",
    "generate_ground_truth",
    "corrupt_with_noise",
    "sample_uniform_rotation",
    "sample_uniform_rotations",
    "FIXTURES",
    "make_fixture",
    "fig1_graph",
    "write_manifest",
    "read_manifest",
]

log = logging.getLogger(__name__)

VERTEX_TAG = "VERTEX_SE3:QUAT"
EDGE_TAG = "EDGE_SE3:QUAT"
_TRIU = np.triu_indices(6)


@dataclass(frozen=True)
class NoiseModel:
    """Isotropic Gaussian measurement noise.

    ``trans_sigma`` is in world units; ``rot_sigma`` in radians and applies
    to the tangent vector that is mapped through the exponential map.
    """

    trans_sigma: float = 0.5
    rot_sigma: float = np.deg2rad(30.0)
    seed: int = 0

    def __post_init__(self):
        if self.trans_sigma < 0 or self.rot_sigma < 0:
            raise InvalidArgumentError("noise sigmas must be nonnegative")


@dataclass(frozen=True)
class GeneratorSpec:
    """Synthetic ground-truth recipe.

    ``scale`` is the circle / sphere radius or the grid spacing. ``edge_rule``
    is one of ``"complete"``, ``"lattice"`` (grid axis neighbours, or ring
    neighbours on a circle) or ``"knn"`` (``k`` nearest neighbours by
    ground-truth distance, deduplicated). With ``bidirectional=True`` every
    undirected pair is measured in both directions.
    """

    shape: str
    node_count: int
    scale: float = 10.0
    edge_rule: str = "complete"
    k: int = 0
    bidirectional: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.shape not in ("circle", "grid", "sphere"):
            raise InvalidArgumentError(f"unknown shape {self.shape!r}")
        if self.edge_rule not in ("complete", "lattice", "knn"):
            raise InvalidArgumentError(f"unknown edge rule {self.edge_rule!r}")
        if self.node_count < 2:
            raise InvalidArgumentError("node_count must be at least 2")
        if self.edge_rule == "knn" and not 1 <= self.k < self.node_count:
            raise InvalidArgumentError("knn needs 1 <= k < node_count")
        if self.edge_rule == "lattice" and self.shape == "sphere":
            raise InvalidArgumentError("lattice edges are undefined on a sphere")
        if self.scale <= 0:
            raise InvalidArgumentError("scale must be positive")


# ---------------------------------------------------------------------------
# g2o


def _lines(source):
    if isinstance(source, str):
        return io.StringIO(source)
    return source


def parse_g2o(source, use_information=False, full_output=False):
    """Read ``VERTEX_SE3:QUAT`` / ``EDGE_SE3:QUAT`` records.

    Parameters
    ----------
    source : str or iterable of str
        g2o text, or any iterable of lines (e.g. an open file).
    use_information : bool
        If true, edge weights are derived from the information blocks via
        :func:`socpgo.graph.information_weights`; otherwise unit weights are
        used and the blocks are only retained.
    full_output : bool
        Also return a dict with the number of skipped records per tag.

    Returns
    -------
    graph : PoseGraph
    estimate : PoseEstimate
        The vertex poses declared in the file.

    Vertex ids are densified in increasing id order. Unknown record types are
    skipped and counted.
    """
    vertices = {}
    edges = []
    skipped = {}
    for lineno, raw in enumerate(_lines(source), start=1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        if tag == VERTEX_TAG:
            if len(parts) != 9:
                raise G2oParseError(f"{tag} needs 8 fields, got {len(parts) - 1}", lineno)
            try:
                vid = int(parts[1])
                vals = np.array([float(x) for x in parts[2:]])
            except ValueError as exc:
                raise G2oParseError(str(exc), lineno) from None
            if vid in vertices:
                raise G2oParseError(f"duplicate vertex id {vid}", lineno)
            vertices[vid] = (vals[:3], _checked_quat(vals[3:], lineno), vals[3:])
        elif tag == EDGE_TAG:
            if len(parts) != 31:
                raise G2oParseError(f"{tag} needs 30 fields, got {len(parts) - 1}", lineno)
            try:
                a, b = int(parts[1]), int(parts[2])
                vals = np.array([float(x) for x in parts[3:]])
            except ValueError as exc:
                raise G2oParseError(str(exc), lineno) from None
            info = np.zeros((6, 6))
            info[_TRIU] = vals[7:]
            info = info + np.triu(info, 1).T
            edges.append((a, b, vals[:3], _checked_quat(vals[3:7], lineno), info, lineno,
                          vals[3:7]))
        else:
            skipped[tag] = skipped.get(tag, 0) + 1
    if skipped:
        log.warning("skipped %d unrecognized g2o record(s): %s",
                    sum(skipped.values()), ", ".join(sorted(skipped)))

    ids = sorted(vertices)
    dense = {vid: k for k, vid in enumerate(ids)}
    n, m = len(ids), len(edges)
    est = PoseEstimate(np.array([quat_to_rot(vertices[v][1]) for v in ids]).reshape(n, 3, 3),
                       np.array([vertices[v][0] for v in ids]).reshape(n, 3))
    ei = np.empty(m, dtype=np.int64)
    ej = np.empty(m, dtype=np.int64)
    rot = np.empty((m, 3, 3))
    trans = np.empty((m, 3))
    info = np.empty((m, 6, 6))
    raw_q = np.empty((m, 4))
    for k, (a, b, t, q, om, lineno, qr) in enumerate(edges):
        for v in (a, b):
            if v not in dense:
                raise G2oParseError(f"edge references undeclared vertex {v}", lineno)
        if a == b:
            raise G2oParseError("self-loop edge", lineno)
        ei[k], ej[k] = dense[a], dense[b]
        rot[k] = quat_to_rot(q)
        trans[k] = t
        info[k] = om
        raw_q[k] = qr
    kappa = tau = None
    if use_information and m:
        kappa, tau = information_weights(info)
    g = PoseGraph(n, ei, ej, rot, trans, information=info, kappa=kappa, tau=tau)
    _remember_quats(g, g.rot, raw_q)
    _remember_quats(est, est.rotations,
                    np.array([vertices[v][2] for v in ids]).reshape(n, 4))
    if full_output:
        return g, est, {"skipped": skipped, "vertex_ids": ids}
    return g, est


def _remember_quats(obj, rotations, quats):
    # The file's own quaternions are reused on writing while the rotations
    # are unchanged, so parse/write cycles are byte-stable.
    obj.__dict__["_g2o_quats"] = (np.array(rotations), quats)


def _quats_for(obj, rotations):
    q = _rot_to_quat_rows(rotations)
    cached = obj.__dict__.get("_g2o_quats")
    if cached is not None and cached[0].shape == rotations.shape:
        same = np.all(cached[0] == rotations, axis=(1, 2))
        q[same] = cached[1][same]
    return q


def _rot_to_quat_rows(rotations):
    return np.array([rot_to_quat(R) for R in rotations]).reshape(-1, 4)


def _checked_quat(q, lineno):
    nq = np.linalg.norm(q)
    if not np.isfinite(nq) or abs(nq - 1.0) > 1e-3:
        raise G2oParseError(f"quaternion norm {nq:.6g} is not unit", lineno)
    return q / nq


def load_g2o(path, use_information=False):
    with open(path) as fh:
        return parse_g2o(fh, use_information=use_information)


def _fmt(values):
    return " ".join("%.17g" % v for v in values)


def write_g2o(g: PoseGraph, est: PoseEstimate, stream=None):
    """Serialize to g2o text; returns the text when ``stream`` is None.

    Numbers are written with 17 significant digits. Edges carry their
    retained information block, or the identity when the graph has none.
    Quaternions read from a file are written back verbatim as long as the
    corresponding rotation has not changed.
    """
    if len(est) != g.node_count:
        raise InvalidArgumentError("estimate does not match graph")
    out = io.StringIO() if stream is None else stream
    qv = _quats_for(est, est.rotations)
    for k in range(g.node_count):
        out.write(f"{VERTEX_TAG} {k} {_fmt(est.translations[k])} {_fmt(qv[k])}\n")
    qe = _quats_for(g, g.rot)
    eye = np.eye(6)[_TRIU]
    for k in range(g.edge_count):
        info = eye if g.information is None else g.information[k][_TRIU]
        out.write(f"{EDGE_TAG} {g.edge_i[k]} {g.edge_j[k]} {_fmt(g.trans[k])} "
                  f"{_fmt(qe[k])} {_fmt(info)}\n")
    if stream is None:
        return out.getvalue()
    return None


def save_g2o(path, g, est):
    with open(path, "w") as fh:
        write_g2o(g, est, fh)


# ---------------------------------------------------------------------------
# synthetic data


def sample_uniform_rotation(rng) -> np.ndarray:
    """Haar-uniform rotation using Arvo's fast random rotation construction."""
    return sample_uniform_rotations(rng, 1)[0]


def sample_uniform_rotations(rng, n):
    # Arvo (1992): random rotation about z, then a Householder reflection
    # that sends z to a uniform direction; the sign flip keeps det = +1.
    x = rng.random((n, 3))
    theta = 2.0 * np.pi * x[:, 0]
    phi = 2.0 * np.pi * x[:, 1]
    z = x[:, 2]
    v = np.stack([np.cos(phi) * np.sqrt(z), np.sin(phi) * np.sqrt(z),
                  np.sqrt(1.0 - z)], axis=1)
    c, s = np.cos(theta), np.sin(theta)
    Rz = np.zeros((n, 3, 3))
    Rz[:, 0, 0], Rz[:, 0, 1], Rz[:, 1, 0], Rz[:, 1, 1] = c, s, -s, c
    Rz[:, 2, 2] = 1.0
    H = np.eye(3) - 2.0 * v[:, :, None] * v[:, None, :]
    return -H @ Rz


def _positions(spec):
    n = spec.node_count
    if spec.shape == "circle":
        a = 2.0 * np.pi * np.arange(n) / n
        return spec.scale * np.stack([np.cos(a), np.sin(a), np.zeros(n)], axis=1)
    if spec.shape == "grid":
        s = int(round(n ** (1.0 / 3.0)))
        if s ** 3 != n:
            raise InvalidArgumentError(f"grid node_count {n} is not a perfect cube")
        idx = np.array([(x, y, z) for x in range(s) for y in range(s) for z in range(s)])
        return spec.scale * idx.astype(float)
    # Fibonacci spiral on the sphere
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * np.arange(n)
    return spec.scale * np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _edge_pairs(spec, pos):
    n = spec.node_count
    if spec.edge_rule == "complete":
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif spec.edge_rule == "lattice":
        if spec.shape == "circle":
            pairs = sorted({(min(i, (i + 1) % n), max(i, (i + 1) % n)) for i in range(n)})
        else:
            s = int(round(n ** (1.0 / 3.0)))
            pairs = []
            for a in range(n):
                x, y, z = a // (s * s), (a // s) % s, a % s
                if z + 1 < s:
                    pairs.append((a, a + 1))
                if y + 1 < s:
                    pairs.append((a, a + s))
                if x + 1 < s:
                    pairs.append((a, a + s * s))
            pairs.sort()
    else:
        d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
        np.fill_diagonal(d, np.inf)
        near = np.argsort(d, axis=1, kind="stable")[:, :spec.k]
        pairs = sorted({(min(i, int(j)), max(i, int(j)))
                        for i in range(n) for j in near[i]})
    if spec.bidirectional:
        pairs = [p for a, b in pairs for p in ((a, b), (b, a))]
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def generate_ground_truth(spec: GeneratorSpec):
    """Ground-truth poses and the edge set for a synthetic scene.

    Returns ``(graph, truth)``. The graph's measurements are the exact
    (noise-free) relative poses; use :func:`corrupt_with_noise` to perturb
    them. Rotations are Haar-uniform, driven by ``spec.seed``.
    """
    pos = _positions(spec)
    rng = np.random.default_rng(spec.seed)
    R = sample_uniform_rotations(rng, spec.node_count)
    truth = PoseEstimate(R, pos)
    pairs = _edge_pairs(spec, pos)
    g = PoseGraph(spec.node_count, pairs[:, 0], pairs[:, 1],
                  np.tile(np.eye(3), (len(pairs), 1, 1)), np.zeros((len(pairs), 3)))
    return corrupt_with_noise(truth, g, NoiseModel(0.0, 0.0, 0)), truth


def corrupt_with_noise(truth: PoseEstimate, g: PoseGraph, nm: NoiseModel) -> PoseGraph:
    """Replace the graph's measurements with noisy ones drawn around ``truth``.

    ``t_ij = R_i^T (t_j - t_i) + e_t`` with ``e_t ~ N(0, tau^2 I)`` and
    ``R_ij = R_i^T R_j exp(d)`` with ``d ~ N(0, nu^2 I)``.
    """
    if len(truth) != g.node_count:
        raise InvalidArgumentError("truth does not match graph")
    rng = np.random.default_rng(nm.seed)
    m = g.edge_count
    Ri = truth.rotations[g.edge_i]
    Rj = truth.rotations[g.edge_j]
    dt = truth.translations[g.edge_j] - truth.translations[g.edge_i]
    et = rng.normal(0.0, 1.0, (m, 3)) * nm.trans_sigma
    d = rng.normal(0.0, 1.0, (m, 3)) * nm.rot_sigma
    trans = np.einsum("kba,kb->ka", Ri, dt) + et
    rot = np.transpose(Ri, (0, 2, 1)) @ Rj
    if nm.rot_sigma > 0:
        rot = rot @ so3_exp_batch(d)
    return g.with_measurements(rot, trans)


# ---------------------------------------------------------------------------
# fixtures

FIXTURES = {
    "circle-25": GeneratorSpec("circle", 25, scale=10.0, edge_rule="complete"),
    # 3x3x3 lattice measured in both directions: 2 * 54 = 108 edges.
    "grid-27": GeneratorSpec("grid", 27, scale=2.0, edge_rule="lattice",
                             bidirectional=True),
    # 21 nearest neighbours on a 50-point Fibonacci sphere: 540 edges.
    "sphere-50": GeneratorSpec("sphere", 50, scale=10.0, edge_rule="knn", k=21),
}


def make_fixture(name, seed=0, noise=None, truth_seed=None):
    """Noisy synthetic fixture by name.

    Returns ``(graph, truth, spec, noise)``. The ground-truth rotations are
    drawn from ``truth_seed`` (default ``seed``) and the measurement noise from
    ``seed + 1``.
    """
    try:
        spec = FIXTURES[name]
    except KeyError:
        raise InvalidArgumentError(f"unknown fixture {name!r}; "
                                   f"choose from {sorted(FIXTURES)}") from None
    spec = replace(spec, seed=seed if truth_seed is None else truth_seed)
    noise = NoiseModel(seed=seed + 1) if noise is None else noise
    g, truth = generate_ground_truth(spec)
    return corrupt_with_noise(truth, g, noise), truth, spec, noise


def fig1_graph(noise=None, seed=0):
    """Four robots with four poses each, chained odometry plus loop closures.

    Robots ``a`` and ``a + 1`` are linked by two inter-robot measurements, and
    robot 3 closes the loop back to robot 0 with one more. Returns
    ``(graph, truth)`` with the contiguous 4-agent partition already set.
    """
    n, robots = 16, 4
    rng = np.random.default_rng(seed)
    R = sample_uniform_rotations(rng, n)
    t = np.zeros((n, 3))
    for r in range(robots):
        for p in range(4):
            t[4 * r + p] = (2.0 * p, 3.0 * r, 0.1 * (p + r))
    pairs = []
    for r in range(robots):
        pairs += [(4 * r + p, 4 * r + p + 1) for p in range(3)]
    for r in range(robots - 1):
        pairs += [(4 * r + 1, 4 * (r + 1) + 1), (4 * r + 3, 4 * (r + 1) + 2)]
    pairs.append((12, 0))
    pairs = np.array(pairs)
    g = PoseGraph(n, pairs[:, 0], pairs[:, 1], np.tile(np.eye(3), (len(pairs), 1, 1)),
                  np.zeros((len(pairs), 3)), partition=np.repeat(np.arange(4), 4))
    truth = PoseEstimate(R, t)
    return corrupt_with_noise(truth, g, noise or NoiseModel(0.0, 0.0, seed)), truth


def write_manifest(path, **fields):
    """``key=value`` text file, keys sorted."""
    with open(path, "w") as fh:
        for key in sorted(fields):
            fh.write(f"{key}={fields[key]}\n")


def read_manifest(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                key, _, value = line.partition("=")
                out[key.strip()] = value.strip()
    return out


def manifest_fields(spec: GeneratorSpec, noise: NoiseModel, graph: PoseGraph):
    fields = asdict(spec)
    fields.update(n=graph.node_count, m=graph.edge_count,
                  tau=noise.trans_sigma, nu_deg=float(f"{np.rad2deg(noise.rot_sigma):.12g}"),
                  noise_seed=noise.seed)
    fields["generator_seed"] = fields.pop("seed")
    return fields


def fixture_dir(default=None):
    """Benchmark data directory, overridable with ``SOCPGO_DATA``."""
    return os.environ.get("SOCPGO_DATA", default)
