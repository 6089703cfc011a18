"""Pose-graph optimization with orthogonality-constraint splitting.

Rotations are estimated by an ADMM-style split (unconstrained estimate,
projected copy, scaled dual), translations by linear least squares, and the
joint objective is polished by Gauss-Newton.
"""

from .exceptions import (
    DegenerateProjectionError,
    G2oParseError,
    InvalidArgumentError,
    NearSingularityError,
    RankDeficiencyError,
    UnsupportedForDatasetError,
)
from .geometry import Pose, project_to_so3, so3_exp, so3_log
from .graph import (
    PoseEstimate,
    PoseGraph,
    evaluate_objective,
    partition_contiguous,
    validate_graph,
)
from .datasets import load_g2o, make_fixture, parse_g2o, save_g2o
from .initialization import InitConfig, chordal_init, gps_init, initialize, spanning_tree_init
from .recovery import gauss_newton_refine, recover_full_poses, solve_translations_ls
from .soc import SocConfig, SocReport, SocState, scaled_config, solve_rotations
from .runtime import CommStats, run_distributed
from .pipeline import RunReport, run_pipeline

__version__ = "0.1.0"
