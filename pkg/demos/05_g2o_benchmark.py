"""
Public g2o benchmarks
=====================

Point SOCPGO_DATA at a directory holding the usual SLAM benchmark files
(parking-garage.g2o, cubicle.g2o, torus3D.g2o, rim.g2o) and this script
solves each one from a spanning-tree initialization. Without the files it
writes and solves a generated stand-in instead.
"""

import os
import tempfile
import time
from pathlib import Path

from socpgo import datasets
from socpgo.cli import BENCHMARKS
from socpgo.pipeline import run_pipeline

root = os.environ.get("SOCPGO_DATA")
found = {}
if root:
    for name, files in BENCHMARKS.items():
        hit = [Path(root) / f for f in files if (Path(root) / f).is_file()]
        if hit:
            found[name] = hit[0]

if not found:
    print("no benchmark files found; using a generated sphere instead")
    g, truth, _, _ = datasets.make_fixture("sphere-50", seed=2)
    path = Path(tempfile.mkdtemp()) / "sphere.g2o"
    datasets.save_g2o(path, g, truth)
    found["sphere-50"] = path

for name, path in found.items():
    t0 = time.perf_counter()
    g, _ = datasets.load_g2o(path)
    rep = run_pipeline(g, name, init="spanning_tree")
    print(rep.summary())
    print(f"  load + solve {time.perf_counter() - t0:.1f}s\n")
