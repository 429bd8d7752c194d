"""Compare the compiled and pure-Python geometry kernels.

Runs the circle/hexagon overlap kernel on random boundary-straddling
circles with both backends, checks they agree, and reports timings. Also
times the full detector on the benchmark scenario under each backend
(each in a fresh interpreter, since the backend is chosen at import).

    python3 benchmarks/bench_backends.py [--n 2000] [--repeat 3]
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from incident_fusion import _geom_py
from incident_fusion.geo import CellId, axial_center_xy, cells_within, edge_length_m

try:
    from incident_fusion import _geomkernels
except ImportError:
    _geomkernels = None

DETECT_SNIPPET = """
import time
from incident_fusion import geo, synth, priors
from incident_fusion.pipeline import Detector
from incident_fusion.fusion import FusionConfig
sc = synth.default_benchmark(0)
table = priors.estimate_priors(synth.default_history(0).ground_truth, sc.config.grid)
t = time.perf_counter()
res = Detector(sc.config.grid, FusionConfig(delta_m=DELTA), table).run(sc.reports)
print(geo.BACKEND, len(sc.reports), len(res.decisions), time.perf_counter() - t)
"""


def make_cases(n, edge, radius, seed=0):
    rng = np.random.default_rng(seed)
    cells = cells_within(CellId(6, 0, 0), 1)
    centers = np.array([axial_center_xy(c.q, c.r, edge) for c in cells])
    # points within one radius of the home cell boundary, so the clipping path runs
    ang = rng.uniform(0, 2 * np.pi, n)
    rad = 0.5 * np.sqrt(3) * edge + rng.uniform(-radius, radius, n)
    return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)]), centers


def time_kernel(mod, pts, centers, edge, radius, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = [mod.circle_hex_fractions(x, y, radius, centers, edge) for x, y in pts]
        best = min(best, time.perf_counter() - t)
    return best, np.array(out)


def time_detect(pure, delta):
    env = dict(os.environ)
    env.pop("INCIDENT_FUSION_PURE_PYTHON", None)
    if pure:
        env["INCIDENT_FUSION_PURE_PYTHON"] = "1"
    code = DETECT_SNIPPET.replace("DELTA", repr(delta))
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    backend, n_rep, n_dec, secs = out.stdout.split()
    return backend, int(n_rep), int(n_dec), float(secs)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2000, help="circles per kernel run")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--radius", type=float, default=100.0)
    ap.add_argument("--skip-detect", action="store_true")
    args = ap.parse_args()

    edge = edge_length_m(6)
    pts, centers = make_cases(args.n, edge, args.radius)
    t_py, out_py = time_kernel(_geom_py, pts, centers, edge, args.radius, args.repeat)
    print(f"kernel python   : {t_py * 1e3:9.1f} ms for {args.n} circles x {len(centers)} cells")
    if _geomkernels is None:
        print("kernel compiled : not built (run `pip install -e . --no-build-isolation`)")
    else:
        t_c, out_c = time_kernel(_geomkernels, pts, centers, edge, args.radius, args.repeat)
        print(f"kernel compiled : {t_c * 1e3:9.1f} ms  speedup x{t_py / t_c:.1f}")
        print(f"max |difference|: {np.abs(out_py - out_c).max():.3e}")

    if not args.skip_detect:
        # a larger circle makes boundary straddling (and so clipping) common
        for delta in (100.0, 1000.0):
            for pure in (False, True):
                backend, n_rep, n_dec, secs = time_detect(pure, delta)
                print(f"detect delta={delta:6.0f} m backend={backend:8s}: {secs:6.2f} s "
                      f"({n_rep} reports, {n_dec} decisions)")


if __name__ == "__main__":
    main()
