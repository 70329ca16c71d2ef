"""Geodesic flow on conformal disks: exits, conjugate points, simplicity.

Walks through the builtin metric registry: straight chords on the flat disk,
the trapped equator and conjugate points of a beyond-hemisphere spherical
cap, and the three-part simplicity verdict for each metric, including the
Riccati linearization whose y-zeros mark conjugate points.
"""

import math
import os

from geoxray.geodesics import (
    PhaseState,
    conjugate_scan,
    exit_time,
    riccati_solve,
    trace_geodesic,
    verify_simplicity,
)
from geoxray.metrics import make_metric

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

eu = make_metric("euclidean")
cap_small = make_metric("sphere-cap", k=0.5)
cap_big = make_metric("sphere-cap", k=1.5)
bump = make_metric("gaussian-bump", amplitude=0.2, width=0.4)

print("== flat disk ==")
p = trace_geodesic(eu, PhaseState((0.5, 0.0), math.pi))
print(f"chord from (0.5, 0) west: exit {p.exit_point}, length {p.exit_time:.6f}")

print("\n== beyond-hemisphere cap (k = 1.5) ==")
tau = exit_time(cap_big, PhaseState((1 / 1.5, 0.0), math.pi / 2), t_max=100.0)
print(f"equator-tangent ray at |x| = 1/k: exit time = {tau} (trapped)")
t_conj = conjugate_scan(cap_big, PhaseState((1.0, 0.0), math.pi), t_max=10.0)
print(f"first conjugate time along a diameter (K = 1): {t_conj:.8f} (pi = {math.pi:.8f})")

print("\n== Riccati linearization ==")
sol = riccati_solve(0.0, 1.0, 0.0, -1.0, 2.0)
print(f"real H0 = -1, F = 0: y(t) = 1 - t vanishes at t = {sol.blowup_time:.12f}")
sol_c = riccati_solve(0.0, 1.0, 0.0, 1j, 10.0)
print(
    "complex H0 = i: y never vanishes, Im H stays positive "
    f"(min |det y| = {sol_c.min_abs_det_y:.3f})"
)

print("\n== simplicity verdicts ==")
for name, metric in [
    ("euclidean", eu),
    ("cap k=0.5", cap_small),
    ("gaussian bump", bump),
    ("cap k=1.5", cap_big),
]:
    rep = verify_simplicity(metric, n_boundary=24, n_angles=24, t_max=60.0)
    print(
        f"{name:14s} simple={rep.simple!s:5s} convex={rep.strictly_convex!s:5s} "
        f"nontrapping={rep.nontrapping!s:5s} no-conjugate={rep.no_conjugate_points!s:5s} "
        f"witnesses={sum(rep.counts.values())}"
    )
    with open(os.path.join(OUT, f"simplicity_{name.replace(' ', '_').replace('=', '')}.json"), "w") as fh:
        fh.write(rep.to_json(indent=2))
print(f"reports in {OUT}")
