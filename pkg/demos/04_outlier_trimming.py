"""Deterministic MCD trimming on the 12 real velocity coordinates.

Six deterministic starts each seed concentration steps. The subset with the
smallest covariance determinant is kept, and the other 10% are flagged.
"""
import numpy as np

from infers.robust import trim_outliers
from infers.simulator import simulate, published_config

rng = np.random.default_rng(0)
x = simulate(published_config(n=500, seed=3)).features()
planted = rng.choice(500, 25, replace=False)
x[planted] = rng.normal(size=(25, 12)) * 10 * x.std(axis=0)

r = trim_outliers(x, 0.10)
print(f"kept {len(r.kept)}, flagged {len(r.flagged)}, best start {r.start}")
print(f"planted outliers caught: {np.isin(planted, r.flagged).sum()}/25")
print("determinant per C-step:", ", ".join(f"{d:.3e}" for d in r.det_history))
print("final determinant per start:", ", ".join(f"{d:.3e}" for d in r.start_dets))

# heavy-tailed errors give the trimming something natural to catch
t = simulate(published_config(n=2000, seed=5, error_dist="student_t", dof=3)).features()
rt = trim_outliers(t)
print(f"student-t (3 dof): flagged rows have median |u_I| "
      f"{np.median(np.abs(t[rt.flagged, 0])):.3f} vs kept {np.median(np.abs(t[rt.kept, 0])):.3f} m/s")
