"""Speed-bin sweep with smoothing and an exponential trend fit.

Records come from groups with different truth variance, so drifter speed tracks
signal strength. Each bin holds the 500 records nearest a target speed.
"""
from dataclasses import replace

import numpy as np

from infers.cohort import SubsetSpec, exp_fit, running_mean, sweep
from infers.moments import Collocations
from infers.simulator import simulate, published_config

parts = []
for k, s in enumerate(np.linspace(0.05, 0.8, 16)):
    cfg = replace(published_config(n=2000, seed=k), sigma_t2_u=s**2, sigma_t2_v=s**2)
    parts.append(simulate(cfg).uv)
col = Collocations(np.concatenate(parts))

targets = np.round(np.arange(0.10, 1.1001, 0.05), 2)
entries = sweep(col, [SubsetSpec.speed_bin(t, 500) for t in targets])
st = np.array([e.result.params.sigma_t2 if e.ok else np.nan for e in entries])
smooth = running_mean(st, 5)

print("target  status     sigma_t2  smoothed")
for t, e, a, b in zip(targets, entries, st, smooth):
    print(f"{t:5.2f}   {e.status:9s}  {a:8.4f}  {b:8.4f}")

ok = np.isfinite(st)
f = exp_fit(targets[ok], st[ok])
print(f"\nsigma_t2 ~ {f.a:.3f} + {f.b:.3f} exp({f.c:.2f} x), rss {f.rss:.2e}, flagged {f.ill_conditioned}")
