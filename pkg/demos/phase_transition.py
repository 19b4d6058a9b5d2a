"""Success rate of CoSaMP over a grid of sparsity s and sample budget m.

Prints an ASCII phase diagram for the ring and the 50%-success contour
with its least-squares slope. Pass a trial count as the first argument
(default 20) to trade time for smoothness.
"""
import sys

import numpy as np

from dynsamp.harness import PhaseGridSpec, contour_fit, critical_budget, phase_transition

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 20

spec = PhaseGridSpec(s_values=tuple(range(1, 9)), m_values=tuple(range(8, 65, 8)), trials=trials)
print(f"ring n={spec.graph.n}, k={spec.k}, T={spec.T}, dt={spec.dt}, {trials} trials per cell")
res = phase_transition(spec)

shades = " .:-=+*#%@"
print("\n   m: " + " ".join(f"{m:3d}" for m in spec.m_values))
for s, row in zip(spec.s_values, res.success_rate):
    cells = " ".join(f"  {shades[min(int(r * 10), 9)]}" for r in row)
    print(f"s={s:2d}: {cells}")

m_star = critical_budget(res)
slope, intercept = contour_fit(spec.s_values, m_star)
print("\n50% budget per s:", m_star)
print(f"fit: m* ~ {slope:.2f} s + {intercept:.2f}")

# past the transition every s recovers
print("rate at the largest m:", np.round(res.success_rate[:, -1], 2))
