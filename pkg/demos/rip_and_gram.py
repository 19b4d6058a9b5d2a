"""Two sanity checks behind the sampling theory.

1. The reweighted Gram matrix Phi^T Phi is an unbiased estimate of the
   identity, so its Monte Carlo mean converges to I.
2. Restricted isometry constants, computed by brute force, shrink as the
   number of samples grows.
"""
import numpy as np

from dynsamp import (
    DiffusionModel,
    TimeGrid,
    allocate_budget,
    build_dictionary,
    build_laplacian,
    build_measurement,
    draw_samples,
    eigendecompose,
    gen_cycle,
    optimal_distribution,
)
from dynsamp.harness import estimate_rip, gram_identity_check

basis = eigendecompose(build_laplacian(gen_cycle(64)))
d = build_dictionary(basis, DiffusionModel.heat(1.0), 10, TimeGrid.regular(4))
dist, prof = optimal_distribution(d)

# %% Gram identity
for n_draws in (10, 40, 160, 640):
    g = gram_identity_check(d, dist, 8, n_draws, seed=3)
    print(f"{n_draws:4d} draws: ||mean - I|| = {g.mean_deviation:.4f}, "
          f"single draw {g.mean_single_deviation:.3f} (max {g.max_single_deviation:.3f})")

# %% restricted isometry constants
print()
for m in (50, 150, 500):
    deltas = []
    for seed in range(10):
        phi = build_measurement(d, draw_samples(dist, allocate_budget(prof, m), seed))
        deltas.append([estimate_rip(phi, s).delta for s in (1, 2, 3)])
    med = np.median(deltas, axis=0)
    print(f"m={m:3d}: median delta_1, delta_2, delta_3 = {med.round(3)}")
