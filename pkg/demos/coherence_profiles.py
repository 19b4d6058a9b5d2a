"""Where should samples go in time?

Builds the space-time dictionary for a ring and for a two-block community
graph, then compares the per-step coherence of uniform sampling against the
coherence-minimizing distribution.
"""
import numpy as np

from dynsamp import (
    DiffusionModel,
    TimeGrid,
    allocate_budget,
    build_dictionary,
    build_laplacian,
    coherence,
    cycle_fourier_basis,
    eigendecompose,
    gen_community,
    optimal_distribution,
    uniform_distribution,
)

np.set_printoptions(precision=4, suppress=True)

K, T = 16, 8

# %% ring: rows of the Fourier dictionary all have the same magnitude,
# so the optimal distribution is uniform in space
ring = cycle_fourier_basis(128)
model = DiffusionModel.heat(4.0)
d = build_dictionary(ring, model, K, TimeGrid.regular(T))
_, opt = optimal_distribution(d)
uni = coherence(d, uniform_distribution(d.n, d.T))
print("ring, optimal nu_t^2:", opt.nu_sq)
print("ring, uniform nu_t^2:", uni.nu_sq)
print("sum over t (optimal, uniform):", opt.nu_sq_sum, uni.nu_sq_sum)

# %% community graph: unequal blocks make some vertices far more coherent
g = gen_community((40, 160), 0.8, 0.02, seed=7)
basis = eigendecompose(build_laplacian(g))
d = build_dictionary(basis, DiffusionModel.heat(0.5), K, TimeGrid.regular(T))
dist, opt = optimal_distribution(d)
uni = coherence(d, uniform_distribution(d.n, d.T))
print("\ncommunity, optimal nu_t^2:", opt.nu_sq)
print("community, uniform nu_t^2:", uni.nu_sq)
print("sum over t (optimal, uniform):", opt.nu_sq_sum, uni.nu_sq_sum)

# mass the optimal distribution puts on the small block at t=0
print("probability on the 40-node block at t=0:", dist.probs[0, :40].sum())

# %% budgets follow nu_t^2, so early steps get most of the samples
print("\nbudget split of m=200:", allocate_budget(opt, 200))
