"""Generator-call cost: single-level Monte Carlo versus the multilevel scheme.

Cost is the number of scalar Gaussian draws. The single-level comparator
picks the largest step whose calibrated root-mean-square discretization
error fits half the accuracy budget, then pays variance / delta^2 samples at
that step; the multilevel cost is what the adaptive estimator actually
consumed. The gap widens as the accuracy target shrinks and as the noise
grows.
"""

from mlmc_mvsde import builtin_model, builtin_test_function, cost_compare

model = builtin_model("meanfield_ou",
                      {"a": 1.0, "b": 0.5, "sigma": 1.0, "x0": 1.0, "T": 1.0, "epsilon": 0.25})
psi = builtin_test_function("identity")

rows = cost_compare(model, psi, delta_list=[8e-3, 4e-3, 2e-3],
                    epsilon_list=[0.4, 0.2, 0.1, 0.0], refinement_n=2,
                    m_particles=16, pilot_samples=16, max_level=8, seed=2)

print("delta     eps    mc cost        mlmc cost     ratio")
for r in rows:
    ratio = r.mc_cost / r.mlmc_cost
    print(f"{r.delta:<8}  {r.epsilon:<5}  {r.mc_cost:>12}  {r.mlmc_cost:>12}  {ratio:>8.2f}")
print("\nat zero noise the level differences are deterministic, the allocator")
print("adds nothing beyond the pilots, and the multilevel cost collapses to them")
