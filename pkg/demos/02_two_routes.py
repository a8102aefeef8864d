"""
Two ways to an infinity(x)-harmonic function
============================================

Route one minimizes the integral of |grad_0 u|^(k p(x)) / (k p(x)) for growing
k and watches the minimizers settle.  Route two relaxes the equation
-Delta_inf(x) u = 0 directly in pseudo-time.  Both should land on the
same function.
"""
import time

import numpy as np

from grushin import (DirichletProblem, ExponentField, Grid, GrushinSpace, KSchedule, Polynomial,
                     solve_infinity_relaxation, solve_infinity_via_limit)

plane = GrushinSpace.grushin_plane()
p = ExponentField(2.0, Polynomial.parse("0.25*x1^2", 2), 1.05)   # p(x) = max(2 + x1^2/4, 1.05)
grid = Grid((-1, -1), (1, 1), (33, 33))
problem = DirichletProblem.from_function(plane, p, grid, "x2 + 0.5*x1^2 - 0.3*x1*x2")

t0 = time.time()
limit = solve_infinity_via_limit(problem, KSchedule(), stage_tol=1e-2)
print(f"limit route ({time.time() - t0:.1f}s)")
for k, d in zip(limit.ks[1:], limit.stage_differences):
    print(f"  k = {k:4g}   sup |u_k - u_prev| = {d:.4f}")

t0 = time.time()
relax = solve_infinity_relaxation(problem)
print(f"relaxation ({time.time() - t0:.1f}s): {relax.iterations} sweeps, residual {relax.final_residual:.2e}")

gap = limit.solution.sup_distance(relax.solution)
print(f"sup |limit - relaxation| = {gap:.4f}   (10h = {10 * grid.spacing[0]:.3f})")

# where do they differ most?  usually near the degenerate line x1 = 0
diff = np.abs(limit.solution.values - relax.solution.values)
where = grid.point(np.unravel_index(np.argmax(diff), diff.shape))
print("largest gap at", np.round(where, 3))

# the middle column, for a feel of the profile
col = grid.counts[0] // 2
for j in range(0, grid.counts[1], 8):
    print(f"  x2 = {grid.point((col, j))[1]:5.2f}   limit {limit.solution.values[col, j]: .4f}"
          f"   relax {relax.solution.values[col, j]: .4f}")
