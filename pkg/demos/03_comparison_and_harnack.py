"""
Ordering and positivity
=======================

Raising the boundary data by 0.1 should raise the solution everywhere, by
at most 0.1.  And a positive solution cannot be much bigger in a small
ball than it is at the ball's smallest point.
"""
import numpy as np

from grushin import (DirichletProblem, ExponentField, Grid, GrushinSpace, JensenConfig, Polynomial,
                     check_comparison, check_harnack, solve_infinity_relaxation)

plane = GrushinSpace.grushin_plane()
p = ExponentField(2.0, Polynomial.parse("0.25*x1^2", 2), 1.05)
grid = Grid((-1, -1), (1, 1), (33, 33))
h = grid.spacing[0]

low = DirichletProblem.from_function(plane, p, grid, "x1*x2 + 0.5*x2^2 - 0.2*x1")
high = low.shifted(0.1)
u = solve_infinity_relaxation(low).solution
v = solve_infinity_relaxation(high).solution
rep = check_comparison(u, v, tol=10 * h)
print(f"max (u - v) inside: {rep.interior_max:.4f}, on the boundary: {rep.boundary_max:.4f}, passed: {rep.passed}")

# a lower bound from a different equation: the Jensen min-form solution
# sits on one side, the max-form on the other
for eps in (0.04, 0.01):
    up = solve_infinity_relaxation(low, JensenConfig(eps)).solution.values
    down = solve_infinity_relaxation(low, JensenConfig(-eps)).solution.values
    print(f"eps = {eps}: the two Jensen forms differ by at most {np.max(np.abs(up - down)):.4f}")

# Harnack: lift the data so the solution is positive
positive = DirichletProblem.from_function(plane, p, grid, "x2 + 0.5*x1^2 - 0.3*x1*x2 + 3")
w = solve_infinity_relaxation(positive).solution
for r in (0.1, 0.2, 0.4):
    hr = check_harnack(plane, w, (0, 0), r)
    print(f"r = {r}: sup {hr.sup_inner:.4f}, inf {hr.inf_inner:.4f}, C = {hr.C_empirical:.4f} "
          f"over {hr.ball_nodes} nodes")

# near the degenerate line the control ball is tall and thin
hr = check_harnack(plane, w, (0, 0.5), 0.2)
print("ball at (0, 0.5):", hr.ball_nodes, "nodes")
