"""
The Grushin frame, its brackets, and how far apart points really are
=====================================================================

On the Grushin plane the second field X2 = x1 d/dx2 dies on the line x1 = 0.
One bracket with X1 brings it back, and that single bracket changes the
scaling of distances along the degenerate axis from h to sqrt(h).
"""
import numpy as np

from grushin import (GrushinSpace, Grid, cc_distance_estimate, cc_distance_numeric, hormander_profile,
                     iterated_bracket, MetricGraphConfig)

plane = GrushinSpace.grushin_plane()
print("frame:", [plane.frame(i).to_strings() for i in range(2)])

# [X1, X2] is the constant field d/dx2, nonzero everywhere
print("[X1, X2] =", iterated_bracket(plane, [0], 1).to_strings())

# bracket depths: 0 where rho_i does not vanish, more on the degenerate set
for point in ([1.0, 0.0], [0.0, 0.0]):
    print(f"depths at {point}:", hormander_profile(plane, point).r)

# higher powers of x1 need more brackets
for m in (1, 2, 3):
    print(f"rho2 = x1^{m}: depths at origin", hormander_profile(GrushinSpace.grushin_plane(m), [0, 0]).r)

# the estimate sum |dx_i|^(1/(1+r_i)) next to the graph distance
grid = Grid((-1, -1), (1, 1), (81, 81))
dist = cc_distance_numeric(plane, grid, grid.nearest_index([0, 0]))
prof = hormander_profile(plane, [0, 0])
print("\n    t   graph d(0,(0,t))   estimate")
for t in (0.1, 0.2, 0.4, 0.8):
    d = dist.values[grid.nearest_index([0, t])]
    print(f"{t:5.2f}   {d:16.4f}   {cc_distance_estimate(prof, [0, t]):8.4f}")

hs = np.array([0.1, 0.2, 0.4])
slope = np.polyfit(np.log(hs), np.log([dist.values[grid.nearest_index([0, h])] for h in hs]), 1)[0]
print(f"log-log slope along x2: {slope:.3f}  (sqrt scaling gives 0.5)")

# along x1 nothing is degenerate and the slope is 1
slope1 = np.polyfit(np.log(hs), np.log([dist.values[grid.nearest_index([h, 0])] for h in hs]), 1)[0]
print(f"log-log slope along x1: {slope1:.3f}")

# the envelope edge rule bounds rho from below on each edge, so it never
# undercuts the true length; the midpoint rule is cheaper and a bit shorter
env = cc_distance_numeric(plane, grid, grid.nearest_index([0, 0]), MetricGraphConfig(edge_rule="envelope"))
print("midpoint vs envelope at (0, 0.4):", dist.values[grid.nearest_index([0, 0.4])],
      env.values[grid.nearest_index([0, 0.4])])
