"""Dirichlet problem for the infinity(x)-Laplacian: two independent routes.

``solve_infinity_via_limit``
    Minimize the discrete ``kp(x)``-energy for an increasing sequence of
    ``k`` (warm-starting each stage) and take the last iterate.
``solve_infinity_relaxation``
    Explicit pseudo-time iteration on the finite-difference equation,
    including Jensen's min/max auxiliary equations for ``epsilon != 0``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import NoConvergence, newton_krylov

from .geometry import GrushinSpace
from .grid import Grid, GridFunction
from .mesh import SimplexMesh
from .operators import ExponentField, _frame_on_grid, energy_from_terms, infinity_x_laplacian_field
from .polynomial import Polynomial

__all__ = [
    "DirichletProblem",
    "KSchedule",
    "JensenConfig",
    "SolveReport",
    "solve_p_dirichlet",
    "solve_infinity_via_limit",
    "solve_infinity_relaxation",
    "residual_field",
    "equation_residual",
    "upwind_grad_sq",
    "ConvergenceError",
    "DivergenceError",
]

logger = logging.getLogger(__name__)

SIGMA = 1e-8
OMEGA = 1.8
STALL_WINDOW = 50
DIVERGENCE_PATIENCE = 2000
POLISH_MAXITER = 50


class ConvergenceError(RuntimeError):
    """A stage of the limit route did not converge."""

    def __init__(self, message: str, report: "SolveReport"):
        super().__init__(message)
        self.report = report


class DivergenceError(RuntimeError):
    """The relaxation residual grew to twice its running minimum."""

    def __init__(self, message: str, report: "SolveReport"):
        super().__init__(message)
        self.report = report


@dataclass
class DirichletProblem:
    """Grushin space, exponent field, grid and boundary values.

    ``boundary`` holds one value per boundary node, in the C order of
    ``grid.boundary_mask()``.
    """

    space: GrushinSpace
    pfield: ExponentField
    grid: Grid
    boundary: np.ndarray
    lipschitz_hint: float | None = None

    def __post_init__(self):
        self.boundary = np.asarray(self.boundary, dtype=float).ravel()
        nb = int(self.grid.boundary_mask().sum())
        if self.boundary.size != nb:
            raise ValueError(f"{self.boundary.size} boundary values for {nb} boundary nodes")
        if not np.all(np.isfinite(self.boundary)):
            raise ValueError("boundary values must be finite")
        if self.space.n != self.grid.ndim:
            raise ValueError("space and grid dimensions differ")
        if not self.grid.interior_mask().any():
            raise ValueError("grid has no interior nodes")

    @classmethod
    def from_function(cls, space: GrushinSpace, pfield: ExponentField, grid: Grid,
                      f: Callable | Polynomial | str, lipschitz_hint: float | None = None) -> "DirichletProblem":
        """Sample ``f`` (callable on ``(..., n)`` arrays, or a polynomial) at the boundary nodes."""
        if isinstance(f, str):
            f = Polynomial.parse(f, space.n)
        coords = grid.coordinates()[grid.boundary_mask()]
        return cls(space, pfield, grid, np.asarray(f(coords), dtype=float), lipschitz_hint)

    @property
    def boundary_mask(self) -> np.ndarray:
        return self.grid.boundary_mask()

    def shifted(self, c: float) -> "DirichletProblem":
        return DirichletProblem(self.space, self.pfield, self.grid, self.boundary + c, self.lipschitz_hint)

    def with_boundary(self, values) -> "DirichletProblem":
        return DirichletProblem(self.space, self.pfield, self.grid, values, self.lipschitz_hint)

    def embed(self, interior_guess: np.ndarray | None = None) -> np.ndarray:
        """Full-grid array with boundary values in place."""
        u = np.zeros(self.grid.counts) if interior_guess is None else np.array(interior_guess, dtype=float)
        u[self.boundary_mask] = self.boundary
        return u

    def initial_guess(self) -> np.ndarray:
        """Minimizer of the quadratic frame energy, clipped to the boundary range."""
        lo, hi = self.boundary.min(), self.boundary.max()
        if lo == hi:
            return np.full(self.grid.counts, lo)
        mesh = SimplexMesh.build(self.space, self.grid)
        u = mesh.quadratic_extension(self.boundary, self.boundary_mask).reshape(self.grid.counts)
        u = np.clip(u, lo, hi)
        u[self.boundary_mask] = self.boundary
        return u


@dataclass(frozen=True)
class KSchedule:
    ks: tuple = (1, 2, 4, 8, 16, 32, 64)

    def __post_init__(self):
        ks = tuple(float(k) for k in self.ks)
        if not ks:
            raise ValueError("schedule is empty")
        if any(k < 1 for k in ks):
            raise ValueError("every k must be at least 1")
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("schedule must be strictly increasing")
        object.__setattr__(self, "ks", ks)


@dataclass(frozen=True)
class JensenConfig:
    """``epsilon > 0``: min-form, ``epsilon < 0``: max-form, 0: plain equation."""

    epsilon: float = 0.0
    tolerance: float = 1e-5
    max_iters: int = 20000

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")

    @property
    def form(self) -> str:
        if self.epsilon > 0:
            return "min"
        if self.epsilon < 0:
            return "max"
        return "plain"


@dataclass
class SolveReport:
    solution: GridFunction
    iterations: int
    final_residual: float
    residual_history: list = field(default_factory=list)
    converged: bool = False
    energy_history: list | None = None
    stage_differences: list | None = None
    ks: list | None = None
    polished: bool | None = None

    def to_dict(self) -> dict:
        out = {
            "iterations": int(self.iterations),
            "final_residual": float(self.final_residual),
            "converged": bool(self.converged),
            "residual_history": [float(r) for r in self.residual_history],
        }
        if self.stage_differences is not None:
            out["stage_differences"] = [float(d) for d in self.stage_differences]
            out["ks"] = [float(k) for k in self.ks]
        if self.polished is not None:
            out["polished"] = bool(self.polished)
        return out


def _check_warm_start(problem: DirichletProblem, warm: GridFunction) -> np.ndarray:
    if warm.grid != problem.grid:
        raise ValueError("warm start lives on a different grid")
    u = warm.values.copy()
    if not np.allclose(u[problem.boundary_mask], problem.boundary, rtol=0, atol=1e-12):
        raise ValueError("warm start does not match the boundary data")
    u[problem.boundary_mask] = problem.boundary
    return u


def _normalized(problem: DirichletProblem, warm: GridFunction | None):
    """Shift the data so its minimum is 0; solvers add ``base`` back at the end.

    Every solver is then exactly translation invariant: data differing by a
    constant run the same iteration up to rounding.
    """
    base = float(problem.boundary.min())
    if warm is not None:
        warm = GridFunction(warm.grid, warm.values - base)
    return problem.shifted(-base), base, warm


def solve_p_dirichlet(problem: DirichletProblem, k: float = 1.0, tol: float = 1e-6,
                      max_iters: int = 20000, warm_start: GridFunction | None = None,
                      omega: float = OMEGA) -> SolveReport:
    """Minimize the discrete ``kp(x)``-energy with the boundary values pinned.

    Coordinate descent: each sweep visits the colour classes of the mesh in
    turn and moves every node value to the exact minimizer of the energy in
    that value alone, over-relaxed by ``omega`` where that still lowers the
    energy.  Stops once a plain (unrelaxed) sweep moves no value by more
    than ``tol``.  ``residual_history`` records the sup-norm update per sweep.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not 1.0 <= omega < 2.0:
        raise ValueError("omega must lie in [1, 2)")
    mesh = SimplexMesh.build(problem.space, problem.grid)
    kp = mesh.exponents(problem.pfield, k)
    problem, base, warm_start = _normalized(problem, warm_start)
    u = problem.initial_guess() if warm_start is None else _check_warm_start(problem, warm_start)
    flat = u.ravel().copy()

    energies = [energy_from_terms(mesh.log_energy_sum(flat, kp), k)]
    updates = []
    converged = False
    blocks = mesh.color_blocks()
    relax = omega
    window_best = np.inf
    it = 0
    while it < max_iters:
        it += 1
        biggest = 0.0
        for block in blocks:
            new = mesh.minimize_block(flat, block, kp, omega=relax)
            if new.size:
                biggest = max(biggest, float(np.max(np.abs(new - flat[block.nodes]))))
            flat[block.nodes] = new
        updates.append(biggest)
        energies.append(energy_from_terms(mesh.log_energy_sum(flat, kp), k))
        if biggest <= tol:
            if relax == 1.0:
                converged = True
                break
            relax = 1.0
            continue
        if it % STALL_WINDOW == 0:
            best = min(updates[-STALL_WINDOW:])
            if best > 0.5 * window_best:
                # over-relaxation can cycle on the degenerate set; back off towards 1
                omega = 1.0 + 0.5 * (omega - 1.0)
            window_best = best
        relax = omega
    if not converged:
        logger.warning("p-solver at k=%g stopped after %d sweeps (last update %.3g)", k, it, updates[-1])
    sol = GridFunction(problem.grid, flat.reshape(problem.grid.counts) + base)
    return SolveReport(sol, it, updates[-1] if updates else 0.0, updates, converged, energies)


def solve_infinity_via_limit(problem: DirichletProblem, schedule: KSchedule | None = None, tol: float = 1e-6,
                             max_iters: int = 20000, stage_tol: float | None = None) -> SolveReport:
    """Run the p-solver along ``schedule`` with warm starts and return the last iterate.

    ``stage_differences[j]`` is ``sup |u_{k_{j+1}} - u_{k_j}|``.  The report is
    converged when the last of them is at most ``stage_tol`` (default ``tol``).
    Raises :class:`ConvergenceError` if any stage fails to converge.
    """
    schedule = schedule or KSchedule()
    stage_tol = tol if stage_tol is None else stage_tol
    prev = None
    diffs, residuals, energies = [], [], []
    total = 0
    for k in schedule.ks:
        rep = solve_p_dirichlet(problem, k, tol, max_iters, warm_start=prev)
        total += rep.iterations
        residuals.append(rep.final_residual)
        energies.append(rep.energy_history[-1])
        if not rep.converged:
            partial = SolveReport(rep.solution, total, rep.final_residual, residuals, False, energies,
                                  diffs, list(schedule.ks[:len(residuals)]))
            raise ConvergenceError(f"p-solver did not converge at k={k:g}", partial)
        if prev is not None:
            diffs.append(rep.solution.sup_distance(prev))
        prev = rep.solution
    converged = (diffs[-1] <= stage_tol) if diffs else True
    return SolveReport(prev, total, diffs[-1] if diffs else 0.0, residuals, converged, energies,
                       diffs, list(schedule.ks))


def equation_residual(grad: np.ndarray, inf_x_lap: np.ndarray, epsilon: float,
                      grad_sq: np.ndarray | None = None) -> np.ndarray:
    """Value of the selected equation given ``nabla_0 u`` and ``Delta_inf(x) u``.

    Plain: ``-Delta_inf(x) u``; ``epsilon > 0``: ``min(|g|^2 - eps, -Delta_inf(x) u)``;
    ``epsilon < 0``: ``max(|eps| - |g|^2, -Delta_inf(x) u)``.  ``grad_sq``, if
    given, replaces ``|g|^2`` in the gradient branch.
    """
    pde = -inf_x_lap
    if epsilon == 0:
        return pde
    g2 = np.sum(grad**2, axis=-1) if grad_sq is None else grad_sq
    if epsilon > 0:
        return np.minimum(g2 - epsilon, pde)
    return np.maximum(-epsilon - g2, pde)


def upwind_grad_sq(space: GrushinSpace, u: GridFunction, rising: bool) -> np.ndarray:
    """One-sided ``|nabla_0 u|^2`` on interior nodes, monotone in the node's own value.

    ``rising=True`` uses ``max(D^- u, -D^+ u, 0)`` per axis, which grows with
    ``u`` at the node; ``rising=False`` uses ``max(D^+ u, -D^- u, 0)``, which
    grows as the node value drops.
    """
    grid = u.grid
    v = u.values
    h = grid.spacing
    n = grid.ndim
    inner = tuple(slice(1, c - 1) for c in grid.counts)
    rho = _frame_on_grid(space, grid)[1][inner]
    total = np.zeros(rho.shape[:-1])
    for i in range(n):
        fwd = [slice(1, c - 1) for c in grid.counts]
        bwd = list(fwd)
        fwd[i] = slice(2, None)
        bwd[i] = slice(None, -2)
        d_plus = (v[tuple(fwd)] - v[inner]) / h[i]
        d_minus = (v[inner] - v[tuple(bwd)]) / h[i]
        if rising:
            one = np.maximum(np.maximum(d_minus, -d_plus), 0.0)
        else:
            one = np.maximum(np.maximum(d_plus, -d_minus), 0.0)
        total += (rho[..., i] * one) ** 2
    return total


def _discrete_terms(problem: DirichletProblem, u: GridFunction, epsilon: float):
    val, g, _ = infinity_x_laplacian_field(problem.space, u, problem.pfield, margin=1, stencil="compact")
    g2 = None if epsilon == 0 else upwind_grad_sq(problem.space, u, rising=epsilon > 0)
    return val, g, g2


def residual_field(problem: DirichletProblem, u: GridFunction, cfg: JensenConfig | None = None) -> GridFunction:
    """Per-node value of the discrete equation; boundary nodes carry 0.

    The gradient branch of the Jensen forms uses :func:`upwind_grad_sq`.
    """
    cfg = cfg or JensenConfig()
    if u.grid != problem.grid:
        raise ValueError("grid function lives on a different grid")
    val, g, g2 = _discrete_terms(problem, u, cfg.epsilon)
    out = np.zeros(problem.grid.counts)
    out[tuple(slice(1, c - 1) for c in problem.grid.counts)] = equation_residual(g, val, cfg.epsilon, g2)
    return GridFunction(problem.grid, out)


def _relaxation_drive(g: np.ndarray, inf_x_lap: np.ndarray, epsilon: float,
                      grad_sq: np.ndarray | None = None) -> np.ndarray:
    """Pseudo-time velocity; vanishes exactly where the discrete equation holds."""
    g2 = np.sum(g**2, axis=-1)
    pde_drive = inf_x_lap / (g2 + SIGMA)
    if epsilon == 0:
        return pde_drive
    if grad_sq is not None:
        g2 = grad_sq
    if epsilon > 0:
        # u_t = -min(A, B): the larger drive wins, ties go to the PDE branch
        grad_drive = epsilon - g2
        return np.where(grad_drive > pde_drive, grad_drive, pde_drive)
    grad_drive = g2 + epsilon
    return np.where(grad_drive < pde_drive, grad_drive, pde_drive)


def relaxation_step_size(problem: DirichletProblem) -> float:
    """Explicit stability bound ``min_i h_i^2 / (4 n max rho^2)``."""
    h = problem.grid.spacing
    rmax = max(problem.space.max_rho(problem.grid), 1.0)
    return float(np.min(h**2) / (4 * problem.grid.ndim * rmax**2))


def solve_infinity_relaxation(problem: DirichletProblem, cfg: JensenConfig | None = None,
                              initial: GridFunction | None = None) -> SolveReport:
    """Pseudo-time iteration ``u <- u + tau * drive`` on interior nodes.

    For ``epsilon = 0`` the drive is ``Delta_inf(x) u / (|g|^2 + sigma)``; for
    the Jensen forms it is the branch drive selected by the min/max.  Stops
    when the sup-norm of :func:`residual_field` reaches ``cfg.tolerance``.
    """
    cfg = cfg or JensenConfig()
    grid = problem.grid
    problem, base, initial = _normalized(problem, initial)
    if initial is None:
        u = problem.initial_guess()
    else:
        u = _check_warm_start(problem, initial)
    interior = tuple(slice(1, c - 1) for c in grid.counts)
    tau = relaxation_step_size(problem)
    history = []
    best = np.inf
    best_u = u.copy()
    converged = False
    it = 0
    above = 0
    diverged = None
    while True:
        val, g, g2 = _discrete_terms(problem, GridFunction(grid, u), cfg.epsilon)
        res = float(np.max(np.abs(equation_residual(g, val, cfg.epsilon, g2))))
        history.append(res)
        if res <= cfg.tolerance:
            converged = True
            break
        if res < best:
            best = res
            best_u = u.copy()
        # the sup residual is not monotone in the transient, so a doubling
        # only counts as divergence once it persists
        above = above + 1 if res > 2 * best else 0
        if not np.isfinite(res) or above >= DIVERGENCE_PATIENCE:
            diverged = (f"residual {res:.3g} stayed above twice its minimum {best:.3g} "
                        f"for {above} sweeps (sweep {it})")
            break
        if it >= cfg.max_iters:
            break
        u[interior] += tau * _relaxation_drive(g, val, cfg.epsilon, g2)
        it += 1
    polished = None
    if not converged:
        polished = False
        found = _newton_polish(problem, best_u, cfg)
        if found is not None:
            u, res = found
            history.append(res)
            converged = polished = True
            logger.info("explicit sweeps stalled at residual %.3g; Newton polish reached %.3g", best, res)
    if diverged is not None and not converged:
        rep = SolveReport(GridFunction(grid, u + base), it, history[-1], history, False, polished=polished)
        raise DivergenceError(diverged, rep)
    if not converged:
        logger.warning("relaxation stopped after %d sweeps (residual %.3g)", it, history[-1])
    return SolveReport(GridFunction(grid, u + base), it, history[-1], history, converged, polished=polished)


def _newton_polish(problem: DirichletProblem, u: np.ndarray, cfg: JensenConfig):
    """Solve ``drive = 0`` by Newton-Krylov from ``u``; ``(u, residual)`` or None.

    The explicit sweeps can approach a discrete solution and then drift off it:
    central differences give the linearized drive a transport part with no
    damping across the gradient, which forward Euler amplifies at any step.
    The result is kept only if the discrete residual meets the tolerance.
    """
    grid = problem.grid
    interior = tuple(slice(1, c - 1) for c in grid.counts)
    shape = u[interior].shape

    def drive(x):
        w = u.copy()
        w[interior] = x.reshape(shape)
        val, g, g2 = _discrete_terms(problem, GridFunction(grid, w), cfg.epsilon)
        return _relaxation_drive(g, val, cfg.epsilon, g2).ravel()

    try:
        with np.errstate(all="ignore"):
            x = newton_krylov(drive, u[interior].ravel(), f_tol=1e-2 * cfg.tolerance, maxiter=POLISH_MAXITER)
    except (NoConvergence, ValueError, ArithmeticError, np.linalg.LinAlgError):
        return None
    w = u.copy()
    w[interior] = x.reshape(shape)
    val, g, g2 = _discrete_terms(problem, GridFunction(grid, w), cfg.epsilon)
    res = float(np.max(np.abs(equation_residual(g, val, cfg.epsilon, g2))))
    if not res <= cfg.tolerance:
        return None
    return w, res
