"""Executable checks of the structural properties of the Dirichlet problem.

* :func:`penalization_iterated` runs the doubled-variable maximization
  ``max u(x) - v(y) - sum_i alpha_i (x_i - y_i)^2 / 2`` over the product grid
  for a schedule of penalty weights, pinning coordinates one after another.
* :func:`check_comparison` tests ``u <= v`` against the boundary.
* :func:`check_harnack` measures ``sup u / (inf u + r)`` on a metric ball.
* :func:`lipschitz_check` estimates the Lipschitz constant of data against
  the local distance gauge.
"""
from __future__ import annotations

import csv
import functools
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import GrushinSpace, MetricGraphConfig, cc_distance_estimate, cc_distance_numeric, hormander_profile
from .grid import Grid, GridFunction, format_float
from .solver import DirichletProblem

__all__ = [
    "PenalizationRun",
    "ComparisonReport",
    "HarnackReport",
    "MAX_PAIRS",
    "iterated_schedule",
    "penalization_iterated",
    "jet_norm_gap",
    "lemma_ratios",
    "axis_lipschitz_constant",
    "penalization_trace_csv",
    "check_comparison",
    "check_harnack",
    "lipschitz_check",
]

MAX_PAIRS = 10**7
_CHUNK = 2**22


@dataclass(frozen=True)
class PenalizationRun:
    alpha: tuple
    maximizer_x: tuple
    maximizer_y: tuple
    M_value: float
    penalty_value: float
    jet_x: tuple
    jet_y: tuple
    pinned: tuple = ()
    lemma_ratio: tuple = ()

    def to_dict(self) -> dict:
        return {
            "alpha": [float(a) for a in self.alpha],
            "maximizer_x": [float(v) for v in self.maximizer_x],
            "maximizer_y": [float(v) for v in self.maximizer_y],
            "M_value": float(self.M_value),
            "penalty_value": float(self.penalty_value),
            "jet_x": [float(v) for v in self.jet_x],
            "jet_y": [float(v) for v in self.jet_y],
            "jet_norm_gap": jet_norm_gap(self),
            "pinned": [int(k) for k in self.pinned],
            "lemma_ratio": [float(v) for v in self.lemma_ratio],
        }


@dataclass(frozen=True)
class ComparisonReport:
    interior_violation: float
    passed: bool
    tolerance: float
    interior_max: float = 0.0
    boundary_max: float = 0.0

    def to_dict(self) -> dict:
        return {
            "interior_violation": float(self.interior_violation),
            "passed": bool(self.passed),
            "tolerance": float(self.tolerance),
            "interior_max": float(self.interior_max),
            "boundary_max": float(self.boundary_max),
        }


@dataclass(frozen=True)
class HarnackReport:
    center: tuple
    r: float
    sup_inner: float
    inf_inner: float
    C_empirical: float
    ball_nodes: int = 0

    def to_dict(self) -> dict:
        return {
            "center": [float(c) for c in self.center],
            "r": float(self.r),
            "sup_inner": float(self.sup_inner),
            "inf_inner": float(self.inf_inner),
            "C_empirical": float(self.C_empirical),
            "ball_nodes": int(self.ball_nodes),
        }


# penalization


def iterated_schedule(n: int, levels: Sequence[float] = (10.0, 1e2, 1e3, 1e4)) -> list[tuple]:
    """Drive ``alpha_1`` through ``levels``, then ``alpha_2``, and so on.

    Coordinates not yet reached sit at ``levels[0]``; finished ones stay at
    ``levels[-1]``.
    """
    levels = [float(v) for v in levels]
    if not levels or any(v <= 0 for v in levels) or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be positive and strictly increasing")
    out: list[tuple] = []
    for j in range(n):
        for level in levels:
            alpha = tuple(levels[-1] if k < j else level if k == j else levels[0] for k in range(n))
            if not out or alpha != out[-1]:
                out.append(alpha)
    return out


def _check_schedule(schedule, n: int) -> list[np.ndarray]:
    alphas = [np.asarray(a, dtype=float).reshape(-1) for a in schedule]
    if not alphas:
        raise ValueError("alpha schedule is empty")
    for a in alphas:
        if a.size != n:
            raise ValueError(f"alpha vector {a.tolist()} has wrong length for n={n}")
        if np.any(a <= 0):
            raise ValueError("penalty weights must be positive")
    for a, b in zip(alphas, alphas[1:]):
        if np.any(b < a):
            raise ValueError("alpha schedule must be non-decreasing componentwise")
    return alphas


def _leading_coordinate(prev: np.ndarray | None, alpha: np.ndarray) -> int:
    """Largest coordinate whose weight moved; the stage the schedule is in."""
    if prev is None:
        return 0
    moved = np.flatnonzero(alpha > prev)
    return int(moved.max()) if moved.size else -1


@functools.lru_cache(maxsize=4096)
def _profile_at(space: GrushinSpace, point: tuple):
    return hormander_profile(space, np.array(point))


def lemma_ratios(space: GrushinSpace, alpha, x, y) -> tuple:
    """``alpha_i (x_i - y_i)^2 / d(x <>_i y, x)`` per coordinate, 0 where ``x_i = y_i``.

    ``x <>_i y`` is ``x`` with its ``i``-th coordinate replaced by ``y_i``; the
    distance is the local gauge with the bracket profile at ``x``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    profile = _profile_at(space, tuple(float(v) for v in x))
    out = []
    for i in range(x.size):
        if x[i] == y[i]:
            out.append(0.0)
            continue
        z = x.copy()
        z[i] = y[i]
        out.append(float(alpha[i] * (x[i] - y[i]) ** 2 / cc_distance_estimate(profile, z)))
    return tuple(out)


def _maximize_pairs(uf: np.ndarray, vf: np.ndarray, coords: np.ndarray, idx: np.ndarray,
                    alpha: np.ndarray, pinned: list[int]):
    """Exhaustive search; ties go to the first pair in (x, y) C order."""
    N = uf.size
    rows = max(1, _CHUNK // N)
    best_val = -np.inf
    best = (0, 0)
    for start in range(0, N, rows):
        stop = min(N, start + rows)
        diff = coords[start:stop, None, :] - coords[None, :, :]
        vals = uf[start:stop, None] - vf[None, :] - 0.5 * np.sum(alpha * diff**2, axis=-1)
        for k in pinned:
            vals = np.where(idx[start:stop, None, k] == idx[None, :, k], vals, -np.inf)
        flat = int(np.argmax(vals))
        val = vals.reshape(-1)[flat]
        if val > best_val:
            best_val = float(val)
            best = (start + flat // N, flat % N)
    return best_val, best


def penalization_iterated(u: GridFunction, v: GridFunction, alpha_schedule, space: GrushinSpace | None = None
                          ) -> list[PenalizationRun]:
    """Doubled-variable maximization for each penalty vector of the schedule.

    When the schedule starts raising a later coordinate, every earlier
    coordinate whose maximizers satisfy ``|x_k - y_k| < h_k / 2`` is pinned:
    from then on only pairs with ``x_k = y_k`` compete.  Jets use ``space``
    (Euclidean if omitted).
    """
    if u.grid != v.grid:
        raise ValueError("u and v live on different grids")
    grid = u.grid
    n = grid.ndim
    space = space or GrushinSpace.euclidean(n)
    if space.n != n:
        raise ValueError("space and grid dimensions differ")
    if grid.size**2 > MAX_PAIRS:
        raise ValueError(f"product grid has {grid.size**2} pairs, above the cap of {MAX_PAIRS}")
    alphas = _check_schedule(alpha_schedule, n)
    coords = grid.coordinates().reshape(-1, n)
    idx = np.stack(np.unravel_index(np.arange(grid.size), grid.counts), axis=-1)
    uf = u.values.ravel()
    vf = v.values.ravel()
    h = grid.spacing

    pinned: list[int] = []
    runs: list[PenalizationRun] = []
    prev = None
    stage = 0
    for alpha in alphas:
        lead = _leading_coordinate(prev, alpha)
        if lead > stage and runs:
            last = runs[-1]
            for k in range(lead):
                if k not in pinned and abs(last.maximizer_x[k] - last.maximizer_y[k]) < h[k] / 2:
                    pinned.append(k)
            stage = lead
        val, (ix, iy) = _maximize_pairs(uf, vf, coords, idx, alpha, pinned)
        x, y = coords[ix], coords[iy]
        d = x - y
        penalty = float(0.5 * np.sum(alpha * d**2))
        jet_x = space.rho_values(x) * alpha * d
        jet_y = space.rho_values(y) * alpha * d
        runs.append(PenalizationRun(
            tuple(float(a) for a in alpha), tuple(float(c) for c in x), tuple(float(c) for c in y),
            val, penalty, tuple(float(c) for c in jet_x), tuple(float(c) for c in jet_y),
            tuple(sorted(pinned)), lemma_ratios(space, alpha, x, y)))
        prev = alpha
    return runs


def jet_norm_gap(run: PenalizationRun) -> float:
    """``|Upsilon_y|^2 - |Upsilon_x|^2``."""
    return float(np.sum(np.square(run.jet_y)) - np.sum(np.square(run.jet_x)))


def axis_lipschitz_constant(space: GrushinSpace, u: GridFunction) -> float:
    """``max |u(x) - u(z)| / d(z, x)`` over node pairs that differ in one coordinate.

    ``d`` is the local gauge with the profile at ``x``.  Twice this number
    bounds every lemma ratio of a penalization run with ``u`` as first argument.
    """
    grid = u.grid
    coords = grid.coordinates()
    best = 0.0
    for index in grid.indices():
        x = coords[index]
        profile = _profile_at(space, tuple(float(c) for c in x))
        expo = 1.0 / (1.0 + np.asarray(profile.r, dtype=float))
        for i in range(grid.ndim):
            line = list(index)
            line[i] = slice(None)
            other = coords[tuple(line)][:, i]
            du = np.abs(u.values[tuple(line)] - u.values[index])
            dist = np.abs(other - x[i]) ** expo[i]
            keep = dist > 0
            if keep.any():
                best = max(best, float(np.max(du[keep] / dist[keep])))
    return best


def penalization_trace_csv(runs: Sequence[PenalizationRun], path=None) -> str:
    """One row per stage: weights, maximizers, M, penalty, jet gap, lemma ratios."""
    if not runs:
        raise ValueError("no runs to export")
    n = len(runs[0].alpha)
    header = ([f"alpha{i + 1}" for i in range(n)] + [f"x{i + 1}" for i in range(n)]
              + [f"y{i + 1}" for i in range(n)] + ["M", "penalty", "jet_gap"]
              + [f"lemma_ratio{i + 1}" for i in range(n)])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for run in runs:
        row = list(run.alpha) + list(run.maximizer_x) + list(run.maximizer_y)
        row += [run.M_value, run.penalty_value, jet_norm_gap(run)] + list(run.lemma_ratio)
        writer.writerow([format_float(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


# comparison and Harnack


def check_comparison(u: GridFunction, v: GridFunction, tol: float) -> ComparisonReport:
    """Pass iff ``max_interior (u - v) <= max_boundary (u - v)_+ + tol``."""
    if u.grid != v.grid:
        raise ValueError("u and v live on different grids")
    d = u.values - v.values
    mask = u.grid.boundary_mask()
    interior_max = float(np.max(d[~mask]))
    boundary_max = max(float(np.max(d[mask])), 0.0)
    violation = interior_max - boundary_max
    return ComparisonReport(violation, bool(violation <= tol), float(tol), interior_max, boundary_max)


def check_harnack(space: GrushinSpace, u: GridFunction, center, r: float,
                  cfg: MetricGraphConfig | None = None) -> HarnackReport:
    """``sup / (inf + r)`` of ``u`` over the grid metric ball of radius ``r``.

    ``center`` is a point (snapped to the nearest node) and the ball of
    radius ``2r`` must stay off the boundary.
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    grid = u.grid
    if not np.all(u.values > 0):
        raise ValueError("u must be strictly positive")
    node = grid.nearest_index(center)
    dist = cc_distance_numeric(space, grid, node, cfg).values
    slack = 1e-12 * max(1.0, r)
    outer = dist <= 2 * r + slack
    if np.any(outer & grid.boundary_mask()):
        raise ValueError(f"the ball of radius {2 * r:g} around {grid.point(node).tolist()} reaches the boundary")
    inner = dist <= r + slack
    sup_inner = float(np.max(u.values[inner]))
    inf_inner = float(np.min(u.values[inner]))
    return HarnackReport(tuple(float(c) for c in grid.point(node)), float(r), sup_inner, inf_inner,
                         sup_inner / (inf_inner + r), int(inner.sum()))


def _data_points(f, space: GrushinSpace):
    if isinstance(f, GridFunction):
        return f.grid.coordinates().reshape(-1, f.grid.ndim), f.values.ravel()
    if isinstance(f, DirichletProblem):
        return f.grid.coordinates()[f.grid.boundary_mask()], f.boundary
    if isinstance(f, tuple) and len(f) == 2:
        pts = np.asarray(f[0], dtype=float).reshape(-1, space.n)
        return pts, np.asarray(f[1], dtype=float).ravel()
    raise TypeError("f must be a GridFunction, a DirichletProblem or a (points, values) pair")


def lipschitz_check(space: GrushinSpace, f, samples: int = 200, seed: int = 0) -> float:
    """Largest ``|f(x) - f(y)| / d(y, x)`` over random sample pairs.

    ``f`` is a grid function, a Dirichlet problem (its boundary data) or a
    ``(points, values)`` pair.  ``d`` is the local gauge with the bracket
    profile at ``x``.  Coincident pairs are skipped.  Advisory only.
    """
    if samples < 2:
        raise ValueError("samples must be at least 2")
    pts, vals = _data_points(f, space)
    if len(pts) < 2:
        raise ValueError("need at least two data points")
    rng = np.random.default_rng(seed)
    a = rng.integers(0, len(pts), samples)
    b = rng.integers(0, len(pts), samples)
    best = 0.0
    for i, j in zip(a, b):
        x, y = pts[i], pts[j]
        if np.array_equal(x, y):
            continue
        d = cc_distance_estimate(_profile_at(space, tuple(float(c) for c in x)), y)
        if d > 0:
            best = max(best, abs(float(vals[i]) - float(vals[j])) / d)
    return best
