"""Grushin-type spaces: frames, Lie brackets, Hörmander degrees and distances.

A Grushin-type space on R^n carries the frame ``X_i = rho_i(x_1..x_{i-1}) d/dx_i``
with ``rho_1 = 1``.  Brackets are computed exactly on polynomial coefficients;
the Carnot-Carathéodory distance is approximated by shortest paths on a
weighted lattice graph.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .grid import Grid, GridFunction
from .polynomial import Polynomial

__all__ = [
    "GrushinSpace",
    "PolyVectorField",
    "HormanderProfile",
    "MetricGraphConfig",
    "lie_bracket",
    "iterated_bracket",
    "hormander_profile",
    "cc_distance_estimate",
    "cc_distance_numeric",
    "NONZERO_TOL",
]

NONZERO_TOL = 1e-12


class GrushinSpace:
    """Dimension plus the polynomials ``rho_1 .. rho_n`` defining the frame.

    ``rho[i]`` (0-based) may only involve the variables before it, and
    ``rho[0]`` must be the constant 1.
    """

    def __init__(self, rho: Sequence[Polynomial | str]):
        if not rho:
            raise ValueError("a space needs at least one coordinate")
        n = len(rho)
        polys = [Polynomial.parse(r, n) if isinstance(r, str) else r for r in rho]
        for i, p in enumerate(polys):
            if p.n != n:
                raise ValueError(f"rho{i + 1} is over {p.n} variables, expected {n}")
            bad = {k for k in p.variables() if k >= i}
            if bad:
                names = ", ".join(f"x{k + 1}" for k in sorted(bad))
                raise ValueError(f"rho{i + 1} may only depend on x1..x{i}, found {names}")
        if polys[0] != Polynomial.constant(1, n):
            raise ValueError("rho1 must be the constant polynomial 1")
        self.rho = tuple(polys)
        self.n = n

    @classmethod
    def euclidean(cls, n: int) -> "GrushinSpace":
        return cls([Polynomial.constant(1, n)] * n)

    @classmethod
    def grushin_plane(cls, power: int = 1) -> "GrushinSpace":
        return cls(["1", "x1" if power == 1 else f"x1^{power}"])

    def __eq__(self, other):
        return isinstance(other, GrushinSpace) and self.rho == other.rho

    def __hash__(self):
        return hash(self.rho)

    def __repr__(self):
        return f"GrushinSpace({[p.to_string() for p in self.rho]})"

    def rho_values(self, x) -> np.ndarray:
        """``rho_i`` at points ``x`` of shape ``(..., n)``; result ``(..., n)``."""
        x = np.asarray(x, dtype=float)
        return np.stack([np.broadcast_to(p(x), x.shape[:-1]) for p in self.rho], axis=-1)

    def frame(self, i: int) -> "PolyVectorField":
        """The generator ``X_{i+1}`` (0-based ``i``)."""
        coeffs = [Polynomial.zero(self.n)] * self.n
        coeffs[i] = self.rho[i]
        return PolyVectorField(coeffs)

    def apply(self, i: int, f: Polynomial) -> Polynomial:
        """Exact ``X_{i+1} f`` for a polynomial ``f``."""
        return self.rho[i] * f.diff(i)

    def max_rho(self, grid: Grid) -> float:
        return float(np.max(np.abs(self.rho_values(grid.coordinates()))))

    def to_list(self) -> list[str]:
        return [p.to_string() for p in self.rho]


@dataclass(frozen=True)
class PolyVectorField:
    """Vector field ``sum_i coeffs[i] d/dx_i`` with polynomial coefficients."""

    coeffs: tuple

    def __post_init__(self):
        coeffs = tuple(self.coeffs)
        if not coeffs:
            raise ValueError("empty vector field")
        n = coeffs[0].n
        if len(coeffs) != n or any(c.n != n for c in coeffs):
            raise ValueError("a field on R^n needs n components over n variables")
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zero(cls, n: int) -> "PolyVectorField":
        return cls([Polynomial.zero(n)] * n)

    @classmethod
    def parse(cls, components: Sequence[str]) -> "PolyVectorField":
        n = len(components)
        return cls([Polynomial.parse(c, n) for c in components])

    @property
    def n(self) -> int:
        return len(self.coeffs)

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.coeffs)

    def __add__(self, other):
        return PolyVectorField([a + b for a, b in zip(self.coeffs, other.coeffs)])

    def __sub__(self, other):
        return PolyVectorField([a - b for a, b in zip(self.coeffs, other.coeffs)])

    def __neg__(self):
        return PolyVectorField([-a for a in self.coeffs])

    def __mul__(self, c):
        return PolyVectorField([a * c for a in self.coeffs])

    __rmul__ = __mul__

    def __call__(self, x) -> np.ndarray:
        return np.array([c(x) for c in self.coeffs])

    def to_strings(self) -> list[str]:
        return [c.to_string() for c in self.coeffs]


def lie_bracket(A: PolyVectorField, B: PolyVectorField) -> PolyVectorField:
    """``[A, B]``: component b is ``sum_a A_a dB_b/dx_a - B_a dA_b/dx_a``."""
    if A.n != B.n:
        raise ValueError(f"dimension mismatch: {A.n} vs {B.n}")
    n = A.n
    out = []
    for b in range(n):
        acc = Polynomial.zero(n)
        for a in range(n):
            if not A.coeffs[a].is_zero():
                acc = acc + A.coeffs[a] * B.coeffs[b].diff(a)
            if not B.coeffs[a].is_zero():
                acc = acc - B.coeffs[a] * A.coeffs[b].diff(a)
        out.append(acc)
    return PolyVectorField(out)


def iterated_bracket(space: GrushinSpace, word: Sequence[int], target: int) -> PolyVectorField:
    """``[X_{j1}, [X_{j2}, ... [X_{jm}, X_target]...]]`` with 0-based indices."""
    field_ = space.frame(target)
    for j in reversed(list(word)):
        field_ = lie_bracket(space.frame(j), field_)
    return field_


@dataclass(frozen=True)
class HormanderProfile:
    """Bracket depths ``r[i]`` at ``point``; ``exceeded[i]`` marks depth > cap."""

    r: tuple
    point: tuple
    depth_cap: int
    exceeded: tuple = field(default=())
    words: tuple = field(default=())

    def __post_init__(self):
        if not self.exceeded:
            object.__setattr__(self, "exceeded", (False,) * len(self.r))

    @property
    def complete(self) -> bool:
        return not any(self.exceeded)

    def to_dict(self) -> dict:
        return {
            "r": [int(v) for v in self.r],
            "exceeded": [bool(v) for v in self.exceeded],
            "point": [float(v) for v in self.point],
            "depth_cap": self.depth_cap,
            "words": [[j + 1 for j in w] if w is not None else None for w in self.words],
        }


def hormander_profile(space: GrushinSpace, x0, depth_cap: int = 8) -> HormanderProfile:
    """Minimal bracket depth activating each coordinate direction at ``x0``.

    ``r[i]`` is the smallest ``m`` such that some ``[X_{j1},[...[X_{jm}, X_i]]]``
    has a nonzero ``d/dx_i`` coefficient at ``x0``.  Words are explored
    breadth-first; duplicate and identically-zero fields are pruned since
    they cannot yield new nonzero brackets.
    """
    if depth_cap < 1:
        raise ValueError("depth_cap must be at least 1")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (space.n,):
        raise ValueError(f"point must have length {space.n}")
    gens = [space.frame(j) for j in range(space.n)]
    r, exceeded, words = [], [], []
    for i in range(space.n):
        level = {gens[i]: ()}
        found = None
        for m in range(depth_cap + 1):
            for fld, word in level.items():
                if abs(fld.coeffs[i](x0)) > NONZERO_TOL:
                    found = (m, word)
                    break
            if found or m == depth_cap:
                break
            nxt = {}
            for fld, word in level.items():
                for j in range(space.n):
                    br = lie_bracket(gens[j], fld)
                    if not br.is_zero() and br not in nxt:
                        nxt[br] = (j,) + word
            level = nxt
            if not level:
                break
        if found:
            r.append(found[0])
            exceeded.append(False)
            words.append(found[1])
        else:
            r.append(depth_cap + 1)
            exceeded.append(True)
            words.append(None)
    return HormanderProfile(tuple(r), tuple(float(v) for v in x0), depth_cap, tuple(exceeded), tuple(words))


def cc_distance_estimate(profile: HormanderProfile, x) -> float:
    """Local distance gauge ``sum_i |x_i - x0_i|^(1/(1+r_i))`` around the profile point."""
    if not profile.complete:
        raise ValueError("profile has coordinates whose bracket depth exceeds the cap")
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(profile.point)
    if x.shape != x0.shape:
        raise ValueError("point dimension does not match the profile")
    expo = 1.0 / (1.0 + np.asarray(profile.r, dtype=float))
    return float(np.sum(np.abs(x - x0) ** expo))


@dataclass(frozen=True)
class MetricGraphConfig:
    """Lattice-graph discretization of horizontal curves."""

    stencil_radius: int = 2
    degenerate_threshold: float = 1e-12
    edge_rule: str = "midpoint"

    def __post_init__(self):
        if self.stencil_radius < 1:
            raise ValueError("stencil_radius must be at least 1")
        if self.degenerate_threshold < 0:
            raise ValueError("degenerate_threshold must be non-negative")
        if self.edge_rule not in ("midpoint", "envelope"):
            raise ValueError(f"unknown edge_rule {self.edge_rule!r}")

    def offsets(self, n: int) -> np.ndarray:
        """Lattice offsets within the stencil, one per +/- pair.

        The envelope rule keeps only primitive offsets: a multiple of a
        primitive step never costs less than the chain of primitive steps.
        """
        R = self.stencil_radius
        out = []
        for off in itertools.product(range(-R, R + 1), repeat=n):
            if not any(off):
                continue
            first = next(o for o in off if o)
            if first < 0:
                continue
            if self.edge_rule == "envelope" and math.gcd(*[abs(o) for o in off]) != 1:
                continue
            out.append(off)
        return np.array(out, dtype=int)


def _bernstein_matrix(degree: int) -> np.ndarray:
    """Map values at ``t = k/degree`` to Bernstein coefficients on [0, 1]."""
    if degree == 0:
        return np.ones((1, 1))
    t = np.linspace(0.0, 1.0, degree + 1)
    k = np.arange(degree + 1)
    binom = np.array([math.comb(degree, j) for j in k], dtype=float)
    basis = binom * t[:, None] ** k * (1 - t[:, None]) ** (degree - k)
    return np.linalg.inv(basis)


def _segment_rho_lower_bound(poly: Polynomial, start: np.ndarray, step: np.ndarray) -> np.ndarray:
    """Lower bound for ``|poly|`` on each segment ``start + t*step``, t in [0, 1].

    Uses the Bernstein coefficients of the restriction: if they share a
    strict sign the smallest magnitude bounds ``|poly|`` from below,
    otherwise the bound is 0.  Subdividing a segment never lowers the bound.
    """
    deg = max(poly.degree(), 0)
    t = np.linspace(0.0, 1.0, deg + 1)
    samples = np.stack([poly(start + tk * step) for tk in t], axis=-1)
    bern = samples @ _bernstein_matrix(deg).T
    same_sign = np.all(bern > 0, axis=-1) | np.all(bern < 0, axis=-1)
    return np.where(same_sign, np.min(np.abs(bern), axis=-1), 0.0)


def metric_graph(space: GrushinSpace, grid: Grid, cfg: MetricGraphConfig):
    """Sparse symmetric adjacency of the lattice graph with horizontal edge lengths."""
    if space.n != grid.ndim:
        raise ValueError("space and grid dimensions differ")
    counts = np.array(grid.counts)
    h = grid.spacing
    lower = np.array(grid.lower)
    ids = np.arange(grid.size).reshape(grid.counts)
    rows, cols, vals = [], [], []
    for off in cfg.offsets(space.n):
        src = tuple(slice(max(0, -o), c - max(0, o)) for o, c in zip(off, counts))
        dst = tuple(slice(max(0, o), c - max(0, -o)) for o, c in zip(off, counts))
        a = ids[src].ravel()
        b = ids[dst].ravel()
        if not a.size:
            continue
        ia = np.stack(np.unravel_index(a, grid.counts), axis=-1)
        dx = off * h
        need = off != 0
        if cfg.edge_rule == "midpoint":
            rho = np.abs(space.rho_values(lower + (ia + 0.5 * off) * h))
        else:
            start = lower + ia * h
            rho = np.stack([_segment_rho_lower_bound(p, start, dx) if need[i] else np.ones(len(a))
                            for i, p in enumerate(space.rho)], axis=-1)
        rho_need = rho[:, need]
        ok = np.all(rho_need > cfg.degenerate_threshold, axis=1)
        with np.errstate(divide="ignore"):
            cost = np.sqrt(np.sum((dx[need] / rho_need) ** 2, axis=1))
        rows.append(a[ok])
        cols.append(b[ok])
        vals.append(cost[ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    mat = coo_matrix((vals, (rows, cols)), shape=(grid.size, grid.size)).tocsr()
    return mat


def cc_distance_numeric(space: GrushinSpace, grid: Grid, source, cfg: MetricGraphConfig | None = None,
                        graph=None) -> GridFunction:
    """Shortest-path distance from ``source`` (a grid multi-index) to every node.

    Edges join nodes whose offset lies in the stencil; an edge costs the
    length of the straight segment in the frame metric with ``rho`` frozen at
    the segment midpoint (``edge_rule="midpoint"``) or replaced by a lower
    bound of ``|rho|`` over the segment (``edge_rule="envelope"``, which makes
    distances non-increasing under grid refinement).  An edge is dropped if
    any ``|rho_i|`` it needs is at or below ``cfg.degenerate_threshold``.
    Unreachable nodes get ``inf``.
    """
    cfg = cfg or MetricGraphConfig()
    source = tuple(int(s) for s in source)
    grid._check_index(source)
    if graph is None:
        graph = metric_graph(space, grid, cfg)
    flat = int(np.ravel_multi_index(source, grid.counts))
    dist = dijkstra(graph, directed=False, indices=flat)
    return GridFunction(grid, dist)
