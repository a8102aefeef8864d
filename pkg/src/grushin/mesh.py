"""Freudenthal triangulation of a grid and the discrete ``kp(x)``-energy on it.

Each grid cell is split into ``n!`` simplices, one per ordering of the axes.
On a simplex the horizontal gradient of the piecewise-linear interpolant is
constant: component ``i`` is ``rho_i`` at the barycentre times a forward
difference along an edge of the simplex.  Unlike nodal central differences,
this gradient has no checkerboard null space, so the energy pins down every
interior value.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import spsolve

from ._kernels import minimize_nodes
from .geometry import GrushinSpace
from .grid import Grid
from .operators import GRAD_FLOOR, ExponentField, energy_from_terms, log_energy_terms

__all__ = ["SimplexMesh"]


@dataclass
class _ColorBlock:
    nodes: np.ndarray      # (m,) flat node ids
    simplices: np.ndarray  # (m, d) incident simplices, padded with -1
    positions: np.ndarray  # (m, d) local vertex index of the node in each simplex


class SimplexMesh:
    """Simplicial mesh of a grid with the frame coefficients baked in."""

    def __init__(self, space: GrushinSpace, grid: Grid):
        n = grid.ndim
        if space.n != n:
            raise ValueError("space and grid dimensions differ")
        self.space = space
        self.grid = grid
        h = grid.spacing
        counts = np.array(grid.counts)
        cells = np.stack(np.meshgrid(*[np.arange(c - 1) for c in counts], indexing="ij"),
                         axis=-1).reshape(-1, n)
        verts, coefs = [], []
        for perm in itertools.permutations(range(n)):
            corners = [cells.copy()]
            for ax in perm:
                nxt = corners[-1].copy()
                nxt[:, ax] += 1
                corners.append(nxt)
            corners = np.stack(corners, axis=1)                       # (C, n+1, n)
            ids = np.ravel_multi_index(tuple(corners[..., a] for a in range(n)), grid.counts)
            bary = np.array(grid.lower) + corners.mean(axis=1) * h
            rho = space.rho_values(bary)                               # (C, n)
            coef = np.zeros((len(cells), n, n + 1))
            for k, ax in enumerate(perm):
                coef[:, ax, k + 1] = rho[:, ax] / h[ax]
                coef[:, ax, k] = -rho[:, ax] / h[ax]
            verts.append(ids)
            coefs.append(coef)
        self.vertices = np.concatenate(verts)                          # (S, n+1)
        self.coef = np.concatenate(coefs)                              # (S, n, n+1)
        corner_pos = self.vertices
        self.barycenters = np.array(grid.lower) + np.stack(
            np.unravel_index(corner_pos, grid.counts), axis=-1).mean(axis=1) * h
        self.volume = float(np.prod(h)) / math.factorial(n)
        self._blocks = None
        self._stiffness = None

    @staticmethod
    @functools.lru_cache(maxsize=16)
    def build(space: GrushinSpace, grid: Grid) -> "SimplexMesh":
        return SimplexMesh(space, grid)

    @property
    def n_simplices(self) -> int:
        return len(self.vertices)

    def gradients(self, u_flat: np.ndarray) -> np.ndarray:
        """Horizontal gradient on every simplex, shape ``(S, n)``."""
        return np.einsum("sik,sk->si", self.coef, u_flat[self.vertices])

    def exponents(self, pfield: ExponentField, k: float) -> np.ndarray:
        return k * pfield(self.barycenters)

    def log_energy_sum(self, u_flat: np.ndarray, kp: np.ndarray) -> np.ndarray:
        norm = np.linalg.norm(self.gradients(u_flat), axis=-1)
        norm = np.where(norm > GRAD_FLOOR, norm, 0.0)
        return log_energy_terms(norm, self.volume, kp)

    def energy(self, u, pfield: ExponentField, k: float) -> float:
        u_flat = np.asarray(u, dtype=float).ravel()
        return energy_from_terms(self.log_energy_sum(u_flat, self.exponents(pfield, k)), k)

    # coordinate descent support

    def color_blocks(self) -> list[_ColorBlock]:
        """Interior nodes split so that no two nodes of a block share a simplex.

        Simplex edges join nodes whose index offset is a 0/1 vector, so the
        colour ``sum(index) mod (n+1)`` separates every pair of neighbours.
        """
        if self._blocks is not None:
            return self._blocks
        grid = self.grid
        n = grid.ndim
        S = self.n_simplices
        node_of = self.vertices.ravel()
        simp_of = np.repeat(np.arange(S), n + 1)
        pos_of = np.tile(np.arange(n + 1), S)
        order = np.argsort(node_of, kind="stable")
        node_sorted = node_of[order]
        starts = np.searchsorted(node_sorted, np.arange(grid.size))
        ends = np.searchsorted(node_sorted, np.arange(grid.size), side="right")
        interior = np.flatnonzero(grid.interior_mask().ravel())
        degree = int(np.max(ends[interior] - starts[interior]))
        idx = np.stack(np.unravel_index(interior, grid.counts), axis=-1)
        colors = idx.sum(axis=1) % (n + 1)
        blocks = []
        for c in range(n + 1):
            nodes = interior[colors == c]
            simp = np.full((len(nodes), degree), -1, dtype=int)
            pos = np.zeros((len(nodes), degree), dtype=int)
            for r, v in enumerate(nodes):
                sel = order[starts[v]:ends[v]]
                simp[r, :len(sel)] = simp_of[sel]
                pos[r, :len(sel)] = pos_of[sel]
            blocks.append(_ColorBlock(nodes, simp, pos))
        self._blocks = blocks
        return blocks

    def stiffness(self) -> sps.csr_matrix:
        """Matrix of the quadratic energy ``sum vol |grad|^2 / 2``."""
        if self._stiffness is None:
            S, n, m = self.coef.shape
            local = self.volume * np.einsum("sia,sib->sab", self.coef, self.coef)
            rows = np.repeat(self.vertices, m, axis=1).ravel()
            cols = np.tile(self.vertices, (1, m)).ravel()
            self._stiffness = sps.coo_matrix((local.ravel(), (rows, cols)),
                                             shape=(self.grid.size,) * 2).tocsr()
        return self._stiffness

    def quadratic_extension(self, boundary_flat: np.ndarray, boundary_mask: np.ndarray) -> np.ndarray:
        """Minimizer of the quadratic energy with the given boundary values."""
        K = self.stiffness()
        b = boundary_mask.ravel()
        i = ~b
        u = np.zeros(self.grid.size)
        u[b] = boundary_flat
        rhs = -K[i][:, b] @ boundary_flat
        u[i] = spsolve(K[i][:, i].tocsc(), rhs)
        return u

    def minimize_block(self, u_flat: np.ndarray, block: _ColorBlock, kp: np.ndarray,
                       max_newton: int = 100, omega: float = 1.0) -> np.ndarray:
        """Exact minimization of the energy over each node of ``block`` separately.

        Returns the new values for ``block.nodes``.  The energy restricted to
        one node value is convex, and its minimizer lies between the smallest
        and largest neighbouring values, which brackets a safeguarded Newton
        iteration.  With ``omega > 1`` the step from the old value to the
        minimizer is stretched by ``omega`` whenever that still lowers the
        local energy (nonlinear over-relaxation).
        """
        return minimize_nodes(u_flat, block.nodes, block.simplices, block.positions, self.coef,
                              self.vertices, kp, float(omega), int(max_newton))
