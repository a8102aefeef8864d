"""Horizontal calculus on grid functions.

All derivatives are finite differences along the frame ``X_i = rho_i d/dx_i``:
``X_i u`` is ``rho_i`` at the node times a central difference, and second
derivatives compose two such operators with the inner ``rho`` read at the
shifted stencil points, so the discrete ``X_i X_j`` sees ``d rho_j / dx_i``.

Two Hessian stencils are offered:

``"nested"``
    Both operators are central differences with step ``h``; pure terms
    ``X_i X_i u`` then reach ``x +- 2h``, so nodes need a margin of 2.
``"compact"``
    Pure terms use the three-point second difference (``rho_i`` does not
    depend on ``x_i``, so this is the same operator with half steps);
    mixed terms are as in ``"nested"``.  Needs a margin of 1.

Gradient-norm powers and logarithms are taken as 0 below ``GRAD_FLOOR``.
"""
from __future__ import annotations

import functools

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .geometry import GrushinSpace
from .grid import Grid, GridFunction
from .polynomial import Polynomial

__all__ = [
    "ExponentField",
    "HorizontalJet",
    "GRAD_FLOOR",
    "horizontal_gradient",
    "sym_hessian",
    "horizontal_jet",
    "infinity_laplacian",
    "log_term",
    "infinity_x_laplacian",
    "p_x_laplacian",
    "k_energy",
    "jets_on_region",
    "infinity_x_laplacian_field",
]

GRAD_FLOOR = 1e-12
_LOG_MAX = np.log(np.finfo(float).max)


@dataclass(frozen=True)
class ExponentField:
    """Variable exponent ``p(x) = max(base + poly(x), floor)`` with ``floor > 1``."""

    base: float
    poly: Polynomial
    floor: float = 1.01

    def __post_init__(self):
        if not self.base > 1:
            raise ValueError("base must exceed 1")
        if not self.floor > 1:
            raise ValueError("floor must exceed 1")

    @classmethod
    def constant(cls, p: float, n: int) -> "ExponentField":
        return cls(float(p), Polynomial.zero(n), min(1.01, float(p)))

    @classmethod
    def from_dict(cls, data: dict, n: int) -> "ExponentField":
        poly = data.get("poly", "0")
        poly = Polynomial.parse(poly, n) if isinstance(poly, str) else poly
        return cls(float(data["base"]), poly, float(data.get("floor", 1.01)))

    def to_dict(self) -> dict:
        return {"base": self.base, "poly": self.poly.to_string(), "floor": self.floor}

    @property
    def is_constant(self) -> bool:
        return self.poly.is_constant()

    def check_box(self, lower, upper, samples: int = 9) -> None:
        """Sample the box and confirm ``p > 1``; the floor guarantees it, this guards NaNs."""
        grid = Grid(lower, upper, (samples,) * len(lower))
        vals = self(grid.coordinates())
        if not np.all(np.isfinite(vals)) or np.any(vals <= 1):
            raise ValueError("exponent field is not > 1 on the box")

    def __call__(self, x) -> np.ndarray:
        return np.maximum(self.base + self.poly(x), self.floor)

    def gradient(self, x) -> np.ndarray:
        """Euclidean gradient of ``p``, zero where the floor is active."""
        x = np.asarray(x, dtype=float)
        active = (self.base + self.poly(x)) > self.floor
        grads = [np.where(active, self.poly.diff(i)(x), 0.0) for i in range(self.poly.n)]
        return np.stack(grads, axis=-1)

    def horizontal_log_gradient(self, space: GrushinSpace, x) -> np.ndarray:
        """``nabla_0 ln p = (rho_i dp/dx_i / p)_i``."""
        x = np.asarray(x, dtype=float)
        return space.rho_values(x) * self.gradient(x) / self(x)[..., None]


@dataclass(frozen=True)
class HorizontalJet:
    gradient: np.ndarray
    hessian: np.ndarray

    def __post_init__(self):
        if not np.allclose(self.hessian, self.hessian.T, rtol=0, atol=1e-12):
            raise ValueError("hessian is not symmetric")


def _view(values: np.ndarray, margin: int, offset) -> np.ndarray:
    """Slice of ``values`` over the nodes at least ``margin`` from every face, shifted."""
    sl = tuple(slice(margin + o, c - margin + o) for o, c in zip(offset, values.shape))
    return values[sl]


def _unit(n: int, i: int, step: int = 1) -> np.ndarray:
    e = np.zeros(n, dtype=int)
    e[i] = step
    return e


def jets_on_region(space: GrushinSpace, u: GridFunction, margin: int = 1, stencil: str = "compact"):
    """Horizontal gradient and symmetrized Hessian at every node with the given margin.

    Returns ``(coords, grad, hess)`` with shapes ``(*region, n)``,
    ``(*region, n)`` and ``(*region, n, n)``.
    """
    if stencil not in ("compact", "nested"):
        raise ValueError(f"unknown stencil {stencil!r}")
    need = 2 if stencil == "nested" else 1
    if margin < need:
        raise ValueError(f"the {stencil} stencil needs a margin of at least {need}")
    grid = u.grid
    n = grid.ndim
    if space.n != n:
        raise ValueError("space and grid dimensions differ")
    h = grid.spacing
    vals = u.values
    coords_full, rho_full = _frame_on_grid(space, grid)
    coords = coords_full[tuple(slice(margin, c - margin) for c in grid.counts)]

    def rho_at(i, offset):
        return _view(rho_full[..., i], margin, offset)

    def u_at(offset):
        return _view(vals, margin, offset)

    zero = np.zeros(n, dtype=int)
    grad = np.empty(coords.shape[:-1] + (n,))
    for i in range(n):
        e = _unit(n, i)
        grad[..., i] = rho_at(i, zero) * (u_at(e) - u_at(-e)) / (2 * h[i])

    # X_i X_j u, unsymmetrized
    xx = np.empty(coords.shape[:-1] + (n, n))
    for i in range(n):
        ei = _unit(n, i)
        for j in range(n):
            ej = _unit(n, j)
            if i == j and stencil == "compact":
                xx[..., i, i] = rho_at(i, zero) ** 2 * (u_at(ei) - 2 * u_at(zero) + u_at(-ei)) / h[i] ** 2
                continue

            def xj_at(shift):
                return rho_at(j, shift) * (u_at(shift + ej) - u_at(shift - ej)) / (2 * h[j])

            xx[..., i, j] = rho_at(i, zero) * (xj_at(ei) - xj_at(-ei)) / (2 * h[i])
    hess = 0.5 * (xx + np.swapaxes(xx, -1, -2))
    return coords, grad, hess


@functools.lru_cache(maxsize=32)
def _frame_on_grid(space: GrushinSpace, grid: Grid):
    coords = grid.coordinates()
    rho = space.rho_values(coords)
    coords.flags.writeable = False
    rho.flags.writeable = False
    return coords, rho


@functools.lru_cache(maxsize=32)
def _log_gradient_on_region(space: GrushinSpace, pfield: ExponentField, grid: Grid, margin: int):
    coords = _frame_on_grid(space, grid)[0][tuple(slice(margin, c - margin) for c in grid.counts)]
    out = pfield.horizontal_log_gradient(space, coords)
    out.flags.writeable = False
    return out


def _node_window(u: GridFunction, node, radius: int) -> GridFunction:
    node = tuple(int(i) for i in node)
    margin = u.grid.margin(node)
    if margin < radius:
        raise ValueError(f"node {node} is {margin} node(s) from the boundary, need {radius}")
    sl = tuple(slice(i - radius, i + radius + 1) for i in node)
    return GridFunction(u.grid.window(node, radius), u.values[sl])


def _margin_for(stencil: str) -> int:
    return 2 if stencil == "nested" else 1


def horizontal_jet(space: GrushinSpace, u: GridFunction, node, stencil: str = "nested") -> HorizontalJet:
    r = _margin_for(stencil)
    win = _node_window(u, node, r)
    _, g, H = jets_on_region(space, win, margin=r, stencil=stencil)
    idx = (0,) * u.grid.ndim
    return HorizontalJet(g[idx], H[idx])


def horizontal_gradient(space: GrushinSpace, u: GridFunction, node) -> np.ndarray:
    """``(X_1 u, ..., X_n u)`` at an interior node by central differences."""
    win = _node_window(u, node, 1)
    n = u.grid.ndim
    h = u.grid.spacing
    x = u.grid.point(node)
    rho = space.rho_values(x)
    c = (1,) * n
    out = np.empty(n)
    for i in range(n):
        plus = list(c)
        minus = list(c)
        plus[i] += 1
        minus[i] -= 1
        out[i] = rho[i] * (win.values[tuple(plus)] - win.values[tuple(minus)]) / (2 * h[i])
    return out


def sym_hessian(space: GrushinSpace, u: GridFunction, node, stencil: str = "nested") -> np.ndarray:
    """``(X_i X_j u + X_j X_i u) / 2`` at ``node``; the nested stencil needs margin 2."""
    return horizontal_jet(space, u, node, stencil).hessian


def infinity_laplacian(space: GrushinSpace, u: GridFunction, node, stencil: str = "nested") -> float:
    """``<H g, g>`` with ``g`` the horizontal gradient and ``H`` the symmetrized Hessian."""
    jet = horizontal_jet(space, u, node, stencil)
    g = jet.gradient
    return float(g @ jet.hessian @ g)


def _log_term_values(grad: np.ndarray, log_grad_p: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(grad, axis=-1)
    safe = np.where(norm > GRAD_FLOOR, norm, 1.0)
    val = norm**2 * np.sum(grad * log_grad_p, axis=-1) * np.log(safe)
    return np.where(norm > GRAD_FLOOR, val, 0.0)


def log_term(space: GrushinSpace, u: GridFunction, pfield: ExponentField, node) -> float:
    """``|g|^2 <g, nabla_0 ln p> ln|g|``, continuously extended by 0 at ``g = 0``."""
    g = horizontal_gradient(space, u, node)
    x = u.grid.point(node)
    return float(_log_term_values(g, pfield.horizontal_log_gradient(space, x)))


def infinity_x_laplacian(space: GrushinSpace, u: GridFunction, pfield: ExponentField, node,
                         stencil: str = "nested") -> float:
    return infinity_laplacian(space, u, node, stencil) + log_term(space, u, pfield, node)


def infinity_x_laplacian_field(space: GrushinSpace, u: GridFunction, pfield: ExponentField,
                               margin: int = 1, stencil: str = "compact"):
    """Vectorized ``Delta_inf(x) u`` over a region; returns ``(value, grad, coords)``."""
    coords, g, H = jets_on_region(space, u, margin, stencil)
    inf_lap = np.einsum("...i,...ij,...j->...", g, H, g)
    lt = _log_term_values(g, _log_gradient_on_region(space, pfield, u.grid, margin))
    return inf_lap + lt, g, coords


def _signed_log_sum(logs, signs) -> float:
    """``sum_j signs[j] * exp(logs[j])`` evaluated without overflow."""
    logs = np.asarray(logs, dtype=float)
    signs = np.asarray(signs, dtype=float)
    keep = signs != 0
    if not keep.any():
        return 0.0
    logs, signs = logs[keep], signs[keep]
    m = logs.max()
    s = float(np.sum(signs * np.exp(logs - m)))
    if s == 0.0:
        return 0.0
    total = m + np.log(abs(s))
    if total > _LOG_MAX:
        raise OverflowError(f"p(x)-Laplacian magnitude exp({total:.1f}) exceeds float range")
    return float(np.sign(s) * np.exp(total))


def p_x_laplacian(space: GrushinSpace, u: GridFunction, pfield: ExponentField, k: float, node,
                  stencil: str = "nested") -> float:
    """Expanded ``kp(x)``-Laplacian at a node, accumulated in log-magnitude form.

    ``|g|^(kp-2) tr H + (kp-2)|g|^(kp-4) <Hg, g> + |g|^(kp-2) <g, nabla_0 kp> ln|g|``.
    Powers of a gradient norm at or below ``GRAD_FLOOR`` are 0 unless the
    exponent is exactly 0.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    jet = horizontal_jet(space, u, node, stencil)
    g, H = jet.gradient, jet.hessian
    x = u.grid.point(node)
    kp = k * float(pfield(x))
    norm = float(np.linalg.norm(g))
    small = norm <= GRAD_FLOOR
    log_norm = np.log(norm) if not small else -np.inf
    grad_kp = k * space.rho_values(x) * pfield.gradient(x)

    logs, signs = [], []

    def add(coeff, expo):
        if coeff == 0:
            return
        if expo == 0:
            lp = 0.0
        elif small:
            return
        else:
            lp = expo * log_norm
        logs.append(lp + np.log(abs(coeff)))
        signs.append(np.sign(coeff))

    add(float(np.trace(H)), kp - 2)
    add((kp - 2) * float(g @ H @ g), kp - 4)
    if not small:
        add(float(g @ grad_kp) * log_norm, kp - 2)
    return _signed_log_sum(logs, signs)


def k_energy(space: GrushinSpace, u: GridFunction, pfield: ExponentField, k: float) -> float:
    """``(int |nabla_0 u|^(kp) / (kp) dx)^(1/k)`` on the simplicial mesh of the grid.

    The sum is accumulated as a log-sum-exp, so large ``k p`` cannot overflow.
    """
    from .mesh import SimplexMesh

    mesh = SimplexMesh.build(space, u.grid)
    return mesh.energy(u.values, pfield, k)


def log_energy_terms(norm: np.ndarray, volume: np.ndarray, kp: np.ndarray) -> np.ndarray:
    """``log(volume * norm^kp / kp)``, ``-inf`` where the norm vanishes."""
    with np.errstate(divide="ignore"):
        return np.log(volume) + kp * np.log(norm) - np.log(kp)


def energy_from_terms(log_terms: np.ndarray, k: float) -> float:
    if not np.any(np.isfinite(log_terms)):
        return 0.0
    return float(np.exp(logsumexp(log_terms) / k))
