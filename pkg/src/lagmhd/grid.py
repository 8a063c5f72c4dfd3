"""Reference cylinder discretization, difference stencils and weighted norms.

The reference domain is the solid cylinder ``0 <= r < R0`` with periodic
``z`` of period ``Lz``.  Radial nodes sit at half offsets so no node lies on
the axis; axis regularity is imposed through parity ghosts.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from itertools import product

import numpy as np

MAX_NORM_ORDER = 4


class GridError(ValueError):
    """Invalid grid, field, or norm argument."""


class ParityError(ValueError):
    """A field's axis parity violates an operation's hypothesis."""


class Parity(enum.Enum):
    """Axis parity of a field under ``r -> -r``.

    ``NONE`` marks fields without a definite parity (test maps that are not
    regular on the axis); those are differentiated one-sidedly at the axis.
    """

    EVEN = 1
    ODD = -1
    NONE = 0

    def flip(self) -> "Parity":
        if self is Parity.NONE:
            return self
        return Parity.ODD if self is Parity.EVEN else Parity.EVEN

    def __mul__(self, other: "Parity") -> "Parity":
        if self is Parity.NONE or other is Parity.NONE:
            return Parity.NONE
        return Parity(self.value * other.value)

    @classmethod
    def coerce(cls, value) -> "Parity":
        if isinstance(value, cls):
            return value
        if value is None:
            return cls.NONE
        return cls[str(value).upper()]


@dataclass(frozen=True)
class Grid:
    Nr: int
    Nz: int
    R0: float = 1.0
    Lz: float = 2.0 * math.pi

    def __post_init__(self):
        if int(self.Nr) < 8 or int(self.Nz) < 8:
            raise GridError(f"Nr and Nz must be >= 8, got ({self.Nr}, {self.Nz})")
        if not (self.R0 > 0 and self.Lz > 0):
            raise GridError(f"R0 and Lz must be positive, got ({self.R0}, {self.Lz})")

    @property
    def hr(self) -> float:
        return self.R0 / self.Nr

    @property
    def hz(self) -> float:
        return self.Lz / self.Nz

    @property
    def h(self) -> float:
        """Coarsest spacing; used as the mesh parameter in error constants."""
        return max(self.hr, self.hz)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Nr, self.Nz)

    @property
    def r_nodes(self) -> np.ndarray:
        return (np.arange(self.Nr) + 0.5) * self.hr

    @property
    def z_nodes(self) -> np.ndarray:
        return np.arange(self.Nz) * self.hz

    @property
    def r(self) -> np.ndarray:
        """Radial coordinate broadcast to the full (Nr, Nz) node array."""
        return np.broadcast_to(self.r_nodes[:, None], self.shape).copy()

    @property
    def z(self) -> np.ndarray:
        return np.broadcast_to(self.z_nodes[None, :], self.shape).copy()

    def descriptor(self) -> dict:
        return {"Nr": self.Nr, "Nz": self.Nz, "R0": self.R0, "Lz": self.Lz}

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.Nr * factor, self.Nz * factor, self.R0, self.Lz)


@dataclass(frozen=True)
class ScalarField:
    """Node values of a function ``u(r, z)`` plus its axis parity tag."""

    grid: Grid
    values: np.ndarray
    parity: Parity = Parity.EVEN

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise GridError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "parity", Parity.coerce(self.parity))

    @classmethod
    def from_function(cls, grid: Grid, func, parity=Parity.EVEN) -> "ScalarField":
        vals = np.asarray(func(grid.r, grid.z), dtype=float)
        return cls(grid, np.broadcast_to(vals, grid.shape).copy(), parity)

    @classmethod
    def zeros(cls, grid: Grid, parity=Parity.EVEN) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape), parity)

    def dr(self) -> "ScalarField":
        return ScalarField(self.grid, d_r(self.values, self.grid, self.parity), self.parity.flip())

    def dz(self) -> "ScalarField":
        return ScalarField(self.grid, d_z(self.values, self.grid), self.parity)

    def trace(self) -> np.ndarray:
        return boundary_trace(self.values)


# --- stencils ---------------------------------------------------------------

def d_r(f: np.ndarray, grid: Grid, parity: Parity = Parity.EVEN) -> np.ndarray:
    """Second-order radial derivative.

    Centered in the interior, parity ghost ``f(-r0) = +/- f(r0)`` at the axis
    node (one-sided when parity is NONE), one-sided at the outer node.
    """
    parity = Parity.coerce(parity)
    h = grid.hr
    out = np.empty_like(f, dtype=float)
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
    if parity is Parity.NONE:
        out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
    else:
        out[0] = (f[1] - parity.value * f[0]) / (2.0 * h)
    out[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)
    return out


def d_z(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Centered periodic axial derivative."""
    return (np.roll(f, -1, axis=-1) - np.roll(f, 1, axis=-1)) / (2.0 * grid.hz)


def d_z_trace(w: np.ndarray, grid: Grid) -> np.ndarray:
    return (np.roll(w, -1) - np.roll(w, 1)) / (2.0 * grid.hz)


def boundary_trace(f: np.ndarray) -> np.ndarray:
    """Value at ``r = R0`` by quadratic extrapolation from the last three nodes."""
    return (15.0 * f[-1] - 10.0 * f[-2] + 3.0 * f[-3]) / 8.0


def multi_indices(k: int):
    """All (a_r, a_z) with a_r + a_z <= k."""
    return [(a, b) for a, b in product(range(k + 1), repeat=2) if a + b <= k]


def derivative(f: ScalarField, alpha: tuple[int, int]) -> ScalarField:
    out = f
    for _ in range(alpha[0]):
        out = out.dr()
    for _ in range(alpha[1]):
        out = out.dz()
    return out


# --- norms ------------------------------------------------------------------

def _check_order(k: int) -> int:
    if int(k) != k or k < 0 or k > MAX_NORM_ORDER:
        raise GridError(f"norm order must be an integer in [0, {MAX_NORM_ORDER}], got {k}")
    return int(k)


def l2_weighted_sq(values: np.ndarray, grid: Grid) -> float:
    """``2 pi * int int r |u|^2 dr dz``: midpoint in r, trapezoid (periodic) in z."""
    w = grid.r_nodes * (2.0 * math.pi * grid.hr * grid.hz)
    return float(np.sum(w * np.sum(values * values, axis=1)))


def weighted_norm_sq(f: ScalarField, k: int) -> float:
    k = _check_order(k)
    total = 0.0
    # fixed multi-index order keeps the reduction bit-reproducible
    for alpha in multi_indices(k):
        total += l2_weighted_sq(derivative(f, alpha).values, f.grid)
    return total


def weighted_norm(f: ScalarField, k: int) -> float:
    """Discrete ``||f||_k`` over the reference cylinder with weight ``r``."""
    return math.sqrt(weighted_norm_sq(f, k))


def boundary_norm(w: np.ndarray, s: int, grid: Grid) -> float:
    """Discrete ``|w|_s`` of a trace on ``r = R0``."""
    s = _check_order(s)
    w = np.asarray(w, dtype=float)
    if w.shape != (grid.Nz,):
        raise GridError(f"trace shape {w.shape} does not match Nz={grid.Nz}")
    total = 0.0
    cur = w
    for _ in range(s + 1):
        total += 2.0 * math.pi * grid.R0 * grid.hz * float(np.sum(cur * cur))
        cur = d_z_trace(cur, grid)
    return math.sqrt(total)


def hardy_ratio(g: ScalarField, s: int) -> float:
    """Measured ``||g/r||_{s-1} / ||g||_s`` for a field vanishing on the axis."""
    if int(s) != s or s < 1:
        raise GridError(f"Hardy order must be an integer >= 1, got {s}")
    if g.parity is not Parity.ODD:
        raise ParityError("hardy_ratio needs an odd-parity field (g(0, z) = 0)")
    num = weighted_norm(ScalarField(g.grid, g.values / g.grid.r, Parity.EVEN), s - 1)
    den = weighted_norm(g, s)
    if den == 0.0:
        return 0.0
    return num / den


def interior_max(values: np.ndarray, layers: int = 2) -> float:
    """Max-norm over nodes at least ``layers`` away from the axis and from r = R0."""
    return float(np.max(np.abs(values[layers:-layers]))) if values.size else 0.0


def edge_max(values: np.ndarray, layers: int = 2) -> float:
    """Max-norm over the node layers excluded by :func:`interior_max`."""
    edge = np.concatenate([values[:layers], values[-layers:]])
    return float(np.max(np.abs(edge)))


def observed_orders(errors, hs, floor: float = 0.0) -> list[float]:
    """Observed convergence orders between successive refinements.

    Pairs where both errors sit at or below ``floor`` (exactly satisfied up to
    roundoff) report ``inf``.
    """
    out = []
    for (e0, e1), (h0, h1) in zip(zip(errors, errors[1:]), zip(hs, hs[1:])):
        if e0 <= floor and e1 <= floor:
            out.append(math.inf)
        elif e1 <= 0.0:
            out.append(math.inf)
        else:
            out.append(math.log(e0 / e1) / math.log(h0 / h1))
    return out
