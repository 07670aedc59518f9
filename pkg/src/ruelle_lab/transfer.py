"""Ruelle transfer operators on gridded Lipschitz functions.

Functions on ``U = U_1 u ... u U_k`` are stored as values on ``N`` uniform
nodes per interval (endpoints included) and read back by piecewise-linear
interpolation.  ``(L_g h)(u) = sum over sigma(v) = u of exp(g(v)) h(v)`` is
then a sparse linear map on node values: each target node has one preimage
per allowed branch, and each preimage touches two source nodes.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq

from .errors import InputError, ModelError, NumericalError
from .markov import MarkovMapSystem, Roof
from .symbolic import SubshiftSpec

DEFAULT_N = 4096


@dataclass(frozen=True, eq=False)
class Grid:
    intervals: np.ndarray
    N: int

    def __post_init__(self):
        if self.N < 2:
            raise InputError("grid needs at least 2 nodes per interval")

    @property
    def k(self) -> int:
        return self.intervals.shape[0]

    @property
    def spacing(self) -> np.ndarray:
        return (self.intervals[:, 1] - self.intervals[:, 0]) / (self.N - 1)

    @property
    def nodes(self) -> np.ndarray:
        lo, hi = self.intervals[:, 0], self.intervals[:, 1]
        t = np.linspace(0.0, 1.0, self.N)
        nodes = lo[:, None] + (hi - lo)[:, None] * t[None, :]
        nodes[:, -1] = hi
        return nodes

    def locate(self, i: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Left node index and interpolation weight for points ``x`` of interval ``i`` (0-based)."""
        lo = self.intervals[i, 0]
        s = (np.asarray(x, dtype=float) - lo) / self.spacing[i]
        idx = np.clip(np.floor(s).astype(np.int64), 0, self.N - 2)
        theta = np.clip(s - idx, 0.0, 1.0)
        return idx, theta


@lru_cache(maxsize=32)
def grid_for(sys: MarkovMapSystem, N: int = DEFAULT_N) -> Grid:
    return Grid(np.array(sys.intervals), N)


class GridFunction:
    """Complex- or real-valued piecewise-linear function on a :class:`Grid`."""

    __slots__ = ("grid", "values", "_sup", "_lip")

    def __init__(self, grid: Grid, values):
        values = np.asarray(values)
        if values.shape != (grid.k, grid.N):
            raise InputError(f"values of shape {values.shape} do not match grid ({grid.k}, {grid.N})")
        self.grid = grid
        self.values = values
        self._sup = None
        self._lip = None

    @classmethod
    def from_callable(cls, grid: Grid, fn: Callable) -> "GridFunction":
        return cls(grid, np.asarray(fn(grid.nodes)) * np.ones((grid.k, grid.N)))

    @classmethod
    def constant(cls, grid: Grid, c: complex = 1.0) -> "GridFunction":
        return cls(grid, np.full((grid.k, grid.N), c))

    @classmethod
    def per_symbol(cls, grid: Grid, vals: Sequence) -> "GridFunction":
        return cls(grid, np.asarray(vals)[:, None] * np.ones((1, grid.N)))

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values) or bool(np.all(self.values.imag == 0))

    @property
    def real(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.real.copy())

    def sup(self) -> float:
        """``||h||_0``."""
        if self._sup is None:
            self._sup = float(np.max(np.abs(self.values)))
        return self._sup

    def lip(self) -> float:
        """Largest divided difference between adjacent nodes within each interval."""
        if self._lip is None:
            dd = np.abs(np.diff(self.values, axis=1)) / self.grid.spacing[:, None]
            self._lip = float(np.max(dd))
        return self._lip

    def at(self, i: int, x) -> np.ndarray:
        """Interpolated values at points ``x`` of interval ``U_i`` (1-based ``i``)."""
        idx, theta = self.grid.locate(i - 1, x)
        row = self.values[i - 1]
        return (1 - theta) * row[idx] + theta * row[idx + 1]

    def __call__(self, x: float):
        for i, (lo, hi) in enumerate(self.grid.intervals):
            if lo - 1e-14 <= x <= hi + 1e-14:
                return self.at(i + 1, np.array([x]))[0]
        raise ModelError(f"point {x!r} lies outside U")

    def _wrap(self, values) -> "GridFunction":
        return GridFunction(self.grid, values)

    def __add__(self, other):
        return self._wrap(self.values + (other.values if isinstance(other, GridFunction) else other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(self.values - (other.values if isinstance(other, GridFunction) else other))

    def __mul__(self, other):
        return self._wrap(self.values * (other.values if isinstance(other, GridFunction) else other))

    __rmul__ = __mul__

    def __neg__(self):
        return self._wrap(-self.values)

    def __abs__(self):
        return self._wrap(np.abs(self.values))


def norm_lip_b(h: GridFunction, b: float) -> float:
    """``||h||_0 + Lip(h)/|b|``."""
    if b == 0:
        raise InputError("the Lip,b norm needs b != 0")
    return h.sup() + h.lip() / abs(b)


class Discretization:
    """Preimage structure of ``sigma`` on a grid; independent of the weight.

    For every allowed transition ``i -> j`` and every node ``u`` of ``U_j`` it
    stores the preimage ``v`` in ``U_i``, the interpolation stencil into the
    ``U_i`` grid, and the exact roof value ``tau(v)``.
    """

    def __init__(self, sys: MarkovMapSystem, grid: Grid):
        self.sys = sys
        self.grid = grid
        N = grid.N
        nodes = grid.nodes
        rows, cols, thetas, pre, src = [], [], [], [], []
        for i in range(sys.k):
            targets = np.flatnonzero(sys.spec.A[i])
            if targets.size == 0:
                continue
            u = nodes[targets].ravel()
            try:
                v = sys.inverse(i + 1, u)
            except NumericalError as exc:
                raise NumericalError(f"preimage search failed on branch {i + 1}: {exc}", exc.history) from exc
            idx, theta = grid.locate(i, v)
            rows.append((targets[:, None] * N + np.arange(N)[None, :]).ravel())
            cols.append(i * N + idx)
            thetas.append(theta)
            pre.append(v)
            src.append(np.full(v.size, i))
        self.rows = np.concatenate(rows)
        self.cols = np.concatenate(cols)
        self.theta = np.concatenate(thetas)
        self.preimages = np.concatenate(pre)
        self.source = np.concatenate(src)
        self.tau = sys.roof(self.preimages)
        self.size = grid.k * N

    def interpolate(self, g: GridFunction) -> np.ndarray:
        """Values of ``g`` at every stored preimage."""
        flat = g.values.ravel()
        return (1 - self.theta) * flat[self.cols] + self.theta * flat[self.cols + 1]

    def matrix(self, weights: np.ndarray) -> sp.csr_matrix:
        """Sparse matrix of ``h -> sum_v weight(v) h(v)`` on flattened node values."""
        data = np.concatenate([weights * (1 - self.theta), weights * self.theta])
        r = np.concatenate([self.rows, self.rows])
        c = np.concatenate([self.cols, self.cols + 1])
        return sp.csr_matrix((data, (r, c)), shape=(self.size, self.size))

    def operator(self, g: Optional[GridFunction] = None, roof_coeff: complex = 0.0) -> sp.csr_matrix:
        """Matrix of ``L_{g - roof_coeff * tau}``; ``tau`` is evaluated exactly at preimages."""
        expo = np.zeros(self.preimages.size, dtype=complex if np.iscomplexobj(roof_coeff) or (g is not None and not g.is_real) else float)
        if g is not None:
            expo = expo + self.interpolate(g)
        if roof_coeff != 0:
            expo = expo - roof_coeff * self.tau
        return self.matrix(np.exp(expo))


@lru_cache(maxsize=16)
def discretization(sys: MarkovMapSystem, N: int = DEFAULT_N) -> Discretization:
    return Discretization(sys, grid_for(sys, N))


def _check_grid(sys: MarkovMapSystem, *fs: GridFunction) -> Grid:
    grid = fs[0].grid
    for f in fs:
        if f.grid.N != grid.N or not np.array_equal(f.grid.intervals, sys.intervals):
            raise InputError("grid functions do not live on the system's grid")
    return grid


def apply_L(sys: MarkovMapSystem, g: Optional[GridFunction], h: GridFunction) -> GridFunction:
    """``L_g h`` at the grid nodes; ``g=None`` means ``g = 0``."""
    grid = _check_grid(sys, h) if g is None else _check_grid(sys, g, h)
    op = discretization(sys, grid.N).operator(g)
    return GridFunction(grid, (op @ h.values.ravel()).reshape(grid.k, grid.N))


def birkhoff_sum(sys: MarkovMapSystem, h, m: int, x: float):
    """``h(x) + h(sigma x) + ... + h(sigma^{m-1} x)`` for a grid function, roof or callable ``h``."""
    if m < 1:
        raise InputError("m must be >= 1")
    total = 0.0
    for _ in range(m):
        try:
            i = sys.locate(x)
        except ModelError as exc:
            raise ModelError(f"orbit left U: {exc}") from exc
        if isinstance(h, GridFunction):
            total = total + h.at(i, np.array([x]))[0]
        else:
            total = total + np.asarray(h(np.array([x]))).ravel()[0]
        x = float(sys.branches[i - 1].forward(np.array(x)))
    return total


@dataclass
class EigenResult:
    lam: float
    eigenfunction: GridFunction
    residual: float
    iterations: int
    history: list = field(repr=False, default_factory=list)


def _power_iteration(op: sp.csr_matrix, grid: Grid, tol: float, max_iter: int) -> EigenResult:
    h = np.ones(op.shape[0])
    prev, history = None, []
    for it in range(1, max_iter + 1):
        y = op @ h
        lam = float(np.dot(h, y) / np.dot(h, h))
        history.append(lam)
        scale = float(np.max(np.abs(y)))
        if not np.isfinite(scale) or scale == 0.0:
            raise NumericalError("power iteration produced a zero or non-finite iterate", history)
        h = y / scale
        if prev is not None and abs(lam - prev) < tol:
            y = op @ h
            lam = float(np.dot(h, y) / np.dot(h, h))
            resid = float(np.max(np.abs(y - lam * h)) / np.max(np.abs(h)))
            if np.min(h) <= 0:
                raise NumericalError("leading eigenfunction is not strictly positive", history)
            return EigenResult(lam, GridFunction(grid, h.reshape(grid.k, grid.N)), resid, it, history)
        prev = lam
    raise NumericalError(f"power iteration did not converge in {max_iter} iterations", history)


def leading_eigen(
    sys: MarkovMapSystem,
    g: Optional[GridFunction] = None,
    tol: float = 1e-13,
    max_iter: int = 20000,
    N: Optional[int] = None,
    roof_coeff: float = 0.0,
) -> EigenResult:
    """Leading eigenvalue and positive eigenfunction of ``L_{g - roof_coeff tau}`` for real ``g``.

    The roof term uses ``tau`` evaluated exactly at the preimages, matching
    the operator that ``solve_P`` and ``op_norm_estimate`` iterate.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    if g is not None and not g.is_real:
        raise InputError("leading_eigen needs a real potential")
    N = g.grid.N if g is not None else (N or DEFAULT_N)
    if g is not None:
        _check_grid(sys, g)
    disc = discretization(sys, N)
    return _power_iteration(disc.operator(None if g is None else g.real, float(roof_coeff)), disc.grid, tol, max_iter)


def pressure(sys: MarkovMapSystem, g: Optional[GridFunction] = None, N: Optional[int] = None, tol: float = 1e-13) -> float:
    """``Pr(g) = log`` of the leading eigenvalue of ``L_g``."""
    return math.log(leading_eigen(sys, g, tol=tol, N=N).lam)


def _roof_pressure(disc: Discretization, f: Optional[GridFunction], s: float, tol: float = 1e-13) -> float:
    return math.log(_power_iteration(disc.operator(f, s), disc.grid, tol, 20000).lam)


def solve_P(sys: MarkovMapSystem, f: Optional[GridFunction] = None, N: Optional[int] = None, xtol: float = 1e-12) -> float:
    """The unique ``P`` with ``Pr(f - P tau) = 0``.

    The pressure drops with slope at most ``-tau_min`` in ``P``, which gives
    a guaranteed bracket around ``P = Pr(f)/tau``.
    """
    N = f.grid.N if f is not None else (N or DEFAULT_N)
    disc = discretization(sys, N)
    tmin, tmax = sys.roof.tau_min, sys.roof.tau_max
    p0 = _roof_pressure(disc, f, 0.0)
    if p0 == 0.0:
        return 0.0
    lo, hi = sorted([p0 / tmin, p0 / tmax])
    lo -= 1e-9 * (1 + abs(lo))
    hi += 1e-9 * (1 + abs(hi))
    fn = lambda P: _roof_pressure(disc, f, P)
    flo, fhi = fn(lo), fn(hi)
    for _ in range(60):
        if flo >= 0 >= fhi:
            break
        width = hi - lo + 1.0
        if flo < 0:
            lo -= width
            flo = fn(lo)
        if fhi > 0:
            hi += width
            fhi = fn(hi)
    else:
        raise NumericalError(f"could not bracket the pressure root: [{lo}, {hi}] -> [{flo}, {fhi}]")
    return brentq(fn, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)


@dataclass(frozen=True, eq=False)
class WeightSpec:
    """Exponent ``f - (P + a + i b) tau`` with ``tau`` the host system's roof."""

    f: Optional[GridFunction]
    P: float
    a: float = 0.0
    b: float = 0.0

    @property
    def roof_coeff(self) -> complex:
        return complex(self.P + self.a, self.b)


def _lip_b(h: GridFunction, b: float) -> float:
    # frequency scale max(1, |b|): b = 0 reuses the |b| = 1 norm
    return h.sup() + h.lip() / max(1.0, abs(b))


def default_seeds(grid: Grid) -> list[GridFunction]:
    x = grid.nodes
    return [
        GridFunction.constant(grid, 1.0 + 0j),
        GridFunction(grid, np.exp(2j * np.pi * x)),
        GridFunction(grid, np.cos(4 * np.pi * x) + 0.5j * np.sin(2 * np.pi * x) + 1.5),
    ]


@dataclass
class OpNormResult:
    rho_hat: float
    log_ratios: list  # per seed: log(||L^j h|| / ||h||) for j = 1..m
    b: float

    def checksum(self) -> str:
        payload = json.dumps([[repr(float(v)) for v in seq] for seq in self.log_ratios])
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _iterate_norms(op: sp.csr_matrix, grid: Grid, h: GridFunction, b: float, m: int) -> list:
    """``log ||L^j h|| - log ||h||`` for ``j = 1..m``, renormalizing every step."""
    n0 = _lip_b(h, b)
    if n0 == 0:
        raise InputError("seed function is zero")
    v = h.values.ravel() / n0
    logscale, out = 0.0, []
    for _ in range(m):
        v = op @ v
        nrm = _lip_b(GridFunction(grid, v.reshape(grid.k, grid.N)), b)
        if nrm == 0.0:
            out.extend([-np.inf] * (m - len(out)))
            break
        logscale += math.log(nrm)
        v = v / nrm
        out.append(logscale)
    return out


def op_norm_estimate(
    sys: MarkovMapSystem, w: WeightSpec, m: int, seeds: Optional[Sequence[GridFunction]] = None, N: Optional[int] = None
) -> OpNormResult:
    """``max over seeds of (||L^m h||_{Lip,b} / ||h||_{Lip,b})^(1/m)`` for the weight ``w``.

    At ``b = 0`` the norm uses frequency scale 1.
    """
    if m < 1:
        raise InputError("m must be >= 1")
    if seeds is not None and len(seeds):
        N = seeds[0].grid.N
    elif w.f is not None:
        N = w.f.grid.N
    N = N or DEFAULT_N
    disc = discretization(sys, N)
    if seeds is None or not len(seeds):
        seeds = default_seeds(disc.grid)
    _check_grid(sys, *seeds)
    op = disc.operator(w.f, w.roof_coeff)
    seqs = [_iterate_norms(op, disc.grid, h, w.b, m) for h in seeds]
    rho = max(math.exp(s[-1] / m) for s in seqs)
    return OpNormResult(rho, seqs, w.b)


@dataclass
class ScanCell:
    a: float
    b: float
    m: int
    rho_hat: float
    checksum: str
    log_ratios: list = field(repr=False)


@dataclass
class ScanReport:
    P: float
    cells: list
    C: float
    rho: float
    eps: float
    verdict: str
    worst: dict

    def dominates(self) -> bool:
        """True when ``C rho^j |b|^eps`` bounds every recorded ratio."""
        for c in self.cells:
            for seq in c.log_ratios:
                for j, lr in enumerate(seq, start=1):
                    bound = math.log(self.C) + j * math.log(self.rho) + self.eps * math.log(max(1.0, abs(c.b)))
                    if lr > bound + 1e-12:
                        return False
        return True

    def to_csv(self) -> str:
        lines = ["a,b,m,rhoHat,normSequenceChecksum"]
        for c in self.cells:
            lines.append(f"{c.a!r},{c.b!r},{c.m},{c.rho_hat!r},{c.checksum}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "P": self.P,
            "C": self.C,
            "rho": self.rho,
            "eps": self.eps,
            "verdict": self.verdict,
            "worst": self.worst,
            "cells": len(self.cells),
        }


def _fit_constants(cells: Sequence[ScanCell]) -> tuple[float, float, float]:
    rows, ys = [], []
    for c in cells:
        lb = math.log(max(1.0, abs(c.b)))
        for seq in c.log_ratios:
            for j, lr in enumerate(seq, start=1):
                if np.isfinite(lr):
                    rows.append((1.0, j, lb))
                    ys.append(lr)
    X, y = np.array(rows), np.array(ys)
    if np.ptp(X[:, 2]) == 0:
        coef, *_ = np.linalg.lstsq(X[:, :2], y, rcond=None)
        coef = np.array([coef[0], coef[1], 0.0])
    else:
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    # inflate C so the fitted envelope dominates every recorded point
    logC = float(np.max(y - X[:, 1] * coef[1] - X[:, 2] * coef[2]))
    return math.exp(logC), math.exp(float(coef[1])), float(coef[2])


def spectral_scan(
    sys: MarkovMapSystem,
    f: Optional[GridFunction],
    a_values: Sequence[float],
    b_values: Sequence[float],
    m: int,
    seeds: Optional[Sequence[GridFunction]] = None,
    N: Optional[int] = None,
    threads: Optional[int] = None,
    min_abs_b: float = 1.0,
) -> ScanReport:
    """Measure ``rhoHat(a, b)`` on a grid of cells and fit a witness ``(C, rho, eps)``.

    Cells run in parallel but are collected in ``(a, b)`` input order.
    """
    if any(abs(b) < min_abs_b for b in b_values):
        raise InputError(f"b values must satisfy |b| >= {min_abs_b}")
    N = f.grid.N if f is not None else (N or DEFAULT_N)
    P = solve_P(sys, f, N=N)
    grid = discretization(sys, N).grid
    seeds = list(seeds) if seeds else default_seeds(grid)
    pairs = [(float(a), float(b)) for a in a_values for b in b_values]

    def run(ab):
        a, b = ab
        res = op_norm_estimate(sys, WeightSpec(f, P, a, b), m, seeds)
        return ScanCell(a, b, m, res.rho_hat, res.checksum(), res.log_ratios)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(run, pairs))
    else:
        cells = [run(ab) for ab in pairs]
    C, rho, eps = _fit_constants(cells)
    worst = max(cells, key=lambda c: c.rho_hat)
    ok = all(c.rho_hat < 1 for c in cells) and rho < 1
    verdict = "eventually-contracting: " + ("consistent" if ok else "inconsistent")
    return ScanReport(P, cells, C, rho, eps, verdict, {"a": worst.a, "b": worst.b, "rhoHat": worst.rho_hat})


def locally_constant_oracle(spec: SubshiftSpec, g_values: Sequence[complex]) -> float:
    """Spectral radius of ``M[j, i] = A[i, j] exp(g_i)``, the operator reduced to per-symbol constants."""
    g = np.asarray(g_values)
    if g.shape != (spec.k,):
        raise InputError(f"need {spec.k} per-symbol values")
    M = (spec.A * np.exp(g)[:, None]).T
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def log_derivative_potential(sys: MarkovMapSystem, N: int = DEFAULT_N) -> GridFunction:
    """``-log |sigma'|`` on the grid; its pressure is 0 for Markov maps preserving an a.c. measure."""
    grid = grid_for(sys, N)
    nodes = grid.nodes
    vals = np.vstack([-np.log(np.abs(br.derivative(nodes[i]))) for i, br in enumerate(sys.branches)])
    return GridFunction(grid, vals)
