"""Closed orbits of the suspension flow: census, entropy, zeta partial products, prime orbit counts."""
from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import InputError, NumericalError
from .markov import MarkovMapSystem
from .symbolic import DEFAULT_WORD_CAP, periodic_cycles
from .transfer import DEFAULT_N, solve_P

FIXED_POINT_TOL = 1e-13


@dataclass(frozen=True)
class OrbitEntry:
    word: tuple  # primitive symbol cycle, canonical rotation
    period: float  # roof Birkhoff sum along the cycle
    point: float  # periodic point in U_{word[0]}

    @property
    def n(self) -> int:
        return len(self.word)


@dataclass
class OrbitCensus:
    entries: list  # sorted by period
    lambda_max: float
    depth: int
    lattice: bool

    def periods(self) -> np.ndarray:
        return np.array([e.period for e in self.entries])

    def count(self, lam: float) -> int:
        """``pi(lam)``: primitive orbits with period ``<= lam``."""
        return int(np.searchsorted(self.periods(), lam, side="right"))

    def to_csv(self) -> str:
        lines = ["word,primitive,period"]
        for e in self.entries:
            lines.append(f"{''.join(map(str, e.word)) if max(e.word) < 10 else '-'.join(map(str, e.word))},true,{e.period!r}")
        return "\n".join(lines) + "\n"


def _periodic_points(sys: MarkovMapSystem, words: np.ndarray, maxiter: int = 200) -> np.ndarray:
    """Orbit points ``x_0, ..., x_{n-1}`` for each cycle row, by iterating composed inverse branches.

    The composition is a contraction by at least ``gamma^-n`` so the fixed
    point is unique and found from any start in ``U_{w_0}``.
    """
    rows, n = words.shape
    x = sys.intervals[words[:, 0] - 1].mean(axis=1)
    orbit = np.empty((rows, n))
    for _ in range(maxiter):
        y = x
        for j in range(n - 1, -1, -1):
            nxt = np.empty(rows)
            sym = words[:, j]
            for s in np.unique(sym):
                mask = sym == s
                nxt[mask] = sys.inverse(int(s), y[mask])
            y = nxt
            orbit[:, j] = y
        done = np.max(np.abs(y - x)) <= FIXED_POINT_TOL
        x = y
        if done:
            return orbit
    raise NumericalError(f"periodic-point iteration did not converge for period {n}")


def census(sys: MarkovMapSystem, lambda_max: float, cap: int = DEFAULT_WORD_CAP) -> OrbitCensus:
    """All primitive closed orbits with period ``<= lambda_max``.

    Any such orbit has symbolic length at most ``lambda_max / tau_min``, so
    enumerating cycles to that depth is complete.
    """
    if lambda_max <= 0:
        raise InputError("lambda_max must be positive")
    depth = math.ceil(lambda_max / sys.roof.tau_min - 1e-12)
    entries = []
    for n in range(1, depth + 1):
        classes = [c for c in periodic_cycles(sys.spec, n, cap) if c.primitive]
        if not classes:
            continue
        words = np.array([c.word for c in classes], dtype=np.int64)
        orbit = _periodic_points(sys, words)
        periods = sys.roof(orbit).sum(axis=1)
        for c, per, x0 in zip(classes, periods, orbit[:, 0]):
            if per <= lambda_max:
                entries.append(OrbitEntry(c.word, float(per), float(x0)))
    entries.sort(key=lambda e: (e.period, e.word))
    return OrbitCensus(entries, float(lambda_max), depth, sys.roof.is_constant)


def entropy(sys: MarkovMapSystem, N: int = DEFAULT_N) -> float:
    """Topological entropy of the suspension flow: the root ``s`` of ``Pr(-s tau) = 0``."""
    return solve_P(sys, None, N=N)


def li(x: float) -> float:
    """Offset logarithmic integral ``int_2^x du / log u`` (negative for ``1 < x < 2``)."""
    x = float(x)
    if x <= 1:
        raise InputError("li(x) needs x > 1")
    if x == 2.0:
        return 0.0
    # substitute u = e^t: smooth integrand e^t / t on [log 2, log x]
    a, b = math.log(2.0), math.log(x)
    with warnings.catch_warnings():
        # roundoff warnings only mean epsrel sits at machine precision
        warnings.simplefilter("ignore", IntegrationWarning)
        val, err = quad(lambda t: math.exp(t) / t, min(a, b), max(a, b), epsabs=1e-11, epsrel=1e-14, limit=500)
    if err > 1e-10 * max(1.0, abs(val)):
        raise NumericalError(f"li quadrature error estimate {err:.2e} too large")
    return val if b > a else -val


@dataclass
class ZetaValue:
    value: complex
    log_value: complex
    tail_bound: float
    orbits: int


def zeta_partial(census: OrbitCensus, s: complex, lambda_max: Optional[float] = None, hT: Optional[float] = None) -> ZetaValue:
    """``prod (1 - e^{-s l})^{-1}`` over census orbits with period ``<= lambda_max``.

    ``tail_bound`` bounds the omitted part of ``log zeta`` using the census
    growth ``pi(lam) <= C e^{hT lam}``; it is infinite when ``Re s <= hT``.
    """
    lam = census.lambda_max if lambda_max is None else min(float(lambda_max), census.lambda_max)
    ells = census.periods()
    ells = ells[ells <= lam]
    s = complex(s)
    logz = 0j
    for ell in ells:
        z = cmath.exp(-s * ell)
        if abs(1 - z) < 1e-12:
            raise NumericalError(f"s = {s} is within 1e-12 of a pole at period {ell}")
        logz -= cmath.log(1 - z)
    tail = math.inf
    if ells.size:
        if hT is None:
            hT = _growth_rate(census)
        sigma = s.real
        lam_grid = np.unique(ells)
        C = float(np.max(np.arange(1, ells.size + 1)[np.searchsorted(ells, lam_grid, side="right") - 1] * np.exp(-hT * lam_grid)))
        if sigma > hT:
            zmax = math.exp(-sigma * ells.min())
            tail = sigma * C * math.exp(-(sigma - hT) * lam) / (sigma - hT) / (1 - zmax)
    return ZetaValue(cmath.exp(logz), logz, tail, int(ells.size))


def _growth_rate(census: OrbitCensus) -> float:
    ells = census.periods()
    if ells.size < 4:
        return 0.0
    lam = ells[ells.size // 2 :]
    counts = np.arange(ells.size // 2 + 1, ells.size + 1)
    slope = np.polyfit(lam, np.log(counts), 1)[0]
    return float(max(slope, 0.0))


@dataclass
class PiLiTable:
    rows: list  # dicts: lambda, pi, li, rel_error
    lattice: bool
    envelope: list = field(default_factory=list)  # (window start, max |rel error| over window)

    @property
    def envelope_nonincreasing(self) -> bool:
        vals = [v for _, v in self.envelope]
        return all(b <= a for a, b in zip(vals, vals[1:]))

    def to_csv(self) -> str:
        lines = ["lambda,pi,li,relError"]
        for r in self.rows:
            lines.append(f"{r['lambda']!r},{r['pi']},{r['li']!r},{r['rel_error']!r}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "lattice": self.lattice,
            "envelope": [list(e) for e in self.envelope],
            "envelope_nonincreasing": self.envelope_nonincreasing,
            "note": "lattice roof: error term not expected to vanish" if self.lattice else "",
        }


def pi_vs_li(census: OrbitCensus, hT: float, grid: Sequence[float], window: float = 1.0) -> PiLiTable:
    """Compare ``pi(lam)`` with ``li(e^{hT lam})`` on ``grid``.

    The envelope is the exact sup of ``|pi/li - 1|`` over each consecutive
    window of length ``window`` starting at the first grid point, taken over
    the orbit periods inside the window rather than the grid samples.
    """
    grid = sorted(float(g) for g in grid)
    if grid and grid[-1] > census.lambda_max + 1e-12:
        raise InputError("grid exceeds the census horizon")
    rows = []
    for lam in grid:
        x = math.exp(hT * lam)
        cnt = census.count(lam)
        L = li(x) if x > 2 else float("nan")
        rel = cnt / L - 1 if x > 2 else float("nan")
        rows.append({"lambda": lam, "pi": cnt, "li": L, "rel_error": rel})
    env = []
    periods = census.periods()
    if grid:
        start = grid[0]
        while start < grid[-1] - 1e-12:
            stop = min(start + window, grid[-1])
            env.append((start, _window_sup(census, periods, hT, start, stop)))
            start += window
    return PiLiTable(rows, census.lattice, env)


def _window_sup(census: OrbitCensus, periods: np.ndarray, hT: float, a: float, b: float) -> float:
    # pi is constant between jumps and li is monotone, so the sup over [a, b]
    # is attained at a, b, or a jump (value or left limit)
    jumps = periods[(periods > a) & (periods <= b)]
    best = 0.0
    for lam in np.concatenate(([a, b], jumps)):
        x = math.exp(hT * lam)
        if x <= 2:
            continue
        L = li(x)
        best = max(best, abs(census.count(lam) / L - 1))
        left = int(np.searchsorted(periods, lam, side="left"))
        if lam > a:
            best = max(best, abs(left / L - 1))
    return best

