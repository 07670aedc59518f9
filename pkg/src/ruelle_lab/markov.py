"""Piecewise-expanding Markov interval maps and their cylinder geometry.

A :class:`MarkovMapSystem` realizes a one-sided subshift as an expanding map
``sigma`` on a finite union of closed intervals ``U_1, ..., U_k``.  Each branch
``sigma|U_i`` is strictly monotone and its image contains ``U_j`` exactly when
``A[i, j] = 1``.  Images may leave gaps (repellers); points falling in a gap
simply have no further admissible itinerary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import InputError, ModelError, NumericalError, ResourceCapError
from .symbolic import (
    DEFAULT_WORD_CAP,
    SubshiftSpec,
    count_words,
    is_admissible,
    word_array,
)

MARKOV_TOL = 1e-9
INVERSE_TOL = 1e-12
INVERSE_MAXITER = 100

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Roof:
    """Positive Lipschitz roof function with declared bounds."""

    func: ArrayFn
    tau_min: float
    tau_max: float
    lipschitz: float
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    @property
    def is_constant(self) -> bool:
        return self.params.get("kind") == "constant"


def constant_roof(c: float = 1.0) -> Roof:
    if c <= 0:
        raise ModelError("constant roof must be positive")
    return Roof(lambda x: np.full(np.shape(x), float(c)), c, c, 0.0, {"kind": "constant", "value": c})


def cosine_roof(base: float = 1.0, amplitude: float = 0.2) -> Roof:
    """``tau(x) = base + amplitude * cos(2 pi x)``."""
    if base - abs(amplitude) <= 0:
        raise ModelError("cosine roof must stay positive")
    return Roof(
        lambda x: base + amplitude * np.cos(2 * np.pi * x),
        base - abs(amplitude),
        base + abs(amplitude),
        2 * np.pi * abs(amplitude),
        {"kind": "cosine", "base": base, "amplitude": amplitude},
    )


@dataclass(frozen=True, eq=False)
class Branch:
    """One monotone expanding branch ``sigma|[lo, hi]`` given in line coordinates."""

    lo: float
    hi: float
    forward: ArrayFn
    derivative: ArrayFn
    deriv_min: float
    deriv_max: float
    inverse: Optional[ArrayFn] = None

    @property
    def image(self) -> tuple[float, float]:
        a, b = float(self.forward(np.array(self.lo))), float(self.forward(np.array(self.hi)))
        return (min(a, b), max(a, b))

    @property
    def increasing(self) -> bool:
        return float(self.forward(np.array(self.hi))) > float(self.forward(np.array(self.lo)))

    def invert(self, y) -> np.ndarray:
        """Preimage of ``y`` in ``[lo, hi]``; bisection-safeguarded Newton unless an exact inverse exists."""
        y = np.asarray(y, dtype=float)
        if self.inverse is not None:
            return np.clip(self.inverse(y), self.lo, self.hi)
        sign = 1.0 if self.increasing else -1.0
        a, b = self.image
        lo = np.full(y.shape, self.lo)
        hi = np.full(y.shape, self.hi)
        x = self.lo + (self.hi - self.lo) * ((y - a) / (b - a) if sign > 0 else (b - y) / (b - a))
        x = np.clip(x, self.lo, self.hi)
        history = []
        for _ in range(INVERSE_MAXITER):
            r = self.forward(x) - y
            above = sign * r > 0
            hi = np.where(above, x, hi)
            lo = np.where(above, lo, x)
            step = r / self.derivative(x)
            x_new = x - step
            outside = (x_new <= lo) | (x_new >= hi)
            x_new = np.where(outside, 0.5 * (lo + hi), x_new)
            moved = np.abs(x_new - x)
            x = x_new
            history.append(float(np.max(np.abs(r))) if r.size else 0.0)
            if not r.size or np.all(moved <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(x))):
                break
        resid = np.abs(self.forward(x) - y)
        if resid.size and np.max(resid) > INVERSE_TOL * max(1.0, abs(a), abs(b)):
            bad = int(np.argmax(resid))
            raise NumericalError(
                f"inverse branch on [{self.lo}, {self.hi}] failed at y={y.flat[bad]!r}, residual {resid.flat[bad]:.3e}",
                history,
            )
        return x


def linear_branch(lo: float, hi: float, a: float, b: float) -> Branch:
    """Affine branch mapping ``lo -> a`` and ``hi -> b``."""
    slope = (b - a) / (hi - lo)
    return Branch(
        lo,
        hi,
        lambda x: a + slope * (x - lo),
        lambda x: np.full(np.shape(x), slope),
        abs(slope),
        abs(slope),
        inverse=lambda y: lo + (y - a) / slope,
    )


@dataclass(frozen=True, eq=False)
class MarkovMapSystem:
    spec: SubshiftSpec
    branches: tuple
    roof: Roof
    name: str = "custom"
    params: dict = field(default_factory=dict)
    intervals: np.ndarray = field(init=False)

    def __post_init__(self):
        branches = tuple(self.branches)
        object.__setattr__(self, "branches", branches)
        k = self.spec.k
        if len(branches) != k:
            raise ModelError(f"{len(branches)} branches for {k} symbols")
        iv = np.array([[b.lo, b.hi] for b in branches], dtype=float)
        if np.any(iv[:, 1] <= iv[:, 0]):
            raise ModelError("every interval U_i needs lo < hi")
        order = np.argsort(iv[:, 0])
        s = iv[order]
        if np.any(s[1:, 0] < s[:-1, 1] - MARKOV_TOL):
            raise ModelError("intervals U_i must have disjoint interiors")
        iv.setflags(write=False)
        object.__setattr__(self, "intervals", iv)
        self._check_markov()
        if min(b.deriv_min for b in branches) <= 1.0:
            raise ModelError("map is not expanding: min |sigma'| <= 1")
        self._check_roof()

    def _check_markov(self):
        for i, br in enumerate(self.branches):
            a, b = br.image
            for j in range(self.spec.k):
                lo, hi = self.intervals[j]
                covers = a <= lo + MARKOV_TOL and hi <= b + MARKOV_TOL
                disjoint = hi <= a + MARKOV_TOL or lo >= b - MARKOV_TOL
                if self.spec.A[i, j] and not covers:
                    raise ModelError(f"Markov property: sigma(U_{i + 1}) = [{a}, {b}] does not cover U_{j + 1}")
                if not self.spec.A[i, j] and not disjoint:
                    raise ModelError(f"Markov property: sigma(U_{i + 1}) meets Int U_{j + 1} but A[{i + 1},{j + 1}] = 0")

    def _check_roof(self, n: int = 2001):
        for lo, hi in self.intervals:
            x = np.linspace(lo, hi, n)
            t = self.roof(x)
            if np.min(t) < self.roof.tau_min - 1e-12 or self.roof.tau_min <= 0:
                raise ModelError("roof drops below its declared tau_min")
            dd = np.abs(np.diff(t)) / np.diff(x)
            if np.max(dd) > self.roof.lipschitz * (1 + 1e-9) + 1e-12:
                raise ModelError("roof divided differences exceed its declared Lipschitz constant")

    @property
    def k(self) -> int:
        return self.spec.k

    @property
    def gamma(self) -> float:
        return min(b.deriv_min for b in self.branches)

    @property
    def gamma1(self) -> float:
        return max(b.deriv_max for b in self.branches)

    def inverse(self, i: int, y) -> np.ndarray:
        """Preimage in ``U_i`` (1-based ``i``) of points ``y``."""
        return self.branches[i - 1].invert(y)

    def locate(self, x: float) -> int:
        """1-based index of the first interval containing ``x``."""
        for i, (lo, hi) in enumerate(self.intervals):
            if lo - 1e-14 <= x <= hi + 1e-14:
                return i + 1
        raise ModelError(f"point {x!r} lies outside U")

    def sigma(self, x: float) -> float:
        return float(self.branches[self.locate(x) - 1].forward(np.array(x)))

    def describe(self) -> dict:
        return {"name": self.name, **self.params}


@dataclass(frozen=True)
class Cylinder:
    word: tuple
    lo: float
    hi: float

    @property
    def depth(self) -> int:
        return len(self.word) - 1

    @property
    def diameter(self) -> float:
        return self.hi - self.lo


def _pull_back(sys: MarkovMapSystem, i: int, lo, hi):
    a, b = sys.inverse(i, lo), sys.inverse(i, hi)
    return np.minimum(a, b), np.maximum(a, b)


def cylinder_interval(sys: MarkovMapSystem, w: Sequence[int]) -> Cylinder:
    w = tuple(int(s) for s in w)
    if not w:
        raise InputError("empty word has no cylinder")
    if not is_admissible(sys.spec, w):
        raise InputError(f"word {w} is not admissible")
    lo, hi = sys.intervals[w[-1] - 1]
    lo, hi = np.array([lo]), np.array([hi])
    for s in reversed(w[:-1]):
        lo, hi = _pull_back(sys, s, lo, hi)
    return Cylinder(w, float(lo[0]), float(hi[0]))


def cylinder_diameter(sys: MarkovMapSystem, w: Sequence[int]) -> float:
    return cylinder_interval(sys, w).diameter


class CylinderTable(NamedTuple):
    words: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @property
    def diam(self) -> np.ndarray:
        return self.hi - self.lo


def cylinder_tables(sys: MarkovMapSystem, m_max: int, cap: int = DEFAULT_WORD_CAP) -> list[CylinderTable]:
    """Every cylinder of cylinder-length ``0..m_max``, each depth in lexicographic order.

    Depth ``m`` is built from depth ``m - 1`` by prepending a symbol, which
    keeps lexicographic order and needs only one inverse-branch call per
    symbol and level.
    """
    total = sum(count_words(sys.spec, m) for m in range(m_max + 1))
    if total > cap:
        raise ResourceCapError(f"{total} cylinders up to depth {m_max} exceed the cap {cap}", total)
    k = sys.k
    words = np.arange(1, k + 1, dtype=np.int64)[:, None]
    tables = [CylinderTable(words, sys.intervals[:, 0].copy(), sys.intervals[:, 1].copy())]
    for _ in range(m_max):
        prev = tables[-1]
        parts_w, parts_lo, parts_hi = [], [], []
        for i in range(1, k + 1):
            mask = sys.spec.A[i - 1, prev.words[:, 0] - 1].astype(bool)
            if not mask.any():
                continue
            lo, hi = _pull_back(sys, i, prev.lo[mask], prev.hi[mask])
            sub = prev.words[mask]
            parts_w.append(np.column_stack([np.full(sub.shape[0], i, dtype=np.int64), sub]))
            parts_lo.append(lo)
            parts_hi.append(hi)
        tables.append(CylinderTable(np.vstack(parts_w), np.concatenate(parts_lo), np.concatenate(parts_hi)))
    return tables


def iterate_along(sys: MarkovMapSystem, word: Sequence[int], x, steps: int) -> np.ndarray:
    """Apply the branches ``word[0], ..., word[steps-1]`` to ``x``."""
    x = np.asarray(x, dtype=float)
    for s in word[:steps]:
        x = sys.branches[s - 1].forward(x)
    return x


class ExpansionConstants(NamedTuple):
    c0: float
    gamma: float
    gamma1: float


@dataclass
class ExpansionCheck:
    pairs: int
    min_lower_slack: float
    min_upper_slack: float

    @property
    def holds(self) -> bool:
        return self.min_lower_slack >= -1e-9 and self.min_upper_slack >= -1e-9


def verify_expansion(
    sys: MarkovMapSystem, consts: ExpansionConstants, m_max: int, pairs_per_depth: int = 1000, seed: int = 0
) -> ExpansionCheck:
    """Sample point pairs inside common cylinders and test both sides of the expansion estimate.

    Slacks are relative: ``observed/bound - 1`` for the lower side and
    ``bound/observed - 1`` for the upper side.
    """
    rng = np.random.default_rng(seed)
    c0, g, g1 = consts
    lower_slack, upper_slack, n = np.inf, np.inf, 0
    tables = cylinder_tables(sys, m_max)
    for m in range(1, m_max + 1):
        t = tables[m]
        pick = rng.integers(0, t.words.shape[0], size=pairs_per_depth)
        words, lo, diam = t.words[pick], t.lo[pick], t.diam[pick]
        u = lo[:, None] + diam[:, None] * rng.random((pick.size, 2))
        d0 = np.abs(u[:, 1] - u[:, 0])
        keep = d0 > 0
        words, u, d0 = words[keep], u[keep], d0[keep]
        for step in range(m):
            for i in range(1, sys.k + 1):
                rows = words[:, step] == i
                if rows.any():
                    u[rows] = sys.branches[i - 1].forward(u[rows])
        dm = np.abs(u[:, 1] - u[:, 0])
        if dm.size:
            lower_slack = min(lower_slack, float(np.min(dm / (c0 * g**m * d0) - 1)))
            upper_slack = min(upper_slack, float(np.min((g1**m / c0) * d0 / dm - 1)))
        n += int(dm.size)
    return ExpansionCheck(n, float(lower_slack), float(upper_slack))


def expansion_constants(sys: MarkovMapSystem, m_max: int = 6, pairs_per_depth: int = 200, seed: int = 0) -> ExpansionConstants:
    """``(c0, gamma, gamma1)`` from branch derivative bounds, spot-checked on random pairs.

    On an interval, ``sigma^m`` restricted to a depth-``m`` cylinder is a
    diffeomorphism with derivative a product of ``m`` branch derivatives, so
    ``c0 = 1`` with ``gamma``/``gamma1`` the global min/max of ``|sigma'|``.
    """
    if m_max < 1:
        raise InputError("m_max must be >= 1")
    g, g1 = sys.gamma, sys.gamma1
    if g <= 1:
        raise ModelError("expansion violated: min |sigma'| <= 1")
    consts = ExpansionConstants(1.0, float(g), float(g1))
    check = verify_expansion(sys, consts, m_max, pairs_per_depth, seed)
    if not check.holds:
        raise ModelError(f"sampled pairs violate the expansion estimate: {check}")
    return consts


def choose_p1(sys: MarkovMapSystem, consts: Optional[ExpansionConstants] = None) -> tuple[int, float]:
    """Least ``p1 >= 1`` with ``1/(c0 gamma^p1)`` strictly below the smallest ratio of interval lengths."""
    c0, g, _ = consts or ExpansionConstants(1.0, sys.gamma, sys.gamma1)
    d = sys.intervals[:, 1] - sys.intervals[:, 0]
    bound = float(d.min() / d.max())
    p = 1
    # relative margin guards the strict inequality against rounding ties
    while 1.0 / (c0 * g**p) >= bound * (1 - 1e-12):
        p += 1
    return p, 1.0 / (c0 * g**p)


@dataclass
class Lemma41Fit:
    C1: float
    rho1: float
    lower_const: float
    r0: float
    p1: int
    cylinders: int
    upper_slack_min: float
    lower_slack_min: float
    violations: int

    @property
    def holds(self) -> bool:
        return self.violations == 0


def fit_lemma41(sys: MarkovMapSystem, m_max: int, cap: int = DEFAULT_WORD_CAP) -> Lemma41Fit:
    """Fit ``diam C <= C1 rho1^m`` and check ``diam C >= c0 r0 / gamma1^m`` on every cylinder up to ``m_max``.

    ``rho1 = rho0^(1/p1)`` and ``C1`` is the smallest constant valid for all
    enumerated cylinders.  ``r0`` is taken just under half the shortest
    interval.  Slacks are ``bound/diam - 1`` (upper) and ``diam/bound - 1``
    (lower); zero means the bound is attained.
    """
    consts = ExpansionConstants(1.0, sys.gamma, sys.gamma1)
    p1, rho0 = choose_p1(sys, consts)
    rho1 = rho0 ** (1.0 / p1)
    tables = cylinder_tables(sys, m_max, cap)
    d_min = float((sys.intervals[:, 1] - sys.intervals[:, 0]).min())
    r0 = 0.5 * d_min * (1 - 1e-6)
    lower_const = consts.c0 * r0
    C1 = max(float(np.max(t.diam / rho1**m)) for m, t in enumerate(tables))
    up, lowslack, viol, n = np.inf, np.inf, 0, 0
    for m, t in enumerate(tables):
        upper = C1 * rho1**m
        lower = lower_const / consts.gamma1**m
        up = min(up, float(np.min(upper / t.diam - 1)))
        lowslack = min(lowslack, float(np.min(t.diam / lower - 1)))
        viol += int(np.sum(t.diam > upper * (1 + 1e-12)) + np.sum(t.diam < lower))
        n += t.diam.size
    return Lemma41Fit(C1, rho1, lower_const, r0, p1, n, up, lowslack, viol)


def _codes(words: np.ndarray, base: int) -> np.ndarray:
    w = words.astype(np.int64)
    powers = base ** np.arange(w.shape[1] - 1, -1, -1, dtype=np.int64)
    return w @ powers


@dataclass
class Theorem42Report:
    rhoA: float
    p0: int
    rhoB: float
    depth_min: list  # per parent depth m: min ratio over co-length-1 pairs
    depth_max: list
    ratios_by_colength: dict  # p -> (min, max) over all parents

    def to_dict(self) -> dict:
        return {
            "rhoA": self.rhoA,
            "p0": self.p0,
            "rhoB": self.rhoB,
            "depth_min": self.depth_min,
            "depth_max": self.depth_max,
            "ratios_by_colength": {str(p): list(v) for p, v in self.ratios_by_colength.items()},
        }


def _colength_ratios(tables: list, m: int, p: int, base: int) -> np.ndarray:
    parent, child = tables[m], tables[m + p]
    pc = _codes(parent.words, base)
    cc = _codes(child.words[:, : m + 1], base)
    idx = np.searchsorted(pc, cc)
    return child.diam / parent.diam[idx]


def check_theorem42(
    sys: MarkovMapSystem, m_max: int, max_colength: int = 6, cap: int = DEFAULT_WORD_CAP
) -> Theorem42Report:
    """Diameter ratios of subcylinders to parents for parent depths ``0..m_max-1``.

    ``rhoA`` is the smallest co-length-1 ratio; ``p0`` is the least co-length
    whose largest ratio is below 1, ``rhoB`` that largest ratio.
    """
    if m_max < 1:
        raise InputError("m_max must be >= 1")
    base = sys.k + 1
    if (m_max + max_colength + 1) * math.log2(base) > 62:
        raise ResourceCapError("word codes would overflow 64 bits", m_max + max_colength)
    tables = cylinder_tables(sys, m_max, cap)
    dmin, dmax = [], []
    for m in range(m_max):
        r = _colength_ratios(tables, m, 1, base)
        dmin.append(float(r.min()))
        dmax.append(float(r.max()))
    by_p = {1: (min(dmin), max(dmax))}
    p0, rhoB = None, None
    for p in range(1, max_colength + 1):
        if p not in by_p:
            if m_max - 1 + p > len(tables) - 1:
                tables = cylinder_tables(sys, m_max - 1 + p, cap)
            rs = [_colength_ratios(tables, m, p, base) for m in range(m_max)]
            by_p[p] = (min(float(r.min()) for r in rs), max(float(r.max()) for r in rs))
        if by_p[p][1] < 1.0:
            p0, rhoB = p, by_p[p][1]
            break
    if p0 is None:
        raise NumericalError(f"no co-length <= {max_colength} contracts all cylinders")
    return Theorem42Report(by_p[1][0], p0, rhoB, dmin, dmax, by_p)


# ---------------------------------------------------------------- builtins

def doubling_map(roof: Optional[Roof] = None) -> MarkovMapSystem:
    roof = roof or cosine_roof()
    spec = SubshiftSpec(np.ones((2, 2)), M0=1)
    branches = (linear_branch(0.0, 0.5, 0.0, 1.0), linear_branch(0.5, 1.0, 0.0, 1.0))
    return MarkovMapSystem(spec, branches, roof, "doubling", {"roof": roof.params})


def perturbed_doubling(eps: float = 0.5, roof: Optional[Roof] = None) -> MarkovMapSystem:
    """``sigma(x) = 2x + (eps/2pi) sin(2pi x) mod 1``, split at ``x = 1/2`` where the lift crosses 1."""
    if not 0.0 <= eps < 0.9:
        raise ModelError("perturbed doubling needs 0 <= eps < 0.9")
    roof = roof or cosine_roof()
    spec = SubshiftSpec(np.ones((2, 2)), M0=1)
    c = eps / (2 * np.pi)

    def make(shift):
        return Branch(
            0.5 * shift,
            0.5 * (shift + 1),
            lambda x: 2 * x + c * np.sin(2 * np.pi * x) - shift,
            lambda x: 2 + eps * np.cos(2 * np.pi * x),
            2 - eps,
            2 + eps,
        )

    return MarkovMapSystem(spec, (make(0), make(1)), roof, "perturbed-doubling", {"eps": eps, "roof": roof.params})


def linear_markov_map(
    A,
    intervals: Optional[Sequence[Sequence[float]]] = None,
    images: Optional[Sequence[Sequence[float]]] = None,
    roof: Optional[Roof] = None,
    name: str = "linear",
) -> MarkovMapSystem:
    """Markov map with affine branches.

    ``images[i] = (a, b)`` sends ``lo_i -> a`` and ``hi_i -> b`` (reverse the
    pair for an orientation-reversing branch).  Without ``images`` each branch
    maps increasingly onto the hull of its allowed targets.  Without
    ``intervals`` adjacent intervals in ``[0, 1]`` are sized by the right
    Perron vector of ``A``, which makes every slope equal to the Perron root.
    """
    spec = SubshiftSpec(np.asarray(A))
    roof = roof or cosine_roof()
    if intervals is None:
        w, v = np.linalg.eig(spec.A.astype(float))
        lead = int(np.argmax(w.real))
        v = np.abs(v[:, lead].real)
        lengths = v / v.sum()
        edges = np.concatenate([[0.0], np.cumsum(lengths)])
        edges[-1] = 1.0
        intervals = [(edges[i], edges[i + 1]) for i in range(spec.k)]
    iv = np.asarray(intervals, dtype=float)
    if images is None:
        images = []
        for i in range(spec.k):
            targets = np.flatnonzero(spec.A[i])
            images.append((iv[targets, 0].min(), iv[targets, 1].max()))
    branches = tuple(linear_branch(iv[i, 0], iv[i, 1], images[i][0], images[i][1]) for i in range(spec.k))
    params = {
        "matrix": spec.A.tolist(),
        "intervals": iv.tolist(),
        "images": [list(map(float, im)) for im in images],
        "roof": roof.params,
    }
    return MarkovMapSystem(spec, branches, roof, name, params)


def golden_mean_map(roof: Optional[Roof] = None) -> MarkovMapSystem:
    """Golden-mean shift on ``[0, 1/phi] U [1/phi, 1]``, both slopes equal to the golden ratio."""
    return linear_markov_map([[1, 1], [1, 0]], roof=roof, name="golden-mean")


def three_five_map(roof: Optional[Roof] = None) -> MarkovMapSystem:
    """Full 2-shift repeller on ``[0,1] U [2,3]`` with slopes 3 and 5."""
    return linear_markov_map(
        [[1, 1], [1, 1]], intervals=[(0.0, 1.0), (2.0, 3.0)], images=[(0.0, 3.0), (0.0, 5.0)], roof=roof, name="three-five"
    )


def roof_from_config(cfg: Optional[dict]) -> Roof:
    if cfg is None:
        return cosine_roof()
    kind = cfg.get("kind", "cosine")
    if kind == "constant":
        return constant_roof(float(cfg.get("value", 1.0)))
    if kind == "cosine":
        return cosine_roof(float(cfg.get("base", 1.0)), float(cfg.get("amplitude", 0.2)))
    raise ModelError(f"unknown roof kind {kind!r}")


INTERVAL_BUILTINS = {
    "doubling": lambda cfg, roof: doubling_map(roof),
    "perturbed-doubling": lambda cfg, roof: perturbed_doubling(float(cfg.get("eps", 0.5)), roof),
    "golden-mean": lambda cfg, roof: golden_mean_map(roof),
    "three-five": lambda cfg, roof: three_five_map(roof),
}


def markov_system_from_config(cfg: dict) -> MarkovMapSystem:
    """Build a system from a parsed ``[system]`` table.

    Either ``builtin = "<name>"`` or ``kind = "linear"`` with ``matrix``,
    optional ``intervals`` and ``images``.  ``roof`` is an inline table.
    """
    roof = roof_from_config(cfg.get("roof"))
    if "builtin" in cfg:
        name = cfg["builtin"]
        if name not in INTERVAL_BUILTINS:
            raise ModelError(f"unknown interval-map builtin {name!r}")
        return INTERVAL_BUILTINS[name](cfg, roof)
    if cfg.get("kind") == "linear":
        if "matrix" not in cfg:
            raise ModelError("linear Markov map needs 'matrix'")
        return linear_markov_map(cfg["matrix"], cfg.get("intervals"), cfg.get("images"), roof, cfg.get("name", "linear"))
    raise ModelError("system table needs 'builtin' or kind = 'linear'")
