"""Perturbed hyperbolic toral automorphisms and their Lyapunov structure.

The builtin maps are ``f(x) = A h(x) mod 1`` with ``h`` a composition of
shears ``x_i += (eps/2pi) sin(2pi(...))`` whose arguments avoid ``x_i``.
Each shear has unit Jacobian determinant, so ``f`` preserves volume and its
inverse is explicit.  Displacements ``f(y + d) - f(y)`` are evaluated in
closed form so that tiny separations keep full relative precision.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.spatial.distance import pdist

from .errors import ChartEscapeError, ConditioningError, InputError, ModelError, NumericalError

EPS_CAP = 0.05
TWO_PI = 2 * np.pi


def _sin_diff(a, d):
    """``sin(2pi(a + d)) - sin(2pi a)`` without cancellation."""
    return 2 * np.cos(TWO_PI * a + np.pi * d) * np.sin(np.pi * d)


@dataclass(frozen=True, eq=False)
class TorusMapSystem:
    base: np.ndarray
    eps: float = 0.0
    name: str = "torus"

    def __post_init__(self):
        A = np.array(self.base, dtype=float)
        d = A.shape[0]
        if A.shape != (d, d) or d not in (2, 4):
            raise ModelError("torus maps are supported in dimension 2 or 4")
        if not np.array_equal(A, np.round(A)):
            raise ModelError("base matrix must be integer")
        if abs(abs(np.linalg.det(A)) - 1) > 1e-9:
            raise ModelError("base matrix must be unimodular")
        ev = np.abs(np.linalg.eigvals(A))
        if np.any(np.abs(ev - 1) < 1e-9):
            raise ModelError("base matrix has an eigenvalue on the unit circle")
        if not 0 <= self.eps <= EPS_CAP:
            raise ModelError(f"perturbation amplitude must lie in [0, {EPS_CAP}]")
        A.setflags(write=False)
        Ainv = np.linalg.inv(A)
        Ainv.setflags(write=False)
        object.__setattr__(self, "base", A)
        object.__setattr__(self, "_Ainv", Ainv)
        rng = np.random.default_rng(12345)
        for _ in range(3):
            x = rng.random(d)
            if np.max(np.abs(self.df(x) - self._fd_jacobian(x))) > 1e-6:
                raise ModelError("analytic Jacobian disagrees with finite differences")

    @property
    def d(self) -> int:
        return self.base.shape[0]

    @property
    def c(self) -> float:
        return self.eps / TWO_PI

    # -- shear h and its pieces -------------------------------------------------

    def _h(self, x):
        x = np.array(x, dtype=float, copy=True)
        c = self.c
        if self.d == 2:
            x[..., 0] += c * np.sin(TWO_PI * x[..., 1])
        else:
            x[..., 0] += c * np.sin(TWO_PI * (x[..., 1] + x[..., 2]))
            x[..., 2] += c * np.sin(TWO_PI * (x[..., 3] + x[..., 1]))
        return x

    def _h_inv(self, z):
        z = np.array(z, dtype=float, copy=True)
        c = self.c
        if self.d == 2:
            z[..., 0] -= c * np.sin(TWO_PI * z[..., 1])
        else:
            z[..., 2] -= c * np.sin(TWO_PI * (z[..., 3] + z[..., 1]))
            z[..., 0] -= c * np.sin(TWO_PI * (z[..., 1] + z[..., 2]))
        return z

    def _dh(self, x):
        e = self.eps
        if self.d == 2:
            return np.array([[1.0, e * np.cos(TWO_PI * x[1])], [0.0, 1.0]])
        c1 = e * np.cos(TWO_PI * (x[1] + x[2]))
        c2 = e * np.cos(TWO_PI * (x[3] + x[1]))
        D1 = np.eye(4)
        D1[0, 1] = D1[0, 2] = c1
        D2 = np.eye(4)
        D2[2, 1] = D2[2, 3] = c2
        return D2 @ D1

    # -- public evaluators --------------------------------------------------------

    def lift(self, x):
        """``f`` without reduction mod 1."""
        return self._h(x) @ self.base.T

    def f(self, x):
        return np.mod(self.lift(x), 1.0)

    def f_inv(self, y):
        return np.mod(self._h_inv(np.asarray(y, dtype=float) @ self._Ainv.T), 1.0)

    def df(self, x) -> np.ndarray:
        return self.base @ self._dh(np.asarray(x, dtype=float))

    def df_inv(self, y) -> np.ndarray:
        """Jacobian of ``f^{-1}`` at ``y``."""
        return np.linalg.inv(self.df(self.f_inv(y)))

    def _fd_jacobian(self, x, h=1e-6):
        J = np.empty((self.d, self.d))
        for j in range(self.d):
            e = np.zeros(self.d)
            e[j] = h
            J[:, j] = (self.lift(x + e) - self.lift(x - e)) / (2 * h)
        return J

    def f_diff(self, y, delta):
        """``f(y + delta) - f(y)`` for displacements ``delta`` of shape ``(..., d)``."""
        delta = np.array(delta, dtype=float, copy=True)
        c = self.c
        if c:
            if self.d == 2:
                delta[..., 0] += c * _sin_diff(y[1], delta[..., 1])
            else:
                delta[..., 0] += c * _sin_diff(y[1] + y[2], delta[..., 1] + delta[..., 2])
                delta[..., 2] += c * _sin_diff(y[3] + y[1], delta[..., 3] + delta[..., 1])
        return delta @ self.base.T

    def f_inv_diff(self, y, delta):
        """``f^{-1}(y + delta) - f^{-1}(y)``."""
        z = self._Ainv @ np.asarray(y, dtype=float)
        dz = np.asarray(delta, dtype=float) @ self._Ainv.T
        c = self.c
        if c:
            dz = dz.copy()
            if self.d == 2:
                dz[..., 0] -= c * _sin_diff(z[1], dz[..., 1])
            else:
                dz[..., 2] -= c * _sin_diff(z[3] + z[1], dz[..., 3] + dz[..., 1])
                z3 = z[2] - c * np.sin(TWO_PI * (z[3] + z[1]))
                dz[..., 0] -= c * _sin_diff(z[1] + z3, dz[..., 1] + dz[..., 2])
        return dz

    def orbit(self, x, n: int) -> np.ndarray:
        """Points ``x, f(x), ..., f^n(x)``."""
        out = np.empty((n + 1, self.d))
        out[0] = np.mod(x, 1.0)
        for j in range(n):
            out[j + 1] = self.f(out[j])
        if not np.all(np.isfinite(out)):
            raise NumericalError("orbit produced non-finite values")
        return out

    def backward_orbit(self, x, n: int) -> np.ndarray:
        """Points ``f^{-n}(x), ..., f^{-1}(x), x`` in forward order."""
        out = np.empty((n + 1, self.d))
        out[n] = np.mod(x, 1.0)
        for j in range(n, 0, -1):
            out[j - 1] = self.f_inv(out[j])
        return out

    def base_eigen(self):
        """Eigenvalues of the base matrix sorted by decreasing modulus, with unit eigenvectors."""
        w, V = np.linalg.eig(self.base)
        order = np.argsort(-np.abs(w))
        w, V = w[order].real, V[:, order].real
        return w, V / np.linalg.norm(V, axis=0)

    @property
    def unstable_dim(self) -> int:
        return int(np.sum(np.abs(np.linalg.eigvals(self.base)) > 1))


def cat_map(eps: float = 0.0) -> TorusMapSystem:
    return TorusMapSystem(np.array([[2, 1], [1, 1]]), eps, "cat2d")


def block_map(eps: float = 0.0) -> TorusMapSystem:
    A = np.zeros((4, 4))
    A[:2, :2] = [[2, 1], [1, 1]]
    A[2:, 2:] = [[3, 1], [2, 1]]
    return TorusMapSystem(A, eps, "block4d")


TORUS_BUILTINS = {"cat2d": cat_map, "block4d": block_map}


def torus_system_from_config(cfg: dict) -> TorusMapSystem:
    eps = float(cfg.get("eps", 0.0))
    if "builtin" in cfg:
        if cfg["builtin"] not in TORUS_BUILTINS:
            raise ModelError(f"unknown torus builtin {cfg['builtin']!r}")
        return TORUS_BUILTINS[cfg["builtin"]](eps)
    if "matrix" in cfg:
        return TorusMapSystem(np.array(cfg["matrix"]), eps, cfg.get("name", "torus"))
    raise ModelError("torus system needs 'builtin' or 'matrix'")


# ------------------------------------------------------------------ exponents

def _initial_frame(d: int) -> np.ndarray:
    # generic fixed frame: the identity is invariant under block-diagonal bases
    Q, _ = np.linalg.qr(np.random.default_rng(2024).normal(size=(d, d)))
    return Q


def _qr_pos(M):
    Q, R = np.linalg.qr(M)
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s, (R.T * s).T


def lyapunov_exponents(sys: TorusMapSystem, x, N: int = 500, transient: int = 100) -> np.ndarray:
    """All Lyapunov exponents along the orbit of ``x``, largest first.

    Benettin/QR: ``transient`` steps align the frame before ``N`` steps of
    accumulating ``log R_ii``.
    """
    if N < 50:
        raise InputError("horizon N must be >= 50")
    y = np.mod(np.asarray(x, dtype=float), 1.0)
    Q = _initial_frame(sys.d)
    sums = np.zeros(sys.d)
    for step in range(transient + N):
        Q, R = _qr_pos(sys.df(y) @ Q)
        if step >= transient:
            sums += np.log(np.diag(R))
        y = sys.f(y)
    if not np.all(np.isfinite(sums)):
        raise NumericalError("QR accumulation blew up")
    return np.sort(sums / N)[::-1]


def exponentials(exponents: Sequence[float]) -> np.ndarray:
    """Exponentials of the positive exponents, ascending (``lambda_1 < ... < lambda_s``)."""
    e = np.asarray(exponents)
    return np.sort(np.exp(e[e > 0]))


@dataclass
class CovariantFrame:
    """Covariant Lyapunov vectors along an orbit segment.

    ``points[j]`` is the ``j``-th orbit point and ``vectors[j]`` has the unit
    covariant vectors as columns, ordered by decreasing exponent.
    """

    points: np.ndarray
    vectors: np.ndarray
    exponents: np.ndarray


def covariant_vectors(sys: TorusMapSystem, x, length: int = 0, past: int = 60, future: int = 60) -> CovariantFrame:
    """Ginelli's algorithm on ``f^{-past}(x) ... f^{length+future}(x)``; vectors returned for ``x ... f^length(x)``."""
    pre = sys.backward_orbit(x, past)
    post = sys.orbit(x, length + future)
    pts = np.vstack([pre[:-1], post])
    total = pts.shape[0] - 1
    d = sys.d
    Q = _initial_frame(d)
    Qs = np.empty((total + 1, d, d))
    Rs = np.empty((total + 1, d, d))
    Qs[0] = Q
    logs = np.zeros(d)
    for j in range(total):
        Q, R = _qr_pos(sys.df(pts[j]) @ Q)
        Qs[j + 1], Rs[j + 1] = Q, R
        if j >= past:
            logs += np.log(np.diag(R))
    C = np.eye(d)
    Cs = np.empty((length + 1, d, d))
    for j in range(total, past, -1):
        if j <= past + length:
            Cs[j - past] = C
        C = np.linalg.solve(Rs[j], C)
        C /= np.linalg.norm(C, axis=0)
    Cs[0] = C
    V = np.einsum("jab,jbc->jac", Qs[past : past + length + 1], Cs)
    V /= np.linalg.norm(V, axis=1)[:, None, :]
    steps = max(length + future, 1)
    return CovariantFrame(pts[past : past + length + 1], V, logs / steps)


@dataclass
class Splitting:
    """Unstable splitting at a point: slowest unstable direction and the faster rest."""

    point: np.ndarray
    slow: np.ndarray  # spans E^u_1
    fast: np.ndarray  # columns span the faster unstable directions (may be empty)
    unstable: np.ndarray
    stable: np.ndarray
    exponents: np.ndarray
    residual: float


def _direction_residual(J, e, e_next) -> float:
    img = J @ e
    img /= np.linalg.norm(img)
    return float(min(np.linalg.norm(img - e_next), np.linalg.norm(img + e_next)))


def oseledets_splitting(sys: TorusMapSystem, x, N: int = 60, gap_tol: float = 1e-3) -> Splitting:
    """``E^u_1(x)`` and ``E^u_2(x) + ... + E^u_s(x)`` from covariant vectors with ``N`` steps of margin each side."""
    frame = covariant_vectors(sys, x, length=1, past=N, future=N)
    u = sys.unstable_dim
    ex = frame.exponents
    if np.any(np.abs(np.diff(ex)) < gap_tol):
        raise ConditioningError(f"exponents {ex.tolist()} are closer than {gap_tol}")
    V0, V1 = frame.vectors[0], frame.vectors[1]
    J = sys.df(frame.points[0])
    resid = max(_direction_residual(J, V0[:, j], V1[:, j]) for j in range(sys.d))
    return Splitting(frame.points[0], V0[:, u - 1], V0[:, : u - 1], V0[:, :u], V0[:, u:], ex, resid)


# ------------------------------------------------------------------ constant ladder

@dataclass
class LyapunovLadder:
    lambdas: tuple
    alpha: float
    nu0: float
    nu1: Optional[float]
    nu2: Optional[float]
    mu_max: float
    gamma: float
    degenerate: bool
    mu: float = field(init=False)
    mu1: float = field(init=False)
    mu2: Optional[float] = field(init=False)
    lam1_prime: float = field(init=False)
    lam1_tilde: float = field(init=False)
    mu1_tilde: float = field(init=False)

    def __post_init__(self):
        self.set_mu(0.5 * self.mu_max)

    def set_mu(self, mu: float) -> None:
        """Fix the working regularity exponent and refresh the intermediate constants."""
        if not 0 < mu < self.mu_max:
            raise InputError(f"mu must lie in (0, {self.mu_max})")
        l1 = self.lambdas[0]
        self.mu = mu
        self.mu1 = l1 * math.exp(-mu)
        self.mu1_tilde = l1 * math.exp(-2 * mu)
        self.lam1_prime = l1 * math.exp(mu)
        self.lam1_tilde = l1 * math.exp(2 * mu)
        self.mu2 = None if self.degenerate else self.lambdas[1] * math.exp(-mu)

    def violations(self) -> list[str]:
        """Every displayed inequality of the ladder that fails for the current ``mu``."""
        bad = []
        lam, a, mu = self.lambdas, self.alpha, self.mu
        for j in range(len(lam) - 1):
            if not lam[j] ** a < lam[j + 1]:
                bad.append(f"lambda_{j + 1}^alpha < lambda_{j + 2}")
        if not 1 < self.nu0 < lam[0]:
            bad.append("1 < nu0 < lambda_1")
        if not self.nu0 * math.exp(8 * mu) < lam[0]:
            bad.append("nu0 e^{8mu} < lambda_1")
        if not mu < a / (2 * (2 + a)) * math.log(self.nu0):
            bad.append("mu < alpha/(2(2+alpha)) ln nu0")
        if not self.degenerate:
            l1, l2, n1, n2 = lam[0], lam[1], self.nu1, self.nu2
            if not l1 < n1 < n2 < l2:
                bad.append("lambda_1 < nu1 < nu2 < lambda_2")
            if not n2 * math.exp(8 * mu) < l2:
                bad.append("nu2 e^{8mu} < lambda_2")
            if not l1 * math.exp(8 * mu) < n1:
                bad.append("lambda_1 e^{8mu} < nu1")
            if not n1 * math.exp(8 * mu) < n2:
                bad.append("nu1 e^{8mu} < nu2")
            if not mu < math.log((l1 + n1) / (2 * l1)):
                bad.append("mu < ln((lambda_1 + nu1)/(2 lambda_1))")
            if not mu < math.log(2 * l2 / (l2 + n2)):
                bad.append("mu < ln(2 lambda_2/(lambda_2 + nu2))")
            if not self.gamma < 1:
                bad.append("gamma < 1")
            chain = [self.nu0, self.mu1_tilde, self.mu1, l1, self.lam1_prime, self.lam1_tilde, n1, n2, self.mu2, l2]
            if not all(p < q for p, q in zip(chain, chain[1:])):
                bad.append("nu0 < mu1~ < mu1 < lambda_1 < lambda_1' < lambda_1~ < nu1 < nu2 < mu2 < lambda_2")
        return bad

    def to_dict(self) -> dict:
        keys = ["lambdas", "alpha", "nu0", "nu1", "nu2", "mu_max", "gamma", "degenerate", "mu",
                "mu1", "mu2", "lam1_prime", "lam1_tilde", "mu1_tilde"]
        out = {k: getattr(self, k) for k in keys}
        out["lambdas"] = list(self.lambdas)
        return out


def build_ladder(lambdas: Sequence[float]) -> LyapunovLadder:
    """Constants ``alpha, nu0, nu1, nu2, mu_max, gamma`` from the exponentials ``lambda_1 < ... < lambda_s``.

    ``mu_max`` is the supremum of admissible ``mu``: the smallest of the
    bounds ``ln(lambda_1/nu0)/8``, ``ln(lambda_2/nu2)/8``,
    ``alpha ln(nu0)/(2(2+alpha))``, ``ln((lambda_1+nu1)/(2 lambda_1))`` and
    ``ln(2 lambda_2/(lambda_2+nu2))``.
    """
    lam = tuple(float(v) for v in sorted(lambdas))
    if not lam or lam[0] <= 1:
        raise InputError("need exponentials lambda_1 > 1")
    if len(lam) >= 2 and not lam[0] < lam[1]:
        raise InputError("need lambda_1 < lambda_2")
    alpha = 1.0
    for lo, hi in zip(lam, lam[1:]):
        if not lo < hi:
            # lambda_j^alpha < lambda_j needs alpha < 1; no largest value exists
            alpha = min(alpha, 1 - 1e-6)
        else:
            alpha = min(alpha, 1.0)
    l1 = lam[0]
    nu0 = (1 + l1) / 2
    bounds = [math.log(l1 / nu0) / 8, alpha / (2 * (2 + alpha)) * math.log(nu0)]
    if len(lam) == 1:
        gamma = (nu0 / l1) ** alpha
        return LyapunovLadder(lam, alpha, nu0, None, None, min(bounds), gamma, True)
    l2 = lam[1]
    nu1 = l1 + (l2 - l1) / 3
    nu2 = l1 + 2 * (l2 - l1) / 3
    bounds += [
        math.log(l2 / nu2) / 8,
        math.log((l1 + nu1) / (2 * l1)),
        math.log(2 * l2 / (l2 + nu2)),
    ]
    gamma = max((nu0 / l1) ** alpha, nu1 / nu2)
    return LyapunovLadder(lam, alpha, nu0, nu1, nu2, min(bounds), gamma, False)


# ------------------------------------------------------------------ regularity

@dataclass
class RegularityEstimate:
    basepoint: np.ndarray
    N: int
    mu: float
    Rhat: float
    per_block: list
    orbit_Rhat: np.ndarray = field(repr=False)
    log_ratios: np.ndarray = field(repr=False)

    @property
    def tempered_fraction(self) -> float:
        """Share of orbit steps whose ratio ``R(f x)/R(x)`` lies in ``[e^-mu, e^mu]``."""
        return float(np.mean(np.abs(self.log_ratios) <= self.mu + 1e-12))


def _log_R(growth: np.ndarray, N: int, mu: float, starts: int) -> np.ndarray:
    """``log Rhat`` at orbit indices ``0..starts-1`` from per-step log growth deviations."""
    S = np.concatenate([[0.0], np.cumsum(growth)])
    n = np.arange(N + 1)
    out = np.empty(starts)
    for j in range(starts):
        dev = np.abs(S[j : j + N + 1] - S[j])
        out[j] = max(0.0, float(np.max(dev - n * mu)))
    return out


def regularity_estimate(
    sys: TorusMapSystem, x, N: int = 200, mu: float = 0.05, lambdas: Optional[Sequence[float]] = None
) -> RegularityEstimate:
    """Least ``R >= 1`` with ``R^-1 e^{-n mu} <= |df^n v|/(lambda_i^n |v|) <= R e^{n mu}`` for ``n <= N``.

    ``v`` runs over the unit covariant vector of each unstable block.  The
    same estimate is repeated at ``f^j(x)`` for ``j < N`` to measure how
    tempered ``Rhat`` is along the orbit.  ``lambdas`` defaults to the base
    eigenvalues for linear maps and to long-horizon exponents otherwise.
    """
    if mu <= 0:
        raise InputError("mu must be positive")
    u = sys.unstable_dim
    if lambdas is None:
        if sys.eps == 0:
            lambdas = np.abs(sys.base_eigen()[0][:u])
        else:
            lambdas = np.exp(lyapunov_exponents(sys, x, N=max(4 * N, 2000))[:u])
    else:
        lambdas = np.sort(np.asarray(lambdas, dtype=float))[::-1]
    frame = covariant_vectors(sys, x, length=2 * N + 1)
    logR = np.zeros(N + 1)
    per_block = []
    for i in range(u):
        growth = np.array(
            [np.log(np.linalg.norm(sys.df(frame.points[j]) @ frame.vectors[j][:, i])) for j in range(2 * N + 1)]
        ) - math.log(lambdas[i])
        lr = _log_R(growth, N, mu, N + 1)
        per_block.append(float(math.exp(lr[0])))
        logR = np.maximum(logR, lr)
    return RegularityEstimate(np.asarray(x, dtype=float), N, mu, float(math.exp(logR[0])), per_block, np.exp(logR), np.diff(logR))


# ------------------------------------------------------------------ ball sets

@dataclass
class BallSets:
    ell_hat: float
    ell_hat1: float
    ell_tilde: float

    @property
    def G(self) -> float:
        return self.ell_hat / self.ell_hat1


def ball_sets(sys: TorusMapSystem, z, p: int, delta: float) -> BallSets:
    """``ell`` of the unstable ball sets for a linear torus map, where charts are global.

    With ``f^`` linear, ``B^`` and ``B~`` coincide; ``ell(B^)`` is ``delta``
    over the smallest singular value of ``A^p`` restricted to ``E^u`` and
    ``ell(B^{u,1})`` is ``delta / |A^p e_1|`` for the unit slow direction.
    """
    if sys.eps != 0:
        raise InputError("ball_sets needs a linear (eps = 0) system")
    if p < 0 or delta <= 0:
        raise InputError("need p >= 0 and delta > 0")
    u = sys.unstable_dim
    w, V = sys.base_eigen()
    U, _ = np.linalg.qr(V[:, :u])
    Ap = np.linalg.matrix_power(sys.base, p)
    smin = float(np.linalg.svd(Ap @ U, compute_uv=False).min())
    ell_hat = delta / smin
    e1 = V[:, u - 1]
    ell_hat1 = delta / float(np.linalg.norm(Ap @ e1))
    return BallSets(ell_hat, ell_hat1, ell_hat)


# ------------------------------------------------------------------ linearization ratio

@dataclass
class LinearizationResult:
    ratio: float
    degenerate: bool
    vp_norm: float
    wp_norm: float

    @property
    def in_bounds(self) -> bool:
        return (not self.degenerate) and 0.5 <= self.ratio <= 2.0


def _coords(V: np.ndarray, vec: np.ndarray) -> np.ndarray:
    return np.linalg.solve(V, vec)


def linearization_ratio(
    sys: TorusMapSystem,
    z,
    p: int,
    v: np.ndarray,
    chart_radius: float = 0.05,
    margin: int = 40,
    newton_steps: int = 8,
) -> LinearizationResult:
    """``|w_p^(1)| / |v_p^(1)|`` comparing the chart map with its linearization at the origin.

    Chart: ``u in E^u(z)`` goes to the point of the local unstable manifold of
    ``z`` whose component in ``E^u`` (along ``E^s``) is ``u``.  ``v_j`` is the
    chart image of ``f^j`` of that point, ``w_j = df^j(z) v``, and the
    superscript ``(1)`` takes the component in the slowest unstable direction.
    """
    v = np.asarray(v, dtype=float)
    u = sys.unstable_dim
    frame = covariant_vectors(sys, z, length=p + margin, past=margin, future=margin)
    back = covariant_vectors(sys, sys.backward_orbit(z, margin)[0], length=margin, past=margin, future=margin)
    V0 = frame.vectors[0]
    if sys.eps == 0:
        D = v.copy()
    else:
        pts_back = back.points
        U_seed = back.vectors[0][:, :u]
        J = U_seed.copy()
        for j in range(margin):
            J = sys.df(pts_back[j]) @ J
        Ju = _coords(V0, J)[:u]
        target = _coords(V0, v)[:u]
        c = np.linalg.solve(Ju, target)

        def push(c):
            d = U_seed @ c
            for j in range(margin):
                d = sys.f_diff(pts_back[j], d)
            return d

        for _ in range(newton_steps):
            D = push(c)
            miss = target - _coords(V0, D)[:u]
            if np.linalg.norm(miss) <= 1e-14 * np.linalg.norm(target):
                break
            c = c + np.linalg.solve(Ju, miss)
        D = push(c)
    w = v.copy()
    for j in range(p):
        pt = frame.points[j]
        w = sys.df(pt) @ w
        D = sys.f_diff(pt, D)
        if np.linalg.norm(D) > chart_radius:
            raise ChartEscapeError(f"orbit of the chart point left radius {chart_radius} at step {j + 1}; use a smaller v")
    Vp = frame.vectors[p]
    cv = _coords(Vp, D)
    cw = _coords(Vp, w)
    vp1 = abs(cv[u - 1]) * np.linalg.norm(Vp[:, u - 1])
    wp1 = abs(cw[u - 1]) * np.linalg.norm(Vp[:, u - 1])
    slow_in = abs(_coords(V0, v)[u - 1])
    if vp1 == 0 or slow_in <= 1e-12 * np.linalg.norm(v):
        return LinearizationResult(float("nan"), True, float(vp1), float(wp1))
    return LinearizationResult(float(wp1 / vp1), False, float(vp1), float(wp1))


def linearization_sweep(
    sys: TorusMapSystem, count: int = 100, p_max: int = 20, target: float = 1e-4, seed: int = 0
) -> list[dict]:
    """Random ``(z, p, v)`` cells: ``v`` in ``E^u_1(z)`` sized so ``|v_p|`` is about ``target``."""
    rng = np.random.default_rng(seed)
    u = sys.unstable_dim
    rows = []
    for idx in range(count):
        x = rng.random(sys.d)
        p = int(rng.integers(1, p_max + 1))
        z = sys.backward_orbit(x, p)[0]
        split = oseledets_splitting(sys, z)
        coeff = rng.normal(size=u)
        coeff[u - 1] = abs(coeff[u - 1]) + 0.5
        v = split.unstable @ coeff
        wp = v.copy()
        y = np.array(z)
        for _ in range(p):
            wp = sys.df(y) @ wp
            y = sys.f(y)
        v = v * (target * (0.2 + 0.8 * rng.random()) / np.linalg.norm(wp))
        res = linearization_ratio(sys, z, p, v)
        rows.append({"cell": idx, "p": p, "ratio": res.ratio, "degenerate": res.degenerate, "in_bounds": res.in_bounds})
    return rows


# ------------------------------------------------------------------ stable balls

@dataclass
class StableBallResult:
    ratios: np.ndarray  # m = 1..n
    diam1: np.ndarray
    diam2: np.ndarray
    samples: int

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratios))


def _stable_seed(sys: TorusMapSystem) -> np.ndarray:
    w, V = sys.base_eigen()
    return V[:, sys.unstable_dim :]


def _pull_back_all(sys: TorusMapSystem, pts: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """Pull displacements at ``pts[-1]`` back along the orbit; result ``[j]`` sits at ``pts[j]``."""
    L = pts.shape[0] - 1
    out = np.empty((L + 1,) + seeds.shape)
    out[L] = seeds
    d = seeds
    for j in range(L, 0, -1):
        d = sys.f_inv_diff(pts[j], d)
        out[j - 1] = d
    return out


def _radius_along(sys: TorusMapSystem, pts: np.ndarray, direction: np.ndarray, delta: float) -> float:
    """Seed length ``t`` along ``direction`` at the far end whose pull-back to ``pts[0]`` has norm ``delta``."""
    J = direction.copy()
    for j in range(pts.shape[0] - 1, 0, -1):
        J = sys.df_inv(pts[j]) @ J
    t_lin = delta / np.linalg.norm(J)
    fn = lambda s: float(np.linalg.norm(_pull_back_all(sys, pts, (s * t_lin) * direction[None, :])[0, 0])) - delta
    lo, hi = 0.5, 2.0
    for _ in range(40):
        if fn(lo) < 0 < fn(hi):
            break
        lo, hi = lo / 2, hi * 2
    else:
        raise NumericalError("could not bracket the stable-ball boundary")
    return brentq(fn, lo, hi, xtol=1e-15, rtol=1e-15) * t_lin


def _diam(points: np.ndarray) -> float:
    if points.shape[0] < 2:
        return 0.0
    return float(np.max(pdist(points)))


def stable_ball_ratio(
    sys: TorusMapSystem, x, delta1: float, delta2: float, n: int, extra: int = 20, samples: int = 401, directions: int = 64
) -> StableBallResult:
    """``diam f^m(B^s(x, delta2)) / diam f^m(B^s(x, delta1))`` for ``m = 1..n``.

    The stable leaf is only ever traversed backwards: a seed along the stable
    eigenspace at ``f^{n+extra}(x)`` is pulled back, which both converges to
    the true leaf and records its images ``f^m(B^s)`` at every ``f^m(x)``.
    ``B^s(x, delta)`` is the leaf piece within distance ``delta`` of ``x``.
    """
    if not 0 < delta1 <= delta2:
        raise InputError("need 0 < delta1 <= delta2")
    if n < 1:
        raise InputError("n must be >= 1")
    pts = sys.orbit(x, n + extra)
    S = _stable_seed(sys)
    ks = S.shape[1]
    if ks == 1:
        dirs = [S[:, 0], -S[:, 0]]
    else:
        th = np.linspace(0, 2 * np.pi, directions, endpoint=False)
        dirs = [S @ np.array([np.cos(t), np.sin(t)]) for t in th]

    def images(delta, count):
        radii = [_radius_along(sys, pts, dvec, delta) for dvec in dirs]
        if ks == 1:
            t = np.linspace(-radii[1], radii[0], count)
            seeds = t[:, None] * S[:, 0][None, :]
        else:
            seeds = np.array([r * dvec for r, dvec in zip(radii, dirs)])
        return _pull_back_all(sys, pts, seeds)

    count = samples
    while True:
        a1, a2 = images(delta1, count), images(delta2, count)
        d1 = np.array([_diam(a1[m]) for m in range(1, n + 1)])
        d2 = np.array([_diam(a2[m]) for m in range(1, n + 1)])
        if ks > 1 or count >= 12801:
            break
        gap = max(
            float(np.max(np.linalg.norm(np.diff(arr[m], axis=0), axis=1)) / _diam(arr[m]))
            for arr in (a1, a2)
            for m in range(1, n + 1)
        )
        if gap < 1e-2:
            break
        count = 2 * count - 1
    if np.any(d1 <= 0) or not np.all(np.isfinite(d1 * d2)):
        bad = int(np.argmax((d1 <= 0) | ~np.isfinite(d1 * d2))) + 1
        raise NumericalError(f"stable leaf lost resolution at m = {bad}")
    return StableBallResult(d2 / d1, d1, d2, count)


def stable_ball_sweep(
    sys: TorusMapSystem, basepoints: int, delta1: float, delta2: float, n: int, seed: int = 0, threads: Optional[int] = None
) -> list[dict]:
    rng = np.random.default_rng(seed)
    xs = [rng.random(sys.d) for _ in range(basepoints)]
    run = lambda x: stable_ball_ratio(sys, x, delta1, delta2, n)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, xs))
    else:
        results = [run(x) for x in xs]
    rows = []
    for i, (x, res) in enumerate(zip(xs, results)):
        for m, r in enumerate(res.ratios, start=1):
            rows.append({"basepoint": i, "x": x.tolist(), "m": m, "ratio": float(r)})
    return rows
