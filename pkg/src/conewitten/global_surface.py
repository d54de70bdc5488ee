"""Witten Laplacian on a compact surface of revolution with conic points.

The surface is ``ds^2 + rho(s)^2 dphi^2`` on ``(0, L) x [0, 2 pi m)``.  Near
``s = 0`` (and, for the suspension, near ``s = L``) ``rho(s) ~ s``, a cone
over the circle of length ``2 pi m``; a smooth pole has ``rho ~ (L - s)/m``.
The Morse function ``f = f(s)`` is radial, so every Fourier mode
``cos(kappa phi), kappa = k/m`` gives an independent complex

    u  --d0-->  (a ds, b dphi)  --d1-->  w ds^dphi,
    d0 u = (u', -kappa u),   d1 (a, b) = b' + kappa a.

It is discretized on a staggered grid (``u, w`` at nodes, ``a, b`` at cells)
so that ``d1 d0 = 0`` exactly, and deformed by exact conjugation
``d_t = e^{-t f} d e^{t f}``.  Inner products carry the weights ``rho`` for
``u, a`` and ``1/rho`` for ``b, w``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import (
    DegenerateFitError,
    InvalidParameterError,
    NumericalFailureError,
    TruncationInsufficientError,
)
from .ih_calculator import ConeMorseDatum, Empty, FullLink, morse_contribution
from .model_operator import lowest_eigenpairs
from .morse_checker import MorseCounts, total_counts

PRESETS = ("spindle_min", "spindle_max", "suspension", "round_sphere")
CONIC_SLOPE_FRACTION = 0.05


@dataclass(frozen=True)
class GlobalSurface:
    name: str
    m: int
    length: float
    rho: Callable
    f: Callable
    fprime: Callable
    ends: tuple  # ("conic" | "smooth", "conic" | "smooth") at s = 0 and s = L
    K_fourier: int = 8
    N: int = 2048
    eps: float = 1e-4  # inner cutoff as a fraction of the length
    smooth_counts: tuple = (0, 0, 0)
    singular: tuple = ()
    betti2: tuple = (1, 0, 1)

    @property
    def counts(self) -> MorseCounts:
        return total_counts(self.smooth_counts, [morse_contribution(d) for d in self.singular], self.betti2)

    def with_(self, **kw) -> "GlobalSurface":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return GlobalSurface(**d)


def _ramp_f(L: float, s0: float):
    """``f = s`` on ``[0, s0]``, then increasing to a non-degenerate maximum at ``L``."""
    alpha = 0.5 * np.pi / (L - s0)

    def fp(s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= s0, 1.0, np.sin(alpha * (L - s)))

    def f(s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= s0, s, s0 + np.cos(alpha * (L - s)) / alpha)

    return f, fp


def build_preset(name: str, m: int = 2, *, N: int = 2048, K_fourier: int = 8, eps: float = 1e-4) -> GlobalSurface:
    """Example surfaces with known critical structure.

    ``spindle_min``: conic minimum (halflink empty) at ``s = 0``, smooth
    maximum at the other pole.  ``spindle_max``: the same with ``f`` negated.
    ``suspension``: conic points at both poles, ``f = s``.  ``round_sphere``:
    the unit sphere (``m = 1``) with ``f = -cos s``, for smooth-limit checks.
    """
    if name not in PRESETS:
        raise InvalidParameterError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    if int(m) != m or m < 1:
        raise InvalidParameterError("m must be an integer >= 1")
    if N < 16:
        raise InvalidParameterError("N must be >= 16")
    if K_fourier < 0:
        raise InvalidParameterError("K_fourier must be >= 0")
    L = np.pi
    s0 = CONIC_SLOPE_FRACTION * L
    nu1 = lambda c: ConeMorseDatum(1, (1, 1), c)  # noqa: E731
    common = dict(K_fourier=K_fourier, N=N, eps=eps)
    if name in ("spindle_min", "spindle_max"):
        def rho(s):
            return np.sin(s) * (1 + (1 / m - 1) * 0.5 * (1 - np.cos(s)))

        f, fp = _ramp_f(L, s0)
        if name == "spindle_min":
            return GlobalSurface(name, m, L, rho, f, fp, ("conic", "smooth"), smooth_counts=(0, 0, 1),
                                 singular=(nu1(Empty()),), **common)
        return GlobalSurface(name, m, L, rho, lambda s: -f(s), lambda s: -fp(s), ("conic", "smooth"),
                             smooth_counts=(1, 0, 0), singular=(nu1(FullLink()),), **common)
    if name == "suspension":
        return GlobalSurface(name, m, L, np.sin, lambda s: np.asarray(s, dtype=float),
                             lambda s: np.ones_like(np.asarray(s, dtype=float)), ("conic", "conic"),
                             smooth_counts=(0, 0, 0), singular=(nu1(Empty()), nu1(FullLink())), **common)
    if m != 1:
        raise InvalidParameterError("round_sphere needs m = 1")
    return GlobalSurface(name, 1, L, np.sin, lambda s: -np.cos(s), np.sin, ("smooth", "smooth"),
                         smooth_counts=(1, 0, 1), singular=(), **common)


def surface_grid(surface: GlobalSurface) -> np.ndarray:
    """Nodes on ``[eps L, L - eps L]``: geometric within 10% of each pole,
    uniform in between; an eighth of the points in each graded part."""
    L, N = surface.length, surface.N
    a = surface.eps * L
    b = 0.1 * L
    ng = max(N // 8, 4)
    geo = np.geomspace(a, b, ng)
    mid = np.linspace(b, L - b, N - 2 * ng + 2)[1:-1]
    return np.concatenate([geo, mid, L - geo[::-1]])


@dataclass(frozen=True)
class ModeComplex:
    """Discrete deformed complex of one Fourier mode (reduced unknowns).

    ``B0``, ``B1`` are the mass-normalized differentials, so the Laplacians
    are ``C0 = B0^T B0``, ``C1 = B0 B0^T + B1^T B1``, ``C2 = B1 B1^T``.
    """

    k: int
    kappa: float
    t: float
    multiplicity: int
    D0: sp.csr_matrix
    D1: sp.csr_matrix
    M0: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    B0: sp.csr_matrix = field(repr=False)
    B1: sp.csr_matrix = field(repr=False)

    def laplacian(self, degree: int) -> sp.csr_matrix:
        if degree == 0:
            return (self.B0.T @ self.B0).tocsr()
        if degree == 1:
            return (self.B0 @ self.B0.T + self.B1.T @ self.B1).tocsr()
        if degree == 2:
            return (self.B1 @ self.B1.T).tocsr()
        raise InvalidParameterError(f"degree {degree} outside 0..2")

    def nilpotency_defect(self) -> float:
        P = self.D1 @ self.D0
        return float(abs(P).max()) if P.nnz else 0.0

    def adjointness_defect(self, seed: int = 0) -> float:
        """``<d u, v> - <u, delta v>`` with ``delta = M^-1 d^T M`` on random data."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for D, Ma, Mb in ((self.D0, self.M0, self.M1), (self.D1, self.M1, self.M2)):
            u = rng.standard_normal(D.shape[1])
            v = rng.standard_normal(D.shape[0])
            delta_v = (D.T @ (Mb * v)) / Ma
            lhs = np.dot(Mb * (D @ u), v)
            rhs = np.dot(Ma * u, delta_v)
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1.0))
        return worst


def assemble_mode_complex(surface: GlobalSurface, k: int, t: float, f_sign: float = 1.0) -> ModeComplex:
    """Deformed complex for the Fourier mode ``kappa = k/m``.

    Cochains: ``u`` at nodes, ``a`` (ds part) at cells, ``b`` (dphi part) at
    nodes, ``w`` at cells.  The end nodes stand in for the poles: their ring
    edge ``b`` is dropped, and ``u`` there is kept only for ``k = 0``.
    ``f_sign = -1`` deforms with ``-f``.
    """
    if not 0 <= k <= surface.K_fourier * surface.m:
        raise InvalidParameterError(f"Fourier index {k} outside 0..{surface.K_fourier * surface.m}")
    if t < 0:
        raise InvalidParameterError("t must be non-negative")
    s = surface_grid(surface)
    n = len(s)
    h = np.diff(s)
    sc = 0.5 * (s[1:] + s[:-1])
    H = np.zeros(n)
    H[:-1] += 0.5 * h
    H[1:] += 0.5 * h
    kappa = k / surface.m
    fn = f_sign * t * surface.f(s)
    fc = f_sign * t * surface.f(sc)
    rn, rc = surface.rho(s), surface.rho(sc)
    if np.any(rn <= 0) or np.any(rc <= 0):
        raise InvalidParameterError("profile must be positive on the grid")
    c = np.arange(n - 1)
    # conjugated difference nodes -> cells: e^{t (f_node - f_cell)} / h
    ep = np.exp(fn[1:] - fc) / h
    em = np.exp(fn[:-1] - fc) / h
    diff = sp.csr_matrix((np.concatenate([ep, -em]), (np.concatenate([c, c]), np.concatenate([c + 1, c]))),
                         shape=(n - 1, n))
    ukeep = np.arange(n) if k == 0 else np.arange(1, n - 1)
    bkeep = np.arange(1, n - 1)
    Du = diff[:, ukeep]
    Db = diff[:, bkeep]
    # d0 u = (diff u, -kappa u); d1 (a, b) = kappa a + diff b
    sel = sp.csr_matrix((np.ones(len(bkeep)), (np.arange(len(bkeep)), bkeep)), shape=(len(bkeep), n))[:, ukeep]
    D0 = sp.vstack([Du, -kappa * sel]).tocsr()
    D1 = sp.hstack([kappa * sp.eye(n - 1), Db]).tocsr()
    M0 = (rn * H)[ukeep]
    M1 = np.concatenate([rc * h, (H / rn)[bkeep]])
    M2 = h / rc
    B0 = (sp.diags(np.sqrt(M1)) @ D0 @ sp.diags(1 / np.sqrt(M0))).tocsr()
    B1 = (sp.diags(np.sqrt(M2)) @ D1 @ sp.diags(1 / np.sqrt(M1))).tocsr()
    cx = ModeComplex(k, kappa, float(t), 1 if k == 0 else 2, D0, D1, M0, M1, M2, B0, B1)
    if cx.adjointness_defect() > 1e-10:
        raise NumericalFailureError("discrete codifferential is not the adjoint of d")
    return cx


def mode_eigenvalues(cx: ModeComplex, degree: int, threshold: float = 1.0, J: int = 6) -> np.ndarray:
    """Lowest eigenvalues of one mode Laplacian, enough to pass ``threshold``."""
    C = cx.laplacian(degree)
    n = C.shape[0]
    shift = -1e-2
    while True:
        w, _, _ = lowest_eigenpairs(C, min(J, n), shift)
        if w[-1] > threshold or len(w) >= n:
            return w
        J *= 2


@dataclass(frozen=True)
class CountReport:
    preset: str
    t: float
    counts: tuple
    expected: tuple
    lambda_next: float
    small: tuple  # per degree, the eigenvalues in [0, threshold]
    threshold: float

    @property
    def euler(self) -> int:
        return sum((-1) ** i * c for i, c in enumerate(self.counts))

    @property
    def passed(self) -> bool:
        return self.counts == self.expected

    @property
    def max_small(self) -> float:
        vals = [abs(x) for deg in self.small for x in deg]
        return max(vals) if vals else 0.0


def _raw_counts(surface: GlobalSurface, t: float, threshold: float):
    counts = [0, 0, 0]
    small = [[], [], []]
    nxt = np.inf
    for k in range(surface.K_fourier * surface.m + 1):
        cx = assemble_mode_complex(surface, k, t)
        for deg in range(3):
            w = mode_eigenvalues(cx, deg, threshold)
            inside = w[w <= threshold]
            counts[deg] += cx.multiplicity * len(inside)
            small[deg].extend([float(x) for x in inside for _ in range(cx.multiplicity)])
            above = w[w > threshold]
            if len(above):
                nxt = min(nxt, float(above[0]))
    return tuple(counts), tuple(tuple(sorted(x)) for x in small), nxt


def count_small_eigenvalues(surface: GlobalSurface, t: float, threshold: float = 1.0, t0: float = 10.0,
                            check_truncation: bool = True) -> CountReport:
    """Eigenvalues of ``Delta_t`` in ``[0, threshold]`` per degree over all
    retained Fourier modes, and the next eigenvalue above the window.

    With ``check_truncation`` the counts are recomputed with ``K_fourier + 4``
    and a mismatch raises ``TruncationInsufficientError``.
    """
    if t < t0:
        raise InvalidParameterError(f"t = {t} below the calibrated t0 = {t0}")
    counts, small, nxt = _raw_counts(surface, t, threshold)
    if check_truncation:
        wider, _, _ = _raw_counts(surface.with_(K_fourier=surface.K_fourier + 4), t, threshold)
        if wider != counts:
            raise TruncationInsufficientError(f"counts {counts} change to {wider} with K_fourier + 4")
    return CountReport(surface.name, float(t), counts, surface.counts.total, nxt, small, threshold)


@dataclass(frozen=True)
class GrowthFit:
    ts: np.ndarray
    lambda_next: np.ndarray
    slope: float
    C: float
    max_small: np.ndarray

    @property
    def passed(self) -> bool:
        return self.slope >= 0.9 and self.C > 0


def gap_growth_scan(surface: GlobalSurface, ts, threshold: float = 1.0, t0: float = 10.0 / 1.25) -> GrowthFit:
    """Fit ``log lambda_next = log C + slope log t`` over a geometric ``t`` list."""
    ts = np.asarray(ts, dtype=float)
    if len(ts) < 4:
        raise DegenerateFitError("need at least four values of t")
    reps = [count_small_eigenvalues(surface, t, threshold, t0=min(t0, ts.min()), check_truncation=False)
            for t in ts]
    lam = np.array([r.lambda_next for r in reps])
    if not np.all(np.isfinite(lam)):
        raise DegenerateFitError("no eigenvalue above the window at some t")
    slope, logc = np.polyfit(np.log(ts), np.log(lam), 1)
    return GrowthFit(ts, lam, float(slope), float(np.exp(logc)), np.array([r.max_small for r in reps]))


def hodge_duality_defect(surface: GlobalSurface, k: int, t: float, J: int = 8) -> float:
    """Relative distance between the 0-form spectrum for ``f`` and the 2-form
    spectrum for ``-f`` in one Fourier mode."""
    a = lowest_eigenpairs(assemble_mode_complex(surface, k, t).laplacian(0), J, -1e-2)[0]
    b = lowest_eigenpairs(assemble_mode_complex(surface, k, t, f_sign=-1.0).laplacian(2), J, -1e-2)[0]
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1.0)))


def zero_form_identity_defect(surface: GlobalSurface, t: float, k: int = 0, u: Callable | None = None) -> float:
    """Compare the assembled 0-form operator on a smooth test function with
    ``(Delta + t^2 |f'|^2 + t Delta f) u`` evaluated from the profile, at
    nodes away from the poles; relative sup-norm."""
    s = surface_grid(surface)
    cx = assemble_mode_complex(surface, k, t)
    keep = np.ones(len(s), dtype=bool)
    if k != 0:
        keep[0] = keep[-1] = False
    sk = s[keep]
    L = surface.length
    if u is None:
        def u(x):
            return np.exp(-((x - 0.5 * L) / (0.1 * L)) ** 2)
    uv = u(sk)
    lhs = (cx.D0.T @ (cx.M1 * (cx.D0 @ uv))) / cx.M0
    # analytic right-hand side with centred differences of the exact functions
    dx = 1e-4 * L

    def d1(g, x):
        return (g(x + dx) - g(x - dx)) / (2 * dx)

    def d2(g, x):
        return (g(x + dx) - 2 * g(x) + g(x - dx)) / dx**2

    rho, f = surface.rho, surface.f
    kap = k / surface.m

    def lap(g, x, kp):
        # -rho^-1 (rho g')' + kappa^2 g / rho^2
        return -(d2(g, x) + d1(rho, x) / rho(x) * d1(g, x)) + kp**2 * g(x) / rho(x) ** 2

    rhs = lap(u, sk, kap) + t**2 * d1(f, sk) ** 2 * uv + t * lap(f, sk, 0.0) * uv
    inner = (sk > 0.2 * L) & (sk < 0.8 * L)
    return float(np.max(np.abs(lhs[inner] - rhs[inner])) / np.max(np.abs(rhs[inner])))
