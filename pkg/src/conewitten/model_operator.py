"""Model Witten Laplacian on an exact cone ``dr^2 + r^2 g_L`` with ``f = r h``.

After the unitary transformation ``U`` the Laplacian on degree-``k`` forms acts
on pairs ``(phi_{k-1}, phi_k)`` of link forms depending on ``r`` as

    -d^2/dr^2 + r^-2 (S0^2 +- S0) + t r^-1 Mh + t^2 Tsq

(``+`` on even degrees, ``-`` on odd degrees).  The radial problem is
discretized through its first-order factor ``+-d/dr + S0/r + t T`` so the
discrete operator is positive semidefinite by construction, and the closed
extension at the tip appears as the natural boundary condition of that factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu
from scipy.special import kv, kvp

from .errors import (
    AssemblyError,
    DegenerateFitError,
    InvalidParameterError,
    NumericalFailureError,
    UnsupportedOracleError,
)
from .link_models import LinkModel, MorsePotential

MIDDLE_SLACK = 1e-9


def c_coefficients(n: int) -> np.ndarray:
    i = np.arange(n + 1)
    return (-1.0) ** i * (i - n / 2)


# ---------------------------------------------------------------------------
# Matrices on the full tuple (phi_0, ..., phi_n)
# ---------------------------------------------------------------------------


def _check_nu(link: LinkModel, nu: int) -> None:
    if 2 * nu - 1 != link.n:
        raise AssemblyError(f"nu={nu} does not match link dimension n={link.n}")


def build_S0(link: LinkModel, nu: int | None = None) -> np.ndarray:
    """Tridiagonal block matrix with ``c_i Id`` on the diagonal, ``d`` below
    and ``delta`` above."""
    nu = link.nu if nu is None else nu
    _check_nu(link, nu)
    off = link.offsets()
    c = c_coefficients(link.n)
    S = np.zeros((off[-1], off[-1]))
    for i in range(link.n + 1):
        bi = slice(off[i], off[i + 1])
        S[bi, bi] = c[i] * np.eye(link.dims[i])
        if i < link.n:
            bj = slice(off[i + 1], off[i + 2])
            S[bj, bi] = link.d_link[i]
            S[bi, bj] = link.d_link[i].T
    return S


def _embed(link: LinkModel, wide: LinkModel) -> np.ndarray:
    """Inclusion of the retained tuple into the wide tuple (prefix per degree)."""
    off, woff = link.offsets(), wide.offsets()
    E = np.zeros((woff[-1], off[-1]))
    for i in range(link.n + 1):
        for j in range(link.dims[i]):
            E[woff[i] + j, off[i] + j] = 1.0
    return E


def _build_T_from(link: LinkModel, wide: LinkModel, mult, wedge, contract) -> np.ndarray:
    off, woff = link.offsets(), wide.offsets()
    rows = woff[-1] if wide is not link else off[-1]
    roff = woff if wide is not link else off
    T = np.zeros((rows, off[-1]))
    for i in range(link.n + 1):
        ci = slice(off[i], off[i + 1])
        T[roff[i]:roff[i] + mult[i].shape[0], ci] = (-1) ** i * mult[i]
        if i < link.n:
            T[roff[i + 1]:roff[i + 1] + wedge[i].shape[0], ci] = wedge[i]
        if i > 0:
            T[roff[i - 1]:roff[i - 1] + contract[i].shape[0], ci] = contract[i]
    return T


def build_T(link: LinkModel, pot: MorsePotential) -> np.ndarray:
    """Diagonal blocks ``(-1)^i h``, ``dh ^`` below, ``grad h -|`` above."""
    if pot.link.dims != link.dims:
        raise AssemblyError("potential was built on a different truncation")
    return _build_T_from(link, link, pot.mult_h, pot.wedge_dh, pot.contract_gradh)


def build_T_wide(link: LinkModel, pot: MorsePotential) -> np.ndarray:
    """``T`` with its range enlarged to the potential's wide link."""
    if pot.wide_link is link:
        return build_T(link, pot)
    return _build_T_from(link, pot.wide_link, pot.mult_h_wide, pot.wedge_dh_wide, pot.contract_gradh_wide)


def build_Mh(link: LinkModel, pot: MorsePotential) -> np.ndarray:
    S0 = build_S0(link)
    T = build_T(link, pot)
    return T @ S0 + S0 @ T


def build_Tsq(link: LinkModel, pot: MorsePotential) -> np.ndarray:
    """Galerkin projection of multiplication by ``h^2 + |grad h|^2``."""
    off = link.offsets()
    out = np.zeros((off[-1], off[-1]))
    for i in range(link.n + 1):
        out[off[i]:off[i + 1], off[i]:off[i + 1]] = pot.tsq[i]
    return out


def degree_block(link: LinkModel, k: int) -> np.ndarray:
    """Tuple indices of the pair ``(phi_{k-1}, phi_k)`` carrying degree ``k``."""
    if not 0 <= k <= link.n + 1:
        raise InvalidParameterError(f"degree {k} outside 0..{link.n + 1}")
    off = link.offsets()
    idx = []
    if k >= 1:
        idx.extend(range(off[k - 1], off[k]))
    if k <= link.n:
        idx.extend(range(off[k], off[k + 1]))
    return np.array(idx, dtype=int)


@dataclass(frozen=True)
class ModelAssembly:
    link: LinkModel
    potential: MorsePotential
    S0: np.ndarray
    T: np.ndarray
    Mh: np.ndarray
    Tsq: np.ndarray
    degree_blocks: tuple
    t: float
    S0_wide: np.ndarray = field(repr=False, default=None)
    T_wide: np.ndarray = field(repr=False, default=None)

    @property
    def nu(self) -> int:
        return self.link.nu

    def potential_matrix(self, k: int, r: float) -> np.ndarray:
        """Full-tuple potential ``r^-2(S0^2 +- S0) + t r^-1 Mh + t^2 Tsq`` for the
        parity of degree ``k``."""
        sign = 1.0 if k % 2 == 0 else -1.0
        S = self.S0
        return (S @ S + sign * S) / r**2 + self.t * self.Mh / r + self.t**2 * self.Tsq


def assemble(link: LinkModel, pot: MorsePotential, t: float) -> ModelAssembly:
    if t <= 0:
        raise InvalidParameterError("t must be positive")
    S0 = build_S0(link)
    T = build_T(link, pot)
    E = _embed(link, pot.wide_link) if pot.wide_link is not link else np.eye(S0.shape[0])
    return ModelAssembly(
        link=link,
        potential=pot,
        S0=S0,
        T=T,
        Mh=T @ S0 + S0 @ T,
        Tsq=build_Tsq(link, pot),
        degree_blocks=tuple(degree_block(link, k) for k in range(link.n + 2)),
        t=float(t),
        S0_wide=E @ S0,
        T_wide=build_T_wide(link, pot),
    )


def cross_block_defect(asm: ModelAssembly, r: float = 0.37) -> float:
    """Largest potential entry coupling different degree blocks of one parity."""
    worst = 0.0
    for parity in (0, 1):
        V = asm.potential_matrix(parity, r)
        label = np.full(V.shape[0], -1)
        for k, idx in enumerate(asm.degree_blocks):
            if k % 2 == parity:
                label[idx] = k
        mask = label[:, None] != label[None, :]
        worst = max(worst, float(np.max(np.abs(V[mask]), initial=0.0)))
    return worst


# ---------------------------------------------------------------------------
# Radial grid and indicial data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModeRecord:
    """One decoupled mode of ``S0`` restricted to a degree block."""

    s: float
    exponents: tuple  # (alpha_minus, alpha_plus) of the second-order problem
    bc: str  # "friedrichs" | "branch-matched"
    inner: str  # discrete realization at r_min: "free" | "dirichlet"


@dataclass(frozen=True)
class RadialGrid:
    r: np.ndarray
    scheme: str
    r_min: float
    r_max: float

    @property
    def N(self) -> int:
        return len(self.r)

    def scaled(self, factor: float) -> "RadialGrid":
        return RadialGrid(self.r * factor, self.scheme, self.r_min * factor, self.r_max * factor)


def make_grid(r_max: float, N: int = 2048, scheme: str = "graded", r_min: float | None = None,
              r_split: float | None = None) -> RadialGrid:
    """Radial grid on ``[r_min, r_max]``.

    ``graded``: geometric from ``r_min`` to ``r_split`` (default ``r_max/10``),
    uniform beyond; an eighth of the points go to the geometric part.
    """
    if N < 16:
        raise InvalidParameterError(f"grid too coarse: N={N} < 16")
    r_min = r_max * 1e-4 if r_min is None else r_min
    if not 0 < r_min < r_max:
        raise InvalidParameterError("need 0 < r_min < r_max")
    if scheme == "uniform":
        r = np.linspace(r_min, r_max, N)
    elif scheme == "graded":
        r_split = r_max / 10 if r_split is None else r_split
        if not r_min < r_split < r_max:
            raise InvalidParameterError("need r_min < r_split < r_max")
        n_geo = N // 8
        geo = np.geomspace(r_min, r_split, n_geo)
        uni = np.linspace(r_split, r_max, N - n_geo + 1)[1:]
        r = np.concatenate([geo, uni])
    else:
        raise InvalidParameterError(f"unknown grid scheme {scheme!r}")
    return RadialGrid(r, scheme, float(r_min), float(r_max))


def default_grid(t: float, a: float = 1.0, N: int = 2048, r_max_factor: float = 20.0) -> RadialGrid:
    return make_grid(r_max_factor / (a * t), N=N)


def mode_records(asm: ModelAssembly, k: int, bc: str = "auto"):
    """Decoupled modes of degree block ``k`` and their boundary conditions.

    Near the tip the first-order factor of mode ``s`` has the single local
    solution ``r^e`` (``e = -s`` on even, ``e = s`` on odd degrees); the
    second-order problem has exponents ``e`` and ``1 - e``.

    * ``e >= 1/2``: ``r^e`` is the Friedrichs branch, realized by leaving the
      mode free at ``r_min`` (Dirichlet would converge only logarithmically at
      ``e = 1/2``).
    * middle degree with ``|s| < 1/2`` and ``bc="auto"``: both branches are in
      the closed domain of the complex; left free (branch-matched).
    * otherwise Dirichlet at ``r_min``, which selects ``r^{1-e}`` or the unique
      admissible branch.

    Returns ``(records, free_basis)`` where ``free_basis`` spans (in block
    coordinates) the modes left free at the inner cutoff.
    """
    link = asm.link
    idx = asm.degree_blocks[k]
    w, V = np.linalg.eigh(asm.S0)
    nu = link.nu
    sgn = 1.0 if k % 2 == 0 else -1.0
    Q = (asm.S0 @ asm.S0 + sgn * asm.S0)[np.ix_(idx, idx)]
    records, free, split = [], [], []
    for s, v in zip(w, V.T):
        wb = v[idx]
        nb = np.linalg.norm(wb)
        if nb < 1e-8:
            continue
        if abs(nb - 1) > 1e-8:
            # S0 eigenvector shared with a neighbouring block: no local
            # first-order solution inside this block
            split.append(wb / nb)
            continue
        e = s if k % 2 == 1 else -s
        am, ap = sorted((e, 1 - e))
        middle_extra = k == nu and abs(s) < 0.5 - MIDDLE_SLACK
        kind = "branch-matched" if (middle_extra and bc == "auto") else "friedrichs"
        inner = "free" if (kind == "branch-matched" or e >= 0.5 - MIDDLE_SLACK) else "dirichlet"
        records.append(ModeRecord(float(s), (float(am), float(ap)), kind, inner))
        if inner == "free":
            free.append(wb)
    if split:
        B = np.linalg.svd(np.array(split).T, full_matrices=False)
        B = B[0][:, B[1] > 1e-8]
        for q in np.linalg.eigvalsh(B.T @ Q @ B):
            root = np.sqrt(max(q + 0.25, 0.0))
            if 0.5 - root <= -0.5 and 0.5 + root <= -0.5:
                raise AssemblyError("mode with no square-integrable branch")
            records.append(ModeRecord(float("nan"), (0.5 - root, 0.5 + root), "friedrichs", "dirichlet"))
    F = np.array(free).T if free else np.zeros((len(idx), 0))
    if F.shape[1]:
        F, _ = np.linalg.qr(F)
    return records, F


# ---------------------------------------------------------------------------
# Radial assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadialOperator:
    """Discretized degree-``k`` operator ``K u = lambda M u``.

    ``cols`` lists the block coordinates carried by this operator (all of them
    unless the problem was split into decoupled components).
    """

    stiffness: sp.csr_matrix
    mass: np.ndarray  # diagonal
    restriction: sp.csr_matrix  # reduced unknowns -> nodal values on ``cols``
    grid: RadialGrid
    degree: int
    block_size: int
    t: float
    records: tuple
    cols: np.ndarray = field(repr=False, default=None)

    def symmetric(self) -> sp.csr_matrix:
        d = sp.diags(1.0 / np.sqrt(self.mass))
        return (d @ self.stiffness @ d).tocsr()

    def nodal(self, y: np.ndarray) -> np.ndarray:
        """Map a symmetric-form eigenvector to nodal values ``(N, block_size)``."""
        cols = np.arange(self.block_size) if self.cols is None else self.cols
        u = (self.restriction @ (y / np.sqrt(self.mass))).reshape(self.grid.N, len(cols))
        out = np.zeros((self.grid.N, self.block_size))
        out[:, cols] = u
        return out


def _block_factors(asm: ModelAssembly, k: int):
    """Rows of the wide first-order factor acting on degree block ``k``."""
    idx = asm.degree_blocks[k]
    Sw = asm.S0_wide[:, idx]
    Tw = asm.T_wide[:, idx]
    # the derivative acts componentwise: slot j of the block -> slot j of the image
    if asm.potential.wide_link is asm.link:
        E = np.eye(asm.S0.shape[0])[:, idx]
    else:
        E = _embed(asm.link, asm.potential.wide_link)[:, idx]
    return E, Sw, Tw


def block_components(asm: ModelAssembly, k: int, bc: str = "auto") -> list[np.ndarray]:
    """Split degree block ``k`` into sets of link coordinates that the radial
    problem never couples (the spectrum is the union over components)."""
    E, Sw, Tw = _block_factors(asm, k)
    M = (np.abs(E) + np.abs(Sw) + np.abs(Tw)) > 1e-14
    adj = (M.T.astype(float) @ M.astype(float)) > 0
    _, F = mode_records(asm, k, bc)
    if F.shape[1]:
        adj |= np.abs(F @ F.T) > 1e-12
    n, labels = connected_components(sp.csr_matrix(adj), directed=False)
    return [np.flatnonzero(labels == c) for c in range(n)]


def assemble_radial(asm: ModelAssembly, k: int, grid: RadialGrid, bc: str = "auto",
                    cols: np.ndarray | None = None) -> RadialOperator:
    """Discretize the degree-``k`` model Laplacian on ``grid``.

    Dirichlet at ``r_max``.  At the inner cutoff ``r_min`` every mode is held
    at zero (Friedrichs) except the middle-degree modes whose both branches are
    admissible for the first-order factor; those are left free, so the
    discrete operator inherits the natural boundary condition of
    ``+-d/dr + S0/r + t T``.  ``bc="friedrichs"`` forces Dirichlet everywhere.
    ``cols`` restricts to one decoupled component (see ``block_components``).
    """
    if bc not in ("auto", "friedrichs"):
        raise InvalidParameterError(f"unknown boundary policy {bc!r}")
    if grid.N < 16:
        raise InvalidParameterError("grid too coarse")
    E, Sw, Tw = _block_factors(asm, k)
    p_full = E.shape[1]
    cols = np.arange(p_full) if cols is None else np.asarray(cols)
    records, F = mode_records(asm, k, bc)
    P = F @ F.T
    rest = np.setdiff1d(np.arange(p_full), cols)
    if len(rest) and np.abs(P[np.ix_(cols, rest)]).max(initial=0.0) > 1e-10:
        raise AssemblyError("free boundary modes straddle the requested component")
    wP, VP = np.linalg.eigh(P[np.ix_(cols, cols)])
    F = VP[:, wP > 0.5]

    E, Sw, Tw = E[:, cols], Sw[:, cols], Tw[:, cols]
    rows = np.flatnonzero(np.any(Sw != 0, axis=1) | np.any(Tw != 0, axis=1) | np.any(E != 0, axis=1))
    E, Sw, Tw = E[rows], Sw[rows], Tw[rows]
    p = len(cols)

    r = grid.r
    N = len(r)
    h = np.diff(r)
    rmid = 0.5 * (r[1:] + r[:-1])
    sq = np.sqrt(h)

    def bidiag(vals_left, vals_right):
        return sp.diags([vals_left, vals_right], [0, 1], shape=(N - 1, N), format="csr")

    sigma = 1.0 if k % 2 == 0 else -1.0
    # cell i sees (u_i + u_{i+1})/2 for the potential and (u_{i+1} - u_i)/h_i for the derivative
    A = (
        sp.kron(bidiag(-sigma * sq / h, sigma * sq / h), sp.csr_matrix(E))
        + sp.kron(bidiag(0.5 * sq / rmid, 0.5 * sq / rmid), sp.csr_matrix(Sw))
        + sp.kron(bidiag(0.5 * asm.t * sq, 0.5 * asm.t * sq), sp.csr_matrix(Tw))
    ).tocsr()
    nfree = F.shape[1]
    # reduced unknowns: free modes at node 0, full block at nodes 1..N-2, none at N-1
    nred = nfree + (N - 2) * p
    fa, fb = np.nonzero(F)
    inner = np.arange((N - 2) * p)
    Rm = sp.csr_matrix(
        (np.concatenate([F[fa, fb], np.ones(len(inner))]),
         (np.concatenate([fa, p + inner]), np.concatenate([fb, nfree + inner]))),
        shape=(N * p, nred),
    )
    AR = (A @ Rm).tocsr()
    K = (AR.T @ AR).tocsr()
    lump = _lumped_mass(r)
    mass = np.concatenate([np.full(nfree, lump[0]), np.repeat(lump[1:-1], p)])
    return RadialOperator(K, mass, Rm, grid, k, p_full, asm.t, tuple(records), cols)


# ---------------------------------------------------------------------------
# Spectra
# ---------------------------------------------------------------------------


def split_threshold(t: float) -> float:
    return max(1e-6 * t**2, 1e-8)


@dataclass(frozen=True)
class SpectralReport:
    degree: int
    t: float
    eigenvalues: np.ndarray
    kernel_dim: int
    gap_lower: float | None
    residuals: np.ndarray
    vectors: np.ndarray = field(repr=False, default=None)  # nodal, shape (J, N, p)

    @property
    def threshold(self) -> float:
        return split_threshold(self.t)


def lowest_eigenpairs(C: sp.csr_matrix, J: int, shift: float):
    """Lowest ``J`` eigenpairs of a sparse symmetric PSD matrix.

    Shift-invert Lanczos around ``shift < 0`` with a single sparse LU and a
    fixed start vector, so repeated calls are bit-identical.  Returns
    eigenvalues, eigenvectors and absolute residual norms.
    """
    n = C.shape[0]
    J = min(J, n)
    if n <= max(2 * J, 200):
        w, X = np.linalg.eigh(C.toarray())
        w, X = w[:J], X[:, :J]
    else:
        try:
            lu = splu((C - shift * sp.eye(n)).tocsc())
        except RuntimeError as exc:
            raise NumericalFailureError(f"factorization failed: {exc}") from exc
        op = LinearOperator((n, n), matvec=lu.solve, dtype=float)
        try:
            w, X = eigsh(C, k=J, sigma=shift, OPinv=op, v0=np.ones(n), ncv=min(n, max(2 * J + 1, 20)),
                         maxiter=50 * n)
        except ArpackNoConvergence as exc:
            raise NumericalFailureError("eigensolver did not converge",
                                        [float(x) for x in exc.eigenvalues]) from exc
        order = np.argsort(w)
        w, X = w[order], X[:, order]
    res = np.linalg.norm(C @ X - X * w, axis=0)
    return w, X, res


def compute_spectrum(op: RadialOperator | list[RadialOperator], J: int = 10,
                     keep_vectors: bool = False) -> SpectralReport:
    """Lowest ``J`` eigenpairs of a radial operator, or of the direct sum of
    decoupled component operators.

    Residuals are ``||A psi - lambda psi|| / ||psi||`` in the discrete
    ``L^2(dr)`` norm, divided by ``max(lambda_J, 1)``.
    """
    ops = op if isinstance(op, (list, tuple)) else [op]
    if not ops:
        raise InvalidParameterError("no operators given")
    first = ops[0]
    # PSD operator: a shift just below zero targets the bottom of the spectrum
    shift = -1e-2 * max(first.t, 1.0) ** 2
    ws, rs, vs = [], [], []
    for o in ops:
        w, Y, res = lowest_eigenpairs(o.symmetric(), J, shift)
        ws.append(w)
        rs.append(res)
        if keep_vectors:
            vs.extend(o.nodal(Y[:, j]) for j in range(len(w)))
    w = np.concatenate(ws)
    res = np.concatenate(rs)
    order = np.argsort(w, kind="stable")[:J]
    w, res = w[order], res[order]
    res = res / max(abs(w[-1]), 1.0)
    tau = split_threshold(first.t)
    kdim = int(np.sum(w < tau))
    above = w[w >= tau]
    vecs = np.stack([vs[i] for i in order]) if keep_vectors else None
    return SpectralReport(first.degree, first.t, w, kdim, float(above[0]) if len(above) else None, res, vecs)


def radial_operators(asm: ModelAssembly, k: int, grid: RadialGrid, bc: str = "auto") -> list[RadialOperator]:
    """One radial operator per decoupled component of degree block ``k``."""
    return [assemble_radial(asm, k, grid, bc, cols) for cols in block_components(asm, k, bc)]


def model_spectrum(link: LinkModel, pot: MorsePotential, t: float, k: int, grid: RadialGrid | None = None,
                   J: int = 10, bc: str = "auto", keep_vectors: bool = False) -> SpectralReport:
    """Lowest ``J`` eigenvalues of the degree-``k`` model Laplacian at parameter ``t``."""
    if t <= 0:
        raise InvalidParameterError("t must be positive")
    if not 0 <= k <= link.n + 1:
        raise InvalidParameterError(f"degree {k} outside 0..{link.n + 1}")
    grid = grid or default_grid(t, pot.lower_bound_a)
    asm = assemble(link, pot, t)
    if len(asm.degree_blocks[k]) == 0:
        empty = np.zeros(0)
        return SpectralReport(k, float(t), empty, 0, None, empty, np.zeros((0, grid.N, 0)) if keep_vectors else None)
    return compute_spectrum(radial_operators(asm, k, grid, bc), J, keep_vectors)


# ---------------------------------------------------------------------------
# Rescaling, gap fit, truncation sensitivity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RescalingReport:
    t: float
    defect: float
    compared: int
    exact_grid: bool
    eigenvalues_1: np.ndarray
    eigenvalues_t: np.ndarray

    @property
    def passed(self) -> bool:
        return self.defect <= (1e-8 if self.exact_grid else 1e-3)


def verify_rescaling(link: LinkModel, pot: MorsePotential, k: int, t: float, J: int = 10,
                     grid1: RadialGrid | None = None, exact_grid: bool = True) -> RescalingReport:
    """Compare the spectrum of ``D_t`` with ``t^2`` times that of ``D_1``.

    With ``exact_grid`` the parameter-``t`` grid is ``grid1`` scaled by
    ``1/t``; otherwise a grid with the same extent but different grading is
    used.  Kernel eigenvalues (below the split threshold) are excluded from
    the relative defect since they are zero up to rounding.
    """
    grid1 = grid1 or default_grid(1.0, pot.lower_bound_a)
    if exact_grid:
        grid_t = grid1.scaled(1.0 / t)
    else:
        grid_t = make_grid(grid1.r_max / t, N=grid1.N, r_min=grid1.r_min / t, r_split=grid1.r_max / t / 5)
    rep1 = model_spectrum(link, pot, 1.0, k, grid1, J)
    rept = model_spectrum(link, pot, t, k, grid_t, J)
    w1, wt = rep1.eigenvalues, rept.eigenvalues
    keep = w1 >= split_threshold(1.0)
    if not keep.any():
        keep = np.ones_like(w1, dtype=bool)
    ref = t**2 * w1[keep]
    defect = float(np.max(np.abs(wt[keep] - ref) / np.maximum(np.abs(ref), 1e-300)))
    return RescalingReport(float(t), defect, int(keep.sum()), exact_grid, w1, wt)


@dataclass(frozen=True)
class GapFit:
    c: float
    p: float
    ts: np.ndarray
    gaps: np.ndarray

    @property
    def passed(self) -> bool:
        return 1.9 <= self.p <= 2.1 and self.c > 0


def gap_estimate(reports: list[SpectralReport]) -> GapFit:
    """Least-squares fit ``log lambda_gap = log c + p log t``."""
    pts = [(r.t, r.gap_lower) for r in reports if r.gap_lower is not None and r.gap_lower > 0]
    ts = np.array([a for a, _ in pts])
    if len(pts) < 2 or len(np.unique(ts)) < 2:
        raise DegenerateFitError("need nonzero eigenvalues at two or more distinct t")
    gaps = np.array([b for _, b in pts])
    p, logc = np.polyfit(np.log(ts), np.log(gaps), 1)
    return GapFit(float(np.exp(logc)), float(p), ts, gaps)


def truncation_sensitivity(link: LinkModel, pot: MorsePotential, t: float, k: int,
                           grid: RadialGrid | None = None, J: int = 10) -> float:
    """Largest shift of the kernel eigenvalues, relative to ``t^2``, when
    ``r_max`` is doubled (same number of points per unit length)."""
    grid = grid or default_grid(t, pot.lower_bound_a)
    wide = make_grid(2 * grid.r_max, N=2 * grid.N, r_min=grid.r_min)
    a = model_spectrum(link, pot, t, k, grid, J)
    b = model_spectrum(link, pot, t, k, wide, J)
    if a.kernel_dim != b.kernel_dim:
        return float("inf")
    if a.kernel_dim == 0:
        return 0.0
    return float(np.max(np.abs(a.eigenvalues[:a.kernel_dim] - b.eigenvalues[:b.kernel_dim]))) / t**2


# ---------------------------------------------------------------------------
# Analytic oracles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PMKernel:
    """Kernel of the model Laplacian for ``f = +r`` or ``f = -r`` in one degree."""

    sign: int
    degree: int
    dim: int
    exponent: float  # radial profile e^{-t r} r^exponent (times a link form)

    def profile(self, r: np.ndarray, t: float) -> np.ndarray:
        return np.exp(-t * r) * r**self.exponent


def explicit_kernel_pm(betti, sign: int, nu: int, degree: int, pot: MorsePotential | None = None) -> PMKernel:
    """Closed-form kernel dimension and radial profile for ``h = +1`` / ``h = -1``.

    ``sign=+1``: harmonic ``degree``-forms of the link times ``e^{-tr}`` for
    ``degree < nu``.  ``sign=-1``: ``dr`` wedge harmonic ``(degree-1)``-forms
    times ``e^{-tr} r^{2(degree-1)-n}`` for ``degree > nu``.
    """
    if pot is not None and not (pot.is_constant and abs(abs(pot.constant) - 1.0) < 1e-12):
        raise UnsupportedOracleError("closed-form kernels need h = +1 or h = -1")
    if sign not in (1, -1):
        raise InvalidParameterError("sign must be +1 or -1")
    betti = tuple(int(b) for b in betti)
    n = len(betti) - 1
    if n != 2 * nu - 1:
        raise InvalidParameterError(f"betti vector of length {n + 1} does not match nu={nu}")
    if not 0 <= degree <= 2 * nu:
        raise InvalidParameterError(f"degree {degree} outside 0..{2 * nu}")
    if sign == 1:
        dim = betti[degree] if degree < nu else 0
        return PMKernel(1, degree, dim, 0.0)
    dim = betti[degree - 1] if degree > nu else 0
    return PMKernel(-1, degree, dim, float(2 * (degree - 1) - n))


@dataclass(frozen=True)
class BesselOracle:
    m: int
    t: float
    orders: tuple
    profiles: np.ndarray  # (len(orders), N), unit discrete L^2 norm
    ode_residual: float

    @property
    def dim(self) -> int:
        return len(self.orders)


def bessel_profile(order: float, t: float, r: np.ndarray) -> np.ndarray:
    return np.sqrt(r) * kv(order, t * r)


def bessel_ode_residual(order: float, t: float, r: np.ndarray) -> float:
    """Relative residual of ``-u'' + ((order^2 - 1/4)/r^2 + t^2) u = 0`` for
    ``u = sqrt(r) K_order(t r)``, with exact derivatives."""
    if not 0 < order < 1:
        raise InvalidParameterError(f"Bessel order {order} outside (0, 1)")
    x = t * r
    k0, k1, k2 = kv(order, x), kvp(order, x, 1), kvp(order, x, 2)
    sr = np.sqrt(r)
    u = sr * k0
    upp = -0.25 * r**-1.5 * k0 + t * k1 / sr + sr * t**2 * k2
    pot = ((order**2 - 0.25) / r**2 + t**2) * u
    res = -upp + pot
    scale = np.abs(upp) + np.abs(pot)
    return float(np.max(np.abs(res) / scale))


def bessel_oracle(m: int, t: float, grid: RadialGrid) -> BesselOracle:
    """Degree-1 kernel of the curve model ``h = cos(phi)`` on the cone over a
    circle of length ``2 pi m``: one profile ``sqrt(r) K_nu(t r)`` per
    ``nu = j/m``, ``0 < j < m``."""
    if m < 1:
        raise InvalidParameterError("m must be >= 1")
    if t <= 0:
        raise InvalidParameterError("t must be positive")
    orders = tuple(j / m for j in range(1, m))
    r = grid.r
    lump = _lumped_mass(r)
    profiles, worst = [], 0.0
    for nu in orders:
        worst = max(worst, bessel_ode_residual(nu, t, r))
        u = bessel_profile(nu, t, r)
        profiles.append(u / np.sqrt(np.sum(lump * u**2)))
    if worst > 1e-8:
        raise NumericalFailureError(f"Bessel profile fails its ODE: residual {worst:.3e}")
    prof = np.array(profiles) if profiles else np.zeros((0, len(r)))
    return BesselOracle(m, float(t), orders, prof, worst)


def _lumped_mass(r: np.ndarray) -> np.ndarray:
    h = np.diff(r)
    lump = np.zeros(len(r))
    lump[:-1] += 0.5 * h
    lump[1:] += 0.5 * h
    return lump


def radial_profile(vector: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Rank-one radial profile of a nodal kernel vector ``(N, p)``, unit
    discrete ``L^2`` norm and positive at the first interior node."""
    U, S, _ = np.linalg.svd(vector, full_matrices=False)
    u = U[:, 0] * S[0]
    u = u / np.sqrt(np.sum(_lumped_mass(r) * u**2))
    return u if u[1] >= 0 else -u


def kernel_radial_basis(vectors: np.ndarray, r: np.ndarray, dim: int) -> np.ndarray:
    """Orthonormal (discrete ``L^2``) basis ``(N, dim)`` of the radial profiles
    occurring in a set of nodal kernel vectors ``(d, N, p)``.

    Near-degenerate kernel vectors may mix modes with different profiles, so
    the comparison is made on the span rather than vector by vector.
    """
    w = np.sqrt(_lumped_mass(r))
    G = np.concatenate(list(vectors), axis=1) * w[:, None]
    U = np.linalg.svd(G, full_matrices=False)[0]
    return U[:, :dim] / w[:, None]


def compare_kernel_profiles(report: SpectralReport, oracle: BesselOracle, grid: RadialGrid) -> np.ndarray:
    """Relative sup-norm distance on the grid interior between each oracle
    profile and its projection onto the computed kernel's radial span."""
    if report.vectors is None:
        raise InvalidParameterError("report was computed without eigenvectors")
    if report.kernel_dim != oracle.dim:
        raise NumericalFailureError(f"kernel dimension {report.kernel_dim} != oracle dimension {oracle.dim}")
    if oracle.dim == 0:
        return np.zeros(0)
    Q = kernel_radial_basis(report.vectors[:report.kernel_dim], grid.r, oracle.dim)
    lump = _lumped_mass(grid.r)
    inner = slice(1, grid.N - 1)
    errs = []
    for v in oracle.profiles:
        proj = Q @ (Q.T @ (lump * v))
        errs.append(np.max(np.abs(proj[inner] - v[inner])) / np.max(np.abs(v[inner])))
    return np.array(errs)
