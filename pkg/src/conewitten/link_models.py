"""Finite spectral models of link manifolds.

A link model stores, per form degree, an orthonormal basis of retained
eigenmodes together with the link differential ``d`` and codifferential
``delta`` in that basis.  Everything downstream (cone operators, Witten
potentials) acts on this fixed subspace.

Circle links ``S^1_m`` (circumference ``2*pi*m``) are modelled exactly with a
Fourier basis ordered by frequency, so that the model with truncation ``K``
is a prefix of the model with any larger truncation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, ModelInconsistencyError

CIRCLE_TOL = 1e-10
ABSTRACT_TOL = 1e-8


@dataclass(frozen=True)
class LinkModel:
    """Truncated spectral description of a closed odd-dimensional link.

    Attributes
    ----------
    n : int
        Dimension of the link (odd).
    eigenvalues : tuple of ndarray
        Link-Laplace eigenvalue of each retained basis element, per degree.
    harmonic : tuple of ndarray
        Boolean harmonic flags, per degree.
    betti : tuple of int
        Betti numbers ``b_0 .. b_n``.
    d_link : tuple of ndarray
        ``d_link[i]`` maps degree ``i`` to degree ``i+1`` (shape
        ``(dim[i+1], dim[i])``); ``d_link[n]`` is an empty map.
    truncation : int
        The truncation parameter the model was built with.
    kind : str
        ``"circle"`` or ``"abstract"``.
    m : int or None
        Circle multiplicity (circle links only).
    tol : float
        Consistency tolerance used by :func:`validate_link`.
    """

    n: int
    eigenvalues: tuple
    harmonic: tuple
    betti: tuple
    d_link: tuple
    truncation: int
    kind: str = "abstract"
    m: int | None = None
    tol: float = ABSTRACT_TOL
    labels: tuple = field(default=(), compare=False)

    @property
    def nu(self) -> int:
        return (self.n + 1) // 2

    @property
    def dims(self) -> tuple:
        return tuple(len(ev) for ev in self.eigenvalues)

    @property
    def delta_link(self) -> tuple:
        """Codifferential per degree; ``delta_link[i]`` maps ``i -> i-1``."""
        out = [np.zeros((0, self.dims[0]))]
        for i in range(1, self.n + 1):
            out.append(self.d_link[i - 1].T)
        return tuple(out)

    def offsets(self) -> np.ndarray:
        """Start index of each degree inside the full tuple ``(phi_0..phi_n)``."""
        return np.concatenate([[0], np.cumsum(self.dims)])

    def hodge_laplacian(self, i: int) -> np.ndarray:
        dims = self.dims
        lap = np.zeros((dims[i], dims[i]))
        if i < self.n:
            lap += self.d_link[i].T @ self.d_link[i]
        if i > 0:
            lap += self.d_link[i - 1] @ self.d_link[i - 1].T
        return lap


def _circle_labels(K: int) -> list:
    labels = [("const", 0)]
    for k in range(1, K + 1):
        labels += [("cos", k), ("sin", k)]
    return labels


def make_circle_link(m: int, K: int) -> LinkModel:
    """Exact model of the circle of length ``2*pi*m`` with frequencies ``<= K``.

    Degree-0 basis: ``1, cos(k phi/m), sin(k phi/m)`` (normalized); degree-1
    basis: the same functions times ``dphi``.
    """
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise InvalidParameterError(f"circle multiplicity m must be >= 1, got {m!r}")
    if not isinstance(K, (int, np.integer)) or K < 1:
        raise InvalidParameterError(f"truncation K must be >= 1, got {K!r}")
    labels = _circle_labels(K)
    dim = len(labels)
    freqs = np.array([k for _, k in labels], dtype=float) / m
    d0 = np.zeros((dim, dim))
    for j, (kind, k) in enumerate(labels):
        if kind == "cos":
            # d cos(k phi/m) = -(k/m) sin(k phi/m) dphi
            d0[j + 1, j] = -k / m
        elif kind == "sin":
            d0[j - 1, j] = k / m
    ev = freqs**2
    harm = ev == 0
    return LinkModel(
        n=1,
        eigenvalues=(ev, ev.copy()),
        harmonic=(harm, harm.copy()),
        betti=(1, 1),
        d_link=(d0, np.zeros((0, dim))),
        truncation=int(K),
        kind="circle",
        m=int(m),
        tol=CIRCLE_TOL,
        labels=tuple(labels),
    )


def make_abstract_link(n, betti, eig_data=None, *, tol=ABSTRACT_TOL) -> LinkModel:
    """Wrap user-supplied spectral data of a link.

    Parameters
    ----------
    n : int
        Odd link dimension.
    betti : sequence of int
        Betti numbers ``b_0..b_n``.
    eig_data : dict, optional
        ``{"eigenvalues": [list per degree], "d": [matrix per degree]}``
        describing non-harmonic retained modes.  Harmonic modes (``b_i`` per
        degree) are always prepended.  When omitted only harmonic modes are
        retained.
    """
    if not isinstance(n, (int, np.integer)) or n < 1 or n % 2 == 0:
        raise InvalidParameterError(f"link dimension n must be odd and positive, got {n!r}")
    betti = tuple(int(b) for b in betti)
    if len(betti) != n + 1 or any(b < 0 for b in betti):
        raise InvalidParameterError(f"betti vector must have {n + 1} non-negative entries")
    eig_data = eig_data or {}
    extra = eig_data.get("eigenvalues") or [[] for _ in range(n + 1)]
    if len(extra) != n + 1:
        raise InvalidParameterError("eigenvalue table needs one list per degree")
    eigenvalues, harmonic = [], []
    for i in range(n + 1):
        ev = np.concatenate([np.zeros(betti[i]), np.asarray(extra[i], dtype=float)])
        if np.any(ev[betti[i]:] <= 0):
            raise InvalidParameterError(f"non-harmonic eigenvalues must be positive (degree {i})")
        eigenvalues.append(ev)
        harmonic.append(np.arange(len(ev)) < betti[i])
    dims = [len(ev) for ev in eigenvalues]
    d_in = eig_data.get("d")
    d_link = []
    for i in range(n + 1):
        rows = dims[i + 1] if i < n else 0
        full = np.zeros((rows, dims[i]))
        if d_in is not None and i < n and d_in[i] is not None:
            block = np.asarray(d_in[i], dtype=float)
            # user couplings act on the non-harmonic modes only
            if block.shape != (dims[i + 1] - betti[i + 1], dims[i] - betti[i]):
                raise InvalidParameterError(f"coupling table for degree {i} has shape {block.shape}")
            full[betti[i + 1]:, betti[i]:] = block
        d_link.append(full)
    link = LinkModel(
        n=int(n),
        eigenvalues=tuple(eigenvalues),
        harmonic=tuple(harmonic),
        betti=betti,
        d_link=tuple(d_link),
        truncation=max(dims),
        kind="abstract",
        tol=tol,
    )
    diag = validate_link(link)
    if not diag.passed:
        raise ModelInconsistencyError(
            f"link model inconsistent at degree {diag.worst_degree}: "
            f"d^2 defect {diag.d_squared:.3g}, eigenvalue defect {diag.eigenvalue:.3g}"
        )
    return link


@dataclass(frozen=True)
class LinkDiagnostics:
    d_squared: float
    adjointness: float
    eigenvalue: float
    harmonic_count: float
    tolerance: float
    worst_degree: int

    @property
    def passed(self) -> bool:
        return max(self.d_squared, self.adjointness, self.eigenvalue, self.harmonic_count) <= self.tolerance


def validate_link(link: LinkModel) -> LinkDiagnostics:
    """Report ``max|d^2|``, adjointness and eigenvalue-consistency defects."""
    n = link.n
    worst, worst_deg = 0.0, 0
    d2 = 0.0
    for i in range(n - 1):
        v = float(np.max(np.abs(link.d_link[i + 1] @ link.d_link[i]), initial=0.0))
        d2 = max(d2, v)
        if v > worst:
            worst, worst_deg = v, i
    # delta is defined as the transpose; check it is stored that way
    adj = 0.0
    delta = link.delta_link
    for i in range(1, n + 1):
        adj = max(adj, float(np.max(np.abs(delta[i] - link.d_link[i - 1].T), initial=0.0)))
    eig = 0.0
    hc = 0.0
    for i in range(n + 1):
        lap = link.hodge_laplacian(i)
        v = float(np.max(np.abs(lap - np.diag(link.eigenvalues[i])), initial=0.0))
        eig = max(eig, v)
        if v > worst:
            worst, worst_deg = v, i
        hc = max(hc, float(abs(int(np.sum(link.harmonic[i])) - link.betti[i])))
    return LinkDiagnostics(d2, adj, eig, hc, link.tol, worst_deg)


def with_corrupted_d(link: LinkModel, degree: int, row: int, col: int, value: float) -> LinkModel:
    """Copy of ``link`` with one differential entry overwritten (fault injection)."""
    d = [np.array(x, copy=True) for x in link.d_link]
    d[degree][row, col] = value
    return LinkModel(**{**link.__dict__, "d_link": tuple(d)})


# ---------------------------------------------------------------------------
# Link functions h (the angular part of f = r h near a cone point)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MorsePotential:
    """Multiplication operators induced by a link function ``h``.

    The square matrices act on the retained basis of ``link``.  The ``*_wide``
    matrices are the same operators with their *range* enlarged to
    ``wide_link`` (truncation ``K + bandwidth``), which contains the exact image
    of the retained modes; they let the first-order radial assembly reproduce
    ``T^2 = h^2 + |grad h|^2`` without truncation error.
    """

    link: LinkModel
    h_coeffs: np.ndarray
    mult_h: tuple
    wedge_dh: tuple
    contract_gradh: tuple
    lower_bound_a: float
    bandwidth: int
    wide_link: LinkModel
    mult_h_wide: tuple
    wedge_dh_wide: tuple
    contract_gradh_wide: tuple
    tsq: tuple
    constant: float | None = None

    @property
    def is_constant(self) -> bool:
        return self.constant is not None


def constant_potential(link: LinkModel, value: float) -> MorsePotential:
    """``h`` identically equal to ``value`` (the cases ``f = +-r``)."""
    value = float(value)
    if value == 0.0:
        raise InvalidParameterError("constant h must be non-zero (admissibility needs a > 0)")
    dims = link.dims
    n = link.n
    mult = tuple(value * np.eye(d) for d in dims)
    wedge = tuple(np.zeros((dims[i + 1] if i < n else 0, dims[i])) for i in range(n + 1))
    contract = tuple(np.zeros((dims[i - 1] if i > 0 else 0, dims[i])) for i in range(n + 1))
    coeffs = np.zeros(dims[0])
    if link.betti[0] != 1:
        raise InvalidParameterError("constant potentials need a connected link (b_0 = 1)")
    coeffs[0] = value  # coefficient w.r.t. the (unnormalized) constant mode
    tsq = tuple(value**2 * np.eye(d) for d in dims)
    return MorsePotential(
        link=link,
        h_coeffs=coeffs,
        mult_h=mult,
        wedge_dh=wedge,
        contract_gradh=contract,
        lower_bound_a=abs(value),
        bandwidth=0,
        wide_link=link,
        mult_h_wide=mult,
        wedge_dh_wide=wedge,
        contract_gradh_wide=contract,
        tsq=tsq,
        constant=value,
    )


def _circle_basis(labels, m, phi):
    L = 2 * np.pi * m
    out = np.empty((len(labels), len(phi)))
    for j, (kind, k) in enumerate(labels):
        if kind == "const":
            out[j] = 1.0 / np.sqrt(L)
        elif kind == "cos":
            out[j] = np.cos(k * phi / m) / np.sqrt(L / 2)
        else:
            out[j] = np.sin(k * phi / m) / np.sqrt(L / 2)
    return out


def _trig_eval(cos, sin, const, m, phi, derivative=False):
    val = np.zeros_like(phi) + (0.0 if derivative else const)
    for k, a in cos.items():
        w = k / m
        val += -a * w * np.sin(w * phi) if derivative else a * np.cos(w * phi)
    for k, b in sin.items():
        w = k / m
        val += b * w * np.cos(w * phi) if derivative else b * np.sin(w * phi)
    return val


def circle_potential(link: LinkModel, cos=None, sin=None, const=0.0, a=None) -> MorsePotential:
    """Trigonometric link function on ``S^1_m``.

    ``h(phi) = const + sum_k cos[k] cos(k phi/m) + sum_k sin[k] sin(k phi/m)``
    with ``phi`` the arclength coordinate in ``[0, 2 pi m)``.  The curve-case
    Morse function ``f = r cos(phi)`` is ``cos={m: 1.0}``.

    ``a`` is the admissibility constant; when omitted it is taken as the square
    root of the sampled minimum of ``h^2 + h'^2``.  A supplied ``a`` is checked
    on a dense sample.
    """
    if link.kind != "circle":
        raise InvalidParameterError("circle_potential needs a circle link")
    cos = {int(k): float(v) for k, v in (cos or {}).items() if v != 0}
    sin = {int(k): float(v) for k, v in (sin or {}).items() if v != 0}
    m, K = link.m, link.truncation
    freqs = list(cos) + list(sin)
    if any(k < 1 for k in freqs):
        raise InvalidParameterError("frequencies must be positive integers")
    bw = max(freqs, default=0)
    if bw > K:
        raise InvalidParameterError(f"h has frequency {bw} > truncation K={K}")
    wide = make_circle_link(m, K + bw) if bw else link
    nq = 4 * (K + 2 * bw) + 16
    phi = 2 * np.pi * m * np.arange(nq) / nq
    w = 2 * np.pi * m / nq
    base = _circle_basis(wide.labels, m, phi)
    dim = link.dims[0]
    h = _trig_eval(cos, sin, const, m, phi)
    dh = _trig_eval(cos, sin, const, m, phi, derivative=True)

    def galerkin(g):
        return w * (base * g) @ base[:dim].T  # (wide_dim, dim)

    Hw = galerkin(h)
    Dw = galerkin(dh)
    Sw = galerkin(h**2 + dh**2)
    sq = slice(0, dim)
    mult_w = (Hw, Hw)
    wedge_w = (Dw, np.zeros((0, dim)))
    contract_w = (np.zeros((0, dim)), Dw)
    mult = tuple(x[sq] for x in mult_w)
    wedge = (Dw[sq], np.zeros((0, dim)))
    contract = (np.zeros((0, dim)), Dw[sq])
    tsq = (Sw[sq], Sw[sq].copy())
    coeffs = (base[:dim] @ h) * w

    n_dense = max(10 * K * m, 2048)
    phid = 2 * np.pi * m * np.arange(n_dense) / n_dense
    grad2 = _trig_eval(cos, sin, const, m, phid) ** 2 + _trig_eval(cos, sin, const, m, phid, True) ** 2
    gmin = float(grad2.min())
    if a is None:
        a = np.sqrt(max(gmin, 0.0))
    if a <= 0 or gmin < a**2 - 1e-12:
        raise InvalidParameterError(f"h is not admissible: min(h^2+|h'|^2) = {gmin:.3g} < a^2 = {a**2:.3g}")
    return MorsePotential(
        link=link,
        h_coeffs=coeffs,
        mult_h=mult,
        wedge_dh=wedge,
        contract_gradh=contract,
        lower_bound_a=float(a),
        bandwidth=bw,
        wide_link=wide,
        mult_h_wide=mult_w,
        wedge_dh_wide=wedge_w,
        contract_gradh_wide=contract_w,
        tsq=tsq,
    )


def curve_potential(link: LinkModel) -> MorsePotential:
    """``h = cos(phi)``, i.e. the stratified Morse function ``f = r cos(phi)``."""
    return circle_potential(link, cos={link.m: 1.0})
