"""Intersection cohomology (middle perversity) of cones and cone/halflink pairs.

The singular contribution of a cone point to the Morse counts is
``m^i = dim IH^i(cone(L), l^-)`` where ``l^-`` is the lower halflink.  The
halflink topology is input data; four shapes are supported:

* ``Empty``: ``l^-`` empty (local minimum type, e.g. ``f = r``).
* ``FullLink``: ``l^- = L`` (local maximum type, e.g. ``f = -r``).
* ``Points(m)``: ``m`` points on a circle link (complex curve node).
* ``Custom``: Betti numbers of ``l^-`` plus the ranks of the restriction
  maps from the truncated cone cohomology.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError


@dataclass(frozen=True)
class Empty:
    pass


@dataclass(frozen=True)
class FullLink:
    pass


@dataclass(frozen=True)
class Points:
    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise InvalidParameterError(f"Points(m) needs an integer m >= 1, got {self.m}")


@dataclass(frozen=True)
class Custom:
    """``betti_lminus[k] = b_k(l^-)`` and ``ranks[k]`` = rank of the restriction
    ``IH^k(cone(L)) -> H^k(l^-)``; missing trailing entries count as zero."""

    betti_lminus: tuple
    ranks: tuple


def _as_counts(v, name: str) -> tuple:
    out = []
    for j, x in enumerate(v):
        if int(x) != x or x < 0:
            raise InvalidParameterError(f"{name}[{j}] must be a non-negative integer, got {x}")
        out.append(int(x))
    return tuple(out)


def _get(v, i: int) -> int:
    return v[i] if 0 <= i < len(v) else 0


def truncated_betti(betti_link, nu: int) -> tuple:
    """``IH^i(cone(L))``: ``b_i(L)`` below the middle degree, zero from ``nu`` on."""
    return tuple(_get(betti_link, i) if i < nu else 0 for i in range(2 * nu + 1))


def _check_link(betti_link, nu: int) -> tuple:
    b = _as_counts(betti_link, "betti")
    if nu < 0:
        raise InvalidParameterError("nu must be non-negative")
    if nu > 0 and len(b) != 2 * nu:
        raise InvalidParameterError(f"link of a {2 * nu}-dimensional cone needs {2 * nu} Betti numbers, got {len(b)}")
    return b


def ih_cone(betti_link, nu: int, i: int) -> int:
    """``dim IH^i(cone(L))`` for a link with Betti numbers ``betti_link``."""
    b = _check_link(betti_link, nu)
    if not 0 <= i <= 2 * nu:
        raise InvalidParameterError(f"degree {i} outside 0..{2 * nu}")
    if nu == 0:
        return 0
    return b[i] if i < nu else 0


@dataclass(frozen=True)
class ConeMorseDatum:
    nu: int
    betti_link: tuple
    halflink: object

    def __post_init__(self):
        object.__setattr__(self, "betti_link", _check_link(self.betti_link, self.nu))
        hl = self.halflink
        if not isinstance(hl, (Empty, FullLink, Points, Custom)):
            raise InvalidParameterError(f"unknown halflink {hl!r}")
        if isinstance(hl, Points) and self.nu != 1:
            raise InvalidParameterError("Points(m) halflinks are defined for curves (nu = 1)")
        if isinstance(hl, Custom):
            bl = _as_counts(hl.betti_lminus, "betti_lminus")
            rk = _as_counts(hl.ranks, "ranks")
            trunc = truncated_betti(self.betti_link, self.nu)
            if len(bl) > 2 * self.nu or len(rk) > 2 * self.nu + 1:
                raise InvalidParameterError("halflink data longer than the cone dimension allows")
            for k, r in enumerate(rk):
                if r > min(_get(trunc, k), _get(bl, k)):
                    raise InvalidParameterError(
                        f"rank r_{k} = {r} exceeds min(truncated b_{k}(L) = {_get(trunc, k)}, "
                        f"b_{k}(l-) = {_get(bl, k)})")
            object.__setattr__(self, "halflink", Custom(bl, rk))

    @property
    def m_contrib(self) -> tuple:
        return morse_contribution(self)


def ih_cone_rel(datum: ConeMorseDatum, i: int) -> int:
    """``dim IH^i(cone(L), l^-)``.

    For ``Custom`` halflinks the long exact sequence of the pair gives
    ``(b_{i-1}(l^-) - r_{i-1}) + (IH^i(cone L) - r_i)``.
    """
    nu = datum.nu
    if not 0 <= i <= 2 * nu:
        raise InvalidParameterError(f"degree {i} outside 0..{2 * nu}")
    hl = datum.halflink
    b = datum.betti_link
    if isinstance(hl, Empty):
        return ih_cone(b, nu, i)
    if isinstance(hl, FullLink):
        return _get(b, i - 1) if i > nu else 0
    if isinstance(hl, Points):
        return hl.m - 1 if i == 1 else 0
    trunc = truncated_betti(b, nu)
    bl, rk = hl.betti_lminus, hl.ranks
    return (_get(bl, i - 1) - _get(rk, i - 1)) + (_get(trunc, i) - _get(rk, i))


def morse_contribution(datum: ConeMorseDatum) -> tuple:
    """``(m^0, ..., m^{2 nu})`` of one singular point."""
    return tuple(ih_cone_rel(datum, i) for i in range(2 * datum.nu + 1))


def points_as_custom(m: int) -> Custom:
    """``m`` points as a ``Custom`` halflink: ``H^0(l^-) = R^m``, the constants
    restrict injectively."""
    return Custom((m, 0), (1, 0))


def euler_characteristic(v) -> int:
    return int(sum((-1) ** i * x for i, x in enumerate(v)))


def poincare_symmetric(betti) -> bool:
    b = np.asarray(betti)
    return bool(np.array_equal(b, b[::-1]))
