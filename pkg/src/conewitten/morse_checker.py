"""Morse counts with singular contributions and the strong Morse inequalities."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidParameterError


def _counts(v, name: str) -> tuple:
    out = []
    for j, x in enumerate(v):
        if int(x) != x or x < 0:
            raise InvalidParameterError(f"{name}[{j}] must be a non-negative integer, got {x}")
        out.append(int(x))
    return tuple(out)


@dataclass(frozen=True)
class MorseCounts:
    smooth_counts: tuple
    singular_contribs: tuple
    total: tuple
    betti2: tuple | None = None

    @property
    def top(self) -> int:
        return len(self.total) - 1


def total_counts(smooth_counts, singular_contribs=(), betti2=None) -> MorseCounts:
    """``c_i(f) = c_i(f|smooth part) + sum_p m_p^i``."""
    smooth = _counts(smooth_counts, "smooth_counts")
    contribs = tuple(_counts(m, f"singular_contribs[{p}]") for p, m in enumerate(singular_contribs))
    for p, m in enumerate(contribs):
        if len(m) != len(smooth):
            raise InvalidParameterError(
                f"singular contribution {p} has length {len(m)}, smooth counts have length {len(smooth)}")
    if len(smooth) % 2 == 0:
        raise InvalidParameterError("count vectors must have odd length 2*nu + 1")
    total = tuple(s + sum(m[i] for m in contribs) for i, s in enumerate(smooth))
    if betti2 is not None:
        betti2 = _counts(betti2, "betti2")
        if len(betti2) != len(total):
            raise InvalidParameterError(f"betti2 has length {len(betti2)}, expected {len(total)}")
    return MorseCounts(smooth, contribs, total, betti2)


@dataclass(frozen=True)
class MorseVerdict:
    margins: tuple  # margin for k = 0 .. 2nu - 1
    euler_counts: int
    euler_betti: int

    @property
    def euler_ok(self) -> bool:
        return self.euler_counts == self.euler_betti

    @property
    def first_failure(self) -> int | None:
        for k, mg in enumerate(self.margins):
            if mg < 0:
                return k
        return None

    @property
    def passed(self) -> bool:
        return self.first_failure is None and self.euler_ok


def alternating_partial(v, k: int) -> int:
    return sum((-1) ** (k - i) * v[i] for i in range(k + 1))


def check_inequalities(counts: MorseCounts, betti2=None) -> MorseVerdict:
    """Margins ``sum_{i<=k} (-1)^{k-i} (c_i - b_i)`` for ``k < 2 nu`` and the
    Euler equality."""
    b = betti2 if betti2 is not None else counts.betti2
    if b is None:
        raise InvalidParameterError("L2 Betti numbers are required")
    b = _counts(b, "betti2")
    c = counts.total
    if len(b) != len(c):
        raise InvalidParameterError(f"betti2 has length {len(b)}, expected {len(c)}")
    margins = tuple(alternating_partial(c, k) - alternating_partial(b, k) for k in range(len(c) - 1))
    ec = sum((-1) ** i * x for i, x in enumerate(c))
    eb = sum((-1) ** i * x for i, x in enumerate(b))
    return MorseVerdict(margins, ec, eb)
