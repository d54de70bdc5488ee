"""Command-line entry point.

Configuration files use ``[section]`` headers, ``key = value`` lines and
``#`` comments.  Every run writes a plain-text report (embedding the fully
resolved configuration), a CSV file and PNG figures into the output
directory.  ``CONEWITTEN_OUTDIR`` overrides the output directory.

Exit codes: 0 pass, 1 verdict failure, 2 configuration error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConeWittenError,
    ConfigError,
    DegenerateFitError,
    InvalidParameterError,
    ModelInconsistencyError,
    NumericalFailureError,
    TruncationInsufficientError,
    UnsupportedOracleError,
)

COMMANDS = ("link-validate", "model-spectrum", "model-gap", "model-kernel", "ih", "morse-check", "global-demo")
OUTDIR_ENV = "CONEWITTEN_OUTDIR"
EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# Configuration grammar
# ---------------------------------------------------------------------------


def _int(s):
    return int(s)


def _pos_float(s):
    return float(s)


def _int_list(s):
    return tuple(int(x) for x in s.replace(" ", "").split(",") if x != "")


def _float_list(s):
    return tuple(float(x) for x in s.replace(" ", "").split(",") if x != "")


def _vectors(s):
    return tuple(_int_list(part) for part in s.split(";") if part.strip())


def _coeffs(s):
    out = {}
    for part in s.split(","):
        if not part.strip():
            continue
        k, v = part.split(":")
        out[int(k)] = float(v)
    return out


def _bool(s):
    low = s.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(s)


def _choice(*opts):
    def parse(s):
        if s not in opts:
            raise ValueError(f"expected one of {', '.join(opts)}")
        return s
    parse.__name__ = "one of " + "|".join(opts)
    return parse


# section -> key -> (parser, default, description)
SCHEMA = {
    "run": {
        "command": (_choice(*COMMANDS), None, "command to run"),
        "t": (float, 10.0, "deformation parameter"),
        "t_list": (_float_list, (4.0, 8.0, 16.0, 32.0), "parameters for scans"),
        "J": (_int, 10, "eigenvalues per degree"),
        "degrees": (_int_list, None, "degrees to compute (default: all)"),
    },
    "link": {
        "kind": (_choice("circle", "abstract"), "circle", "link family"),
        "m": (_int, 1, "circle multiplicity (length 2 pi m)"),
        "K": (_int, 8, "retained frequencies per degree (circle)"),
        "n": (_int, 1, "link dimension (abstract)"),
        "betti": (_int_list, None, "Betti numbers b_0..b_n (abstract)"),
    },
    "potential": {
        "kind": (_choice("curve", "constant", "trig"), "curve", "link function h"),
        "value": (float, 1.0, "constant value of h"),
        "const": (float, 0.0, "constant term (trig)"),
        "cos": (_coeffs, {}, "cosine coefficients as k:c pairs (trig)"),
        "sin": (_coeffs, {}, "sine coefficients as k:c pairs (trig)"),
    },
    "grid": {
        "N": (_int, 2048, "radial grid points"),
        "scheme": (_choice("graded", "uniform"), "graded", "grid scheme"),
        "r_max_factor": (float, 20.0, "r_max = factor / (a t)"),
        "bc": (_choice("auto", "friedrichs"), "auto", "middle-degree boundary policy"),
    },
    "ih": {
        "nu": (_int, 1, "half the cone dimension"),
        "betti": (_int_list, (1, 1), "link Betti numbers"),
        "halflink": (_choice("empty", "full", "points", "custom"), "empty", "lower halflink"),
        "points": (_int, 1, "number of points (halflink = points)"),
        "betti_lminus": (_int_list, (), "Betti numbers of the halflink (custom)"),
        "ranks": (_int_list, (), "restriction ranks (custom)"),
    },
    "morse": {
        "smooth_counts": (_int_list, None, "smooth critical points by index"),
        "singular": (_vectors, (), "singular contributions, ';'-separated"),
        "betti2": (_int_list, None, "L2 Betti numbers"),
        "counts_file": (str, "", "counts CSV written by global-demo (replaces smooth_counts)"),
    },
    "global": {
        "preset": (_choice("spindle_min", "spindle_max", "suspension", "round_sphere"), "spindle_min", "surface"),
        "m": (_int, 2, "cone multiplicity"),
        "N": (_int, 2048, "profile grid points"),
        "K_fourier": (_int, 8, "Fourier truncation"),
        "scan": (_bool, True, "also fit the gap growth over t_list"),
        "t_list": (_float_list, (8.0, 16.0, 32.0, 64.0), "parameters for the gap growth scan"),
    },
    "output": {
        "dir": (str, "conewitten-out", "output directory"),
        "report": (str, "report.txt", "report file name"),
        "csv": (str, "results.csv", "CSV file name"),
        "figures": (_bool, True, "write PNG figures"),
    },
    "tolerances": {
        "residual": (float, 1e-6, "largest accepted eigen-residual"),
        "negativity": (float, 1e-8, "accepted negative eigenvalue slack"),
        "gap_low": (float, 1.9, "lower bound on the gap exponent"),
        "gap_high": (float, 2.1, "upper bound on the gap exponent"),
        "growth_slope": (float, 0.9, "lower bound on the global gap growth slope"),
        "small": (float, 1.0, "window [0, small] for global counts"),
    },
}

REQUIRED = {
    "link-validate": ("link",),
    "model-spectrum": ("link", "potential"),
    "model-gap": ("link", "potential"),
    "model-kernel": ("link", "potential"),
    "ih": ("ih",),
    "morse-check": ("morse",),
    "global-demo": ("global",),
}


@dataclass
class RunConfig:
    command: str
    values: dict  # section -> key -> value (defaults filled in)
    present: set = field(default_factory=set)

    def __getitem__(self, section):
        return self.values[section]

    def render(self) -> str:
        lines = []
        for sec in SCHEMA:
            lines.append(f"[{sec}]")
            for key in SCHEMA[sec]:
                lines.append(f"{key} = {_fmt_value(self.values[sec][key])}")
            lines.append("")
        return "\n".join(lines)


def _fmt_value(v):
    if v is None:
        return ""
    if isinstance(v, dict):
        return ", ".join(f"{k}:{_num(x)}" for k, x in sorted(v.items()))
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return "; ".join(_fmt_value(x) for x in v)
        return ", ".join(_num(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return _num(v)


def _num(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def parse_config(text: str, command: str | None = None) -> RunConfig:
    """Parse and validate a configuration; all problems are reported at once."""
    errors = []
    raw = {}
    lines_of = {}
    section = "run"
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                errors.append(f"line {lineno}: malformed section header {body!r}")
                continue
            section = body[1:-1].strip()
            if section not in SCHEMA:
                errors.append(f"line {lineno}: unknown section [{section}]; valid sections: {', '.join(SCHEMA)}")
            raw.setdefault(section, {})
            continue
        if "=" not in body:
            errors.append(f"line {lineno}: expected 'key = value', got {body!r}")
            continue
        key, value = (x.strip() for x in body.split("=", 1))
        if section not in SCHEMA:
            continue
        if key not in SCHEMA[section]:
            errors.append(f"line {lineno}: unknown key {key!r} in [{section}]; valid keys: "
                          f"{', '.join(SCHEMA[section])}")
            continue
        if key in raw.get(section, {}):
            errors.append(f"line {lineno}: duplicate key {key!r} in [{section}]")
            continue
        raw.setdefault(section, {})[key] = value
        lines_of[(section, key)] = lineno

    values = {}
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, (parser, default, _) in keys.items():
            if key in raw.get(sec, {}):
                try:
                    values[sec][key] = parser(raw[sec][key])
                except (ValueError, TypeError) as exc:
                    kind = getattr(parser, "__name__", "value").lstrip("_")
                    detail = f" ({exc})" if str(exc) else ""
                    errors.append(f"line {lines_of[(sec, key)]}: [{sec}] {key} = {raw[sec][key]!r} is not a valid "
                                  f"{kind}{detail}")
                    values[sec][key] = default
            else:
                values[sec][key] = default

    cmd = command or values["run"]["command"]
    if cmd is None:
        errors.append("no command given (set 'command' in [run] or on the command line)")
    elif cmd not in COMMANDS:
        errors.append(f"unknown command {cmd!r}; valid commands: {', '.join(COMMANDS)}")
    else:
        if command is not None and values["run"]["command"] not in (None, command):
            errors.append(f"config command {values['run']['command']!r} conflicts with {command!r}")
        values["run"]["command"] = cmd
        for sec in REQUIRED[cmd]:
            if sec not in raw:
                errors.append(f"missing section [{sec}] required by {cmd}")
    errors.extend(_semantic_errors(values, lines_of))
    if errors:
        raise ConfigError(errors)
    return RunConfig(cmd, values, set(raw))


def _semantic_errors(v, lines_of):
    errs = []

    def at(sec, key):
        ln = lines_of.get((sec, key))
        return f"line {ln}: " if ln else ""

    if v["run"]["t"] <= 0:
        errs.append(f"{at('run', 't')}t must be positive")
    if any(t <= 0 for t in v["run"]["t_list"]) or any(t <= 0 for t in v["global"]["t_list"]):
        errs.append(f"{at('run', 't_list')}t must be positive")
    if v["run"]["J"] < 1:
        errs.append(f"{at('run', 'J')}J must be >= 1")
    if v["grid"]["N"] < 16:
        errs.append(f"{at('grid', 'N')}N must be >= 16")
    if v["global"]["N"] < 16:
        errs.append(f"{at('global', 'N')}N must be >= 16")
    if v["grid"]["r_max_factor"] < 10:
        errs.append(f"{at('grid', 'r_max_factor')}r_max_factor must be >= 10")
    if v["link"]["m"] < 1:
        errs.append(f"{at('link', 'm')}m must be >= 1")
    if v["link"]["K"] < 1:
        errs.append(f"{at('link', 'K')}K must be >= 1")
    if v["link"]["kind"] == "abstract" and v["link"]["betti"] is None and ("link", "kind") in lines_of:
        errs.append(f"{at('link', 'kind')}abstract links need 'betti'")
    return errs


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def g17(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def csv_text(header, rows) -> str:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(g17(x) if not isinstance(x, str) else x for x in row))
    return "\n".join(out) + "\n"


def spectra_rows(reports):
    rows = []
    for rep in reports:
        for j, (lam, res) in enumerate(zip(rep.eigenvalues, rep.residuals)):
            rows.append((rep.degree, rep.t, j, lam, res))
    return rows


SPECTRUM_HEADER = ("degree", "t", "index", "eigenvalue", "residual")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


@dataclass
class Outcome:
    passed: bool
    summary: list
    csv: str
    figures: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)  # additional file name -> text


def _build_link(cfg):
    from .link_models import make_abstract_link, make_circle_link

    lk = cfg["link"]
    if lk["kind"] == "circle":
        return make_circle_link(lk["m"], lk["K"])
    if lk["betti"] is None:
        raise InvalidParameterError("abstract links need 'betti'")
    return make_abstract_link(len(lk["betti"]) - 1, lk["betti"])


def _build_potential(cfg, link):
    from .link_models import circle_potential, constant_potential, curve_potential

    p = cfg["potential"]
    if p["kind"] == "constant":
        return constant_potential(link, p["value"])
    if link.kind != "circle":
        raise InvalidParameterError(f"potential kind {p['kind']!r} needs a circle link")
    if p["kind"] == "curve":
        return curve_potential(link)
    return circle_potential(link, cos=p["cos"], sin=p["sin"], const=p["const"])


def _grid_for(cfg, pot, t):
    from .model_operator import make_grid

    g = cfg["grid"]
    return make_grid(g["r_max_factor"] / (pot.lower_bound_a * t), N=g["N"], scheme=g["scheme"])


def _degrees(cfg, link):
    ds = cfg["run"]["degrees"]
    top = link.n + 1
    if ds is None:
        return list(range(top + 1))
    bad = [d for d in ds if not 0 <= d <= top]
    if bad:
        raise InvalidParameterError(f"degrees {bad} outside 0..{top}")
    return list(ds)


def cmd_link_validate(cfg, outdir):
    from .link_models import validate_link

    link = _build_link(cfg)
    diag = validate_link(link)
    rows = [("d_squared", diag.d_squared), ("adjointness", diag.adjointness), ("eigenvalue", diag.eigenvalue),
            ("harmonic_count", diag.harmonic_count), ("tolerance", diag.tolerance)]
    summary = [f"link: {link.kind}, n = {link.n}, dims = {tuple(link.dims)}, betti = {tuple(link.betti)}",
               f"d^2 defect = {g17(diag.d_squared)}", f"adjointness defect = {g17(diag.adjointness)}",
               f"eigenvalue defect = {g17(diag.eigenvalue)}",
               f"harmonic count mismatch = {g17(diag.harmonic_count)}",
               f"worst degree = {diag.worst_degree}"]
    return Outcome(diag.passed, summary, csv_text(("check", "value"), rows))


def _spectra(cfg, t_values):
    from .model_operator import model_spectrum

    link = _build_link(cfg)
    pot = _build_potential(cfg, link)
    reps = []
    for t in t_values:
        grid = _grid_for(cfg, pot, t)
        for k in _degrees(cfg, link):
            reps.append(model_spectrum(link, pot, t, k, grid, cfg["run"]["J"], cfg["grid"]["bc"]))
    return link, pot, reps


def _spectral_verdict(cfg, reps):
    tol = cfg["tolerances"]
    lines, ok = [], True
    for rep in reps:
        neg = rep.eigenvalues.min(initial=0.0)
        res = rep.residuals.max(initial=0.0)
        good = neg >= -tol["negativity"] and res <= tol["residual"]
        ok &= good
        lines.append(f"degree {rep.degree}, t = {rep.t:g}: kernel_dim = {rep.kernel_dim}, "
                     f"gap_lower = {g17(rep.gap_lower)}, max residual = {res:.3e}"
                     + ("" if good else "  [FAIL]"))
    return ok, lines


def cmd_model_spectrum(cfg, outdir):
    _, _, reps = _spectra(cfg, [cfg["run"]["t"]])
    ok, lines = _spectral_verdict(cfg, reps)
    out = Outcome(ok, lines, csv_text(SPECTRUM_HEADER, spectra_rows(reps)))
    if cfg["output"]["figures"]:
        from .plotting import plot_spectra

        out.figures.append(plot_spectra(reps, os.path.join(outdir, "spectra.png")))
    return out


def _expected_kernel(cfg, link, pot):
    """Kernel dimensions predicted by the closed-form oracles, if one applies."""
    from .ih_calculator import ConeMorseDatum, Empty, FullLink, Points, morse_contribution

    nu = link.nu
    if pot.is_constant and abs(abs(pot.constant) - 1.0) < 1e-12:
        hl = Empty() if pot.constant > 0 else FullLink()
        return morse_contribution(ConeMorseDatum(nu, tuple(link.betti), hl)), "IH of the cone with " + (
            "empty halflink" if pot.constant > 0 else "halflink = link")
    if cfg["potential"]["kind"] == "curve":
        return morse_contribution(ConeMorseDatum(1, (1, 1), Points(link.m))), f"IH with {link.m}-point halflink"
    return None, None


def cmd_model_kernel(cfg, outdir):
    from .model_operator import bessel_oracle, compare_kernel_profiles, model_spectrum, radial_profile

    link = _build_link(cfg)
    pot = _build_potential(cfg, link)
    t = cfg["run"]["t"]
    grid = _grid_for(cfg, pot, t)
    degs = _degrees(cfg, link)
    reps = [model_spectrum(link, pot, t, k, grid, cfg["run"]["J"], cfg["grid"]["bc"], keep_vectors=True)
            for k in degs]
    ok, lines = _spectral_verdict(cfg, reps)
    dims = tuple(r.kernel_dim for r in reps)
    lines.insert(0, f"kernel dims over degrees {tuple(degs)}: {dims}")
    expected, source = _expected_kernel(cfg, link, pot)
    if expected is not None:
        exp = tuple(expected[k] for k in degs)
        match = exp == dims
        ok &= match
        lines.insert(1, f"expected ({source}): {exp} -> {'match' if match else 'MISMATCH'}")
    figs = []
    if cfg["potential"]["kind"] == "curve" and link.m > 1 and 1 in degs:
        rep1 = reps[degs.index(1)]
        orc = bessel_oracle(link.m, t, grid)
        if rep1.kernel_dim == orc.dim:
            errs = compare_kernel_profiles(rep1, orc, grid)
            lines.append("Bessel profile distance (relative sup-norm): "
                         + ", ".join(f"nu={o:.4g}: {e:.3e}" for o, e in zip(orc.orders, errs)))
            ok &= bool(np.all(errs <= 1e-3))
            if cfg["output"]["figures"]:
                from .plotting import plot_kernel_profiles

                comp = [radial_profile(rep1.vectors[j], grid.r) for j in range(rep1.kernel_dim)]
                figs.append(plot_kernel_profiles(grid.r, comp, orc.profiles,
                                                 [f"sqrt(r) K_{o:.3g}(tr)" for o in orc.orders],
                                                 os.path.join(outdir, "kernel_profiles.png")))
    out = Outcome(ok, lines, csv_text(SPECTRUM_HEADER, spectra_rows(reps)), figs)
    if cfg["output"]["figures"]:
        from .plotting import plot_spectra

        out.figures.append(plot_spectra(reps, os.path.join(outdir, "spectra.png")))
    return out


def cmd_model_gap(cfg, outdir):
    from .model_operator import gap_estimate

    ts = cfg["run"]["t_list"]
    link, _, reps = _spectra(cfg, ts)
    tol = cfg["tolerances"]
    ok, lines = _spectral_verdict(cfg, reps)
    fits = []
    for k in _degrees(cfg, link):
        sub = [r for r in reps if r.degree == k]
        try:
            fit = gap_estimate(sub)
        except DegenerateFitError as exc:
            lines.append(f"degree {k}: no fit ({exc})")
            continue
        good = tol["gap_low"] <= fit.p <= tol["gap_high"] and fit.c > 0
        ok &= good
        fits.append((k, fit))
        lines.append(f"degree {k}: lambda_gap ~ {fit.c:.6g} * t^{fit.p:.6f}" + ("" if good else "  [FAIL]"))
    if not fits:
        ok = False
        lines.append("no degree produced a gap fit")
    out = Outcome(ok, lines, csv_text(SPECTRUM_HEADER, spectra_rows(reps)))
    if cfg["output"]["figures"] and fits:
        from .plotting import plot_gap_fit

        k, fit = fits[0]
        out.figures.append(plot_gap_fit(fit.ts, fit.gaps, fit.c, fit.p, os.path.join(outdir, "gap_fit.png"),
                                        label=f"degree {k}"))
    return out


def _ih_datum(cfg):
    from .ih_calculator import ConeMorseDatum, Custom, Empty, FullLink, Points

    s = cfg["ih"]
    hl = {"empty": lambda: Empty(), "full": lambda: FullLink(), "points": lambda: Points(s["points"]),
          "custom": lambda: Custom(s["betti_lminus"], s["ranks"])}[s["halflink"]]()
    return ConeMorseDatum(s["nu"], s["betti"], hl)


def cmd_ih(cfg, outdir):
    from .ih_calculator import morse_contribution

    d = _ih_datum(cfg)
    m = morse_contribution(d)
    lines = [f"halflink: {d.halflink}", f"m_p = {m}"]
    return Outcome(True, lines, csv_text(("degree", "m"), list(enumerate(m))))


def cmd_morse_check(cfg, outdir):
    from .morse_checker import check_inequalities, total_counts

    s = cfg["morse"]
    smooth, betti2 = s["smooth_counts"], s["betti2"]
    if s["counts_file"]:
        smooth, betti2 = read_counts_csv(s["counts_file"], betti2)
    if smooth is None or betti2 is None:
        raise InvalidParameterError("[morse] needs smooth_counts (or counts_file) and betti2")
    counts = total_counts(smooth, s["singular"], betti2)
    v = check_inequalities(counts)
    lines = [f"c(f) = {counts.total}", f"b(2) = {counts.betti2}"]
    for k, mg in enumerate(v.margins):
        lines.append(f"k = {k}: margin {mg}" + ("  [FAIL]" if mg < 0 else ""))
    lines.append(f"Euler: {v.euler_counts} vs {v.euler_betti}" + ("" if v.euler_ok else "  [FAIL]"))
    rows = [(k, mg) for k, mg in enumerate(v.margins)] + [("euler", v.euler_counts - v.euler_betti)]
    return Outcome(v.passed, lines, csv_text(("k", "margin"), rows))


COUNTS_FILE = "counts.csv"


def read_counts_csv(path, betti2=None):
    """Counts (and L2 Betti numbers unless given) from a global-demo counts CSV."""
    try:
        with open(path, encoding="utf-8") as fh:
            rows = [line.strip().split(",") for line in fh if line.strip()]
        head = rows[0]
        ic, ib = head.index("count"), head.index("betti2")
        counts = tuple(int(r[ic]) for r in rows[1:])
        b = tuple(int(r[ib]) for r in rows[1:])
    except (OSError, ValueError, IndexError) as exc:
        raise InvalidParameterError(f"cannot read counts from {path}: {exc}") from exc
    return counts, betti2 if betti2 is not None else b


def cmd_global_demo(cfg, outdir):
    from .global_surface import build_preset, count_small_eigenvalues, gap_growth_scan
    from .morse_checker import check_inequalities, total_counts

    s = cfg["global"]
    tol = cfg["tolerances"]
    surf = build_preset(s["preset"], s["m"], N=s["N"], K_fourier=s["K_fourier"])
    t = cfg["run"]["t"]
    rep = count_small_eigenvalues(surf, t, threshold=tol["small"])
    verdict = check_inequalities(total_counts(rep.counts, (), surf.betti2))
    ok = rep.passed and verdict.passed
    lines = [f"preset {surf.name}, m = {surf.m}, t = {t:g}",
             f"eigenvalue counts in [0, {tol['small']:g}] per degree: {rep.counts}",
             f"c(f) from the Morse data: {rep.expected} -> {'match' if rep.passed else 'MISMATCH'}",
             f"largest small eigenvalue: {rep.max_small:.3e}",
             f"next eigenvalue: {g17(rep.lambda_next)}",
             f"Morse margins {verdict.margins}, Euler {verdict.euler_counts} = {verdict.euler_betti}"]
    rows = []
    if s["scan"]:
        fit = gap_growth_scan(surf, s["t_list"], threshold=tol["small"])
        good = fit.slope >= tol["growth_slope"]
        ok &= good
        lines.append(f"gap growth: lambda_next ~ {fit.C:.6g} * t^{fit.slope:.6f}" + ("" if good else "  [FAIL]"))
        rows = [(tt, lam, ms) for tt, lam, ms in zip(fit.ts, fit.lambda_next, fit.max_small)]
    csv = csv_text(("t", "lambda_next", "max_small"), rows or [(t, rep.lambda_next, rep.max_small)])
    out = Outcome(ok, lines, csv)
    out.extra[COUNTS_FILE] = csv_text(("degree", "count", "expected", "betti2"),
                                      [(k, c, e, b) for k, (c, e, b) in
                                       enumerate(zip(rep.counts, rep.expected, surf.betti2))])
    if cfg["output"]["figures"]:
        from .plotting import plot_counts, plot_gap_fit

        out.figures.append(plot_counts(rep.counts, rep.expected, os.path.join(outdir, "counts.png")))
        if s["scan"]:
            out.figures.append(plot_gap_fit(fit.ts, fit.lambda_next, fit.C, fit.slope,
                                            os.path.join(outdir, "gap_growth.png"), label="next eigenvalue"))
    return out


HANDLERS = {
    "link-validate": cmd_link_validate,
    "model-spectrum": cmd_model_spectrum,
    "model-gap": cmd_model_gap,
    "model-kernel": cmd_model_kernel,
    "ih": cmd_ih,
    "morse-check": cmd_morse_check,
    "global-demo": cmd_global_demo,
}


def run(cfg: RunConfig, outdir: str | None = None) -> int:
    """Execute a parsed configuration; returns the exit status."""
    outdir = os.environ.get(OUTDIR_ENV) or outdir or cfg["output"]["dir"]
    os.makedirs(outdir, exist_ok=True)
    try:
        out = HANDLERS[cfg.command](cfg, outdir)
    except (InvalidParameterError, ModelInconsistencyError, UnsupportedOracleError) as exc:
        _report_failure(cfg, outdir, "configuration error", exc)
        return EXIT_CONFIG
    except (NumericalFailureError, TruncationInsufficientError, DegenerateFitError) as exc:
        _report_failure(cfg, outdir, "numerical failure", exc)
        return EXIT_NUMERIC
    verdict = "PASS" if out.passed else "FAIL"
    text = [f"command: {cfg.command}", f"verdict: {verdict}", ""] + out.summary
    if out.figures:
        text += ["", "figures:"] + [f"  {os.path.basename(p)}" for p in out.figures]
    text += ["", "resolved configuration:", cfg.render()]
    atomic_write(os.path.join(outdir, cfg["output"]["csv"]), out.csv)
    for name, body in out.extra.items():
        atomic_write(os.path.join(outdir, name), body)
    atomic_write(os.path.join(outdir, cfg["output"]["report"]), "\n".join(text))
    print("\n".join(out.summary))
    print(f"verdict: {verdict}")
    return EXIT_PASS if out.passed else EXIT_FAIL


def _report_failure(cfg, outdir, kind, exc):
    trace = getattr(exc, "trace", None)
    text = [f"command: {cfg.command}", f"verdict: ERROR ({kind})", str(exc)]
    if trace:
        text.append("trace: " + ", ".join(f"{x:.3e}" for x in trace))
    text += ["", "resolved configuration:", cfg.render()]
    atomic_write(os.path.join(outdir, cfg["output"]["report"]), "\n".join(text))
    print(f"{kind}: {exc}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conewitten", description="Witten deformation on spaces with conic singularities")
    p.add_argument("command", choices=COMMANDS + ("run",), help="command, or 'run' to take it from the config")
    p.add_argument("config", nargs="?", help="configuration file")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a configuration value (repeatable)")
    p.add_argument("--outdir", help="output directory (overridden by $" + OUTDIR_ENV + ")")
    p.add_argument("--preset", help="global-demo: surface preset")
    p.add_argument("--m", type=int, help="global-demo: cone multiplicity")
    p.add_argument("--t", type=float, help="deformation parameter")
    return p


def _overrides(args) -> str:
    lines = {}
    for item in args.set:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError([f"--set {item!r}: expected SECTION.KEY=VALUE"])
        lhs, val = item.split("=", 1)
        sec, key = lhs.split(".", 1)
        lines.setdefault(sec.strip(), []).append(f"{key.strip()} = {val.strip()}")
    if args.preset is not None:
        lines.setdefault("global", []).append(f"preset = {args.preset}")
    if args.m is not None:
        lines.setdefault("global", []).append(f"m = {args.m}")
    if args.t is not None:
        lines.setdefault("run", []).append(f"t = {args.t!r}")
    return "\n".join(f"[{sec}]\n" + "\n".join(v) for sec, v in lines.items())


def _merge(base: str, extra: str) -> str:
    """Append override lines; keys already set in ``base`` are replaced."""
    if not extra:
        return base
    over = {}
    sec = "run"
    for line in extra.splitlines():
        if line.startswith("["):
            sec = line[1:-1]
        elif "=" in line:
            k, v = (x.strip() for x in line.split("=", 1))
            over.setdefault(sec, {})[k] = v
    out, sec = [], "run"
    seen = set()
    for line in base.splitlines():
        body = line.split("#", 1)[0].strip()
        if body.startswith("[") and body.endswith("]"):
            sec = body[1:-1].strip()
        elif "=" in body:
            k = body.split("=", 1)[0].strip()
            if k in over.get(sec, {}):
                out.append(f"{k} = {over[sec][k]}")
                seen.add((sec, k))
                continue
        out.append(line)
    for s, kv in over.items():
        rest = [f"{k} = {v}" for k, v in kv.items() if (s, k) not in seen]
        if rest:
            out.append(f"[{s}]")
            out.extend(rest)
    return "\n".join(out)


def _join_two_word(argv):
    """Accept ``morse check`` style spellings of the hyphenated commands."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if len(argv) >= 2 and f"{argv[0]}-{argv[1]}" in COMMANDS:
        argv[:2] = [f"{argv[0]}-{argv[1]}"]
    return argv


def main(argv=None) -> int:
    args = build_parser().parse_args(_join_two_word(argv))
    try:
        text = ""
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        text = _merge(text, _overrides(args))
        cfg = parse_config(text, None if args.command == "run" else args.command)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg, args.outdir)
    except ConeWittenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
