import numpy as np
import pytest

from conewitten.errors import (AssemblyError, DegenerateFitError, InvalidParameterError,
                               UnsupportedOracleError)
from conewitten.link_models import (circle_potential, constant_potential, curve_potential, make_abstract_link,
                                    make_circle_link)
from conewitten.model_operator import (
    _lumped_mass,
    assemble,
    assemble_radial,
    bessel_ode_residual,
    bessel_oracle,
    build_S0,
    build_T,
    c_coefficients,
    compare_kernel_profiles,
    default_grid,
    explicit_kernel_pm,
    gap_estimate,
    make_grid,
    mode_records,
    model_spectrum,
    radial_profile,
    split_threshold,
    truncation_sensitivity,
    verify_rescaling,
)

from oracles import PM_TABLE, v_minus, v_plus


@pytest.fixture(scope="module")
def curve2():
    link = make_circle_link(2, 8)
    return link, curve_potential(link)


@pytest.mark.parametrize("n, expected", [(1, (-0.5, -0.5)), (3, (-1.5, 0.5, 0.5, -1.5))])
def test_c_coefficients(n, expected):
    assert tuple(c_coefficients(n)) == pytest.approx(expected)


def test_s0_symmetric_and_dimension_guard():
    link = make_circle_link(3, 4)
    S0 = build_S0(link)
    assert np.array_equal(S0, S0.T)
    with pytest.raises(AssemblyError):
        build_S0(link, nu=2)


def test_t_rejects_foreign_potential():
    pot = curve_potential(make_circle_link(2, 6))
    with pytest.raises(AssemblyError):
        build_T(make_circle_link(2, 4), pot)


def test_admissibility_lower_bound():
    link = make_circle_link(2, 4)
    pot = circle_potential(link, cos={1: 1.0})
    # h = cos(phi/2): h^2 + h'^2 = cos^2 + sin^2 / 4 >= 1/4
    assert pot.lower_bound_a**2 == pytest.approx(0.25, abs=1e-6)
    with pytest.raises(InvalidParameterError):
        circle_potential(link, cos={1: 1.0}, a=0.6)


@pytest.mark.parametrize("N, scheme", [(64, "graded"), (100, "uniform")])
def test_grid_layout(N, scheme):
    g = make_grid(2.0, N=N, scheme=scheme)
    assert g.N == N and np.all(np.diff(g.r) > 0)
    assert g.r[0] == pytest.approx(2e-4) and g.r[-1] == pytest.approx(2.0)


@pytest.mark.parametrize("kwargs", [dict(N=8), dict(scheme="chebyshev"), dict(r_min=3.0)])
def test_grid_errors(kwargs):
    with pytest.raises(InvalidParameterError):
        make_grid(2.0, **kwargs)


def test_split_threshold():
    assert split_threshold(10.0) == pytest.approx(1e-4)
    assert split_threshold(1e-3) == 1e-8


def test_middle_degree_modes_branch_matched(curve2):
    link, pot = curve2
    recs, F = mode_records(assemble(link, pot, 1.0), 1)
    matched = [r for r in recs if r.bc == "branch-matched"]
    assert len(matched) > 0
    assert sum(r.inner == "free" for r in recs) == F.shape[1]
    assert all(abs(r.s) < 0.5 for r in matched)
    recs_f, F_f = mode_records(assemble(link, pot, 1.0), 1, bc="friedrichs")
    assert all(r.bc == "friedrichs" for r in recs_f)


def test_radial_operator_symmetric_psd(curve2):
    link, pot = curve2
    op = assemble_radial(assemble(link, pot, 3.0), 1, make_grid(5.0, N=64))
    C = op.symmetric().toarray()
    assert np.max(np.abs(C - C.T)) <= 1e-12 * np.abs(C).max()
    assert np.linalg.eigvalsh(C).min() >= -1e-8 * np.abs(C).max()


def test_unknown_bc_rejected(curve2):
    link, pot = curve2
    with pytest.raises(InvalidParameterError):
        assemble_radial(assemble(link, pot, 1.0), 1, make_grid(1.0, N=64), bc="neumann")


def test_f_plus_r_kernel_profile():
    link = make_circle_link(1, 4)
    t = 5.0
    g = default_grid(t)
    rep = model_spectrum(link, constant_potential(link, 1.0), t, 0, g, J=4, keep_vectors=True)
    assert rep.kernel_dim == 1
    ref = np.sqrt(g.r) * np.exp(-t * g.r)
    ref /= np.sqrt(np.sum(ref**2 * _lumped_mass(g.r)))
    assert np.max(np.abs(radial_profile(rep.vectors[0], g.r) - ref)) <= 1e-4 * ref.max()


@pytest.mark.parametrize("m, expected", [(1, (0, 0, 0)), (3, (0, 2, 0))])
def test_curve_kernel(m, expected):
    link = make_circle_link(m, 8)
    pot = curve_potential(link)
    dims = tuple(model_spectrum(link, pot, 10.0, k, J=6).kernel_dim for k in range(3))
    assert dims == expected


def test_friedrichs_everywhere_loses_the_middle_kernel(curve2):
    link, pot = curve2
    assert model_spectrum(link, pot, 5.0, 1, J=4, bc="friedrichs").kernel_dim == 0


def test_spectrum_nonnegative_with_small_residuals(curve2):
    link, pot = curve2
    rep = model_spectrum(link, pot, 5.0, 1, J=8)
    assert rep.eigenvalues.min() >= -1e-8
    assert rep.residuals.max() <= 1e-6
    assert np.all(np.diff(rep.eigenvalues) >= -1e-9)


def test_grid_refinement_changes_first_nonzero_little(curve2):
    link, pot = curve2
    a = model_spectrum(link, pot, 5.0, 1, default_grid(5.0, N=1024), J=4).gap_lower
    b = model_spectrum(link, pot, 5.0, 1, default_grid(5.0, N=2048), J=4).gap_lower
    assert abs(a - b) <= 1e-2 * b


def test_degree_out_of_range(curve2):
    link, pot = curve2
    with pytest.raises(InvalidParameterError):
        model_spectrum(link, pot, 1.0, 3)
    with pytest.raises(InvalidParameterError):
        model_spectrum(link, pot, -1.0, 0)


def test_empty_degree_block():
    link = make_abstract_link(3, (1, 0, 0, 1))
    rep = model_spectrum(link, constant_potential(link, 1.0), 2.0, 2)
    assert rep.kernel_dim == 0 and len(rep.eigenvalues) == 0


@pytest.mark.parametrize("t", [1.0, 4.0])
def test_rescaling_exact_grid(curve2, t):
    link, pot = curve2
    rep = verify_rescaling(link, pot, 1, t, J=6, grid1=default_grid(1.0, N=512))
    assert rep.defect <= 1e-8 and rep.passed


def test_rescaling_nonrescaled_grid(curve2):
    link, pot = curve2
    rep = verify_rescaling(link, pot, 0, 9.0, J=6, exact_grid=False)
    assert rep.defect <= 1e-3 and rep.passed


def test_gap_doubling_quadruples(curve2):
    link, pot = curve2
    reps = [model_spectrum(link, pot, t, 1, J=4) for t in (5.0, 10.0)]
    assert reps[1].gap_lower / reps[0].gap_lower == pytest.approx(4.0, rel=1e-2)
    fit = gap_estimate(reps)
    assert fit.p == pytest.approx(2.0, abs=0.05) and fit.passed


def test_gap_fit_degenerate(curve2):
    link, pot = curve2
    rep = model_spectrum(link, pot, 5.0, 1, J=2)
    with pytest.raises(DegenerateFitError):
        gap_estimate([rep])


@pytest.mark.parametrize("t", [2.0, 4.0])
def test_f_plus_r_hydrogenic_second_level(t):
    # degree 0 reduces to -u'' - u/(4r^2) - t u/r + t^2 u: levels t^2 (1 - 1/(2j+1)^2)
    link = make_circle_link(1, 4)
    rep = model_spectrum(link, constant_potential(link, 1.0), t, 0, J=4)
    assert rep.gap_lower / t**2 == pytest.approx(8 / 9, rel=1e-3)


def test_f_plus_r_gap_above_a2t2_in_top_degree():
    link = make_circle_link(1, 4)
    rep = model_spectrum(link, constant_potential(link, 1.0), 4.0, 2, J=4)
    assert rep.gap_lower >= 16.0


def test_truncation_sensitivity(curve2):
    link, pot = curve2
    assert truncation_sensitivity(link, pot, 5.0, 1, default_grid(5.0, N=1024), J=4) <= 1e-8


@pytest.mark.parametrize("betti, nu", list(PM_TABLE))
@pytest.mark.parametrize("sign", [1, -1])
def test_explicit_pm_dims(betti, nu, sign):
    dims = tuple(explicit_kernel_pm(betti, sign, nu, i).dim for i in range(2 * nu + 1))
    assert dims == PM_TABLE[(betti, nu)][0 if sign == 1 else 1]
    assert dims == (v_plus(betti, nu) if sign == 1 else v_minus(betti, nu))


def test_explicit_pm_rejects_nonconstant(curve2):
    _, pot = curve2
    with pytest.raises(UnsupportedOracleError):
        explicit_kernel_pm((1, 1), 1, 1, 0, pot)


@pytest.mark.parametrize("m, orders", [(1, ()), (2, (0.5,)), (3, (1 / 3, 2 / 3)), (4, (0.25, 0.5, 0.75))])
def test_bessel_oracle_orders(m, orders):
    orc = bessel_oracle(m, 5.0, default_grid(5.0, N=512))
    assert orc.dim == m - 1
    assert orc.orders == pytest.approx(orders)
    assert orc.ode_residual <= 1e-8


@pytest.mark.parametrize("order", [0.0, 1.0, 1.5])
def test_bessel_order_out_of_range(order):
    with pytest.raises(InvalidParameterError):
        bessel_ode_residual(order, 1.0, np.linspace(0.1, 1, 10))


def test_bessel_profile_agreement(curve2):
    link, pot = curve2
    g = default_grid(5.0)
    rep = model_spectrum(link, pot, 5.0, 1, g, J=4, keep_vectors=True)
    errs = compare_kernel_profiles(rep, bessel_oracle(2, 5.0, g), g)
    assert errs.max() <= 1e-4
