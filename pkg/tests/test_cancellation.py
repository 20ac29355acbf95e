import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tailinv.cancellation import (
    CERTIFIED,
    NO_ZERO,
    REFUTED,
    CancellationTask,
    ExpSum,
    all_patterns,
    certify_atom_dominance,
    check_diagonal_determining,
    check_measure_determining,
    check_product_determining,
    check_scalar_determining,
    check_uniform_product,
    mellin_eval,
    mellin_profile,
    scan_zeros,
    signed_expsum,
    system_residual,
    validate_hypotheses,
)
from tailinv.forward import ProductLaw, WeightFamily
from tailinv.measures import MeasureError, NormExceed, Rect, make_discrete, quadrant_split

PI_LN2 = math.pi / math.log(2)


def q1(atoms, sign=1):
    return {(sign,): make_discrete(1, [(x, m) for x, m in atoms])}


def test_all_patterns():
    assert all_patterns(1) == [(0,), (1,)]
    assert len(all_patterns(3)) == 8


def test_task_validation():
    with pytest.raises(MeasureError):
        CancellationTask((), 1.0)
    with pytest.raises(MeasureError):
        CancellationTask((0,), 1.0, delta_prime=1.5)
    assert CancellationTask((0,), 1.0).delta_prime == 0.5


# -- mellin_eval ------------------------------------------------------------


def test_mellin_single_unit_atom():
    task = CancellationTask((0,), 2.3)
    for th in (0.0, 1.0, 17.5):
        assert mellin_eval(q1([(1.0, 1.0)]), task, 0, (0,), th) == pytest.approx(1 + 0j, abs=1e-15)


def test_mellin_half_atoms_vanish_at_pi_over_ln2():
    task = CancellationTask((0,), 1.0)
    v = mellin_eval(q1([(1.0, 1.0), (0.5, 2.0)]), task, 0, (0,), PI_LN2)
    assert abs(v) < 1e-15


def test_mellin_signed_pair_cancels():
    rho = {(1,): make_discrete(1, [(1.0, 1.0)]), (-1,): make_discrete(1, [(1.0, 1.0)])}
    assert mellin_eval(rho, CancellationTask((0,), 1.0), 0, (1,), 0.0) == 0


def test_mellin_rejects_nonpositive_coordinates():
    with pytest.raises(MeasureError):
        mellin_eval({(1,): make_discrete(1, [(-1.0, 1.0)])}, CancellationTask((0,), 1.0), 0, (0,), 0.0)


quad_atoms = st.lists(st.tuples(st.floats(0.05, 5), st.floats(0.05, 5), st.floats(0.01, 3)), min_size=1, max_size=5)


def _rho2(a, b):
    return {
        (1, 1): make_discrete(2, [((x, y), m) for x, y, m in a]),
        (-1, 1): make_discrete(2, [((x, y), m) for x, y, m in b]),
    }


@given(quad_atoms, quad_atoms, st.floats(0.2, 3))
def test_mellin_at_zero_is_real_moment(a, b, alpha):
    rho = _rho2(a, b)
    task = CancellationTask.full(2, alpha)
    for j in (0, 1):
        v = mellin_eval(rho, task, j, (0, 0), [0.0, 0.0])
        mom = sum(float(np.sum(m.masses * m.points[:, j] ** alpha)) for m in rho.values())
        assert v.real == pytest.approx(mom, rel=1e-13)
        assert abs(v.imag) <= 1e-14 * max(1.0, mom)


@given(quad_atoms, quad_atoms, st.floats(0.2, 3), st.tuples(st.floats(-20, 20), st.floats(-20, 20)), st.sampled_from(all_patterns(2)))
def test_mellin_conjugate_symmetry(a, b, alpha, th, m):
    rho = _rho2(a, b)
    task = CancellationTask.full(2, alpha)
    v1 = mellin_eval(rho, task, 1, m, list(th))
    v2 = mellin_eval(rho, task, 1, m, [-th[0], -th[1]])
    assert v2 == pytest.approx(v1.conjugate(), rel=1e-12, abs=1e-12)


def test_mellin_profile_matches_pointwise():
    rho = q1([(1.0, 1.0), (0.5, 2.0)])
    task = CancellationTask((0,), 1.0)
    th = np.linspace(-5, 5, 11)
    prof = mellin_profile(rho, task, 0, (0,), th)
    assert len(prof.values) == len(prof.thetas) == 11
    for t, v in zip(th, prof.values):
        assert v == pytest.approx(mellin_eval(rho, task, 0, (0,), t), abs=1e-15)


# -- scan_zeros -------------------------------------------------------------


def test_scan_constant():
    res = scan_zeros(lambda T: np.full(len(T), 2.0 + 0j))
    assert res.witnesses == []
    assert res.global_min[1] == pytest.approx(2.0)


def test_scan_finds_pi_over_ln2():
    f = lambda T: 1 + np.exp(-1j * T[:, 0] * math.log(2))
    res = scan_zeros(f, theta_max=6.0)
    assert len(res.witnesses) >= 1
    x, fx = res.witnesses[0]
    assert abs(x[0]) == pytest.approx(PI_LN2, abs=1e-9)
    assert x[0] > 0
    assert fx <= 1e-9
    assert all(abs(abs(w[0][0]) - PI_LN2) < 1e-8 for w in res.witnesses)


def test_scan_zero_at_origin():
    f = lambda T: 1 - np.exp(-1j * T[:, 0] * math.log(2))
    res = scan_zeros(f, theta_max=6.0)
    x, fx = res.witnesses[0]
    assert abs(x[0]) < 1e-9 and fx <= 1e-9


def test_scan_rejects_bad_params():
    with pytest.raises(MeasureError):
        scan_zeros(lambda T: np.ones(len(T)), theta_max=0)


def test_scan_two_dimensional_root():
    # 1 + e^{i(t1 ln2 + t2 ln3)} vanishes on a line; the search must locate a point on it
    es = ExpSum.build([1.0, 1.0], [[0.0, 0.0], [math.log(2), math.log(3)]])
    res = scan_zeros(es, theta_max=3.0, grid_step=0.01, dim=2, lipschitz=es.lipschitz())
    assert res.found_zero
    x, fx = res.witnesses[0]
    assert abs(es(x[None, :])[0]) <= 1e-9


# -- verdicts ---------------------------------------------------------------


@pytest.mark.parametrize("q", [1, 2, 5])
def test_scalar_equal_weights_certified(q):
    v = check_scalar_determining([1.0] * q, 1.0)
    assert v.status == CERTIFIED
    assert set(v.conditions_checked) == {"eq3.3", "eq3.4"}


def test_scalar_plus_minus_refuted_at_zero():
    v = check_scalar_determining([1.0, -1.0], 1.0)
    assert v.status == REFUTED and v.condition == "eq3.4"
    assert np.allclose(v.witness_theta, 0.0)


def test_scalar_one_half_half_refuted():
    v = check_scalar_determining([1.0, 0.5, 0.5], 1.0)
    assert v.status == REFUTED and v.condition == "eq3.3"
    assert v.witness_theta[0] == pytest.approx(4.532360, abs=1e-6)
    assert v.value <= 1e-9


def test_scalar_geometric_certified():
    assert check_scalar_determining([1.0, 0.5], 1.0).status == CERTIFIED
    assert check_scalar_determining([1.0, -0.3], 1.7).status == CERTIFIED


def test_scalar_empty_or_zero_family():
    with pytest.raises(MeasureError):
        check_scalar_determining([], 1.0)
    with pytest.raises(MeasureError):
        check_scalar_determining([0.0, 0.0], 1.0)


@given(
    st.sampled_from([[1.0, 0.5, 0.5], [1.0, -1.0], [2.0, -1.0, 0.7], [1.0, 0.25, 0.25, 0.25, 0.25], [1.0, 0.6, -0.6, 0.3]]),
    st.floats(0.2, 5.0),
)
def test_scalar_verdict_scale_invariant(psis, c):
    a = check_scalar_determining(psis, 1.0, theta_max=10.0)
    b = check_scalar_determining([c * p for p in psis], 1.0, theta_max=10.0)
    assert a.status == b.status
    if a.refuted:
        assert a.condition == b.condition
        assert np.allclose(np.abs(a.witness_theta), np.abs(b.witness_theta), atol=1e-7)


def test_verdict_monotone_in_theta_max():
    for psis in ([1.0, 0.5, 0.5], [1.0, -1.0], [1.0, 0.25, 0.25, 0.25, 0.25]):
        small = check_scalar_determining(psis, 1.0, theta_max=6.0)
        if small.refuted:
            big = check_scalar_determining(psis, 1.0, theta_max=30.0)
            assert big.refuted


def test_diagonal_single_vector_certified():
    v = check_diagonal_determining(WeightFamily.diagonals([[0.7, -2.0, 1.3]]), 1.2)
    assert v.status == CERTIFIED


def test_diagonal_ar1_certified():
    dv = np.array([0.6, -0.4])
    fam = WeightFamily.diagonals([dv**l for l in range(25)])
    v = check_diagonal_determining(fam, 1.5)
    assert v.status == CERTIFIED
    assert all(c["kind"] in ("geometric-series", "single-term", "merged-dominance", "atom-dominance") for c in v.certificates)


def test_diagonal_zero_coordinate_rejected():
    with pytest.raises(MeasureError):
        check_diagonal_determining(WeightFamily.diagonals([[1.0, 1.0], [0.5, 0.0]]), 1.0)


@pytest.mark.parametrize("psis", [[1.0, 0.5, 0.5], [1.0, -1.0], [1.0, 0.5], [2.0, -1.0, 0.7]])
def test_diagonal_reduces_to_scalar(psis):
    a = check_scalar_determining(psis, 1.0, theta_max=10.0)
    b = check_diagonal_determining(WeightFamily.diagonals([[p] for p in psis]), 1.0, theta_max=10.0)
    assert a.refuted == b.refuted
    if a.refuted:
        assert np.allclose(np.abs(a.witness_theta), np.abs(b.witness_theta), atol=1e-7)


def test_product_symmetric_two_point_refuted():
    v = check_product_determining(ProductLaw.from_atoms(1, [(1.0, 0.5), (-1.0, 0.5)]), 1.3)
    assert v.status == REFUTED and v.condition == "eq4.3"
    assert np.allclose(v.witness_theta, 0.0)


def test_product_constant_and_dominant_certified():
    assert check_product_determining(ProductLaw.from_atoms(1, [(2.5, 1.0)]), 1.0).status == CERTIFIED
    assert check_product_determining(ProductLaw.from_atoms(1, [(2.0, 0.9), (-1.0, 0.1)]), 1.0).status == CERTIFIED


def test_product_dominant_grid_crosscheck():
    # the triangle-inequality bound 1.8 - 0.1 also bounds the grid minimum from below
    f = signed_expsum(np.array([[2.0], [-1.0]]), np.array([0.9, 0.1]), 0, (1,), 1.0)
    res = scan_zeros(f, theta_max=50.0)
    assert not res.found_zero and res.global_min[1] >= 1.7 - 1e-12


def test_product_zero_atom_rejected():
    with pytest.raises(MeasureError):
        check_product_determining(ProductLaw.from_atoms(1, [(0.0, 0.5), (1.0, 0.5)]), 1.0)


def test_product_diagonal_law():
    law = ProductLaw.from_atoms(2, [((1.0, 1.0), 0.5), ((-1.0, -1.0), 0.5)])
    v = check_product_determining(law, 1.0)
    assert v.status == REFUTED and v.condition == "eq4.1"


def test_uniform_symmetric_refuted():
    v = check_uniform_product(-1.0, 1.0, 1.0)
    assert v.status == REFUTED and np.allclose(v.witness_theta, 0.0)


def test_uniform_positive_certified():
    v = check_uniform_product(0.0, 1.0, 1.0)
    assert v.status in (CERTIFIED, NO_ZERO)
    assert v.status == CERTIFIED


def test_uniform_asymmetric_not_refuted():
    # (b^{s+1} - (-a)^{s+1}... ) has a dominant term when |a| != |b|
    for a, b in [(-1.0, 2.0), (-0.5, 1.0), (-3.0, 1.0)]:
        v = check_uniform_product(a, b, 1.0)
        assert v.status in (CERTIFIED, NO_ZERO)


def test_uniform_requires_a_lt_b():
    with pytest.raises(MeasureError):
        check_uniform_product(1.0, 1.0, 1.0)


@pytest.mark.parametrize("a,b", [(-1.0, 2.0), (0.5, 3.0), (-2.0, -0.25)])
def test_uniform_closed_form_against_quadrature(a, b):
    from scipy import integrate

    from tailinv.cancellation import _uniform_numerators

    alpha, theta = 1.0, 3.7
    s = alpha + 1j * theta

    def moment(lo, hi):
        # int_lo^hi u^s du / (b - a), in t = ln u to tame the oscillation
        if hi <= lo:
            return 0j
        f = lambda t, part: getattr(np.exp((s + 1) * t), part)
        re = integrate.quad(f, math.log(lo), math.log(hi), args=("real",), epsabs=0, epsrel=1e-12, limit=200)[0]
        im = integrate.quad(f, math.log(lo), math.log(hi), args=("imag",), epsabs=0, epsrel=1e-12, limit=200)[0]
        return (re + 1j * im) / (b - a)

    pos, neg = _uniform_numerators(a, b, alpha)
    closed = lambda terms: sum(c * e ** (s + 1) for c, e in terms) / ((s + 1) * (b - a))
    eps = 1e-300
    assert closed(pos) == pytest.approx(moment(max(a, eps), max(b, eps)), rel=1e-10, abs=1e-14)
    assert closed(neg) == pytest.approx(moment(max(-b, eps), max(-a, eps)), rel=1e-10, abs=1e-14)


def test_measure_determining_general():
    rho = make_discrete(2, [((1.0, 1.0), 1.0), ((-0.5, 2.0), 0.3)])
    v = check_measure_determining(rho, CancellationTask.full(2, 1.0))
    assert v.status == CERTIFIED


def test_measure_determining_axes_rejected():
    rho = make_discrete(2, [((1.0, 0.0), 1.0)])
    with pytest.raises(MeasureError):
        check_measure_determining(rho, CancellationTask.full(2, 1.0))


# -- dominance --------------------------------------------------------------


def test_dominance_single_atom():
    rho = {(1, -1): make_discrete(2, [((2.0, 3.0), 0.5)])}
    certs = certify_atom_dominance(rho, CancellationTask.full(2, 1.0))
    assert certs[0].margin == pytest.approx(1.0)
    assert certs[1].margin == pytest.approx(1.5)


def test_dominance_two_atoms_example():
    rho = {(1, 1): make_discrete(2, [((1.0, 1.0), 1.0), ((0.5, 2.0), 0.3)])}
    certs = certify_atom_dominance(rho, CancellationTask.full(2, 1.0))
    assert certs[0].margin == pytest.approx(1.0 - 0.15)
    assert certs[1].margin == pytest.approx(1.0 - 0.6)
    assert certs[0].point == (1.0, 1.0)


def test_dominance_tie_fails():
    rho = {(1,): make_discrete(1, [(1.0, 1.0)]), (-1,): make_discrete(1, [(1.0, 1.0)])}
    assert certify_atom_dominance(rho, CancellationTask((0,), 1.0))[0] is None


@given(
    st.floats(1.0, 3.0),
    st.lists(st.tuples(st.floats(0.05, 2.0), st.floats(0.01, 1.0), st.sampled_from([1, -1])), min_size=1, max_size=6),
    st.floats(0.3, 2.5),
)
def test_dominance_implies_no_grid_zero(big, others, alpha):
    pts = [big] + [s * x for x, _, s in others]
    ms = [1.0] + [m for _, m, _ in others]
    rest = sum(m * x**alpha for x, m, _ in others)
    big_mom = big**alpha
    if big_mom <= rest:
        ms[0] = 2 * rest / big_mom  # make the first atom dominant
    rho = quadrant_split(make_discrete(1, list(zip(pts, ms))))
    task = CancellationTask((0,), alpha)
    certs = certify_atom_dominance(rho, task)
    assert certs[0] is not None
    for m in all_patterns(1):
        P = np.vstack([meas.points * np.array(v) for v, meas in rho.items() if len(meas)])
        M = np.concatenate([meas.masses for v, meas in rho.items() if len(meas)])
        f = signed_expsum(P, M, 0, m, alpha)
        res = scan_zeros(f, theta_max=20.0, grid_step=0.02)
        assert not res.found_zero


# -- hypotheses and system residual ----------------------------------------


def test_validate_unit_mass():
    r = validate_hypotheses(make_discrete(2, [((1.0, 1.0), 1.0)]))
    assert r.nondegeneracy == [1.0, 1.0] and r.nondegenerate
    assert math.isfinite(r.moment_max)
    assert r.small_multiplier == "PASSED-BY-BOUNDED-SUPPORT"


def test_validate_axis_concentrated():
    r = validate_hypotheses(make_discrete(2, [((0.0, 1.0), 1.0), ((0.0, 3.0), 0.5)]))
    assert r.nondegeneracy[0] == 0.0 and not r.nondegenerate


def test_validate_moment_values():
    r = validate_hypotheses(make_discrete(1, [(1.0, 1.0), (0.5, 2.0)]), task=CancellationTask((0,), 1.0, 0.5))
    assert r.moment_lower == pytest.approx(1 + 2 * 0.5**0.5, rel=1e-14)
    assert r.moment_upper == pytest.approx(1 + 2 * 0.5**1.5, rel=1e-14)
    assert r.moment_lower == pytest.approx(2.414, abs=1e-3)
    assert r.moment_upper == pytest.approx(1.707, abs=1e-3)


def test_validate_tail_probe():
    r = validate_hypotheses(make_discrete(1, [(1.0, 1.0)]), nu_tail_probe=lambda s: min(1.0, s**-1.0), task=CancellationTask((0,), 1.0))
    assert r.nu_tail_sup == pytest.approx(1.0)


POS_PANEL = [Rect([t], [np.inf]) for t in (0.5, 1.0, 2.0, 7.0)] + [Rect([1.0], [3.0])]


def test_system_residual_equal_nu_is_zero():
    rho = quadrant_split(make_discrete(1, [(1.0, 1.0), (-0.5, 2.0)]))
    nu = quadrant_split(make_discrete(1, [(2.0, 1.0), (-3.0, 0.2)]))
    assert system_residual(rho, nu, nu, POS_PANEL) == 0.0


@given(
    st.lists(st.tuples(st.floats(-5, 5).filter(lambda x: abs(x) > 0.01), st.floats(0.01, 3)), min_size=1, max_size=6),
    st.lists(st.tuples(st.floats(-5, 5).filter(lambda x: abs(x) > 0.01), st.floats(0.01, 3)), min_size=1, max_size=6),
)
def test_system_residual_zero_property(r_atoms, n_atoms):
    rho = quadrant_split(make_discrete(1, r_atoms))
    nu = quadrant_split(make_discrete(1, n_atoms))
    assert system_residual(rho, nu, nu, POS_PANEL) <= 1e-12


def test_system_residual_detects_difference():
    rho = quadrant_split(make_discrete(1, [(1.0, 1.0)]))
    nu1 = quadrant_split(make_discrete(1, [(2.0, 1.0)]))
    nu2 = quadrant_split(make_discrete(1, [(2.0, 1.1)]))
    assert system_residual(rho, nu1, nu2, POS_PANEL) == pytest.approx(0.1, rel=1e-12)
