"""Closed-form worked examples, one small check per case.

``EXAMPLES`` maps a case name to a zero-argument check; the acceptance suite
reruns the whole table.
"""

import json
import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import dissipative_system
from rdslab import admissible as adm
from rdslab import cli, cocycle as coc, curves as cv, dynamics as dyn, lab, seminorm as sm, torus

EXAMPLES = {}


def example(fn):
    EXAMPLES[fn.__name__] = fn
    return fn


A_SHEAR = dyn.Diffeo([[1, 1], [0, 1]], name="A")
CAT = [[2, 1], [1, 1]]
K = dyn.Constants.derive(2.46, 0.29, 4)


def _identity_system():
    return dyn.RandomSystem([dyn.identity_diffeo()], dyn.DrivingMeasure([(0, 1.0)]))


def _perturbed_shear(eps=0.1):
    return dyn.shear_pair(eps).diffeos[0]


# -- torus -----------------------------------------------------------------------


@example
def wrap_reduces_mod_one():
    assert torus.wrap((1.25, -0.5)) == torus.TorusPoint(0.25, 0.5)


@example
def wrap_keeps_reduced_point():
    assert torus.wrap((0.0, 0.999)) == torus.TorusPoint(0.0, 0.999)


@example
def wrap_sends_lattice_to_origin():
    assert torus.wrap((3.0, 2.0)) == torus.TorusPoint(0.0, 0.0)


@example
def dist_wraps_both_axes():
    assert torus.dist((0.1, 0.9), (0.9, 0.1)) == pytest.approx(math.sqrt(0.08), abs=1e-15)


@example
def dist_to_self_is_zero():
    assert torus.dist((0.3, 0.7), (0.3, 0.7)) == 0.0


@example
def dist_to_antipode():
    assert torus.dist((0.0, 0.0), (0.5, 0.5)) == pytest.approx(math.sqrt(0.5), abs=1e-15)


@example
def angle_orthogonal_lines():
    assert torus.proj_angle((1, 0), (0, 1)) == pytest.approx(math.pi / 2, abs=1e-15)


@example
def angle_diagonal_line():
    assert torus.proj_angle((1, 0), (1, 1)) == pytest.approx(math.pi / 4, abs=1e-15)


@example
def angle_identifies_opposite_vectors():
    assert torus.proj_angle((1, 0), (-1, 0)) == 0.0


# -- diffeomorphisms -------------------------------------------------------------


@example
def shear_moves_point_linearly():
    assert dyn.eval(A_SHEAR, (0.25, 0.5)) == torus.TorusPoint(0.75, 0.5)


@example
def identity_fixes_point():
    assert dyn.eval(dyn.identity_diffeo(), (0.3, 0.6)) == torus.TorusPoint(0.3, 0.6)


@example
def perturbed_shear_by_substitution():
    p = dyn.eval(_perturbed_shear(), (0.0, 0.25))
    assert (p.x, p.y) == pytest.approx((0.35, 0.25), abs=1e-15)


@example
def linear_jet_is_constant():
    _, D, D2 = dyn.jet(dyn.Diffeo(CAT), (0.3, 0.8))
    assert np.array_equal(D, np.array(CAT, dtype=float))
    assert not D2.any()


@example
def perturbed_shear_jet_on_bottom_edge():
    _, D, _ = dyn.jet(_perturbed_shear(), (0.4, 0.0))
    assert D == pytest.approx(np.array([[1.0, 1.0 + 2 * math.pi * 0.1], [0.0, 1.0]]), abs=1e-14)


@example
def linear_inverse_is_exact():
    q = np.array([0.3, 0.8])
    expect = torus.wrap(np.linalg.solve(np.array(CAT, dtype=float), q))
    got = dyn.inverse_eval(dyn.Diffeo(CAT), q)
    assert (got.x, got.y) == pytest.approx((expect.x, expect.y), abs=1e-14)


@example
def identity_inverse_fixes_point():
    assert dyn.inverse_eval(dyn.identity_diffeo(), (0.2, 0.9)) == torus.TorusPoint(0.2, 0.9)


@example
def unimodular_jacobian_is_one():
    assert dyn.jacobian(dyn.Diffeo(CAT), (0.1, 0.2)) == 1.0


@example
def perturbed_shear_jacobian_is_one():
    for p in [(0.0, 0.0), (0.3, 0.7), (0.9, 0.1)]:
        assert dyn.jacobian(_perturbed_shear(), p) == 1.0


@example
def identity_c2_bound_is_one():
    assert 1.0 <= dyn.c2_bound(dyn.identity_diffeo()) <= 1.0 + 1e-12


# -- words -----------------------------------------------------------------------


@example
def common_fixed_point_cocycle():
    pair = dyn.shear_pair(0.0)
    traj, prods, _ = dyn.cocycle(pair.diffeos, (0, 1), (0.0, 0.0))
    assert not traj.any()
    assert np.array_equal(prods[-1], np.array([[1.0, 1.0], [1.0, 2.0]]))


@example
def empty_word_cocycle_is_identity():
    _, prods, logj = dyn.cocycle(dyn.shear_pair(0.0).diffeos, (), (0.3, 0.3))
    assert np.array_equal(prods[-1], np.eye(2)) and logj[-1] == 0.0


@example
def deterministic_measure_repeats_letter():
    w = dyn.sample_word(dyn.DrivingMeasure([(0, 1.0)]), 7, np.random.default_rng(0))
    assert tuple(w) == (0,) * 7


@example
def same_seed_same_word():
    mu = dyn.shear_pair(0.0, 0.3).measure
    assert dyn.sample_word(mu, 20, dyn.generator(5)) == dyn.sample_word(mu, 20, dyn.generator(5))


@example
def two_letter_enumeration_weights():
    p = 0.3
    words = dyn.enumerate_words(dyn.shear_pair(0.0, p).measure, 3)
    assert len(words) == 8
    for w, wt in words:
        k = sum(1 for i in w if i == 0)
        assert wt == pytest.approx(p**k * (1 - p) ** (3 - k), rel=1e-15)


@example
def length_zero_enumeration():
    assert dyn.enumerate_words(dyn.shear_pair(0.0).measure, 0) == [(dyn.Word(()), 1.0)]


# -- singular data --------------------------------------------------------------


@example
def conformal_product_has_no_singular_directions():
    rot = dyn.single_map([[0, -1], [1, 0]])
    assert not coc.singular_data(rot, (0,), (0.3, 0.4)).defined


@example
def identity_word_pulled_directions_rejected():
    with pytest.raises(ValueError):
        coc.pulled_directions(_identity_system(), (0,), (0.3, 0.4))


@example
def single_hyperbolic_map_moments_exact():
    lam = (3 + math.sqrt(5)) / 2
    v = (lam - 1, 1.0)  # unstable eigenvector of the cat matrix
    delta = 0.1
    r = coc.moment_decay(dyn.single_map(CAT), delta, 12, (0.2, 0.3), v, samples=16)
    assert r.s == pytest.approx(lam ** (-delta * r.n), rel=1e-12)
    assert r.chi_hat == pytest.approx(delta * math.log(lam), rel=1e-9)


@example
def volume_preserving_words_all_conservative():
    for n in (1, 5, 12):
        frac, _ = coc.jac_range_freq(dyn.shear_pair(0.1), n, 0.1, 1e-3)
        assert frac == 1.0


@example
def dissipative_words_leave_window():
    frac, _ = coc.jac_range_freq(dissipative_system(0.1), 20, 0.1, 1e-3)
    assert frac == 0.0


@example
def deterministic_stable_direction_gives_step_tail():
    r = coc.angle_tail(dyn.single_map(CAT), 10, (0.2, 0.3), (1.0, 0.0), samples=64)
    angle = r.angles[0]
    assert np.all(r.angles == angle)
    assert np.array_equal(r.P, (r.eta > angle).astype(float))


@example
def angle_tail_is_monotone():
    r = coc.angle_tail(dyn.shear_pair(0.1), 12, (0.2, 0.3), (1.0, -1.0), samples=4000)
    assert np.all(np.diff(r.P[::-1]) >= 0)


@example
def identical_words_not_transverse():
    assert not coc.transverse(dyn.shear_pair(0.1), (0, 1, 1), (0, 1, 1), (0.3, 0.4), K)


@example
def transversality_threshold_is_inclusive():
    system, w1, w2, z, n = dyn.shear_pair(0.1), (0, 1, 0), (1, 0, 1), (0.4, 0.4), 3
    gap = torus.proj_angle(coc.pulled_directions(system, w1, z).Vu, coc.pulled_directions(system, w2, z).Vu)
    c0 = math.log(gap / 5.0) + K.lam_hat * n
    # nudge C0 by ulps until the threshold lands exactly on the measured angle
    for _ in range(200):
        k = replace(K, C0=c0)
        t = coc.transversality_threshold(n, k)
        if t == gap:
            break
        c0 = math.nextafter(c0, -math.inf if t > gap else math.inf)
    assert t == gap
    assert coc.transverse(system, w1, w2, z, k)
    above = replace(K, C0=math.nextafter(c0, math.inf))
    assert coc.transversality_threshold(n, above) > gap
    assert not coc.transverse(system, w1, w2, z, above)


@example
def degenerate_distortion_probe_is_zero():
    system = dyn.shear_pair(0.0)
    r = coc.distortion_probe(system, (0, 1, 1), (0.3, 0.4), (0.0, 0.0), (0.0, 0.0), (1.0, 0.0), K)
    assert r.accepted
    assert not r.divergence.any()
    assert r.vector_deviation == 0.0 and r.angle_deviation == 0.0 and r.es_gap == 0.0


@example
def distortion_probe_outside_ball_declined():
    r = coc.distortion_probe(dyn.shear_pair(0.1), (0, 1), (0.3, 0.4), (0.1, 0.0), (0.0, 0.0), (1.0, 0.0), K)
    assert not r.accepted and r.reason


# -- curves ----------------------------------------------------------------------


@example
def segment_has_zero_curvature():
    assert not cv.make_curve("segment", 0.3, angle=0.4).kappa.any()


@example
def circle_radius_fifth_has_curvature_five():
    assert np.allclose(cv.make_curve("circle", 0.5, radius=0.2).kappa, 5.0, rtol=0, atol=1e-12)


@example
def sine_graph_inflection_is_flat():
    c = cv.make_curve("sine", 0.3, amp=0.1)
    assert abs(cv.curvature(c, 0.0)) < 1e-12


@example
def quarter_radius_circle_curvature():
    assert cv.curvature(cv.make_curve("circle", 0.3, radius=0.25), 0.1) == pytest.approx(4.0, abs=1e-12)


@example
def segment_curvature_query():
    assert cv.curvature(cv.make_curve("segment", 0.3), 0.2) == 0.0


@example
def linear_image_of_segment_is_straight():
    g = cv.push_curve(dyn.Diffeo(CAT), cv.make_curve("segment", 0.1, angle=1.0))
    assert g.max_abs_curvature() < 1e-10


@example
def linear_image_length_scales():
    a, v = 0.1, np.array([math.cos(1.0), math.sin(1.0)])
    g = cv.push_curve(dyn.Diffeo(CAT), cv.make_curve("segment", a, angle=1.0))
    assert g.length == pytest.approx(np.hypot(*(np.array(CAT) @ v)) * a, rel=1e-12)


@example
def linear_transform_check_uses_second_term_only():
    c = cv.make_curve("circle", 0.2, radius=0.3)
    f = dyn.Diffeo(CAT)
    r = cv.curvature_transform_check(f, c, 0.07, A=0.0)
    _, tan, kappa, _ = c.frame_at(0.07)
    g = float(np.hypot(*(np.array(CAT) @ tan[0])))
    assert r["lhs"] == pytest.approx(abs(kappa[0]) / g**3, rel=1e-12)
    assert r["rhs"] == pytest.approx(r["second_term"], rel=1e-15)


@example
def identity_transform_check_is_tight():
    c = cv.make_curve("circle", 0.2, radius=0.3)
    r = cv.curvature_transform_check(dyn.identity_diffeo(), c, 0.07)
    assert r["lhs"] == pytest.approx(1 / 0.3, rel=1e-12)
    assert r["second_term"] == pytest.approx(r["lhs"], rel=1e-12)
    assert r["rhs"] >= r["lhs"]


@example
def short_curve_not_cut():
    c = cv.make_curve("segment", 0.15)
    p = cv.PointedCurve(c, 0.05)
    assert cv.cut_short(p, 0.1) is p


@example
def cut_index_formula():
    a = 0.1
    idx, local = cv.cut_index(2.5 * a, 5 * a, a)
    assert idx == 2
    assert local == pytest.approx(0.5 * a, abs=1e-15)
    assert cv.cut_pieces(5 * a, a) == (5, pytest.approx(a, abs=1e-15))


@example
def chord_through_ball_centre():
    rho = 0.05
    c = cv.make_curve("segment", 0.5, start=(0.25, 0.5))
    r = cv.component_length_bound_check(c, (0.5, 0.5), rho, (0.5, 0.5))
    assert r["lengths"] == [pytest.approx(2 * rho, abs=2 * cv.H_MAX)]
    assert r["ok"]


@example
def volume_preserving_word_has_conservative_tails():
    c = cv.make_curve("segment", 0.05, start=(0.3, 0.3), angle=0.7)
    ok, counts, _ = cv.nct(dyn.shear_pair(0.1).diffeos, (0, 1) * 10, c, 5, 0.1, 0.1, 1e-3)
    assert ok and not counts.any()


@example
def dissipative_blocks_violate_every_slot():
    system = dissipative_system(0.1)
    c = cv.make_curve("segment", 0.05, start=(0.3, 0.5), angle=0.0)
    ok, _, violate = cv.nct(system.diffeos, (0,) * 20, c, 5, 0.1, 0.1, 1e-3)
    assert violate.all() and not ok


@example
def identity_blocks_never_expand():
    c = cv.make_curve("segment", 0.05, angle=0.7)
    ok, _, violate = cv.et(_identity_system().diffeos, (0,) * 20, c, 5, 0.1, 0.3)
    assert violate.all() and not ok


@example
def linear_words_keep_zero_curvature():
    c = cv.make_curve("segment", 1e-4, start=(0.3, 0.4), angle=0.7)
    r = cv.curvature_growth_check(dyn.shear_pair(0.0).diffeos, (0, 1) * 10, c, 10, 0.29, 0.01, 2.46, 0.1, 3e-4)
    assert r["declined"] == "" and r["ok"]
    assert np.all(r["measured"] < 1e-6)


@example
def non_expanding_word_declined():
    c = cv.make_curve("segment", 1e-4, start=(0.3, 0.4), angle=0.0)
    r = cv.curvature_growth_check(dyn.shear_pair(0.0).diffeos, (0,) * 20, c, 10, 0.29, 0.01, 2.46, 0.1, 3e-4)
    assert r["declined"] == "word lacks expanding tails"


# -- admissible measures -------------------------------------------------------


def _atom(length=0.1, **kw):
    return adm.CurveMeasureAtom(cv.make_curve("segment", length, start=(0.2, 0.3), angle=0.5), **kw)


@example
def unit_density_segment_mass():
    nu = adm.make_admissible([_atom()])
    assert nu.mass == pytest.approx(0.1, abs=1e-15) and nu.L == 0.0


@example
def linear_log_density_lipschitz():
    assert adm.make_admissible([_atom(length=1.0, slope=3.0)]).L == pytest.approx(3.0, rel=1e-9)


@example
def union_takes_maxima():
    a = adm.CurveMeasureAtom(cv.make_curve("circle", 0.2, radius=0.25), slope=1.0)
    b = _atom(slope=2.0)
    nu = adm.make_admissible([a]) + adm.make_admissible([b])
    assert nu.K == pytest.approx(4.0, abs=1e-12)
    assert nu.L == pytest.approx(2.0, rel=1e-9)
    assert nu.mass == pytest.approx(a.mass + b.mass, rel=1e-15)


@example
def identity_push_leaves_measure():
    nu = adm.make_admissible([_atom(slope=1.5)])
    img = adm.push_admissible(dyn.identity_diffeo(), nu)
    assert img.mass == nu.mass
    assert np.array_equal(img.atoms[0].curve.pos, nu.atoms[0].curve.pos)
    assert np.array_equal(img.atoms[0].log_density(), nu.atoms[0].log_density())


@example
def linear_push_rescales_density_uniformly():
    nu = adm.make_admissible([_atom()])
    img = adm.push_admissible(dyn.Diffeo(CAT), nu)
    v = np.array([math.cos(0.5), math.sin(0.5)])
    assert not nu.atoms[0].log_density().any()
    expect = -math.log(np.hypot(*(np.array(CAT) @ v)))
    assert np.allclose(img.atoms[0].log_density(), expect, rtol=0, atol=1e-14)
    assert img.L == nu.L == 0.0


@example
def identity_blocks_fail_expansion():
    f = adm.good_word(_identity_system(), (0,) * 10, cv.make_curve("segment", 0.02), 0.1, K)
    assert not f.expansion and not f.good


@example
def huge_eta_keeps_every_word():
    cat = dyn.single_map(CAT)
    lam = (3 + math.sqrt(5)) / 2
    nu = adm.make_admissible([adm.CurveMeasureAtom(cv.make_curve("segment", 0.01, angle=math.atan2(1, lam - 1)))])
    r = adm.good_convolution(cat, nu, 10, 50.0, None, K)
    assert r.bad_mass == 0.0
    full = adm.convolve(cat, nu, 10)
    assert r.good_mass == pytest.approx(full.mass, rel=1e-15)
    assert np.array_equal(r.good.atoms[0].curve.pos, full.atoms[0].curve.pos)


@example
def always_bad_word_keeps_nothing():
    r = adm.good_convolution(_identity_system(), adm.make_admissible([_atom()]), 10, 0.1, None, K)
    assert r.good_mass == 0.0 and not r.good.atoms


@example
def vacuous_sequence_constraint():
    assert len(adm.wm_eta(5, 1.0)) == 32


@example
def zero_eta_keeps_only_all_good():
    assert adm.wm_eta(5, 0.0) == [("g",) * 5]


@example
def unfiltered_single_stage_pipeline():
    system = dyn.shear_pair(0.1)
    nu = adm.make_admissible([_atom(length=0.02)])
    d, p0 = 1, 2
    r = adm.filtered_pipeline(system, nu, d, p0, 1, 1.0, K, cut_base=0.05, budget=1000, override=True)
    full = adm.convolve(system, nu, d + p0)
    assert r.discarded_mass == 0.0
    assert r.retained_mass == pytest.approx(full.mass, rel=1e-14)
    total_length = math.fsum(a.curve.length for a in r.measure.atoms)
    assert total_length == pytest.approx(math.fsum(a.curve.length for a in full.atoms), rel=1e-9)


@example
def uniform_atom_projects_to_equal_weights():
    cloud = adm.project(adm.make_admissible([_atom()]), 1000)
    assert np.allclose(cloud.weights, cloud.weights[0], rtol=1e-12)


@example
def projection_keeps_mass():
    nu = adm.make_admissible([_atom(slope=2.0), _atom(length=0.05, weight=0.5)])
    assert adm.project(nu, 700).mass == pytest.approx(nu.mass, rel=1e-13)


@example
def binomial_head_sum_value():
    assert adm.binom_tail_bounds(10, 0.2)["lhs1"] == 56.0


@example
def binomial_head_sum_small_eta():
    assert adm.binom_tail_bounds(10, 1e-3)["lhs1"] == 1.0


# -- semi-norms -------------------------------------------------------------------


@example
def ball_around_own_atom():
    assert sm.ball_mass(sm.dirac((0.4, 0.6)), (0.4, 0.6), 0.01) == 1.0


@example
def ball_in_empty_cloud():
    empty = sm.PointCloudMeasure(np.zeros((0, 2)), np.zeros(0))
    assert sm.ball_mass(empty, (0.4, 0.6), 0.1) == 0.0


@example
def lebesgue_self_inner_product():
    leb = sm.lebesgue_grid_cloud(400)
    assert sm.rho_inner(leb, leb, 0.1) == pytest.approx(math.pi**2, rel=0.02)


@example
def dirac_lebesgue_inner_product():
    leb = sm.lebesgue_grid_cloud(400)
    assert sm.rho_inner(sm.dirac((0.3, 0.3)), leb, 0.1) == pytest.approx(math.pi**2, rel=0.02)


@example
def inner_product_symmetric_bitwise():
    a = sm.horizontal_circle_cloud(0.3, 2000)
    b = sm.lebesgue_random_cloud(5000, np.random.default_rng(2))
    assert sm.rho_inner(a, b, 0.05) == sm.rho_inner(b, a, 0.05)


@example
def lebesgue_norm_is_pi():
    leb = sm.lebesgue_grid_cloud(400)
    for rho in (0.2, 0.1):
        assert sm.rho_norm(leb, rho) == pytest.approx(math.pi, rel=0.02)


@example
def dirac_norm_formula():
    assert sm.rho_norm(sm.dirac((0.1, 0.9)), 0.05) == pytest.approx(math.sqrt(math.pi) / 0.05, rel=0.01)


@example
def circle_norm_formula():
    assert sm.rho_norm(sm.horizontal_circle_cloud(0.5, 20000), 0.05) == pytest.approx(
        4 / math.sqrt(3 * 0.05), rel=0.05)


@example
def constant_radius_variable_norm():
    nu = sm.horizontal_circle_cloud(0.5, 4000)
    r = sm.var_norm(nu, lambda x: np.full(len(x), 0.1), 0.1, 0.1, 0.1)
    assert r.value == pytest.approx(sm.rho_norm(nu, 0.1, 160) ** 2, rel=1e-12)


@example
def equal_radius_bounds_give_bare_constant():
    nu = sm.dirac((0.5, 0.5))
    r = sm.var_norm(nu, lambda x: np.full(len(x), 0.2), 0.2, 0.2, 0.1)
    assert r.rhs == sm.COMPARISON_CONSTANT * r.rho_norm_sq


@example
def lebesgue_trace_bounded_near_pi():
    r = sm.ac_diagnostic([sm.lebesgue_grid_cloud(400)], rho0=0.1, levels=3)
    assert r.verdict == "bounded"
    assert r.trace == pytest.approx(math.pi, rel=0.02)


@example
def dirac_trace_blows_up_like_inverse_radius():
    r = sm.ac_diagnostic([sm.dirac((0.2, 0.7))], rho0=0.1, levels=4)
    assert r.verdict == "blowup" and r.exponent == pytest.approx(-1.0, abs=0.05)


@example
def circle_trace_blows_up_like_inverse_root():
    r = sm.ac_diagnostic([sm.horizontal_circle_cloud(0.5, 20000)], rho0=0.1, levels=4)
    assert r.verdict == "blowup" and r.exponent == pytest.approx(-0.5, abs=0.05)


# -- experiments -----------------------------------------------------------------


@example
def identity_cesaro_is_constant():
    nu = sm.lebesgue_random_cloud(200, np.random.default_rng(0))
    for avg in lab.cesaro(_identity_system(), nu, 4, exact=True):
        g1 = sm.GridDensity.from_cloud(avg, 16)
        assert g1.masses == pytest.approx(sm.GridDensity.from_cloud(nu, 16).masses, abs=1e-15)


@example
def cesaro_keeps_mass():
    for avg in lab.cesaro(dyn.shear_pair(0.1), sm.dirac((0.3, 0.4), 0.7), 6, paths=3):
        assert avg.mass == pytest.approx(0.7, rel=1e-14)


@example
def lebesgue_residual_small():
    assert lab.stationary_residual(dyn.shear_pair(0.1), sm.GridDensity.uniform(128)) < 1e-3


@example
def fixed_atom_residual_zero():
    assert lab.stationary_residual(dyn.shear_pair(0.1), sm.dirac((0.0, 0.0))) == 0.0


@example
def fixed_point_never_equidistributes():
    tr = lab.equidistribution(dyn.shear_pair(0.0), (0.0, 0.0), 20, grid=16, paths=256)
    assert tr.distance == pytest.approx([1 - 1 / 256] * len(tr.distance), abs=1e-15)
    assert not tr.converged


@example
def fixed_point_orbit_is_singleton():
    r = lab.orbit_classify(dyn.shear_pair(0.0).diffeos, (0.0, 0.0), 20, 0.05)
    assert (r.verdict, r.size) == ("finite", 1)


@example
def empty_pipeline_trace_matches_unfiltered():
    nu = adm.make_admissible([_atom(length=0.1)])
    r = lab.ly_trace(dyn.shear_pair(0.1), nu, 2, 0, 0.3, K, rho=0.1, samples_per_unit_length=500)
    assert np.array_equal(r.filtered_table[0], r.unfiltered_table[0])


# -- command line ------------------------------------------------------------------


def _write_config(tmp, cfg):
    path = tmp / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


@example
def missing_system_reports_path():
    import contextlib
    import io
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as d:
        cfg = _write_config(Path(d), {"version": 1, "output_dir": "out"})
        err = io.StringIO()
        with contextlib.redirect_stderr(err):
            code = cli.run(["tails", "--config", cfg])
    assert code == 2
    assert "<root>: 'system' is a required property" in err.getvalue()


@example
def repeated_run_is_byte_identical():
    import contextlib
    import io
    import tempfile
    from pathlib import Path

    cfg = {"version": 1, "system": {"builtin": "shear_pair", "eps": 0.1}, "output_dir": "out", "seed": 3,
           "params": {"n": 6, "paths": 64, "grid": 8}}
    outputs = []
    with tempfile.TemporaryDirectory() as d:
        path = _write_config(Path(d), cfg)
        for _ in range(2):
            with contextlib.redirect_stdout(io.StringIO()):
                assert cli.run(["equidistribute", "--config", path, "--output-dir", "run"]) in (0, 1)
            outputs.append({p.name: p.read_bytes() for p in sorted((Path(d) / "run").iterdir())})
    manifests = [json.loads(o.pop("manifest.json")) for o in outputs]
    assert "equidistribution.csv" in outputs[0]
    assert outputs[0] == outputs[1]
    # only the start and finish timestamps may differ
    assert manifests[0]["outputs"] == manifests[1]["outputs"]


@pytest.mark.parametrize("name", sorted(EXAMPLES))
def test_example(name):
    EXAMPLES[name]()
