import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rdslab import cocycle as cc
from rdslab.dynamics import (Constants, Diffeo, DrivingMeasure, Mode, RandomSystem, cocycle, generator,
                             identity_diffeo, sample_words, shear_pair, single_map)
from rdslab.torus import ProjectiveDirection, proj_angle

from conftest import CAT, dissipative_system

GOLDEN = (1 + math.sqrt(5)) / 2
LAM_CAT = (3 + math.sqrt(5)) / 2


def test_singular_data_cat_map(cat_system):
    sd = cc.singular_data(cat_system, (0,), (0.2, 0.4))
    assert sd.lam_u == pytest.approx(LAM_CAT, rel=1e-14)
    assert sd.lam_s == pytest.approx((3 - math.sqrt(5)) / 2, rel=1e-13)
    assert sd.Eu == ProjectiveDirection((GOLDEN, 1.0))
    assert sd.defined


def test_singular_data_conformal_product_is_undefined():
    rot = single_map([[0, -1], [1, 0]])
    sd = cc.singular_data(rot, (0, 0, 0), (0.3, 0.1))
    assert not sd.defined


def test_singular_values_multiply_to_jacobian():
    sysm = dissipative_system(0.05, 0.5)
    rng = generator(0)
    for _ in range(1000):
        n = int(rng.integers(1, 21))
        word = tuple(sample_words(sysm.measure, n, 1, rng)[0])
        x = rng.uniform(size=2)
        sd = cc.singular_data(sysm, word, x)
        _, _, logj = cocycle(sysm.diffeos, word, x)
        assert sd.lam_u * sd.lam_s == pytest.approx(math.exp(logj[-1]), rel=1e-9)


def test_singular_vectors_have_singular_norms(perturbed_pair):
    rng = generator(1)
    for _ in range(200):
        word = tuple(sample_words(perturbed_pair.measure, 12, 1, rng)[0])
        sd = cc.singular_data(perturbed_pair, word, rng.uniform(size=2))
        P = sd.product
        assert np.linalg.norm(P @ sd.Eu.vector) == pytest.approx(sd.lam_u, rel=1e-8)
        assert np.linalg.norm(P @ sd.Es.vector) == pytest.approx(sd.lam_s, rel=1e-8)
        assert proj_angle(sd.Eu, sd.Es) == pytest.approx(math.pi / 2, abs=1e-9)


def test_pulled_directions_cat_map(cat_system):
    pd = cc.pulled_directions(cat_system, (0,) * 6, (0.3, 0.6))
    assert proj_angle(pd.Vu, (GOLDEN, 1.0)) < 1e-9
    assert proj_angle(pd.Vs, (-1.0, GOLDEN)) < 1e-6


def test_pulled_directions_undefined_for_identity():
    sysm = RandomSystem([identity_diffeo()], DrivingMeasure([(0, 1.0)]))
    with pytest.raises(ValueError):
        cc.pulled_directions(sysm, (0, 0), (0.1, 0.2))


def test_pulled_unstable_is_most_contracted_by_inverse(perturbed_pair):
    rng = generator(2)
    th = np.arange(360) * math.pi / 360
    lines = np.stack([np.cos(th), np.sin(th)], axis=1)
    for _ in range(20):
        word = tuple(sample_words(perturbed_pair.measure, 8, 1, rng)[0])
        x = rng.uniform(size=2)
        pd = cc.pulled_directions(perturbed_pair, word, x)
        Pinv = np.linalg.inv(pd.product)
        at_vu = np.linalg.norm(Pinv @ pd.Vu.vector)
        assert at_vu <= np.min(np.linalg.norm(lines @ Pinv.T, axis=1)) * (1 + 1e-9)


def test_uef_fails_at_one_step_with_known_witness(linear_pair):
    r = cc.certify_uef(linear_pair, 1, x_grid=4, v_grid=64, mode="exact")
    assert r.bound == pytest.approx(-math.log(2) / 2, abs=1e-12)
    assert proj_angle(r.witness_v, (1.0, -1.0)) < 1e-12
    assert not r.passed


def test_uef_unstable_cone_single_hyperbolic_map(cat_system):
    cone = (math.atan2(1.0, GOLDEN), 0.3)
    r = cc.certify_uef(cat_system, 1, x_grid=4, v_grid=180, cone=cone)
    th = np.linspace(cone[0] - cone[1], cone[0] + cone[1], 2001)
    v = np.stack([np.cos(th), np.sin(th)], axis=1)
    scan = np.log(np.linalg.norm(v @ np.array(CAT, dtype=float).T, axis=1)).min()
    assert r.bound >= scan - 1e-12
    assert r.bound > 0 and r.passed


def test_uep_stable_direction_gives_log_lambda(cat_system):
    es = np.array([-1.0, GOLDEN]) / math.hypot(-1.0, GOLDEN)
    logs = cc.log_norm_trace(cat_system, np.zeros((1, 1), dtype=np.int64), (0.3, 0.3), es, past=True)
    assert logs[0, -1] == pytest.approx(math.log(LAM_CAT), rel=1e-12)


def test_uep_direction_average_is_nonnegative():
    rng = generator(3)
    mats = [[[2, 1], [1, 1]], [[1, 3], [0, 1]], [[5, 2], [2, 1]], [[0, -1], [1, 3]], [[1, 0], [4, 1]]]
    for m in mats:
        r = cc.certify_uep(single_map(m), 1, x_grid=2, v_grid=256)
        assert r.table.mean(axis=1).min() >= -1e-9


def test_uef_and_uep_positive_for_longer_words(linear_pair):
    a = cc.certify_uef(linear_pair, 4, x_grid=4, v_grid=32)
    b = cc.certify_uep(linear_pair, 4, x_grid=4, v_grid=32)
    assert a.bound > 0 and b.bound > 0
    assert a.bound == pytest.approx(b.bound, abs=1e-9)


def test_certificate_witness_matches_bound(perturbed_pair):
    r = cc.certify_uef(perturbed_pair, 2, x_grid=6, v_grid=16)
    assert r.table.min() == r.bound
    assert r.passed == (r.bound > 0)


def test_certificate_invariant_under_relabeling(perturbed_pair):
    swapped = RandomSystem([perturbed_pair.diffeos[1], perturbed_pair.diffeos[0]], DrivingMeasure([(0, 0.5), (1, 0.5)]))
    a = cc.certify_uef(perturbed_pair, 3, x_grid=4, v_grid=16)
    b = cc.certify_uef(swapped, 3, x_grid=4, v_grid=16)
    assert a.bound == pytest.approx(b.bound, abs=1e-12)


def test_monte_carlo_certificate_reports_ci(linear_pair):
    r = cc.certify_uef(linear_pair, 6, x_grid=2, v_grid=8, mode="mc", samples=512, seed=4)
    assert r.mode == "mc"
    assert r.ci[0] <= r.bound <= r.ci[1]


def test_moment_decay_single_hyperbolic_map(cat_system):
    eu = np.array([GOLDEN, 1.0])
    r = cc.moment_decay(cat_system, 0.1, 10, (0.2, 0.2), eu, samples=8)
    expected = LAM_CAT ** (-0.1 * np.arange(1, 11))
    assert r.s == pytest.approx(expected, rel=1e-9)
    assert r.chi_hat == pytest.approx(0.1 * math.log(LAM_CAT), rel=1e-9)


def test_moment_decay_below_certified_envelope(linear_pair):
    C1 = cc.certify_uef(linear_pair, 4, x_grid=2, v_grid=64).bound
    delta = 0.05
    chi = delta * C1 / (2 * 4)
    r = cc.moment_decay(linear_pair, delta, 30, (0.1, 0.2), (1.0, -1.0), samples=4096, seed=5)
    envelope = np.exp(math.log(4 * math.e / 3) - r.n * chi)
    assert np.all(r.s <= envelope)


def test_moment_decay_positive_rate(linear_pair):
    r = cc.moment_decay(linear_pair, 0.1, 30, (0.1, 0.2), (1.0, 0.0), samples=2048, seed=6)
    assert r.chi_hat > 0 and r.ci[0] > 0


def test_markov_check_is_an_identity(linear_pair):
    r = cc.moment_decay(linear_pair, 0.1, 20, (0.1, 0.2), (1.0, 0.0), samples=1024, seed=7)
    for n, tail, markov, cor, ok in r.markov_check(C=0.5, chi_bar=0.01, chi=0.03):
        assert ok and tail <= markov


def test_moment_decay_rejects_bad_delta(linear_pair):
    with pytest.raises(ValueError):
        cc.moment_decay(linear_pair, 0.0, 5, (0, 0), (1, 0))


def test_jac_range_freq_cases(perturbed_pair):
    assert cc.jac_range_freq(perturbed_pair, 10, 0.1, 0.001)[0] == 1.0
    strong = dissipative_system(0.15)
    assert cc.jac_range_freq(strong, 12, 0.1, 0.0, grid_n=8)[0] == 0.0


def test_jac_range_freq_rare_dissipative_atom():
    eps2 = 0.01
    sysm = dissipative_system(0.05, eps2)
    for n in (5, 10, 20, 30):
        frac, se = cc.jac_range_freq(sysm, n, 0.5, 0.0, samples=2000, grid_n=8, seed=n)
        assert frac + 3 * se >= 1 - 2 * math.exp(-n) - 2 * n * eps2


def test_angle_tail_deterministic_direction(cat_system):
    r = cc.angle_tail(cat_system, 6, (0.1, 0.2), (1.0, 0.0), samples=200)
    es = ProjectiveDirection((-1.0, GOLDEN))
    a = proj_angle(es, (1.0, 0.0))
    assert np.all(r.P[r.eta > a + 1e-6] == 1.0)
    assert np.all(r.P[r.eta < a - 1e-6] == 0.0)


def test_angle_tail_monotone_in_eta(perturbed_pair):
    r = cc.angle_tail(perturbed_pair, 12, (0.1, 0.2), (1.0, -1.0), samples=5000)
    order = np.argsort(r.eta)
    assert np.all(np.diff(r.P[order]) >= 0)
    assert np.all(r.eta >= math.exp(-12))


def test_transverse_identical_words_false(perturbed_pair):
    k = Constants(C0=0.1)
    w = (0, 1, 1, 0, 1, 0, 0, 1)
    assert not cc.transverse(perturbed_pair, w, w, (0.2, 0.3), k)
    with pytest.raises(ValueError):
        cc.transverse(perturbed_pair, w, w[:-1], (0.2, 0.3), k)


def test_transverse_threshold_inclusive(perturbed_pair, monkeypatch):
    w1, w2 = (0, 0, 1, 0, 1, 1), (1, 0, 1, 1, 0, 0)
    z = (0.2, 0.3)
    a = proj_angle(cc.pulled_directions(perturbed_pair, w1, z).Vu, cc.pulled_directions(perturbed_pair, w2, z).Vu)
    monkeypatch.setattr(cc, "transversality_threshold", lambda n, k: a)
    assert cc.transverse(perturbed_pair, w1, w2, z, Constants())
    monkeypatch.setattr(cc, "transversality_threshold", lambda n, k: np.nextafter(a, 1.0))
    assert not cc.transverse(perturbed_pair, w1, w2, z, Constants())


def test_transverse_fraction_increases(linear_pair):
    k = Constants(C0=0.1, delta=0.05, chi=0.02, chi_bar=0.02)
    fr = [cc.transverse_fraction(linear_pair, n, (0.31, 0.17), k, pairs=2000, seed=n)[0] for n in (10, 20, 30)]
    assert fr[0] <= fr[1] + 0.02 <= fr[2] + 0.04
    assert fr[-1] > 0.9


def test_distortion_probe_degenerate_linear(linear_pair):
    k = Constants(C0p=2.46)
    r = cc.distortion_probe(linear_pair, (0, 1, 0, 1), (0.2, 0.3), (0.0, 0.0), (0.0, 0.0), (1.0, 1.0), k)
    assert r.accepted
    assert np.all(r.divergence == 0.0)
    assert r.vector_deviation == 0.0 and r.angle_deviation == 0.0


def test_distortion_probe_perturbed_words_pass(perturbed_pair):
    k = Constants.derive(2.46, 0.29, 4)
    rng = generator(8)
    for _ in range(5):
        word = tuple(sample_words(perturbed_pair.measure, 8, 1, rng)[0])
        z = rng.uniform(size=2)
        xo, yo = cc.probe_pair(perturbed_pair, word, z, k, rng)
        r = cc.distortion_probe(perturbed_pair, word, z, xo, yo, (1.0, 1.0), k, eta=0.3)
        assert r.accepted
        assert all(r.passes.values()), r.passes


def test_distortion_probe_declines_outside_ball(perturbed_pair):
    k = Constants.derive(2.46, 0.29, 4)
    r = cc.distortion_probe(perturbed_pair, (0, 1, 0), (0.2, 0.3), (1e-3, 0.0), (0.0, 0.0), (1.0, 1.0), k)
    assert not r.accepted and r.reason


matrices = st.tuples(*[st.floats(-5, 5)] * 4).filter(lambda m: abs(m[0] * m[3] - m[1] * m[2]) > 1e-2)


@given(matrices)
def test_svd2_reconstructs_singular_values(m):
    P = np.array(m).reshape(2, 2)
    lu, ls, eu, es, uu, us = cc.svd2(P[None])
    sv = np.linalg.svd(P, compute_uv=False)
    assert lu[0] == pytest.approx(sv[0], abs=1e-9 * max(1.0, sv[0]))
    assert ls[0] == pytest.approx(sv[1], abs=1e-9 * max(1.0, sv[0]))
