import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rdslab import dynamics as dy
from rdslab.dynamics import (Constants, Diffeo, DrivingMeasure, Mode, RandomSystem, Word, c2_bound, cocycle,
                             enumerate_words, exact_weight_sum, generator, identity_diffeo, inverse_eval, jacobian,
                             jet, sample_word, sample_words, shear_pair)
from rdslab.torus import TorusPoint, dist

from conftest import CAT, dissipative_system

unit = st.floats(0, 1, exclude_max=True)


def test_diffeo_validation():
    with pytest.raises(ValueError):
        Diffeo([[2, 0], [0, 1]])
    with pytest.raises(ValueError):
        Diffeo([[1, 0.5], [0, 1]])
    with pytest.raises(ValueError):
        Diffeo([[1, 1], [0, 1]], [Mode((1, 0), (0.2, 0.0))])


def test_eval_examples(linear_pair, perturbed_pair):
    A = linear_pair.diffeos[0]
    assert dy.eval(A, TorusPoint(0.25, 0.5)) == TorusPoint(0.75, 0.5)
    p = TorusPoint(0.3, 0.7)
    assert dy.eval(identity_diffeo(), p) == p
    Ae = perturbed_pair.diffeos[0]
    q = dy.eval(Ae, TorusPoint(0.0, 0.25))
    assert (q.x, q.y) == pytest.approx((0.35, 0.25), abs=1e-15)


def test_jet_examples(perturbed_pair, cat_system):
    M = cat_system.diffeos[0]
    _, D, D2 = jet(M, TorusPoint(0.3, 0.2))
    assert np.array_equal(D, np.array(CAT, dtype=float))
    assert np.all(D2 == 0)
    Ae = perturbed_pair.diffeos[0]
    _, D, _ = jet(Ae, TorusPoint(0.4, 0.0))
    assert D == pytest.approx(np.array([[1, 1 + 2 * math.pi * 0.1], [0, 1]]), abs=1e-15)


def test_jet_matches_central_differences():
    rng = np.random.default_rng(1)
    systems = [shear_pair(0.1), dissipative_system(0.05, 0.5)]
    h = 1e-6
    for _ in range(100):
        sysm = systems[rng.integers(2)]
        f = sysm.diffeos[rng.integers(len(sysm.diffeos))]
        p = rng.uniform(size=2)
        _, D, D2 = f.lift_jet(p)
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd = (f.lift_eval(p + e) - f.lift_eval(p - e)) / (2 * h)
            assert D[:, j] == pytest.approx(fd, abs=1e-6)
            fd2 = (f.lift_derivative(p + e) - f.lift_derivative(p - e)) / (2 * h)
            assert D2[:, :, j] == pytest.approx(fd2, abs=1e-6)


def test_inverse_examples(cat_system):
    M = cat_system.diffeos[0]
    q = TorusPoint(0.3, 0.8)
    p = inverse_eval(M, q)
    expected = np.array([[1, -1], [-1, 2]]) @ np.array([0.3, 0.8]) % 1.0
    assert (p.x, p.y) == pytest.approx(tuple(expected), abs=1e-14)
    assert inverse_eval(identity_diffeo(), q) == q


def test_inverse_round_trip_random():
    rng = np.random.default_rng(2)
    systems = [shear_pair(0.1), dissipative_system(0.05, 0.5)]
    for _ in range(1000):
        sysm = systems[rng.integers(2)]
        f = sysm.diffeos[rng.integers(len(sysm.diffeos))]
        q = TorusPoint(*rng.uniform(size=2))
        assert dist(dy.eval(f, inverse_eval(f, q)), q) < 1e-12


def test_inverse_round_trip_grid(perturbed_pair):
    c = (np.arange(32) + 0.5) / 32
    grid = np.array([(x, y) for x in c for y in c])
    for f in perturbed_pair.diffeos:
        back = f.lift_eval(f.lift_inverse(grid))
        assert np.max(np.abs(back - grid)) < 1e-12


def test_jacobian_examples(cat_system, perturbed_pair):
    assert jacobian(cat_system.diffeos[0], TorusPoint(0.1, 0.2)) == pytest.approx(1.0, abs=1e-15)
    rng = np.random.default_rng(0)
    for p in rng.uniform(size=(50, 2)):
        assert jacobian(perturbed_pair.diffeos[0], TorusPoint(*p)) == pytest.approx(1.0, abs=1e-14)
    f = dissipative_system(0.05).diffeos[0]
    for p in rng.uniform(size=(50, 2)):
        expected = 1 + 0.1 * math.pi * math.cos(2 * math.pi * p[1])
        D = f.lift_derivative(p)
        assert jacobian(f, TorusPoint(*p)) == pytest.approx(expected, rel=1e-13)
        assert jacobian(f, TorusPoint(*p)) == pytest.approx(abs(np.linalg.det(D)), rel=1e-13)


def test_c2_bound_examples(cat_system, perturbed_pair):
    ident = c2_bound(identity_diffeo(), 64)
    assert 1.0 <= ident <= 1.0 + 1e-12
    assert c2_bound(cat_system.diffeos[0], 32) >= (3 + math.sqrt(5)) / 2
    f = perturbed_pair.diffeos[0]
    values = [c2_bound(f, n) for n in (16, 32, 64, 128, 256)]
    assert all(b <= a for a, b in zip(values, values[1:]))
    with pytest.raises(ValueError):
        c2_bound(f, 8)


def test_c2_bound_dominates_dense_sample(perturbed_pair):
    f = perturbed_pair.diffeos[0]
    bound = c2_bound(f, 64)
    pts = np.random.default_rng(3).uniform(size=(20000, 2))
    _, D, D2 = f.lift_jet(pts)
    assert np.max(np.linalg.norm(D, ord=2, axis=(1, 2))) <= bound
    assert np.max(np.linalg.norm(np.linalg.inv(D), ord=2, axis=(1, 2))) <= bound


def test_cocycle_fixed_point(linear_pair):
    traj, prods, logj = cocycle(linear_pair.diffeos, (0, 1), (0.0, 0.0))
    assert np.all(traj % 1.0 == 0.0)
    assert np.array_equal(prods[-1], np.array([[1.0, 1.0], [1.0, 2.0]]))
    traj, prods, logj = cocycle(linear_pair.diffeos, (), (0.2, 0.3))
    assert np.array_equal(prods[-1], np.eye(2))


def test_cocycle_matches_remultiplication(perturbed_pair):
    rng = np.random.default_rng(4)
    word = tuple(rng.integers(0, 2, size=20))
    traj, prods, logj = cocycle(perturbed_pair.diffeos, word, (0.13, 0.71))
    acc = np.eye(2)
    x = np.array([0.13, 0.71])
    for k, i in enumerate(word):
        f = perturbed_pair.diffeos[i]
        acc = f.lift_derivative(x) @ acc
        x = f.lift_eval(x)
        assert prods[k + 1] == pytest.approx(acc, rel=1e-10)
    assert np.linalg.norm(prods[-1], 2) == pytest.approx(np.linalg.norm(acc, 2), rel=1e-10)


def test_word_jacobian_consistency():
    sysm = dissipative_system(0.05, 0.5)
    rng = np.random.default_rng(6)
    for _ in range(50):
        word = tuple(rng.integers(0, 2, size=15))
        _, prods, logj = cocycle(sysm.diffeos, word, rng.uniform(size=2))
        assert abs(np.linalg.det(prods[-1])) == pytest.approx(math.exp(logj[-1]), rel=1e-10)


def test_sample_word_examples(cat_system, linear_pair):
    w = sample_word(cat_system.measure, 7, generator(1))
    assert tuple(w) == (0,) * 7
    assert tuple(sample_word(linear_pair.measure, 30, generator(9))) == tuple(sample_word(linear_pair.measure, 30, generator(9)))
    with pytest.raises(ValueError):
        sample_word(linear_pair.measure, -1, generator(0))


def test_letter_frequencies_within_three_sigma():
    mu = DrivingMeasure([(0, 0.3), (1, 0.7)])
    words = sample_words(mu, 1, 100_000, generator(11))
    freq = np.mean(words == 0)
    sigma = math.sqrt(0.3 * 0.7 / 100_000)
    assert abs(freq - 0.3) < 3 * sigma


def test_enumerate_words_examples():
    p = 0.3
    mu = DrivingMeasure([(0, p), (1, 1 - p)])
    words = enumerate_words(mu, 3)
    assert len(words) == 8
    for w, weight in words:
        k = sum(1 for i in w if i == 0)
        assert weight == pytest.approx(p**k * (1 - p) ** (3 - k), rel=1e-14)
    assert enumerate_words(mu, 0) == [(Word(()), 1.0)]
    with pytest.raises(OverflowError):
        enumerate_words(mu, 21)


def test_enumerated_weights_sum_to_one():
    mu = DrivingMeasure([(0, 0.5), (1, 0.5)])
    weights = [w for _, w in enumerate_words(mu, 10)]
    assert math.fsum(weights) == 1.0
    assert exact_weight_sum(mu, 10) == Fraction(1)


def test_driving_measure_validation():
    with pytest.raises(ValueError):
        DrivingMeasure([(0, 0.5), (1, 0.4)])
    with pytest.raises(ValueError):
        DrivingMeasure([])


def test_almost_volume_preserving_on_grid(perturbed_pair):
    k = Constants(C0=0.1, eps0=0.001)
    c = (np.arange(64) + 0.5) / 64
    grid = np.array([(x, y) for x in c for y in c])
    for f in perturbed_pair.diffeos:
        jac = np.abs(np.linalg.det(f.lift_derivative(grid)))
        assert np.all(jac > math.exp(-k.eps0 - k.C0)) and np.all(jac < math.exp(k.eps0 + k.C0))


def test_system_round_trip(tmp_path, perturbed_pair):
    path = tmp_path / "sys.json"
    dy.save_system(perturbed_pair, path)
    back = dy.load_system(path)
    assert back.to_dict() == perturbed_pair.to_dict()
    json.loads(path.read_text())


def test_constants_derived_quantities():
    k = Constants(delta=0.05, chi=0.02, chi_bar=0.01)
    assert k.lam == pytest.approx(0.4)
    assert k.lam_bar == pytest.approx(0.2)
    assert k.lam_hat == pytest.approx(0.1)
    assert Constants(delta=0.01, chi=0.1, chi_bar=0.05).lam_hat == 1.0


def test_constants_derive_satisfies_independent_relations():
    k = Constants.derive(2.46, 0.29, 4)
    assert 0 < k.delta < min(1 / (k.N * k.C0p), 1 / (2 * k.C1), k.C1 / (2 * (k.N * k.C0p) ** 2))
    assert 0 < k.chi_bar < min(k.chi, k.delta * k.C0p / 2)
    assert k.eps0 < min(k.C0, k.C0p, k.chi_bar / (2 * k.delta), k.lam_bar / 8, k.lam_hat * k.beta1 / 7)
    assert "C0p > 2" not in k.check()


def test_moment_rate_value():
    assert dy.moment_rate(0.1, 0.3, 4) == pytest.approx(0.1 * 0.3 / 8)
    assert dy.MOMENT_PREFACTOR_LOG == pytest.approx(math.log(4 * math.e / 3))


def test_spawned_generators_are_reproducible():
    a = [g.integers(0, 2**32, 4).tolist() for g in dy.spawn_generators(42, 3)]
    b = [g.integers(0, 2**32, 4).tolist() for g in dy.spawn_generators(42, 3)]
    assert a == b
    assert a[0] != a[1]


@given(unit, unit)
def test_eval_of_inverse_is_identity_property(x, y):
    f = shear_pair(0.1).diffeos[1]
    q = TorusPoint(x, y)
    assert dist(dy.eval(f, inverse_eval(f, q)), q) < 1e-12
