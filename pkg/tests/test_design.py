"""Observer design: eigenvalue sampling, filter construction, the
truncated-series and Sylvester transformation routes, the closed-form
oscillator coefficient rows, injectivity probing, and serialization.

Frozen decimals below were computed from the defining linear equations
of the coefficient rows with an independent script before this module
was written.
"""
import numpy as np
import pytest

from kkl import design, systems
from kkl.errors import (
    DuplicateEigenvalues,
    InjectivityWarning,
    SamplingFailure,
    StabilityViolation,
)


@pytest.fixture(scope="module")
def oscillator():
    return systems.make_oscillator_system(0.01)


# --------------------------------------------------------------- sampling

def test_sample_eigenvalues_deterministic():
    a = design.sample_eigenvalues(4, 0.9, seed=7)
    b = design.sample_eigenvalues(4, 0.9, seed=7)
    assert a == b
    assert a != design.sample_eigenvalues(4, 0.9, seed=8)


def test_sample_eigenvalues_constraints():
    for seed in range(10):
        eigs = design.sample_eigenvalues(5, 0.8, seed=seed)
        assert len(eigs) == 5
        moduli = [abs(v) for v in eigs]
        assert all(m <= 0.8 for m in moduli)
        assert all(m >= 0.05 * 0.8 for m in moduli)
        for i in range(5):
            for j in range(i + 1, 5):
                assert abs(eigs[i] - eigs[j]) > 1e-6 * 0.8


def test_sample_eigenvalues_rejects_bad_radius():
    with pytest.raises(ValueError):
        design.sample_eigenvalues(3, 0.0, seed=0)
    with pytest.raises(ValueError):
        design.sample_eigenvalues(3, 1.5, seed=0)


def test_sample_eigenvalues_exhaustion():
    # more values than the draw budget can ever deliver
    with pytest.raises(SamplingFailure):
        design.sample_eigenvalues(10_001, 0.9, seed=0)


# ----------------------------------------------------------------- filter

def test_build_filter_structure_single_complex():
    filt = design.build_filter([0.3 + 0.4j])
    assert filt.m == 1
    assert np.array_equal(filt.a_complex, [[0.3 + 0.4j]])
    assert np.array_equal(filt.b_complex, [[1.0]])
    assert np.array_equal(filt.a_real, [[0.3, -0.4], [0.4, 0.3]])
    assert np.array_equal(filt.b_real, [[1.0], [0.0]])
    assert filt.spectral_radius == pytest.approx(0.5)


def test_build_filter_p2_shapes():
    filt = design.build_filter([0.5, -0.2 + 0.1j], p=2)
    assert filt.m == 4
    assert filt.a_complex.shape == (4, 4)
    assert filt.b_complex.shape == (4, 2)
    assert filt.a_real.shape == (8, 8)
    assert filt.b_real.shape == (8, 2)
    # block diagonal: first eigenvalue times identity in the top block
    assert np.array_equal(filt.a_complex[:2, :2], 0.5 * np.eye(2))
    assert np.all(filt.a_complex[:2, 2:] == 0)


def test_build_filter_b_scale():
    filt = design.build_filter([0.5], b_scale=0.01)
    assert np.array_equal(filt.b_complex, [[0.01]])
    assert np.array_equal(filt.b_real, [[0.01], [0.0]])


def test_build_filter_duplicate_eigenvalues():
    with pytest.raises(DuplicateEigenvalues):
        design.build_filter([0.5, 0.5])
    with pytest.raises(DuplicateEigenvalues):
        design.build_filter([0.3 + 0.1j, 0.3 + 0.1j + 1e-9])


def test_build_filter_unstable_spectrum():
    with pytest.raises(StabilityViolation):
        design.build_filter([1.0])
    with pytest.raises(StabilityViolation):
        design.build_filter([0.8 + 0.7j])


def test_build_filter_growth_gate():
    # rho * c2 >= 1 rejected when a growth constant is supplied
    with pytest.raises(StabilityViolation):
        design.build_filter([0.95], c2=1.1)
    design.build_filter([0.8], c2=1.1)  # 0.88 < 1 passes


def test_real_complex_state_round_trip():
    filt = design.build_filter([0.4 + 0.2j, -0.3 + 0.6j], p=2)
    rng = np.random.default_rng(0)
    z = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    v = filt.real_state(z)
    assert v.shape == (8,)
    assert v.dtype == np.float64
    assert np.array_equal(filt.complex_state(v), z)


# ----------------------------------------------------------------- series

def test_series_zero_input_matrix(oscillator):
    filt = design.build_filter([0.5, 0.3], b_scale=0.0)
    t = design.series_transform(oscillator, filt, n_terms=50)
    assert np.array_equal(t.eval(np.array([0.7, -0.2])), np.zeros(2))
    assert t.tail_bound == 0.0


def test_series_single_term_is_driven_output(oscillator):
    filt = design.build_filter([0.5])
    t = design.series_transform(oscillator, filt, n_terms=0)
    x = np.array([0.4, 0.8])
    expected = filt.b_complex[:, 0] * oscillator.output(
        oscillator.backward(x))[0]
    assert np.allclose(t.eval(x), expected, rtol=0, atol=1e-15)


def test_series_partial_sums_within_tail_bound(oscillator):
    filt = design.build_filter([0.6 + 0.5j, -0.7, 0.2 - 0.6j])
    t_short = design.series_transform(oscillator, filt, n_terms=30)
    t_long = design.series_transform(oscillator, filt, n_terms=120)
    bound = design.tail_bound(t_short, 30)
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.uniform(-1, 1, size=2)
        gap = np.linalg.norm(t_long.eval(x) - t_short.eval(x))
        assert gap <= bound * 1.01 + 1e-14


def test_tail_bound_formula_and_monotonicity(oscillator):
    filt = design.build_filter([0.5], b_scale=2.0)
    t = design.series_transform(oscillator, filt, n_terms=10)
    # independent evaluation of the geometric tail expression
    expected = 0.5 ** 11 * 2.0 * t.sup_h / (1.0 - 0.5)
    assert design.tail_bound(t, 10) == pytest.approx(expected, rel=1e-12)
    for n in range(5, 15):
        assert design.tail_bound(t, n + 1) == pytest.approx(
            design.tail_bound(t, n) * 0.5, rel=1e-12)


def test_series_escape_guard():
    basis = systems.monomial_basis(1, 1)
    # backward map doubles the state, so backward iterates blow up
    poly = systems.LinearPolySystem(f_mat=np.array([[0.5]]),
                                    h_mat=np.array([[0.0, 1.0]]), basis=basis)
    sys = systems.from_linear_poly(poly, [[-1, 1]], [[-1, 1]])
    filt = design.build_filter([0.3])
    from kkl.errors import DomainEscape
    with pytest.raises(DomainEscape):
        design.series_transform(sys, filt, n_terms=100).eval(np.array([0.5]))


# -------------------------------------------------------------- sylvester

def test_poly_transform_zero_output(oscillator):
    basis = systems.monomial_basis(2, 2)
    poly = systems.LinearPolySystem(
        f_mat=oscillator.poly.f_mat, h_mat=np.zeros((1, 6)), basis=basis)
    filt = design.build_filter([0.5, 0.2])
    t = design.poly_transform(poly, filt)
    assert np.array_equal(t.m_mat, np.zeros((2, 6)))


def test_poly_transform_matches_closed_form_row(oscillator):
    # single eigenvalue: the Sylvester route must reproduce the
    # closed-form coefficient row in the monomial order
    # 1, x1, x2, x1^2, x1*x2, x2^2
    lam, dt = -10.0, 0.01
    co = design.example_coeffs("discrete", lam, dt)
    filt = design.build_filter([1.0 + lam * dt], b_scale=dt)
    t = design.poly_transform(oscillator, filt)
    expected = np.array([0.0, co.d, co.e, co.a, co.c, -co.a])
    assert np.allclose(t.m_mat[0], expected, rtol=0, atol=1e-14)


def test_poly_transform_residual(oscillator):
    filt = design.build_filter(design.sample_eigenvalues(3, 0.9, seed=2))
    t = design.poly_transform(oscillator, filt)
    rng = np.random.default_rng(3)
    for x in rng.uniform(-2, 2, size=(50, 2)):
        assert design.functional_residual(t, oscillator, filt, x) <= \
            1e-10 * (1.0 + np.linalg.norm(t.eval(x)))


def test_poly_transform_p_mismatch(oscillator):
    filt = design.build_filter([0.5], p=2)
    with pytest.raises(ValueError):
        design.poly_transform(oscillator, filt)


def test_series_residual_bounded_by_truncation(oscillator):
    filt = design.build_filter([0.8, 0.5 + 0.5j])
    n_terms = 20
    t = design.series_transform(oscillator, filt, n_terms=n_terms)
    rho = filt.spectral_radius
    bound = 3.0 * rho ** (n_terms + 1) * np.sqrt(2.0) * t.sup_h
    rng = np.random.default_rng(4)
    for x in rng.uniform(-1, 1, size=(10, 2)):
        assert design.functional_residual(t, oscillator, filt, x) <= bound


# ------------------------------------------------------------ closed form

FROZEN_DISCRETE = {  # lambda -10, dt 0.01
    "a": 0.09624268184712732,
    "c": -0.03853560834719812,
    "d": 0.10891089108910891,
    "e": 0.0891089108910891,
}


def test_example_coeffs_frozen_discrete():
    co = design.example_coeffs("discrete", -10.0, 0.01)
    assert co.a == FROZEN_DISCRETE["a"]
    assert co.b == -co.a
    assert co.c == FROZEN_DISCRETE["c"]
    assert co.d == FROZEN_DISCRETE["d"]
    assert co.e == FROZEN_DISCRETE["e"]


def test_example_coeffs_frozen_continuous():
    co = design.example_coeffs("continuous", -10.0)
    assert co.a == pytest.approx(10.0 / 104.0, rel=1e-15)
    assert co.b == -co.a
    assert co.c == pytest.approx(-4.0 / 104.0, rel=1e-15)
    assert co.d == pytest.approx(11.0 / 101.0, rel=1e-15)
    assert co.e == pytest.approx(9.0 / 101.0, rel=1e-15)


@pytest.mark.parametrize("variant,dt", [("continuous", 0.0),
                                        ("discrete", 0.01),
                                        ("discrete", 0.05)])
@pytest.mark.parametrize("lam", [-3.0, -10.0, -25.0])
def test_example_coeffs_satisfy_defining_equations(variant, dt, lam):
    if variant == "discrete" and abs(1.0 + lam * dt) >= 1.0:
        pytest.skip("unstable combination")
    co = design.example_coeffs(variant, lam, dt)
    assert np.max(np.abs(design.defining_residuals(co))) <= 1e-12


def test_example_coeffs_discrete_converges_to_continuous():
    lam = -10.0
    cont = design.example_coeffs("continuous", lam)
    for dt in (1e-2, 1e-3, 1e-4):
        disc = design.example_coeffs("discrete", lam, dt)
        for name in ("a", "b", "c"):
            gap = abs(getattr(disc, name) - getattr(cont, name))
            assert gap <= 0.5 * dt
        assert disc.d == cont.d and disc.e == cont.e


def test_example_coeffs_validation():
    with pytest.raises(ValueError):
        design.example_coeffs("euler", -10.0)
    with pytest.raises(ValueError):
        design.example_coeffs("continuous", 3.0)
    with pytest.raises(StabilityViolation):
        design.example_coeffs("discrete", -10.0, 0.3)


def test_example_filter_structure():
    filt = design.example_filter([-10.0, -20.0, -30.0], 0.01)
    assert [complex(v) for v in filt.eigenvalues] == [0.9, 0.8, 0.7]
    assert filt.b_scale == 0.01


def test_example_transform_eval(oscillator):
    lambdas = [-10.0, -20.0]
    t = design.example_transform(lambdas, 0.01, "discrete")
    x = np.array([0.5, -0.25])
    feats = np.array([x[0] ** 2 - x[1] ** 2, x[0] * x[1], x[0], x[1]])
    for i, lam in enumerate(lambdas):
        co = design.example_coeffs("discrete", lam, 0.01)
        want = np.dot([co.a, co.c, co.d, co.e], feats)
        assert t.eval(x)[i] == pytest.approx(want, abs=1e-15)


def test_example_transform_satisfies_functional_equation(oscillator):
    lambdas = [-10.0, -20.0, -30.0]
    filt = design.example_filter(lambdas, 0.01)
    t = design.example_transform(lambdas, 0.01, "discrete")
    rng = np.random.default_rng(5)
    for x in rng.uniform(-1, 1, size=(20, 2)):
        assert design.functional_residual(t, oscillator, filt, x) <= 1e-13


# ------------------------------------------------------------ injectivity

class _StubTransform:
    def __init__(self, fn):
        self._fn = fn

    def eval(self, x):
        return np.asarray(self._fn(x), dtype=np.complex128)


def test_injectivity_probe_identity(oscillator):
    rep = design.injectivity_probe(_StubTransform(lambda x: x), oscillator,
                                   pair_count=50, seed=0)
    assert rep.min_ratio == pytest.approx(1.0, rel=1e-12)
    assert not rep.weak
    assert len(rep.pair_distances) == 50
    assert np.all(rep.pair_distances >= 0.01)


def test_injectivity_probe_constant_warns(oscillator):
    with pytest.warns(InjectivityWarning):
        rep = design.injectivity_probe(
            _StubTransform(lambda x: np.zeros(3)), oscillator,
            pair_count=20, seed=0)
    assert rep.min_ratio == 0.0
    assert rep.weak


def test_injectivity_probe_deterministic(oscillator):
    t = _StubTransform(lambda x: x * 2.0)
    r1 = design.injectivity_probe(t, oscillator, pair_count=30, seed=3)
    r2 = design.injectivity_probe(t, oscillator, pair_count=30, seed=3)
    assert np.array_equal(r1.pair_distances, r2.pair_distances)
    assert r1.min_ratio == r2.min_ratio


def test_design_with_resampling_accepts_first_good(oscillator):
    filt, transform, report, attempts = design.design_with_resampling(
        oscillator, count=3, radius=0.9, seed=0, pair_count=50)
    assert not report.weak
    assert attempts[-1]["accepted"]
    assert design.functional_residual(
        transform, oscillator, filt, np.array([0.5, 0.5])) <= 1e-12


def test_design_with_resampling_logs_weak_attempts():
    basis = systems.monomial_basis(2, 2)
    poly = systems.LinearPolySystem(
        f_mat=np.array([[1.0, 0.01], [-0.01, 1.0]]),
        h_mat=np.zeros((1, 6)), basis=basis)
    sys = systems.from_linear_poly(poly, [[-2, 2], [-2, 2]],
                                   [[-1, 1], [-1, 1]], dt=0.01)
    with pytest.warns(InjectivityWarning):
        filt, transform, report, attempts = design.design_with_resampling(
            sys, count=3, radius=0.9, seed=0, max_attempts=3, pair_count=20)
    assert report.weak
    assert len(attempts) == 3
    assert all(not a["accepted"] for a in attempts)


# ---------------------------------------------------------- serialization

def test_filter_dict_round_trip():
    filt = design.build_filter(
        design.sample_eigenvalues(3, 0.77, seed=11), p=2, b_scale=0.25)
    doc = design.filter_to_dict(filt)
    back = design.filter_from_dict(doc)
    assert back.eigenvalues == filt.eigenvalues
    assert back.p == filt.p and back.b_scale == filt.b_scale
    assert np.array_equal(back.a_real, filt.a_real)


def test_poly_dict_round_trip(oscillator):
    filt = design.build_filter(design.sample_eigenvalues(3, 0.9, seed=12))
    t = design.poly_transform(oscillator, filt)
    doc = design.poly_to_dict(t)
    back = design.poly_from_dict(doc)
    assert np.array_equal(back.m_mat, t.m_mat)
    assert back.basis == t.basis


def test_poly_dict_is_json_clean(oscillator):
    import json
    filt = design.build_filter([0.5, 0.1 + 0.3j])
    t = design.poly_transform(oscillator, filt)
    doc = json.loads(json.dumps(design.poly_to_dict(t)))
    assert np.array_equal(design.poly_from_dict(doc).m_mat, t.m_mat)


def test_poly_from_dict_rejects_basis_disorder(oscillator):
    filt = design.build_filter([0.5])
    doc = design.poly_to_dict(design.poly_transform(oscillator, filt))
    exps = doc["basis"]["exponents"]
    exps[0], exps[1] = exps[1], exps[0]
    with pytest.raises(ValueError):
        design.poly_from_dict(doc)
