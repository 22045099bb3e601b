import math

import numpy as np
import pytest
from scipy.integrate import quad, solve_ivp

from winfree.model import ModelSpec, make_initial_conditions
from winfree.theory import (
    CouplingRangeError,
    MeanVelocityError,
    SyncHypothesisError,
    TheoryConstants,
    alpha_term,
    beta_kappa,
    capacity_D,
    certify_domain,
    gain_L,
    h_integral,
    in_invariant_set,
    kappa_star,
    negative_part_integral,
    periodic_affine_solution,
    simpson_checked,
)

TWO_PI = 2 * math.pi
M0 = ModelSpec.simplified(0.0)
CONSTS = TheoryConstants(3.0, 3.0)

# regression goldens at beta = 0
L_GOLDEN = {
    0.1: 0.41410913013245026,
    0.2: 0.3493658359802212,
    0.3: 0.2985417633543238,
    0.4: 0.257125548378655,
    0.5: 0.2220193617521299,
    0.6: 0.19074492890596448,
    0.7: 0.16077976809805639,
}


def _quad(f, a=0.0, b=TWO_PI):
    return quad(f, a, b, epsabs=1e-13, epsrel=1e-13, limit=400)[0]


def _kstar_brute(beta):
    x = np.linspace(0, TWO_PI, 2_000_001)
    return 1.0 / np.max((1 + np.cos(x + beta)) * np.sin(x))


# -- kappa* ------------------------------------------------------------------

def test_kappa_star_values():
    assert kappa_star(M0) == pytest.approx(4 / (3 * math.sqrt(3)), abs=1e-6)
    assert kappa_star(ModelSpec.simplified(math.pi / 2 - 0.5)) == pytest.approx(1.936, abs=2e-3)
    assert kappa_star(ModelSpec.simplified(math.pi / 2 - 0.25)) == pytest.approx(2.694, abs=2e-3)
    assert kappa_star(ModelSpec.simplified(math.pi / 2)) == pytest.approx(4.0, abs=1e-9)


@pytest.mark.parametrize("beta", [0.3, 1.0, 2.2, 3.0])
def test_kappa_star_against_dense_scan(beta):
    assert kappa_star(ModelSpec.simplified(beta)) == pytest.approx(_kstar_brute(beta), rel=1e-9)


def test_kappa_star_minimal_at_zero():
    k0 = kappa_star(M0)
    for beta in np.linspace(0, math.pi, 41):
        assert kappa_star(ModelSpec.simplified(beta)) >= k0 - 1e-12


def test_kappa_star_infinite_without_positive_product():
    never = ModelSpec(lambda x: 1 + np.cos(x), lambda x: -np.sin(x),
                      lambda x: np.cos(x) - 1, lambda x: -np.sin(x), lambda x: -np.cos(x),
                      2, 1, 2, 1, 1)
    assert kappa_star(never) == math.inf


# -- stability integral ------------------------------------------------------

def test_h_uncoupled_is_pi():
    assert h_integral(M0, 0.0) == pytest.approx(math.pi, abs=1e-12)


@pytest.mark.parametrize("kappa", [0.1, 0.3, 0.5, 0.6, 0.75])
def test_h_above_third_pi_and_alternate_form(kappa):
    H = h_integral(M0, kappa)
    assert H > math.pi / 3
    # integrating the logarithmic derivative by parts gives a positive integrand
    alt = _quad(lambda s: math.sin(s) ** 2 / (1 - kappa * (1 + math.cos(s)) * math.sin(s)))
    assert H == pytest.approx(alt, rel=1e-9)


@pytest.mark.parametrize("kappa", [0.0, 1.0, 2.5, 3.9])
def test_h_vanishes_at_half_pi(kappa):
    assert abs(h_integral(ModelSpec.simplified(math.pi / 2), kappa)) <= 1e-9


def test_h_antisymmetry():
    for beta in np.linspace(0, math.pi, 50):
        a, b = ModelSpec.simplified(beta), ModelSpec.simplified(math.pi - beta)
        for kappa in (0.2, 0.6):
            assert abs(h_integral(a, kappa) + h_integral(b, kappa)) <= 1e-9


def test_h_rejects_supercritical_coupling():
    with pytest.raises(CouplingRangeError):
        h_integral(M0, 0.8)


@pytest.mark.parametrize("beta,kappa", [(0.4, 0.7), (1.9, 1.2), (2.8, 0.3)])
def test_h_matches_adaptive_quadrature(beta, kappa):
    ref = _quad(lambda s: (1 + math.cos(s + beta)) * math.cos(s)
                / (1 - kappa * (1 + math.cos(s + beta)) * math.sin(s)))
    assert h_integral(ModelSpec.simplified(beta), kappa) == pytest.approx(ref, abs=1e-10)


# -- beta_kappa -------------------------------------------------------------

def test_beta_kappa_examples():
    s = np.linspace(0, TWO_PI, 9)
    assert np.all(beta_kappa(M0, 0.0, s) == 0.0)
    assert beta_kappa(M0, 0.5, math.pi / 2) == pytest.approx(0.0, abs=1e-16)
    assert isinstance(beta_kappa(M0, 0.5, 1.0), float)
    with pytest.raises(CouplingRangeError):
        beta_kappa(M0, 1.0, s)


def test_beta_kappa_integrates_to_kappa_h():
    total = simpson_checked(lambda s: beta_kappa(M0, 0.5, s), 0.0, TWO_PI)
    assert total == pytest.approx(0.5 * h_integral(M0, 0.5), abs=1e-9)


def test_negative_part_integral():
    assert negative_part_integral(np.sin) == pytest.approx(2.0, abs=1e-10)
    assert negative_part_integral(lambda s: np.cos(s) + 0.5) == pytest.approx(
        _quad(lambda s: max(0.0, -(math.cos(s) + 0.5))), abs=1e-10)
    assert negative_part_integral(lambda s: 2 + np.cos(s)) == 0.0
    # negative piece that touches zero at its midpoint
    touching = negative_part_integral(lambda s: (1 + np.cos(s)) * np.cos(s))
    assert touching == pytest.approx(2 - math.pi / 2, abs=1e-10)


# -- periodic affine solution ----------------------------------------------

def random_beta(rng):
    """Smooth periodic coefficient with period integral >= 0.63 that can dip negative."""
    c0 = rng.uniform(0.1, 1.0)
    a1, a2 = rng.uniform(0, 1.5, 2)
    p1, p2 = rng.uniform(0, TWO_PI, 2)
    return lambda s: c0 + a1 * np.cos(s + p1) + a2 * np.sin(2 * s + p2)


def forward_oracle(alpha, beta_fn, s_eval, periods=50):
    """Integrate the affine equation from 1 for many periods, sample the last one."""
    rhs = lambda s, y: alpha - beta_fn(s) * y
    y = solve_ivp(rhs, (0, periods * TWO_PI), [1.0], method="DOP853",
                  rtol=1e-13, atol=1e-15).y[0, -1]
    out = solve_ivp(rhs, (0, TWO_PI), [y], method="DOP853", t_eval=s_eval,
                    rtol=1e-13, atol=1e-15)
    return out.y[0]


def fd_residual(curve, beta_fn):
    d = curve.delta[:-1]
    h = curve.s[1] - curve.s[0]
    deriv = (-np.roll(d, -2) + 8 * np.roll(d, -1) - 8 * np.roll(d, 1) + np.roll(d, 2)) / (12 * h)
    return np.max(np.abs(deriv - (curve.alpha - beta_fn(curve.s[:-1]) * d)))


def test_constant_coefficient():
    curve = periodic_affine_solution(0.7, lambda s: np.full_like(s, 0.35))
    np.testing.assert_allclose(curve.delta, 2.0, rtol=0, atol=1e-9)


def test_affine_input_errors():
    with pytest.raises(ValueError):
        periodic_affine_solution(0.0, lambda s: np.ones_like(s))
    with pytest.raises(ValueError):
        periodic_affine_solution(1.0, np.cos)


@pytest.mark.parametrize("seed", range(5))
def test_affine_solution_matches_oracles(seed):
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(1e-3, 5.0)
    beta_fn = random_beta(rng)
    curve = periodic_affine_solution(alpha, beta_fn)
    ref = forward_oracle(alpha, beta_fn, curve.s)
    assert np.max(np.abs(curve.delta - ref)) <= 1e-8
    assert fd_residual(curve, beta_fn) <= 1e-6
    assert curve.delta.min() > 0
    assert curve.max <= curve.upper_bound
    assert curve.delta[0] == pytest.approx(curve.delta[-1], abs=1e-12)
    assert curve(curve.s[5] + 3 * TWO_PI) == pytest.approx(curve.delta[5], abs=1e-12)


# -- certified domain constants --------------------------------------------

def _alpha_ref(g, k, D, C, Ct, ks):
    q = 1 - k / ks
    m = 1 - g - Ct * k * D - k / ks
    num = 2 * g + C * k * D ** 2
    return num / q + (num + Ct * k * D) * (g + Ct * k * D) / (m * q)


def _D_ref(k, C, Ct, ks, L):
    q = 1 - k / ks
    return min(1.0, L / (2 * (2 + C) / q + 2 * Ct * (1 + Ct) * k / q ** 2))


def _L_ref(beta, kappa):
    f = lambda s: kappa * (1 + math.cos(s + beta)) * math.cos(s) / (
        1 - kappa * (1 + math.cos(s + beta)) * math.sin(s))
    tot = _quad(f)
    neg = _quad(lambda s: max(0.0, -f(s)), 0, TWO_PI)
    return (1 - math.exp(-tot)) / (TWO_PI * kappa * math.exp(neg))


def test_constants():
    c = TheoryConstants.from_model(M0)
    assert (c.C, c.C_tilde) == (3.0, 3.0)


def test_alpha_examples():
    ks = kappa_star(M0)
    assert alpha_term(0.0, 0.3, 0.0, CONSTS, ks) == 0.0
    D = capacity_D(0.3, CONSTS, ks, gain_L(M0, 0.3))
    assert alpha_term(0.001, 0.3, D, CONSTS, ks) == pytest.approx(
        _alpha_ref(0.001, 0.3, D, 3.0, 3.0, ks), rel=1e-12)
    vals = [alpha_term(g, 0.3, D, CONSTS, ks) for g in (1e-4, 1e-3, 1e-2)]
    assert vals[0] < vals[1] < vals[2]
    with pytest.raises(MeanVelocityError):
        alpha_term(0.7, 0.3, D, CONSTS, ks)


def test_capacity_examples():
    ks = kappa_star(M0)
    L = gain_L(M0, 0.3)
    assert capacity_D(0.3, CONSTS, ks, L) == pytest.approx(_D_ref(0.3, 3, 3, ks, L), rel=1e-12)
    assert capacity_D(0.3, CONSTS, ks, 1e6) == 1.0
    near = [capacity_D(ks * (1 - e), CONSTS, ks, 1.0) for e in (1e-2, 1e-4, 1e-6)]
    assert near[0] > near[1] > near[2] and near[2] < 1e-10
    with pytest.raises(CouplingRangeError):
        capacity_D(ks, CONSTS, ks, L)


@pytest.mark.parametrize("kappa", sorted(L_GOLDEN))
def test_gain_goldens(kappa):
    L = gain_L(M0, kappa)
    assert L == pytest.approx(L_GOLDEN[kappa], rel=1e-12)
    assert L == pytest.approx(_L_ref(0.0, kappa), rel=1e-9)


def test_gain_sync_hypothesis_failure():
    with pytest.raises(SyncHypothesisError):
        gain_L(ModelSpec.simplified(math.pi / 2), 1.0)
    with pytest.raises(SyncHypothesisError):
        gain_L(ModelSpec.simplified(2.5), 0.5)


def test_certify_examples():
    yes = certify_domain(M0, 1e-9, 0.3)
    assert yes.in_U and yes.mean_increasing and yes.curve_below_D
    no = certify_domain(M0, 0.5, 0.3)
    assert not no.in_U and no.curve is None
    beyond = certify_domain(M0, 1e-6, 0.9)
    assert not beyond.in_U and math.isnan(beyond.D)
    with pytest.raises(SyncHypothesisError):
        certify_domain(ModelSpec.simplified(math.pi / 2), 1e-6, 0.5)
    with pytest.raises(ValueError):
        certify_domain(M0, 0.0, 0.3)


def test_certified_points_satisfy_domain_properties():
    ks = kappa_star(M0)
    for kappa in (0.05, 0.2, 0.4, 0.6, 0.74):
        D = capacity_D(kappa, CONSTS, ks, gain_L(M0, kappa))
        for frac in (0.01, 0.5, 0.99):
            cert = certify_domain(M0, frac * kappa * D * D, kappa)
            assert cert.in_U and 0 < cert.gamma < kappa * cert.D ** 2
            assert 1 - cert.gamma - 3 * kappa * cert.D - kappa / ks > 0
            assert cert.max_delta < cert.D


def test_max_bound_equals_alpha_over_kappa_L():
    for gamma, kappa in [(1e-6, 0.3), (1e-5, 0.1), (1e-7, 0.6)]:
        cert = certify_domain(M0, gamma, kappa)
        assert cert.curve.upper_bound == pytest.approx(cert.alpha / (kappa * cert.L), rel=1e-9)
        assert cert.max_delta <= cert.alpha / (kappa * cert.L)


def test_in_invariant_set():
    cert = certify_domain(M0, 1e-6, 0.3)
    assert in_invariant_set(np.full(7, 2.3), cert)
    X = np.array([0.0, cert.max_delta + 0.1])
    assert not in_invariant_set(X, cert)
    state = make_initial_conditions(20, -0.4 * cert.curve(0.0), 0.4 * cert.curve(0.0), seed=1)
    assert in_invariant_set(state.x, cert)
    with pytest.raises(ValueError):
        in_invariant_set(X, certify_domain(M0, 0.5, 0.3))
