import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from thincond import dist_core as dc
from thincond import model_zoo as mz
from thincond.errors import TailToleranceError, UnsupportedCombinationError


# hurwitz zeta

@pytest.mark.parametrize("alpha,q", [(2.0, 1.0), (3.0, 1.0), (1.5, 2.5), (2.0, 1000.0), (4.5, 0.3), (1.01, 1.0)])
def test_hurwitz_zeta_against_mpmath(alpha, q):
    val, err = mz.hurwitz_zeta(alpha, q)
    ref = float(mpmath.zeta(alpha, q))
    assert err <= 1e-13 * max(1.0, abs(ref))
    assert abs(val - ref) <= max(err, 4e-16 * abs(ref))


def test_hurwitz_zeta_integral_bounds():
    # the sum lies between the tail integral and the integral plus the first term
    alpha, q = 2.0, 1000.0
    val, _ = mz.hurwitz_zeta(alpha, q)
    low = q ** (1 - alpha) / (alpha - 1)
    assert low <= val <= low + q ** -alpha


def test_hurwitz_zeta_rejects_divergent():
    with pytest.raises(ValueError):
        mz.hurwitz_zeta(1.0, 1.0)


@given(st.floats(1.05, 6.0), st.floats(0.1, 50.0))
@settings(max_examples=30, deadline=None)
def test_hurwitz_zeta_shift(alpha, q):
    # zeta(a, q) = q^(-a) + zeta(a, q + 1)
    a, _ = mz.hurwitz_zeta(alpha, q)
    b, _ = mz.hurwitz_zeta(alpha, q + 1)
    assert a == pytest.approx(q ** -alpha + b, rel=1e-12)


# distributions

def test_pmfs_match_scipy():
    n = np.arange(30)
    assert np.allclose(mz.pmf_values(mz.DistSpec.poisson(2.0), n), stats.poisson.pmf(n, 2.0))
    assert np.allclose(mz.pmf_values(mz.DistSpec.binomial(5, 0.4), n), stats.binom.pmf(n, 5, 0.4))
    # C(r+n-1, n) p^n (1-p)^r
    nb = [math.comb(n_ + 1, n_) * 0.3 ** n_ * 0.7 ** 2 for n_ in range(30)]
    assert np.allclose(mz.pmf_values(mz.DistSpec.negbinomial(2, 0.3), n), nb, rtol=1e-12)
    pl = (n + 1.0) ** -2 / (math.pi ** 2 / 6)
    assert np.allclose(mz.pmf_values(mz.DistSpec.powerlaw(2.0), n), pl, rtol=1e-13)


def test_invalid_specs():
    for bad in [lambda: mz.DistSpec.poisson(-1), lambda: mz.DistSpec.binomial(2.5, 0.3),
                lambda: mz.DistSpec.powerlaw(1.0), lambda: mz.ThinSpec.independent(1.0),
                lambda: mz.DistSpec("weird", {})]:
        with pytest.raises(ValueError):
            bad()


def test_auto_window_meets_tail():
    law = mz.make_dist(mz.DistSpec.poisson(2.0))
    assert law.tail_bound <= 1e-12
    assert stats.poisson.sf(law.n_max - 1, 2.0) > 1e-12
    assert mz.make_dist(mz.DistSpec.binomial(5, 0.4)).n_max == 5


def test_explicit_window_tail_check():
    with pytest.raises(TailToleranceError):
        mz.make_dist(mz.DistSpec.poisson(2.0), 5)
    law = mz.make_dist(mz.DistSpec.poisson(2.0), 5, tail_tol=None)
    assert law.tail_bound == pytest.approx(stats.poisson.sf(5, 2.0))


def test_power_law_window_is_capped():
    with pytest.raises(TailToleranceError):
        mz.make_dist(mz.DistSpec.powerlaw(2.0))


def test_power_law_tail_mass():
    tail = mz.tail_mass(mz.DistSpec.powerlaw(3.0), 100)
    ref = float(mpmath.zeta(3, 102) / mpmath.zeta(3))
    assert tail == pytest.approx(ref, rel=1e-12)


# thinnings

def test_thinning_matrices():
    thinning = mz.make_thinning(mz.ThinSpec.independent(0.3), 50)
    assert np.allclose(thinning[50, :51], stats.binom.pmf(np.arange(51), 50, 0.3), atol=1e-15)
    U = mz.make_thinning(mz.ThinSpec.uniform(), 4)
    assert np.allclose(U[3, :4], 0.25)
    A = mz.make_thinning(mz.ThinSpec.all_or_nothing(0.3), 3)
    assert A[2, 0] == pytest.approx(0.7) and A[2, 2] == pytest.approx(0.3) and A[2, 1] == 0
    B = mz.make_thinning(mz.ThinSpec.almost_nothing(0.3), 3)
    assert B[2, 1] == pytest.approx(0.7) and B[0, 0] == 1.0
    assert mz.ThinSpec.independent(0.3).positive and not mz.ThinSpec.almost_nothing(0.3).positive


def test_independent_thinning_large_window_is_stochastic():
    thinning = mz.make_thinning(mz.ThinSpec.independent(0.5), 2000)
    assert np.allclose(thinning.entries.sum(axis=1), 1.0, atol=1e-12)


# closed forms

@pytest.mark.parametrize("pair", range(len(mz.BUILTIN_PAIRS)))
def test_thinned_law_matches_long_window(pair):
    d, t = mz.BUILTIN_PAIRS[pair]
    N = 20
    exact = mz.thinned_law(d, t, N)
    big = 3000 if d.kind == "powerlaw" else 300
    long = dc.thin(mz.make_dist(d, big, tail_tol=None), mz.make_thinning(t, big)).weights[: N + 1]
    tol = 1e-6 if d.kind == "powerlaw" else 1e-13
    assert np.allclose(exact.weights, long, atol=tol)


def test_powerlaw_uniform_thinned_law_uses_zeta():
    nup = mz.thinned_law(mz.DistSpec.powerlaw(2.0), mz.ThinSpec.uniform(), 5)
    ref = [float(mpmath.zeta(3, k + 1) / mpmath.zeta(2)) for k in range(6)]
    assert np.allclose(nup.weights, ref, rtol=1e-13)


def test_negbin_thinned_parameters():
    # negbin(r, p) thinned by q is negbin(r, pq / (1 - p(1 - q)))
    r, p, q = 2.0, 0.3, 0.5
    nup = mz.thinned_law(mz.DistSpec.negbinomial(r, p), mz.ThinSpec.independent(q), 10)
    pp = p * q / (1 - p * (1 - q))
    ref = mz.pmf_values(mz.DistSpec.negbinomial(r, pp), np.arange(11))
    assert np.allclose(nup.weights, ref)


def test_binomial_pathological_rows():
    cond = mz.closed_form_condensation(mz.DistSpec.binomial(5, 0.4), mz.ThinSpec.independent(0.3), 8)
    assert cond.pathological.tolist() == [False] * 6 + [True] * 3
    assert cond[7, 7] == 1.0


def test_unsupported_pair():
    with pytest.raises(UnsupportedCombinationError):
        mz.closed_form_condensation(mz.DistSpec.poisson(2.0), mz.ThinSpec.uniform(), 10)
