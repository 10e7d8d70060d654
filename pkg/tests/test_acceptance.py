"""Acceptance battery: one test per criterion, each against an independent oracle.

Oracles used here are scipy pmfs, mpmath zeta values, brute-force Bayes
over labelled point subsets and direct loops over cycle quadruples.
"""

import math
import time

import mpmath
import numpy as np
import pytest
from scipy import stats
from scipy.special import gammaln

from thincond import dist_core as dc
from thincond import model_zoo as mz
from thincond import pp_exact as pe
from thincond import pp_mc as pm

WINDOW = 60
POWER_WINDOW = 200


def report(label, **values):
    parts = ", ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}" for k, v in values.items())
    print(f"[{label}] {parts}")


def window_for(spec):
    return POWER_WINDOW if spec.kind == "powerlaw" else WINDOW


def oracle_pmf(spec, n):
    """Exact masses from scipy or mpmath, written independently of the package."""
    p = spec.params
    if spec.kind == "poisson":
        return stats.poisson.pmf(n, p["lam"])
    if spec.kind == "binomial":
        return stats.binom.pmf(n, p["r"], p["p"])
    if spec.kind == "negbinomial":
        # C(r+n-1, n) p^n (1-p)^r
        r, pp = p["r"], p["p"]
        n = np.asarray(n)
        logc = gammaln(r + n) - gammaln(n + 1) - gammaln(r)
        return np.exp(logc + n * math.log(pp) + r * math.log1p(-pp))
    if spec.kind == "powerlaw":
        a = p["alpha"]
        return (n + 1.0) ** -a / float(mpmath.zeta(a))
    raise ValueError(spec.kind)


def oracle_thinning(spec, N):
    """Thinning matrix from its definition."""
    thinning = np.zeros((N + 1, N + 1))
    for n in range(N + 1):
        if spec.kind == "independent":
            thinning[n, : n + 1] = stats.binom.pmf(np.arange(n + 1), n, spec.params["q"])
        elif spec.kind == "uniform":
            thinning[n, : n + 1] = 1.0 / (n + 1)
        elif spec.kind == "all_or_nothing":
            q = spec.params["q"]
            thinning[n, n] += q
            thinning[n, 0] += 1 - q
        elif spec.kind == "almost_nothing":
            q = spec.params["q"]
            if n == 0:
                thinning[0, 0] = 1.0
            else:
                thinning[n, n] = q
                thinning[n, n - 1] = 1 - q
    return thinning


def oracle_thinned(dspec, tspec, N):
    """Exact kept-count law using a long window (mpmath for the power law)."""
    if dspec.kind == "powerlaw" and tspec.kind == "uniform":
        a = dspec.params["alpha"]
        z = mpmath.zeta(a)
        return np.array([float(mpmath.zeta(a + 1, k + 1) / z) for k in range(N + 1)])
    big = 400
    law = oracle_pmf(dspec, np.arange(big + 1))
    return (law @ oracle_thinning(tspec, big))[: N + 1]


def brute_cycle(thinning, cond, cap):
    thinning = thinning[: cap + 1, : cap + 1]
    cond = cond[: cap + 1, : cap + 1]
    # A[n, k, i, j] = T_ni Q_ij T_jk Q_kn, B = T_nk Q_kj T_ji Q_in
    A = np.einsum("ni,ij,jk,kn->nkij", thinning, cond, thinning, cond)
    B = np.einsum("nk,kj,ji,in->nkij", thinning, cond, thinning, cond)
    return float(np.max(np.abs(A - B)))


# point-process brute force over labelled points

def labelled(config):
    return [x for x, c in enumerate(config) for _ in range(c)]


def brute_thinning_row(spec, config, s):
    """Kept-count distribution of mu by summing over labelled subsets."""
    pts = labelled(config)
    n = len(pts)
    out = {}
    for mask in range(2 ** n):
        kept = [pts[i] for i in range(n) if mask >> i & 1]
        part = tuple(kept.count(x) for x in range(s))
        if spec.kind == "type1":
            w = 1.0
            for x in kept:
                q = spec.cell_q[x % len(spec.cell_q)]
                w *= q / (1 - q)
        else:
            w = 1.0 / math.comb(n, len(kept))
        out[part] = out.get(part, 0.0) + w
    tot = sum(out.values())
    return {k: v / tot for k, v in out.items()}


def brute_condensation(measure, spec):
    idx = measure.index
    s = idx.s
    joint = {}
    for a, config in enumerate(idx.configs):
        for part, t in brute_thinning_row(spec, config, s).items():
            joint[(part, config)] = measure.weights[a] * t
    marg = {}
    for (part, config), v in joint.items():
        marg[part] = marg.get(part, 0.0) + v
    return {(part, config): v / marg[part] for (part, config), v in joint.items() if marg[part] > 0}


def own_random_measure(s, n_max, seed):
    idx = pe.config_index(s, n_max)
    w = np.random.default_rng(1000 + seed).random(len(idx)) + 0.1
    return pe.ConfigMeasure(idx, w / w.sum())


# criteria

@pytest.mark.criterion(1, "panjer recursions")
def test_c01_panjer():
    cases = [
        (mz.DistSpec.poisson(2.0), 0.3, 2.0),
        (mz.DistSpec.binomial(5, 0.4), 0.3, 5 * 0.4 / 0.6),
        (mz.DistSpec.negbinomial(2, 0.3), 0.5, 2 * 0.3),
    ]
    t0 = time.perf_counter()
    for d, q, ratio in cases:
        law = mz.make_dist(d, WINDOW, tail_tol=None)
        thinning = mz.make_thinning(mz.ThinSpec.independent(q), WINDOW)
        cond = dc.condense(law, thinning)
        db = dc.detailed_balance_residual(law, thinning, cond)
        rec = dc.reconstruct(thinning, cond)
        r1 = rec.measure.weights[1] / rec.measure.weights[0]
        # oracle ratio from the pmf itself
        pmf = oracle_pmf(d, np.arange(2))
        report(f"1 {d.kind}", balance=float(db.max()), ratio=float(r1), expected=ratio)
        assert db.max() < 1e-11
        assert abs(r1 - ratio) < 1e-10
        assert abs(pmf[1] / pmf[0] - ratio) < 1e-10
    assert time.perf_counter() - t0 < 1.0


@pytest.mark.criterion(2, "closed-form condensation")
def test_c02_closed_forms():
    t0 = time.perf_counter()
    for d, t in mz.BUILTIN_PAIRS:
        N = window_for(d)
        law = mz.make_dist(d, N, tail_tol=None)
        thinning = mz.make_thinning(t, N)
        cf = mz.closed_form_condensation(d, t, N)
        exact_marg = mz.thinned_law(d, t, N)
        live = exact_marg.weights > 1e-12
        untrunc = dc.condense(law, thinning, thinned=exact_marg).entries
        window = dc.condense(law, thinning).entries
        e1 = float(np.abs(untrunc - cf.entries)[live].max())
        e2 = float(np.abs(window - cf.renormalized().entries)[live].max())
        report(f"2 {d.kind}/{t.kind}", untruncated=e1, window=e2)
        assert e1 < 1e-10 and e2 < 1e-10
    assert time.perf_counter() - t0 < 1.0


@pytest.mark.parametrize("pair", range(len(mz.BUILTIN_PAIRS)))
def test_c02_closed_forms_match_bayes_oracle(pair):
    d, t = mz.BUILTIN_PAIRS[pair]
    N = 30
    cf = mz.closed_form_condensation(d, t, N)
    law = oracle_pmf(d, np.arange(N + 1))
    thinning = oracle_thinning(t, N)
    marg = oracle_thinned(d, t, N)
    for k in range(N + 1):
        if marg[k] < 1e-12:
            continue
        for n in range(k, N + 1):
            assert abs(cf[k, n] - law[n] * thinning[n, k] / marg[k]) < 1e-10


@pytest.mark.criterion(3, "cycle condition")
def test_c03_cycle():
    t0 = time.perf_counter()
    for d, t in mz.BUILTIN_PAIRS:
        N = window_for(d)
        law = mz.make_dist(d, N, tail_tol=None)
        thinning = mz.make_thinning(t, N)
        cond = dc.condense(law, thinning)
        rep = dc.verify_cycle(thinning, cond, 25)
        report(f"3 {d.kind}/{t.kind}", t_first=rep.t_first, q_first=rep.q_first)
        assert rep.violation < 1e-11
    law = mz.make_dist(mz.DistSpec.poisson(2.0), WINDOW, tail_tol=None)
    thinning = mz.make_thinning(mz.ThinSpec.independent(0.3), WINDOW)
    M = dc.condense(law, thinning).entries.copy()
    M[0, 1] *= 1.01
    M[0] /= M[0].sum()
    cond_p = dc.TriMatrix(M, "upper")
    v = dc.verify_cycle(thinning, cond_p, 25).violation
    oracle = brute_cycle(thinning.entries, M, 25)
    report("3 perturbed", violation=v, oracle=oracle)
    assert v > 1e-4
    assert abs(v - oracle) < 1e-12
    assert time.perf_counter() - t0 < 10.0


@pytest.mark.criterion(4, "discrete reconstruction")
def test_c04_reconstruction():
    t0 = time.perf_counter()
    for d, t in mz.BUILTIN_PAIRS:
        if t.kind not in ("independent", "uniform"):
            continue
        N = window_for(d)
        law = mz.make_dist(d, N, tail_tol=None)
        thinning = mz.make_thinning(t, N)
        rec = dc.reconstruct(thinning, dc.condense(law, thinning))
        target = oracle_pmf(d, np.arange(N + 1))
        target = target / target.sum()
        tv = 0.5 * float(np.abs(rec.normalized.weights - target).sum())
        report(f"4 {d.kind}/{t.kind}", tv=tv)
        assert tv < 1e-9

    alpha = 2.0
    d = mz.DistSpec.powerlaw(alpha)
    law = mz.make_dist(d, POWER_WINDOW, tail_tol=None)
    thinning = mz.make_thinning(mz.ThinSpec.uniform(), POWER_WINDOW)
    rec = dc.reconstruct(thinning, dc.condense(law, thinning))
    n = np.arange(POWER_WINDOW + 1)
    shape = float(np.abs(rec.measure.weights - (n + 1.0) ** -alpha).max())
    exact = mz.thinned_law(d, mz.ThinSpec.uniform(), POWER_WINDOW)
    split = dc.splitting_of(dc.condense(law, thinning, thinned=exact))
    zeta, err = mz.hurwitz_zeta(alpha + 1, 1.0)
    oracle = float(mpmath.zeta(alpha + 1))
    u00 = abs(split[0, 0] - 1 / oracle)
    report("4 powerlaw", shape=shape, upsilon00=u00, zeta_bound=err)
    assert shape < 1e-9
    assert u00 < 1e-9
    assert err <= 1e-13 and abs(zeta - oracle) <= 1e-13
    assert time.perf_counter() - t0 < 1.0


@pytest.mark.criterion(5, "palm-bayes equivalence")
def test_c05_palm_bayes():
    t0 = time.perf_counter()
    worst_pkg = 0.0
    worst_oracle = 0.0
    for seed in range(10):
        measure = own_random_measure(3, 4, seed)
        for spec in (pe.ThinningSpec.independent(0.4), pe.ThinningSpec.uniform()):
            cond = pe.condensation_kernel(measure, spec)
            bayes = brute_condensation(measure, spec)
            for law in measure.index.configs:
                U = pe.palm_splitting_kernel(measure, spec, law)
                Uq = pe.splitting_from_condensation(cond, law)
                worst_pkg = max(worst_pkg, float(np.abs(U.weights - Uq.weights).max()))
                for part, w in zip(U.index.configs, U.weights):
                    full = tuple(a + b for a, b in zip(law, part))
                    worst_oracle = max(worst_oracle, abs(w - bayes.get((law, full), 0.0)))
                atom = pe.condensation_atom(measure, spec, law)
                worst_oracle = max(worst_oracle, abs(atom - bayes[(law, law)]))
    report("5", palm_vs_condensation=worst_pkg, palm_vs_bayes=worst_oracle)
    assert worst_pkg < 1e-10 and worst_oracle < 1e-10
    assert time.perf_counter() - t0 < 30.0


@pytest.mark.criterion(6, "exact point-process ibp")
def test_c06_exact_ibp():
    t0 = time.perf_counter()
    space = pe.GroundSpace((1.0, 2.0, 3.0))
    alpha = 2.0
    mixed = pe.mixed_sample_measure(space, 5, lambda k: math.lgamma(k + 1) - alpha * math.log(k + 1))
    laws = [pe.poisson_measure(space, 5), own_random_measure(2, 5, 3), mixed]
    worst = 0.0
    for measure in laws:
        for spec in (pe.ThinningSpec.independent(0.3), pe.ThinningSpec.uniform()):
            worst = max(worst, pe.verify_ibp_exact(measure, spec))
    birth = pe.papangelou_kernel(mixed, pe.ThinningSpec.uniform())
    idx = mixed.index
    kernel_err = 0.0
    for a, config in enumerate(idx.configs):
        m = sum(config)
        if m == idx.n_max:
            continue
        for x in range(3):
            expect = ((m + 1) / (m + 2)) ** (alpha + 1) * space.weights[x] / space.total
            kernel_err = max(kernel_err, abs(birth[a, x] - expect))
    # Poisson under independent q-thinning: intensity times (1 - q)
    pois = pe.poisson_measure(space, 5)
    birth_p = pe.papangelou_kernel(pois, pe.ThinningSpec.independent(0.3))
    below = pois.index.sizes < 5
    pois_err = float(np.abs(birth_p[below] - 0.7 * np.array(space.weights)).max())
    report("6", ibp=worst, mixed_kernel=kernel_err, poisson_kernel=pois_err)
    assert worst < 1e-10
    assert kernel_err < 1e-12 and pois_err < 1e-12
    assert time.perf_counter() - t0 < 30.0


@pytest.mark.criterion(7, "point-process reconstruction")
def test_c07_pp_reconstruction():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        measure = own_random_measure(2, 4, seed)
        for spec in (pe.ThinningSpec.independent(0.5), pe.ThinningSpec.uniform()):
            thinning = pe.thinning_table(spec, 2, 4)
            rec = pe.reconstruct_pp(thinning, pe.condensation_kernel(measure, spec, thinning))
            tv = 0.5 * float(np.abs(rec.law.weights / rec.law.weights.sum() - measure.weights).sum())
            worst = max(worst, tv)
    report("7", tv=worst)
    assert worst < 1e-9
    assert time.perf_counter() - t0 < 60.0


@pytest.mark.criterion(8, "monte carlo poisson thinning")
def test_c08_mc_thinning():
    t0 = time.perf_counter()
    for seed in (1, 2):
        r = pm.mc_verify_poisson_thinning(4.0, 0.5, 100_000, seed, d=2)
        z_mean = abs(r.kept_mean.mean - 2.0) / r.kept_mean.stderr
        z_cov = abs(r.covariance.mean) / r.covariance.stderr
        report(f"8 seed {seed}", kept_mean=r.kept_mean.mean, z_mean=z_mean, covariance=r.covariance.mean, z_cov=z_cov)
        assert z_mean < 3 and z_cov < 3
    assert time.perf_counter() - t0 < 60.0


@pytest.mark.criterion(9, "monte carlo ibp")
def test_c09_mc_ibp():
    t0 = time.perf_counter()
    cases = [
        ("poisson", pm.ProcessSpec.poisson(4.0), pe.ThinningSpec.independent(0.5), "count_left"),
        ("mixed", pm.ProcessSpec.mixed_powerlaw(2.0), pe.ThinningSpec.uniform(), "inv_count_left"),
    ]
    for name, proc, spec, g in cases:
        for seed in (1, 2):
            r = pm.mc_verify_ibp(proc, spec, g, 100_000, seed)
            report(f"9 {name} seed {seed}", lhs=r.lhs.mean, rhs=r.rhs.mean, z=r.z_score)
            assert r.z_score < 3
    assert time.perf_counter() - t0 < 120.0


@pytest.mark.criterion(10, "count-level consistency")
def test_c10_count_consistency():
    q, lam, N = 0.5, 1.0, 12
    measure = pe.poisson_measure(pe.GroundSpace((lam,)), N)
    spec = pe.ThinningSpec.independent(q)
    thinning = pe.thinning_table(spec, 1, N)
    cond = pe.condensation_kernel(measure, spec, thinning)
    law = dc.TruncatedPmf(measure.weights)
    thinning_d = mz.make_thinning(mz.ThinSpec.independent(q), N)
    cond_d = dc.condense(law, thinning_d)
    d_t = float(np.abs(thinning.matrix - thinning_d.entries).max())
    d_q = float(np.abs(cond.matrix - cond_d.entries).max())
    d_m = float(np.abs(pe.thinned_measure(measure, spec).weights - dc.thin(law, thinning_d).weights).max())
    d_o = float(np.abs(thinning.matrix - oracle_thinning(mz.ThinSpec.independent(q), N)).max())
    report("10", thinning=d_t, condensation=d_q, thinned=d_m, oracle=d_o)
    assert max(d_t, d_q, d_m, d_o) < 1e-12
