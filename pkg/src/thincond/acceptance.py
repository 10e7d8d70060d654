"""Built-in verification battery used by ``thincond report``.

Each check returns a dict with the measured quantities, the thresholds they
are held to, and a ``passed`` flag.
"""

from __future__ import annotations

import time

import numpy as np

from . import dist_core as dc
from . import model_zoo as mz
from . import pp_exact as pe
from . import pp_mc as pm

COUNT_WINDOW = 60
POWER_WINDOW = 200


def _window(dist: mz.DistSpec) -> int:
    return POWER_WINDOW if dist.kind == "powerlaw" else COUNT_WINDOW


def panjer() -> dict:
    cases = [
        (mz.DistSpec.poisson(2.0), 0.3, 2.0),
        (mz.DistSpec.binomial(5, 0.4), 0.3, 5 * 0.4 / 0.6),
        (mz.DistSpec.negbinomial(2, 0.3), 0.5, 2 * 0.3),
    ]
    out = {}
    ok = True
    for d, q, ratio in cases:
        law = mz.make_dist(d, COUNT_WINDOW, tail_tol=None)
        thinning = mz.make_thinning(mz.ThinSpec.independent(q), COUNT_WINDOW)
        cond = dc.condense(law, thinning)
        db = float(dc.detailed_balance_residual(law, thinning, cond).max())
        rec = dc.reconstruct(thinning, cond)
        r1 = float(rec.measure.weights[1])
        good = db < 1e-11 and abs(r1 - ratio) < 1e-10
        ok &= good
        out[d.kind] = {"detailed_balance": db, "ratio_1_0": r1, "expected_ratio": ratio, "passed": good}
    return {"cases": out, "passed": ok}


def closed_forms() -> dict:
    out = {}
    ok = True
    for d, t in mz.BUILTIN_PAIRS:
        N = _window(d)
        law = mz.make_dist(d, N, tail_tol=None)
        thinning = mz.make_thinning(t, N)
        exact = mz.thinned_law(d, t, N)
        live = exact.weights > 1e-12
        cf = mz.closed_form_condensation(d, t, N)
        raw = dc.condense(law, thinning, thinned=exact).entries
        win = dc.condense(law, thinning).entries
        e1 = float(np.abs(raw - cf.entries)[live].max())
        e2 = float(np.abs(win - cf.renormalized().entries)[live].max())
        good = max(e1, e2) < 1e-10
        ok &= good
        out[f"{d.kind}/{t.kind}"] = {"exact_rows": e1, "window_rows": e2, "passed": good}
    return {"pairs": out, "passed": ok}


def cycles() -> dict:
    out = {}
    ok = True
    for d, t in mz.BUILTIN_PAIRS:
        N = _window(d)
        law = mz.make_dist(d, N, tail_tol=None)
        thinning = mz.make_thinning(t, N)
        cond = dc.condense(law, thinning)
        v = dc.verify_cycle(thinning, cond, 25).violation
        good = v < 1e-11
        ok &= good
        out[f"{d.kind}/{t.kind}"] = {"violation": v, "passed": good}
    law = mz.make_dist(mz.DistSpec.poisson(2.0), COUNT_WINDOW, tail_tol=None)
    thinning = mz.make_thinning(mz.ThinSpec.independent(0.3), COUNT_WINDOW)
    M = dc.condense(law, thinning).entries.copy()
    M[0, 1] *= 1.01
    M[0] /= M[0].sum()
    pv = dc.verify_cycle(thinning, dc.TriMatrix(M, "upper"), 25).violation
    ok &= pv > 1e-4
    out["perturbed"] = {"violation": pv, "passed": pv > 1e-4}
    return {"pairs": out, "passed": ok}


def reconstruction() -> dict:
    out = {}
    ok = True
    for d, t in mz.BUILTIN_PAIRS:
        if not t.positive:
            continue
        N = _window(d)
        law = mz.make_dist(d, N, tail_tol=None)
        thinning = mz.make_thinning(t, N)
        rec = dc.reconstruct(thinning, dc.condense(law, thinning))
        tv = rec.normalized.tv_distance(law.normalize())
        good = tv < 1e-9
        ok &= good
        out[f"{d.kind}/{t.kind}"] = {"tv": tv, "passed": good}
    d = mz.DistSpec.powerlaw(2.0)
    law = mz.make_dist(d, POWER_WINDOW, tail_tol=None)
    thinning = mz.make_thinning(mz.ThinSpec.uniform(), POWER_WINDOW)
    exact = mz.thinned_law(d, mz.ThinSpec.uniform(), POWER_WINDOW)
    split = dc.splitting_of(dc.condense(law, thinning, thinned=exact))
    z3, err = mz.hurwitz_zeta(3.0, 1.0)
    rec = dc.reconstruct(thinning, dc.condense(law, thinning))
    n = np.arange(POWER_WINDOW + 1)
    shape = float(np.abs(rec.measure.weights - (n + 1.0) ** -2).max())
    u00 = abs(split[0, 0] - 1 / z3)
    good = u00 < 1e-9 and shape < 1e-9 and err <= 1e-13
    ok &= good
    out["powerlaw_shape"] = {"max_abs": shape, "upsilon_00_error": u00, "zeta_error_bound": err, "passed": good}
    return {"cases": out, "passed": ok}


def palm_bayes(seeds: int = 10) -> dict:
    worst = 0.0
    for seed in range(seeds):
        measure = pe.random_measure(3, 4, seed)
        for spec in (pe.ThinningSpec.independent(0.4), pe.ThinningSpec.uniform()):
            cond = pe.condensation_kernel(measure, spec)
            for law in measure.index.configs:
                a = pe.palm_splitting_kernel(measure, spec, law).weights
                b = pe.splitting_from_condensation(cond, law).weights
                atom = abs(pe.condensation_atom(measure, spec, law) - cond(law, law))
                worst = max(worst, float(np.abs(a - b).max()), atom)
    return {"max_difference": worst, "passed": worst < 1e-10}


def exact_ibp() -> dict:
    sp = pe.GroundSpace((1.0, 2.0, 3.0))
    res = []
    for measure in (pe.poisson_measure(sp, 5), pe.random_measure(2, 5, 7),
              pe.mixed_sample_measure(sp, 5, pe.powerlaw_count_weights(2.0))):
        for spec in (pe.ThinningSpec.independent(0.3), pe.ThinningSpec.uniform()):
            res.append(pe.verify_ibp_exact(measure, spec))
    measure = pe.mixed_sample_measure(sp, 5, pe.powerlaw_count_weights(2.0))
    birth = pe.papangelou_kernel(measure, pe.ThinningSpec.uniform())
    m = measure.index.sizes[:, None].astype(float)
    expect = ((m + 1) / (m + 2)) ** 3 * np.array(sp.weights)[None, :] / sp.total
    below = measure.index.sizes < measure.n_max
    kern = float(np.abs(birth - expect)[below].max())
    worst = max(res)
    return {"max_residual": worst, "mixed_kernel_error": kern, "passed": worst < 1e-10 and kern < 1e-12}


def pp_reconstruction(seeds: int = 5) -> dict:
    worst = 0.0
    ident = 0.0
    for seed in range(seeds):
        measure = pe.random_measure(2, 4, seed)
        for spec in (pe.ThinningSpec.independent(0.5), pe.ThinningSpec.uniform()):
            thinning = pe.thinning_table(spec, 2, 4)
            rec = pe.reconstruct_pp(thinning, pe.condensation_kernel(measure, spec, thinning))
            worst = max(worst, rec.normalized.tv_distance(measure))
            ident = max(ident, rec.identity_residual)
    return {"max_tv": worst, "identity_residual": ident, "passed": worst < 1e-9 and ident < 1e-9}


def mc_thinning(n_samples: int, seeds=(1, 2)) -> dict:
    out = {}
    ok = True
    for s in seeds:
        r = pm.mc_verify_poisson_thinning(4.0, 0.5, n_samples, s)
        good = r.mean_z < 3 and r.cov_z < 3
        ok &= good
        out[str(s)] = {"kept_mean": r.kept_mean.mean, "stderr": r.kept_mean.stderr,
                       "mean_z": r.mean_z, "cov_z": r.cov_z, "passed": good}
    return {"seeds": out, "passed": ok}


def mc_ibp(n_samples: int, seeds=(1, 2)) -> dict:
    out = {}
    ok = True
    cases = {
        "poisson": (pm.ProcessSpec.poisson(4.0), pe.ThinningSpec.independent(0.5), "count_left"),
        "mixed": (pm.ProcessSpec.mixed_powerlaw(2.0), pe.ThinningSpec.uniform(), "inv_count_left"),
    }
    for name, (proc, spec, g) in cases.items():
        for s in seeds:
            r = pm.mc_verify_ibp(proc, spec, g, n_samples, s)
            ok &= r.passed
            out[f"{name}/{s}"] = {"lhs": r.lhs.mean, "rhs": r.rhs.mean, "z": r.z_score, "passed": r.passed}
    return {"cases": out, "passed": ok}


def count_consistency() -> dict:
    q, lam, N = 0.5, 1.0, 12
    measure = pe.poisson_measure(pe.GroundSpace((lam,)), N)
    spec = pe.ThinningSpec.independent(q)
    thinning = pe.thinning_table(spec, 1, N)
    cond = pe.condensation_kernel(measure, spec, thinning)
    thinned = pe.thinned_measure(measure, spec)
    law = dc.TruncatedPmf(measure.weights, 0.0, True)
    thinning_d = mz.make_thinning(mz.ThinSpec.independent(q), N)
    cond_d = dc.condense(law, thinning_d)
    diffs = {
        "thinning": float(np.abs(thinning.matrix - thinning_d.entries).max()),
        "condensation": float(np.abs(cond.matrix - cond_d.entries).max()),
        "thinned_law": float(np.abs(thinned.weights - dc.thin(law, thinning_d).weights).max()),
    }
    worst = max(diffs.values())
    return {"differences": diffs, "passed": worst < 1e-12}


CRITERIA = {
    "1_panjer": panjer,
    "2_closed_forms": closed_forms,
    "3_cycle": cycles,
    "4_reconstruction": reconstruction,
    "5_palm_bayes": palm_bayes,
    "6_exact_ibp": exact_ibp,
    "7_pp_reconstruction": pp_reconstruction,
    "8_mc_thinning": mc_thinning,
    "9_mc_ibp": mc_ibp,
    "10_count_consistency": count_consistency,
}


def run_battery(n_samples: int = 100_000, include_mc: bool = True) -> tuple[dict, dict]:
    """Run every check; returns ``(results, timings)``."""
    results = {}
    timings = {}
    for name, fn in CRITERIA.items():
        mc = name.startswith(("8_", "9_"))
        if mc and not include_mc:
            continue
        t0 = time.perf_counter()
        results[name] = fn(n_samples) if mc else fn()
        timings[name] = time.perf_counter() - t0
    return results, timings
