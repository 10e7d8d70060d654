"""Parser for the ``kind:key=val,key=val`` descriptor syntax.

List values are separated by ``;``, e.g. ``custom:weights=0.5;0.25;0.25``.
"""

from __future__ import annotations

import math

from . import model_zoo as mz
from . import pp_exact as pe
from . import pp_mc as pm

_DIST_KEYS = {"lambda": "lam", "lam": "lam"}


def _number(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return int(text)
    except ValueError:
        return float(text)


def parse(text: str) -> tuple[str, dict]:
    """Split a descriptor into its kind and a dict of numeric (or list) values."""
    if not isinstance(text, str) or not text.strip():
        raise ValueError("empty descriptor")
    kind, _, rest = text.strip().partition(":")
    kind = kind.strip().lower().replace("-", "_")
    params = {}
    if rest.strip():
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq or not key.strip():
                raise ValueError(f"malformed descriptor item {item!r} in {text!r}")
            key = key.strip()
            if key in params:
                raise ValueError(f"duplicate key {key!r} in {text!r}")
            try:
                if ";" in val:
                    params[key] = [_number(v) for v in val.split(";") if v.strip()]
                else:
                    params[key] = _number(val)
            except ValueError:
                raise ValueError(f"non-numeric value {val!r} for {key!r} in {text!r}") from None
    return kind, params


def _as_list(v):
    return list(v) if isinstance(v, list) else [v]


def _only(kind, params, allowed):
    extra = set(params) - set(allowed)
    if extra:
        raise ValueError(f"unknown keys {sorted(extra)} for {kind}")


def dist(text: str) -> mz.DistSpec:
    kind, p = parse(text)
    p = {_DIST_KEYS.get(k, k): v for k, v in p.items()}
    if kind == "custom":
        _only(kind, p, ["weights"])
        return mz.DistSpec.custom(_as_list(p.get("weights", [])))
    if kind == "geometric":
        # mass (1 - p) p^n at n, a negative binomial with r = 1
        _only(kind, p, ["p"])
        return mz.DistSpec.negbinomial(1, p.get("p", 0.5))
    return mz.DistSpec(kind, p)


def thinning(text: str) -> mz.ThinSpec:
    kind, p = parse(text)
    if kind == "custom":
        _only(kind, p, ["rows"])
        raise ValueError("custom thinning matrices are read from JSON files, not descriptors")
    return mz.ThinSpec(kind, p)


def kernel(text: str) -> pe.ThinningSpec:
    """Point-process thinning: ``independent:q=..``, ``uniform``, ``inhomogeneous:q=a;b;c;d``."""
    kind, p = parse(text)
    if kind == "independent":
        _only(kind, p, ["q"])
        return pe.ThinningSpec.independent(p["q"])
    if kind == "inhomogeneous":
        _only(kind, p, ["q"])
        return pe.ThinningSpec.inhomogeneous(_as_list(p["q"]))
    if kind in ("uniform", "binom_inverse"):
        _only(kind, p, [])
        return pe.ThinningSpec.uniform()
    raise ValueError(f"unknown point-process thinning {kind!r}")


def space(text: str) -> pe.GroundSpace:
    """Site weights, e.g. ``1;2;3`` (a bare number gives a single site)."""
    vals = [_number(v) for v in str(text).split(";") if v.strip()]
    return pe.GroundSpace(tuple(vals))


def measure(text: str, sp: pe.GroundSpace, n_max: int) -> pe.ConfigMeasure:
    """``poisson``, ``random:seed=k``, ``mixed:alpha=a`` or ``mixed:p=..``, ``pointmass:counts=..``."""
    kind, p = parse(text)
    if kind == "poisson":
        _only(kind, p, [])
        return pe.poisson_measure(sp, n_max)
    if kind == "random":
        _only(kind, p, ["seed"])
        return pe.random_measure(sp.site_count, n_max, int(p.get("seed", 0)))
    if kind == "mixed":
        _only(kind, p, ["alpha", "p"])
        if ("alpha" in p) == ("p" in p):
            raise ValueError("mixed measure needs exactly one of alpha or p")
        if "alpha" in p:
            return pe.mixed_sample_measure(sp, n_max, pe.powerlaw_count_weights(p["alpha"]))
        return pe.mixed_sample_measure(sp, n_max, _as_list(p["p"]))
    if kind == "pointmass":
        _only(kind, p, ["counts"])
        counts = _as_list(p["counts"])
        if len(counts) != sp.site_count:
            raise ValueError("pointmass counts must match the number of sites")
        return pe.point_mass_measure(counts, n_max)
    raise ValueError(f"unknown measure {kind!r}")


def process(text: str) -> pm.ProcessSpec:
    """``poisson:rate=4,d=2``, ``mixed:alpha=2,kmax=200`` / ``mixed:p=..``, ``interaction:rate=..,radii=..,values=..``."""
    kind, p = parse(text)
    d = int(p.pop("d", 2))
    rate = p.pop("rate", 1.0)
    if kind == "poisson":
        _only(kind, p, [])
        return pm.ProcessSpec.poisson(rate, d)
    if kind == "mixed":
        _only(kind, p, ["alpha", "kmax", "p"])
        if "p" in p:
            return pm.ProcessSpec.mixed(_as_list(p["p"]), rate, d)
        return pm.ProcessSpec.mixed_powerlaw(p.get("alpha", 2.0), int(p.get("kmax", 200)), rate, d)
    if kind == "interaction":
        _only(kind, p, ["radii", "values"])
        return pm.ProcessSpec.interaction(rate, _as_list(p.get("radii", [])), _as_list(p.get("values", [])), d)
    raise ValueError(f"unknown process {kind!r}")
