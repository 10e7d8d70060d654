"""Built-in laws on N0, thinning matrices and closed-form condensations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy import stats

from .dist_core import ROW_TOL, TriMatrix, TruncatedPmf, thin
from .errors import TailToleranceError, UnsupportedCombinationError

HARD_CAP = 10_000
ZETA_TOL = 1e-13

DIST_KINDS = ("poisson", "binomial", "negbinomial", "powerlaw", "pointmass", "custom")
THIN_KINDS = ("independent", "uniform", "almost_nothing", "all_or_nothing", "custom")


def _require(cond, msg):
    if not cond:
        raise ValueError(msg)


@dataclass(frozen=True)
class DistSpec:
    """Descriptor of a law on N0.

    ``negbinomial`` uses ``nu_n = C(r+n-1, n) p^n (1-p)^r``.
    """

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        p = dict(self.params)
        k = self.kind
        _require(k in DIST_KINDS, f"unknown distribution kind {k!r}")
        if k == "poisson":
            _require(set(p) == {"lam"} and p["lam"] > 0, "poisson needs lam > 0")
        elif k == "binomial":
            _require(set(p) == {"r", "p"}, "binomial needs r and p")
            _require(float(p["r"]).is_integer() and p["r"] >= 1, "binomial r must be a positive integer")
            _require(0 < p["p"] < 1, "binomial p must lie in (0, 1)")
            p["r"] = int(p["r"])
        elif k == "negbinomial":
            _require(set(p) == {"r", "p"}, "negbinomial needs r and p")
            _require(p["r"] > 0 and 0 < p["p"] < 1, "negbinomial needs r > 0 and 0 < p < 1")
        elif k == "powerlaw":
            _require(set(p) == {"alpha"} and p["alpha"] > 1, "powerlaw needs alpha > 1")
        elif k == "pointmass":
            _require(set(p) == {"m"} and float(p["m"]).is_integer() and p["m"] >= 0,
                     "pointmass needs an integer m >= 0")
            p["m"] = int(p["m"])
        else:
            _require(set(p) == {"weights"}, "custom needs weights")
            w = np.asarray(p["weights"], float)
            _require(w.ndim == 1 and w.size > 0 and np.all(np.isfinite(w)) and np.all(w >= 0),
                     "custom weights must be a non-empty vector of non-negative reals")
            _require(w.sum() > 0, "custom weights must have positive mass")
            p["weights"] = tuple(float(x) for x in w)
        object.__setattr__(self, "params", p)

    @classmethod
    def poisson(cls, lam):
        return cls("poisson", {"lam": float(lam)})

    @classmethod
    def binomial(cls, r, p):
        return cls("binomial", {"r": r, "p": float(p)})

    @classmethod
    def negbinomial(cls, r, p):
        return cls("negbinomial", {"r": float(r), "p": float(p)})

    @classmethod
    def powerlaw(cls, alpha):
        return cls("powerlaw", {"alpha": float(alpha)})

    @classmethod
    def pointmass(cls, m):
        return cls("pointmass", {"m": m})

    @classmethod
    def custom(cls, weights):
        return cls("custom", {"weights": weights})


@dataclass(frozen=True)
class ThinSpec:
    """Descriptor of a thinning matrix family."""

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        p = dict(self.params)
        k = self.kind
        _require(k in THIN_KINDS, f"unknown thinning kind {k!r}")
        if k in ("independent", "almost_nothing", "all_or_nothing"):
            _require(set(p) == {"q"} and 0 < p["q"] < 1, f"{k} needs 0 < q < 1")
        elif k == "uniform":
            _require(not p, "uniform takes no parameters")
        else:
            _require(set(p) == {"rows"}, "custom thinning needs rows")
            rows = np.asarray(p["rows"], float)
            _require(rows.ndim == 2 and rows.shape[0] == rows.shape[1], "rows must be square")
            p["rows"] = tuple(tuple(float(x) for x in r) for r in rows)
        object.__setattr__(self, "params", p)

    @classmethod
    def independent(cls, q):
        return cls("independent", {"q": float(q)})

    @classmethod
    def uniform(cls):
        return cls("uniform")

    @classmethod
    def almost_nothing(cls, q):
        return cls("almost_nothing", {"q": float(q)})

    @classmethod
    def all_or_nothing(cls, q):
        return cls("all_or_nothing", {"q": float(q)})

    @classmethod
    def custom(cls, rows):
        return cls("custom", {"rows": rows})

    @property
    def positive(self) -> bool:
        return self.kind in ("independent", "uniform")


def hurwitz_zeta(alpha: float, q: float, tol: float = ZETA_TOL) -> tuple[float, float]:
    """Hurwitz zeta ``sum_{j>=0} (j + q)^(-alpha)`` with a certified error bound.

    The first ``J`` terms are summed exactly-rounded.  Since the summand is
    convex and decreasing, the remainder lies between the trapezoid and the
    midpoint bounds ``I(J) + f(J)/2`` and ``I(J - 1/2)`` where
    ``I(a) = (a + q)^(1 - alpha) / (alpha - 1)``.  The midpoint of that bracket
    is returned, and ``J`` is doubled until half its width plus a rounding
    allowance is below ``tol * max(1, value)``; for values above one the
    bound is relative, since rounding alone exceeds a fixed absolute bound.

    Returns
    -------
    value, error_bound : float
    """
    if not alpha > 1:
        raise ValueError("hurwitz_zeta diverges for alpha <= 1")
    if not q > 0:
        raise ValueError("hurwitz_zeta needs q > 0")
    alpha = float(alpha)
    q = float(q)

    def integral(a):
        return (a + q) ** (1.0 - alpha) / (alpha - 1.0)

    J = 64
    while True:
        head = math.fsum(((np.arange(J) + q) ** -alpha).tolist())
        lo = integral(J) + (J + q) ** -alpha / 2.0
        hi = integral(J - 0.5)
        value = head + 0.5 * (lo + hi)
        err = 0.5 * (hi - lo) + 4 * np.finfo(float).eps * value
        if err <= tol * max(1.0, value) or J >= 1 << 22:
            break
        J *= 2
    if err > tol * max(1.0, value):
        raise TailToleranceError(f"hurwitz_zeta({alpha}, {q}) error {err:.3g} exceeds {tol:.3g}")
    return float(value), float(err)


def _zeta(alpha, q):
    return hurwitz_zeta(alpha, q)[0]


def pmf_values(spec: DistSpec, n) -> np.ndarray:
    """Exact (unnormalized-by-window) masses of ``spec`` at integer indices ``n``."""
    n = np.asarray(n)
    p = spec.params
    k = spec.kind
    if k == "poisson":
        return stats.poisson.pmf(n, p["lam"])
    if k == "binomial":
        return stats.binom.pmf(n, p["r"], p["p"])
    if k == "negbinomial":
        return stats.nbinom.pmf(n, p["r"], 1.0 - p["p"])
    if k == "powerlaw":
        a = p["alpha"]
        return (n + 1.0) ** -a / _zeta(a, 1.0)
    if k == "pointmass":
        return (n == p["m"]).astype(float)
    w = np.asarray(p["weights"])
    tot = w.sum()
    if tot > 1 + ROW_TOL:
        w = w / tot
    out = np.zeros(n.shape)
    inside = n < w.size
    out[inside] = w[n[inside]]
    return out


def tail_mass(spec: DistSpec, n_max: int) -> float:
    """Mass beyond ``n_max``."""
    p = spec.params
    k = spec.kind
    if k == "poisson":
        return float(stats.poisson.sf(n_max, p["lam"]))
    if k == "binomial":
        return 0.0 if n_max >= p["r"] else float(stats.binom.sf(n_max, p["r"], p["p"]))
    if k == "negbinomial":
        return float(stats.nbinom.sf(n_max, p["r"], 1.0 - p["p"]))
    if k == "powerlaw":
        a = p["alpha"]
        return _zeta(a, n_max + 2.0) / _zeta(a, 1.0)
    if k == "pointmass":
        return 0.0 if n_max >= p["m"] else 1.0
    w = pmf_values(spec, np.arange(len(p["weights"])))
    inside = w[: n_max + 1].sum()
    return float(max(0.0, 1.0 - inside))


def _auto_window(spec: DistSpec, tail_tol: float) -> int:
    if spec.kind == "custom":
        return len(spec.params["weights"]) - 1
    if spec.kind == "pointmass":
        return spec.params["m"]
    if spec.kind == "binomial":
        n_min = spec.params["r"]
        if tail_mass(spec, n_min) <= tail_tol:
            return n_min
    hi = 8
    while tail_mass(spec, hi) > tail_tol:
        if hi >= HARD_CAP:
            raise TailToleranceError(
                f"tail below {tail_tol:.3g} not reachable within n_max = {HARD_CAP}"
            )
        hi = min(2 * hi, HARD_CAP)
    lo = 0
    while lo < hi:
        mid = (lo + hi) // 2
        if tail_mass(spec, mid) <= tail_tol:
            hi = mid
        else:
            lo = mid + 1
    return hi


def make_dist(spec: DistSpec, n_max: int | None = None, tail_tol: float | None = 1e-12) -> TruncatedPmf:
    """Window of a built-in law with its omitted mass recorded as ``tail_bound``.

    With ``n_max=None`` the smallest window meeting ``tail_tol`` is chosen.
    With an explicit ``n_max`` the window is used as given; if ``tail_tol`` is
    not ``None`` and the window misses it, :class:`TailToleranceError` is raised.
    """
    if n_max is None:
        if tail_tol is None:
            raise ValueError("need n_max or tail_tol")
        n_max = _auto_window(spec, tail_tol)
    n_max = int(n_max)
    if not 0 <= n_max <= HARD_CAP:
        raise ValueError(f"n_max must lie in [0, {HARD_CAP}]")
    tail = tail_mass(spec, n_max)
    if tail_tol is not None and tail > tail_tol:
        raise TailToleranceError(f"tail mass {tail:.3g} at n_max = {n_max} exceeds {tail_tol:.3g}")
    w = pmf_values(spec, np.arange(n_max + 1))
    return TruncatedPmf(w, tail_bound=tail, normalized=True)


def make_thinning(spec: ThinSpec, n_max: int) -> TriMatrix:
    """Lower-triangular thinning matrix on {0, ..., n_max}."""
    N = int(n_max)
    n = np.arange(N + 1)[:, None]
    k = np.arange(N + 1)[None, :]
    below = k <= n
    kind = spec.kind
    if kind == "independent":
        q = spec.params["q"]
        mat = np.where(below, stats.binom.pmf(k, n, q), 0.0)
    elif kind == "uniform":
        mat = np.where(below, 1.0 / (n + 1.0), 0.0)
    elif kind == "almost_nothing":
        q = spec.params["q"]
        mat = np.zeros((N + 1, N + 1))
        mat[0, 0] = 1.0
        idx = np.arange(1, N + 1)
        mat[idx, idx] = q
        mat[idx, idx - 1] = 1.0 - q
    elif kind == "all_or_nothing":
        q = spec.params["q"]
        mat = np.zeros((N + 1, N + 1))
        mat[0, 0] = 1.0
        idx = np.arange(1, N + 1)
        mat[idx, idx] = q
        mat[idx, 0] = 1.0 - q
    else:
        rows = np.asarray(spec.params["rows"], float)
        if rows.shape[0] < N + 1:
            raise ValueError(f"custom thinning has {rows.shape[0]} rows, need {N + 1}")
        mat = rows[: N + 1, : N + 1]
    return TriMatrix(mat, "lower")


def thinned_law(dist: DistSpec, thinning: ThinSpec, n_max: int) -> TruncatedPmf:
    """Exact law of the kept count on {0, ..., n_max}.

    Closed forms are used where known; otherwise the window thinning of the
    truncated law, whose error is bounded by the omitted tail.
    """
    N = int(n_max)
    n = np.arange(N + 1)
    tk = thinning.kind
    dk = dist.kind
    p = dist.params
    masses = pmf_values(dist, np.arange(N + 2))
    tail = tail_mass(dist, N)
    if tk == "independent" and dk in ("poisson", "binomial", "negbinomial"):
        q = thinning.params["q"]
        if dk == "poisson":
            spec = DistSpec.poisson(q * p["lam"])
        elif dk == "binomial":
            spec = DistSpec.binomial(p["r"], q * p["p"])
        else:
            c = 1.0 - p["p"] * (1.0 - q)
            spec = DistSpec.negbinomial(p["r"], p["p"] * q / c)
        w = pmf_values(spec, n)
        tail = tail_mass(spec, N)
    elif tk == "uniform" and dk == "powerlaw":
        a = p["alpha"]
        z = _zeta(a, 1.0)
        w = np.array([_zeta(a + 1.0, j + 1.0) for j in n]) / z
        # sum_{k > N} zeta(a+1, k+1) = zeta(a, N+2) - (N+1) zeta(a+1, N+2)
        tail = max(0.0, (_zeta(a, N + 2.0) - (N + 1) * _zeta(a + 1.0, N + 2.0)) / z)
    elif tk == "all_or_nothing":
        q = thinning.params["q"]
        w = q * masses[: N + 1]
        w[0] = 1.0 - q + q * masses[0]
        tail = q * tail
    elif tk == "almost_nothing":
        q = thinning.params["q"]
        w = q * masses[: N + 1] + (1.0 - q) * masses[1 : N + 2]
        w[0] = masses[0] + (1.0 - q) * masses[1]
        tail = tail - (1.0 - q) * masses[N + 1]
    else:
        return thin(make_dist(dist, N, tail_tol=None), make_thinning(thinning, N))
    return TruncatedPmf(w, tail_bound=max(tail, 0.0), normalized=True)


def closed_form_condensation(dist: DistSpec, thinning: ThinSpec, n_max: int) -> TriMatrix:
    """Condensation matrix from known closed forms, untruncated entries.

    Rows keep their exact entries on the window; the mass beyond ``n_max`` is
    reported in ``row_deficit``.  Rows conditioned on a null event are the
    point mass at the diagonal, matching :func:`thincond.dist_core.condense`.
    """
    N = int(n_max)
    dk, tk = dist.kind, thinning.kind
    p = dist.params
    k = np.arange(N + 1)[:, None]
    m = np.arange(N + 1)[None, :]
    l = m - k
    above = l >= 0
    lpos = np.where(above, l, 0)
    patho = np.zeros(N + 1, bool)

    if tk == "independent" and dk in ("poisson", "binomial", "negbinomial"):
        q = thinning.params["q"]
        if dk == "poisson":
            mat = stats.poisson.pmf(lpos, (1.0 - q) * p["lam"])
        elif dk == "binomial":
            r = p["r"]
            a = p["p"] * (1.0 - q) / (1.0 - p["p"] * q)
            mat = stats.binom.pmf(lpos, np.maximum(r - k, 0), a)
            patho = np.arange(N + 1) > r
        else:
            mat = stats.nbinom.pmf(lpos, p["r"] + k, 1.0 - p["p"] * (1.0 - q))
        mat = np.where(above, mat, 0.0)
    elif tk == "uniform" and dk == "powerlaw":
        a = p["alpha"]
        zk = np.array([_zeta(a + 1.0, j + 1.0) for j in range(N + 1)])
        mat = np.where(above, (m + 1.0) ** -(a + 1.0) / zk[:, None], 0.0)
    elif tk == "all_or_nothing":
        q = thinning.params["q"]
        masses = pmf_values(dist, np.arange(N + 1))
        mat = np.zeros((N + 1, N + 1))
        d0 = 1.0 - q + q * masses[0]
        mat[0, 0] = masses[0] / d0
        mat[0, 1:] = (1.0 - q) * masses[1:] / d0
        idx = np.arange(1, N + 1)
        mat[idx, idx] = 1.0
        patho[1:] = masses[1:] == 0
    elif tk == "almost_nothing":
        q = thinning.params["q"]
        masses = pmf_values(dist, np.arange(N + 2))
        stay = q * masses[: N + 1]
        stay[0] = masses[0]
        move = (1.0 - q) * masses[1 : N + 2]
        den = stay + move
        patho = den == 0
        safe = np.where(patho, 1.0, den)
        mat = np.zeros((N + 1, N + 1))
        idx = np.arange(N + 1)
        mat[idx, idx] = stay / safe
        mat[idx[:-1], idx[:-1] + 1] = (move / safe)[:-1]
    else:
        raise UnsupportedCombinationError(f"no closed form for {dk} under {tk} thinning")

    mat = np.array(mat, float)
    idx = np.flatnonzero(patho)
    mat[idx] = 0.0
    mat[idx, idx] = 1.0
    deficit = np.clip(1.0 - mat.sum(axis=1), 0.0, 1.0)
    return TriMatrix(mat, "upper", row_deficit=deficit, pathological=patho)


BUILTIN_PAIRS = (
    (DistSpec.poisson(2.0), ThinSpec.independent(0.3)),
    (DistSpec.binomial(5, 0.4), ThinSpec.independent(0.3)),
    (DistSpec.negbinomial(2, 0.3), ThinSpec.independent(0.5)),
    (DistSpec.powerlaw(2.0), ThinSpec.uniform()),
    (DistSpec.poisson(2.0), ThinSpec.all_or_nothing(0.3)),
    (DistSpec.poisson(2.0), ThinSpec.almost_nothing(0.3)),
)
"""One representative of each combination with a closed-form condensation."""
