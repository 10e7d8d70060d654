"""Seeded Monte Carlo checks for point processes on [0, 1]^d.

Configurations are ``(n, d)`` float arrays.  Replica ``r`` of a run with
seed ``s`` draws from a Philox generator keyed by ``(s, r)``, so replicas are
independent streams and any subset of them can be recomputed on its own.
Per-replica values are stored in replica order before reduction, which
makes the estimates independent of the worker count.
"""

from __future__ import annotations

import math
import os
import pickle
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import stats
from scipy.special import comb, gammaln, logsumexp

from .errors import PreconditionError, SamplingError
from .pp_exact import ThinningSpec

SUBSET_CAP = 22
MIN_ACCEPTANCE = 1e-4
Z_THRESHOLD = 3.0
_MASK64 = (1 << 64) - 1


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    """Independent counter-based stream for one replica."""
    key = np.array([int(seed) & _MASK64, int(replica) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean with its standard error ``sd / sqrt(n)``."""

    mean: float
    stderr: float
    n_samples: int
    seed: int

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("an estimate needs at least two samples")

    @classmethod
    def from_values(cls, values: np.ndarray, seed: int) -> "MCEstimate":
        v = np.asarray(values, dtype=float)
        return cls(float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)), int(v.size), int(seed))


@dataclass(frozen=True)
class PairPotential:
    """Piecewise-constant repulsive pair potential.

    ``phi(r) = values[i]`` for ``radii[i-1] <= r < radii[i]`` (with
    ``radii[-1] = 0``) and zero beyond the last radius.  Values must be
    non-negative; ``inf`` gives a hard core.
    """

    radii: tuple
    values: tuple

    def __post_init__(self):
        r = tuple(float(x) for x in self.radii)
        v = tuple(float(x) for x in self.values)
        if len(r) != len(v):
            raise ValueError("radii and values must have equal length")
        if any(x <= 0 for x in r) or any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError("radii must be positive and increasing")
        if any(not (x >= 0) for x in v):
            raise ValueError("pair potential values must be non-negative")
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "values", v)

    def __call__(self, dist: np.ndarray) -> np.ndarray:
        dist = np.asarray(dist, dtype=float)
        if not self.radii:
            return np.zeros(dist.shape)
        table = np.append(np.array(self.values), 0.0)
        return table[np.searchsorted(np.array(self.radii), dist, side="right")]

    def energy_at(self, x: np.ndarray, config: np.ndarray) -> float:
        """``V_mu(x) = sum_{y in mu} phi(|x - y|)``."""
        if len(config) == 0:
            return 0.0
        return float(self(np.linalg.norm(config - x[None, :], axis=1)).sum())


@dataclass(frozen=True)
class ProcessSpec:
    """Point process on ``[0, 1]^d`` with reference intensity ``rate * Lebesgue``.

    ``poisson``: Poisson with that intensity.
    ``mixed``: count ``n`` with probability proportional to ``p_n rate^n / n!``,
    points i.i.d. uniform; ``log_p`` holds ``log p_n`` for ``n <= kmax``.
    ``interaction``: density ``exp(-sum of pair potentials)`` against the Poisson law.
    """

    kind: str
    rate: float = 1.0
    d: int = 2
    log_p: tuple | None = None
    potential: PairPotential | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("poisson", "mixed", "interaction"):
            raise ValueError(f"unknown process kind {self.kind!r}")
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        if self.d not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if self.kind == "mixed":
            lp = np.asarray(self.log_p, dtype=float)
            if lp.ndim != 1 or lp.size == 0 or np.any(np.isnan(lp)) or np.any(lp == np.inf):
                raise ValueError("mixed process needs finite or -inf log weights")
            dead = np.isneginf(lp)
            if dead.all():
                raise ValueError("mixed process has no mass")
            if dead.any() and not dead[int(np.argmax(dead)) :].all():
                raise ValueError("count weights have a hole")
            object.__setattr__(self, "log_p", tuple(float(x) for x in lp))
        if self.kind == "interaction" and self.potential is None:
            raise ValueError("interaction process needs a pair potential")

    @classmethod
    def poisson(cls, rate: float, d: int = 2) -> "ProcessSpec":
        return cls("poisson", float(rate), d, params={"rate": float(rate)})

    @classmethod
    def mixed(cls, p_weights: Sequence[float], rate: float = 1.0, d: int = 2) -> "ProcessSpec":
        p = np.asarray(p_weights, dtype=float)
        if np.any(p < 0):
            raise ValueError("count weights must be non-negative")
        with np.errstate(divide="ignore"):
            lp = np.log(p)
        return cls("mixed", float(rate), d, tuple(lp), params={"p": p.tolist(), "rate": float(rate)})

    @classmethod
    def mixed_powerlaw(cls, alpha: float, kmax: int = 200, rate: float = 1.0, d: int = 2) -> "ProcessSpec":
        """Mixed sample with ``p_k = k! (k + 1)^(-alpha)`` truncated after ``kmax``."""
        k = np.arange(kmax + 1)
        lp = gammaln(k + 1) - alpha * np.log(k + 1.0)
        return cls("mixed", float(rate), d, tuple(lp),
                   params={"alpha": float(alpha), "kmax": int(kmax), "rate": float(rate)})

    @classmethod
    def interaction(cls, rate: float, radii, values, d: int = 2) -> "ProcessSpec":
        pot = PairPotential(tuple(radii), tuple(values))
        return cls("interaction", float(rate), d, potential=pot,
                   params={"rate": float(rate), "radii": list(pot.radii), "values": list(pot.values)})

    def count_cdf(self) -> np.ndarray:
        """Cumulative count law of a mixed process."""
        lp = np.asarray(self.log_p)
        k = np.arange(lp.size)
        lw = lp + k * math.log(self.rate) - gammaln(k + 1)
        w = np.exp(lw - logsumexp(lw))
        return np.cumsum(w)

    def log_p_ratio(self, m: np.ndarray) -> np.ndarray:
        """``log(p_{m+1} / p_m)``, ``-inf`` past the truncation."""
        lp = np.append(np.asarray(self.log_p), -np.inf)
        m = np.minimum(np.asarray(m), lp.size - 2)
        with np.errstate(invalid="ignore"):
            out = lp[m + 1] - lp[m]
        return np.where(np.isneginf(lp[m + 1]), -np.inf, out)


def sample_process(spec: ProcessSpec, seed: int | np.random.Generator, replica: int = 0,
                   _cdf: np.ndarray | None = None) -> np.ndarray:
    """Draw one configuration, deterministic in ``(seed, replica)``."""
    rng = seed if isinstance(seed, np.random.Generator) else replica_rng(seed, replica)
    d = spec.d
    if spec.kind == "poisson":
        return rng.random((rng.poisson(spec.rate), d))
    if spec.kind == "mixed":
        cdf = spec.count_cdf() if _cdf is None else _cdf
        n = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        n = min(n, cdf.size - 1)
        return rng.random((n, d))
    max_attempts = int(math.ceil(1.0 / MIN_ACCEPTANCE))
    pot = spec.potential
    for _ in range(max_attempts):
        pts = rng.random((rng.poisson(spec.rate), d))
        # sequential accumulation V(x1; 0) + V(x2; x1) + ...
        energy = 0.0
        for i in range(1, len(pts)):
            energy += pot.energy_at(pts[i], pts[:i])
            if energy == np.inf:
                break
        if rng.random() < math.exp(-energy):
            return pts
    raise SamplingError(
        f"acceptance rate below {MIN_ACCEPTANCE:g} for {spec.kind} process "
        f"(rate {spec.rate}, {max_attempts} proposals rejected)"
    )


def cell_of(points: np.ndarray) -> np.ndarray:
    """Index of the 4-cell partition: quarters in 1-D, quadrants in 2-D."""
    points = np.atleast_2d(points)
    if points.shape[1] == 1:
        return np.minimum((points[:, 0] * 4).astype(int), 3)
    return (points[:, 0] >= 0.5).astype(int) + 2 * (points[:, 1] >= 0.5).astype(int)


def _point_ratios(spec: ThinningSpec, points: np.ndarray) -> np.ndarray:
    qs = np.array(spec.cell_q)
    q = qs[cell_of(points) % qs.size] if points.size else np.zeros(0)
    return q / (1.0 - q)


def subset_weights(spec: ThinningSpec, config: np.ndarray) -> np.ndarray:
    """Unnormalized weight of every subset; bit ``i`` of the index keeps point ``i``."""
    n = len(config)
    if n > SUBSET_CAP:
        raise PreconditionError(f"configuration has {n} points, above the subset cap {SUBSET_CAP}")
    if spec.kind == "type1":
        if not spec.product_form:
            raise PreconditionError("continuous thinning needs a product-form or type-2 weight")
        w = np.ones(1)
        for r in _point_ratios(spec, config):
            w = np.concatenate([w, w * r])
        return w
    sizes = np.zeros(1, dtype=np.int64)
    for _ in range(n):
        sizes = np.concatenate([sizes, sizes + 1])
    table = spec.size_weights(np.full(n + 1, n), np.arange(n + 1))
    return table[sizes]


def subset_probabilities(spec: ThinningSpec, config: np.ndarray) -> np.ndarray:
    w = subset_weights(spec, config)
    tot = w.sum()
    if not tot > 0:
        raise PreconditionError("all subsets have zero weight")
    return w / tot


def thin_config(spec: ThinningSpec, config: np.ndarray, seed: int | np.random.Generator,
                replica: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Sample a kept subset by exact enumeration; returns ``(kept, removed)``."""
    rng = seed if isinstance(seed, np.random.Generator) else replica_rng(seed, replica)
    config = np.asarray(config, dtype=float)
    n = len(config)
    if n == 0:
        return config.copy(), config.copy()
    config = config.reshape(n, -1)
    cdf = np.cumsum(subset_weights(spec, config))
    if not cdf[-1] > 0:
        raise PreconditionError("all subsets have zero weight")
    pick = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    pick = min(pick, cdf.size - 1)
    keep = ((pick >> np.arange(n)) & 1).astype(bool)
    return config[keep], config[~keep]


def log_normalizer(spec: ThinningSpec, config: np.ndarray) -> float:
    """``log Z_mu``, using the binomial theorem for product-form weights."""
    if spec.kind == "type1":
        if not spec.product_form:
            raise PreconditionError("continuous thinning needs a product-form or type-2 weight")
        return float(-np.log1p(_point_ratios(spec, config)).sum())
    n = len(config)
    j = np.arange(n + 1)
    return float(-np.log(np.sum(comb(n, j) * spec.size_weights(np.full(n + 1, n), j))))


@lru_cache(maxsize=4096)
def _size_birth_ratio(spec: ThinningSpec, m: int) -> float:
    """``Z_{m+1} / Z_m * t_{m+1,m} / t_{m,m}`` for a type-2 weight."""

    def z(n):
        j = np.arange(n + 1)
        return 1.0 / float(np.sum(comb(n, j) * spec.size_weights(np.full(n + 1, n), j)))

    t = spec.size_weights
    return z(m + 1) / z(m) * float(t(m + 1, m) / t(m, m))


def death_factor(spec: ThinningSpec, config: np.ndarray) -> np.ndarray:
    """``Z_mu / Z_{mu - delta_x}`` per point (times ``t_{m,m-1}/t_{m-1,m-1}`` for type 2)."""
    m = len(config)
    if m == 0:
        return np.zeros(0)
    if spec.kind == "type1":
        return 1.0 / (1.0 + _point_ratios(spec, config))
    return np.full(m, _size_birth_ratio(spec, m - 1))


def birth_factor(spec: ThinningSpec, config: np.ndarray, x: np.ndarray) -> float:
    """``Z_{mu + delta_x} / Z_mu`` (times ``t_{m+1,m}/t_{m,m}`` for type 2)."""
    if spec.kind == "type1":
        return float(1.0 / (1.0 + _point_ratios(spec, x[None, :])[0]))
    return _size_birth_ratio(spec, len(config))


def papangelou_density(process: ProcessSpec, spec: ThinningSpec, config: np.ndarray, x: np.ndarray) -> float:
    """Closed-form density of ``pi(mu, dx)`` with respect to Lebesgue measure."""
    m = len(config)
    if process.kind == "poisson":
        jr = process.rate
    elif process.kind == "mixed":
        jr = process.rate * math.exp(float(process.log_p_ratio(np.array(m))))
    else:
        jr = process.rate * math.exp(-process.potential.energy_at(x, config))
    if jr == 0.0:
        return 0.0
    return birth_factor(spec, config, x) * jr


def _left(x):
    return float(x[0] < 0.5)


G_FAMILY: dict = {
    "count_left": lambda x, config: len(config) * _left(x),
    "left": lambda x, config: _left(x),
    "inv_count_left": lambda x, config: _left(x) / (len(config) + 1.0),
    "one": lambda x, config: 1.0,
    "zero": lambda x, config: 0.0,
}
"""Named test functions ``g(x, mu)``; ``mu`` is the configuration containing ``x``."""


def _resolve_g(g):
    if callable(g):
        return g
    try:
        return G_FAMILY[g]
    except KeyError:
        raise ValueError(f"unknown test function {g!r}; choose from {sorted(G_FAMILY)}") from None


def _ibp_chunk(args):
    process, spec, g_name, seed, start, stop = args
    g = _resolve_g(g_name)
    cdf = process.count_cdf() if process.kind == "mixed" else None
    out = np.zeros((stop - start, 2))
    for row, r in enumerate(range(start, stop)):
        rng = replica_rng(seed, r)
        config = sample_process(process, rng, _cdf=cdf)
        lhs = 0.0
        if len(config):
            dfac = death_factor(spec, config)
            lhs = sum(g(config[i], config) * dfac[i] for i in range(len(config)))
        u = rng.random(process.d)
        dens = papangelou_density(process, spec, config, u)
        rhs = dens * g(u, np.vstack([config, u[None, :]])) if dens else 0.0
        out[row] = lhs, rhs
    return out


def _poisson_chunk(args):
    rate, q, d, seed, start, stop = args
    process = ProcessSpec.poisson(rate, d)
    spec = ThinningSpec.independent(q)
    out = np.zeros((stop - start, 6))
    for row, r in enumerate(range(start, stop)):
        rng = replica_rng(seed, r)
        config = sample_process(process, rng)
        kept, removed = thin_config(spec, config, rng)
        out[row, 0] = len(kept)
        out[row, 1] = len(removed)
        if len(kept):
            out[row, 2:] = np.bincount(cell_of(kept), minlength=4)
    return out


def worker_count() -> int:
    env = os.environ.get("THINCOND_WORKERS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("THINCOND_WORKERS must be positive")
        return n
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def run_replicas(fn: Callable, head: tuple, seed: int, n: int, workers: int | None = None) -> np.ndarray:
    """Evaluate ``fn((*head, seed, start, stop))`` over replica chunks and stack in replica order."""
    workers = worker_count() if workers is None else int(workers)
    if workers > 1:
        try:
            pickle.dumps((fn, head))
        except Exception:
            workers = 1
    if workers <= 1:
        return fn((*head, seed, 0, n))
    bounds = np.linspace(0, n, 4 * workers + 1).astype(int)
    jobs = [(*head, seed, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(fn, jobs))
    return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class IBPReport:
    lhs: MCEstimate
    rhs: MCEstimate
    z_score: float
    z_paired: float
    threshold: float = Z_THRESHOLD

    @property
    def passed(self) -> bool:
        return self.z_score < self.threshold


def _z(diff: float, se: float) -> float:
    if se == 0:
        return 0.0 if diff == 0 else math.inf
    return abs(diff) / se


def mc_verify_ibp(
    process: ProcessSpec,
    spec: ThinningSpec,
    g_descriptor="count_left",
    n_samples: int = 100_000,
    seed: int = 0,
    workers: int | None = None,
) -> IBPReport:
    """Monte Carlo check of the integration-by-parts identity.

    Per replica the left side is ``sum_{x in mu} g(x, mu) delta(mu, x)``.
    The right side draws ``U`` uniform on the unit cube and takes
    ``pi(mu, U) g(U, mu + delta_U)`` with the closed-form Papangelou density.
    """
    if isinstance(g_descriptor, str):
        _resolve_g(g_descriptor)
    vals = run_replicas(_ibp_chunk, (process, spec, g_descriptor), seed, n_samples, workers)
    lhs = MCEstimate.from_values(vals[:, 0], seed)
    rhs = MCEstimate.from_values(vals[:, 1], seed)
    z = _z(lhs.mean - rhs.mean, math.hypot(lhs.stderr, rhs.stderr))
    diff = vals[:, 0] - vals[:, 1]
    zp = _z(diff.mean(), diff.std(ddof=1) / math.sqrt(diff.size))
    return IBPReport(lhs, rhs, z, zp)


@dataclass(frozen=True)
class PoissonThinningReport:
    kept_mean: MCEstimate
    expected_mean: float
    covariance: MCEstimate
    tv_distance: float
    chi2_pvalue: float
    cell_counts: tuple
    cell_z: tuple
    expected_cell: float

    @property
    def mean_z(self) -> float:
        return _z(self.kept_mean.mean - self.expected_mean, self.kept_mean.stderr)

    @property
    def cov_z(self) -> float:
        return _z(self.covariance.mean, self.covariance.stderr)

    @property
    def verdicts(self) -> dict:
        return {
            "kept_mean": self.mean_z < Z_THRESHOLD,
            "kept_removed_covariance": self.cov_z < Z_THRESHOLD,
            "count_chi2": self.chi2_pvalue > 1e-3,
        }


def _pooled_chi2(observed: np.ndarray, expected: np.ndarray) -> float:
    """Chi-square p-value after merging the upper tail until expected counts are at least 5."""
    obs = list(observed)
    exp = list(expected)
    while len(exp) > 2 and exp[-1] < 5:
        e, o = exp.pop(), obs.pop()
        exp[-1] += e
        obs[-1] += o
    return float(stats.chisquare(obs, exp).pvalue)


def mc_verify_poisson_thinning(
    rate: float, q: float, n_samples: int = 100_000, seed: int = 0, d: int = 2,
    workers: int | None = None,
) -> PoissonThinningReport:
    """Thin Poisson samples independently and compare with Poisson(q * rate).

    Reports the kept-count mean, the kept/removed covariance (zero for
    Poisson), TV and chi-square of the kept-count law, and per-cell intensity
    of kept points on the 4-cell partition.
    """
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    vals = run_replicas(_poisson_chunk, (rate, q, d), seed, n_samples, workers)
    kept = vals[:, 0]
    removed = vals[:, 1]
    kept_est = MCEstimate.from_values(kept, seed)
    cov_terms = (kept - kept.mean()) * (removed - removed.mean()) * n_samples / (n_samples - 1)
    cov_est = MCEstimate.from_values(cov_terms, seed)
    top = int(kept.max())
    emp = np.bincount(kept.astype(int), minlength=top + 1) / n_samples
    lam = q * rate
    pmf = stats.poisson.pmf(np.arange(top + 1), lam)
    tail = float(stats.poisson.sf(top, lam))
    tv = 0.5 * (float(np.abs(emp - pmf).sum()) + tail)
    expected = np.append(pmf, tail) * n_samples
    observed = np.append(emp * n_samples, 0.0)
    pval = _pooled_chi2(observed, expected)
    cells = vals[:, 2:]
    per_cell = tuple(float(c.mean()) for c in cells.T)
    z = tuple(float(_z(c.mean() - lam / 4, c.std(ddof=1) / math.sqrt(n_samples))) for c in cells.T)
    return PoissonThinningReport(kept_est, lam, cov_est, tv, pval, per_cell, z, lam / 4)


def sample_counts(process: ProcessSpec, n_samples: int, seed: int) -> np.ndarray:
    """Point counts of ``n_samples`` independent replicas."""
    cdf = process.count_cdf() if process.kind == "mixed" else None
    return np.array([len(sample_process(process, replica_rng(seed, r), _cdf=cdf))
                     for r in range(n_samples)])
