"""Exact calculus for finite point processes on a finite labelled ground space.

A configuration is a tuple of per-site counts.  All configurations with at
most ``n_max`` points are enumerated once per ``(s, n_max)`` and every
measure or kernel is an array aligned with that enumeration, so Bayes
disintegration, Palm measures and the layer recursion reduce to finite sums.

Thinning kernels are written ``T_mu({eta}) = Z_mu * t * prod_i C(mu_i, eta_i)``
where ``t`` is ``t(eta)`` (type 1) or ``t_{|mu|,|eta|}`` (type 2) and
``Z_mu`` normalizes the row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import comb, gammaln

from .dist_core import TruncatedPmf
from .errors import (
    CycleConditionError,
    DegenerateError,
    DimensionError,
    PreconditionError,
    StochasticityError,
)

ROW_TOL = 1e-12
KERNEL_CYCLE_TOL = 1e-10
IDENTITY_TOL = 1e-9

Config = tuple


@dataclass(frozen=True)
class GroundSpace:
    """Finite set of ``s`` labelled sites carrying weights ``lam_i > 0``."""

    weights: tuple

    def __post_init__(self):
        w = tuple(float(x) for x in np.atleast_1d(self.weights))
        if len(w) == 0:
            raise ValueError("ground space needs at least one site")
        if not all(math.isfinite(x) and x > 0 for x in w):
            raise ValueError("site weights must be finite and positive")
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, s: int, total: float = 1.0) -> "GroundSpace":
        return cls(tuple([total / s] * s))

    @property
    def site_count(self) -> int:
        return len(self.weights)

    @property
    def total(self) -> float:
        return float(sum(self.weights))


def _compositions(n: int, s: int):
    """Weak compositions of ``n`` into ``s`` parts in descending lexicographic order."""
    if s == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _compositions(n - first, s - 1):
            yield (first,) + rest


def enumerate_configs(space: GroundSpace | int, n: int, n_max: int | None = None) -> list:
    """All configurations with exactly ``n`` points, e.g. ``[(2,0), (1,1), (0,2)]``."""
    s = space if isinstance(space, int) else space.site_count
    if n < 0:
        raise ValueError("n must be non-negative")
    if n_max is not None and n > n_max:
        raise ValueError(f"layer {n} exceeds n_max = {n_max}")
    return list(_compositions(n, s))


@dataclass(frozen=True, eq=False)
class ConfigIndex:
    """Enumeration of every configuration with at most ``n_max`` points.

    Configurations are ordered by layer, then in descending lexicographic
    order within a layer.
    """

    s: int
    n_max: int
    configs: tuple = field(init=False)
    counts: np.ndarray = field(init=False)
    sizes: np.ndarray = field(init=False)
    pos: dict = field(init=False)
    leq: np.ndarray = field(init=False)
    layer_slices: tuple = field(init=False)

    def __post_init__(self):
        cfgs = []
        slices = []
        for n in range(self.n_max + 1):
            start = len(cfgs)
            cfgs.extend(enumerate_configs(self.s, n))
            slices.append(slice(start, len(cfgs)))
        counts = np.array(cfgs, dtype=np.int64).reshape(len(cfgs), self.s)
        counts.flags.writeable = False
        sizes = counts.sum(axis=1)
        sizes.flags.writeable = False
        leq = np.all(counts[:, None, :] <= counts[None, :, :], axis=2)
        leq.flags.writeable = False
        object.__setattr__(self, "configs", tuple(cfgs))
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "pos", {c: i for i, c in enumerate(cfgs)})
        object.__setattr__(self, "leq", leq)
        object.__setattr__(self, "layer_slices", tuple(slices))

    def __len__(self):
        return len(self.configs)

    def index(self, config) -> int:
        key = tuple(int(c) for c in config)
        try:
            return self.pos[key]
        except KeyError:
            raise DimensionError(f"configuration {key} is outside the window") from None

    def shift_index(self, x: int) -> np.ndarray:
        """Index of ``mu + delta_x`` for every ``mu`` (``-1`` past the window)."""
        out = np.full(len(self), -1, dtype=np.int64)
        for i, c in enumerate(self.configs):
            if self.sizes[i] < self.n_max:
                d = list(c)
                d[x] += 1
                out[i] = self.pos[tuple(d)]
        return out


@lru_cache(maxsize=64)
def config_index(s: int, n_max: int) -> ConfigIndex:
    if s < 1 or n_max < 0:
        raise ValueError("need s >= 1 and n_max >= 0")
    return ConfigIndex(s, n_max)


def sub_multiplicity(config, part) -> int:
    """Number of ordered tuples of distinct copies in ``mu`` forming ``eta``.

    Equals ``|eta|! / prod eta_i! * prod (mu_i)_{eta_i}``; zero unless ``eta <= mu``.
    """
    config = tuple(int(a) for a in config)
    part = tuple(int(b) for b in part) or (0,) * len(config)
    if len(config) != len(part):
        raise DimensionError("configurations live on different spaces")
    if any(b > a for a, b in zip(config, part)):
        return 0
    out = math.factorial(sum(part))
    for a, b in zip(config, part):
        out = out // math.factorial(b) * math.perm(a, b)
    return out


def _binomial_products(idx: ConfigIndex) -> np.ndarray:
    """``B[a, b] = prod_i C(mu_i, eta_i)`` for ``mu = configs[a]``, ``eta = configs[b]``."""
    c = idx.counts
    return np.prod(comb(c[:, None, :], c[None, :, :]), axis=2)


def inverse_binomial(n, j):
    """``t_{n,j} = 1 / C(n, j)``."""
    return 1.0 / comb(n, j)


@dataclass(frozen=True, eq=False)
class ThinningSpec:
    """Thinning kernel family on configurations.

    ``kind="type1"``: weight ``t(eta)`` of the kept configuration.  When
    ``cell_q`` is set the weight is of product form ``prod_x q(x)/(1 - q(x))``
    with ``q`` piecewise constant over cells (site ``i`` falls in cell
    ``i mod len(cell_q)``), otherwise ``weight`` is called on count tuples.

    ``kind="type2"``: weight ``t_{n, j}`` depending on the sizes alone;
    ``weight(n, j)`` is called with integer arrays.
    """

    kind: str
    name: str
    params: dict = field(default_factory=dict)
    weight: Callable | None = None
    cell_q: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("type1", "type2"):
            raise ValueError("kind must be 'type1' or 'type2'")
        if self.cell_q is not None:
            qs = tuple(float(q) for q in self.cell_q)
            if not all(0 < q < 1 for q in qs):
                raise ValueError("cell probabilities must lie in (0, 1)")
            object.__setattr__(self, "cell_q", qs)
        elif self.weight is None:
            raise ValueError("need a weight function or cell probabilities")

    @classmethod
    def independent(cls, q: float) -> "ThinningSpec":
        """Keep each point independently with probability ``q``."""
        return cls("type1", "independent", {"q": float(q)}, cell_q=(float(q),))

    @classmethod
    def inhomogeneous(cls, qs: Sequence[float]) -> "ThinningSpec":
        """Independent thinning with retention probability constant on cells."""
        return cls("type1", "inhomogeneous", {"q": [float(q) for q in qs]}, cell_q=tuple(qs))

    @classmethod
    def uniform(cls) -> "ThinningSpec":
        """Type 2 with ``t_{n,j} = 1/C(n, j)``: kept size uniform on {0, ..., n}."""
        return cls("type2", "uniform", {}, weight=inverse_binomial)

    @classmethod
    def type1(cls, weight: Callable, name: str = "type1") -> "ThinningSpec":
        return cls("type1", name, {}, weight=weight)

    @classmethod
    def type2(cls, weight: Callable, name: str = "type2") -> "ThinningSpec":
        return cls("type2", name, {}, weight=weight)

    @property
    def product_form(self) -> bool:
        return self.cell_q is not None

    def site_ratios(self, s: int) -> np.ndarray:
        """``q_i / (1 - q_i)`` per site for product-form weights."""
        qs = np.array([self.cell_q[i % len(self.cell_q)] for i in range(s)])
        return qs / (1.0 - qs)

    def config_weights(self, counts: np.ndarray) -> np.ndarray:
        """Type-1 weight ``t(eta)`` for each row of a count array."""
        if self.product_form:
            r = self.site_ratios(counts.shape[1])
            return np.prod(r[None, :] ** counts, axis=1)
        return np.array([float(self.weight(tuple(int(v) for v in c))) for c in counts])

    def size_weights(self, n, j) -> np.ndarray:
        """Type-2 weight ``t_{n,j}``; zero where ``j > n``."""
        n = np.asarray(n)
        j = np.asarray(j)
        ok = j <= n
        jj = np.where(ok, j, 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.asarray(self.weight(n, jj), dtype=float) * np.ones(np.broadcast(n, j).shape)
        return np.where(ok, w, 0.0)


@dataclass(frozen=True, eq=False)
class ConfigMeasure:
    """Measure on the configurations of a :class:`ConfigIndex`."""

    index: ConfigIndex
    weights: np.ndarray
    normalized: bool = True
    tail_bound: float = 0.0

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (len(self.index),):
            raise DimensionError(f"expected {len(self.index)} weights, got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and non-negative")
        if self.normalized and abs(w.sum() - 1.0) > self.tail_bound + ROW_TOL:
            raise ValueError(f"normalized measure has mass {w.sum():.17g}")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_dict(cls, s: int, n_max: int, mapping: dict, normalized: bool = True) -> "ConfigMeasure":
        idx = config_index(s, n_max)
        w = np.zeros(len(idx))
        for cfg, val in mapping.items():
            w[idx.index(cfg)] += float(val)
        return cls(idx, w, normalized)

    def __getitem__(self, config) -> float:
        return float(self.weights[self.index.index(config)])

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @property
    def n_max(self) -> int:
        return self.index.n_max

    def as_dict(self, drop_zero: bool = True) -> dict:
        return {
            c: float(w) for c, w in zip(self.index.configs, self.weights) if w != 0 or not drop_zero
        }

    def normalize(self) -> "ConfigMeasure":
        tot = self.total
        if tot <= 0:
            raise DegenerateError("cannot normalize the zero measure")
        return ConfigMeasure(self.index, self.weights / tot, True)

    def layer_masses(self) -> np.ndarray:
        return np.bincount(self.index.sizes, weights=self.weights, minlength=self.n_max + 1)

    def count_law(self) -> TruncatedPmf:
        """Law of the total number of points."""
        return TruncatedPmf(self.layer_masses(), self.tail_bound, self.normalized)

    def tv_distance(self, other: "ConfigMeasure") -> float:
        if other.index is not self.index:
            raise DimensionError("measures live on different windows")
        return 0.5 * float(np.abs(self.weights - other.weights).sum())


@dataclass(frozen=True, eq=False)
class KernelTable:
    """Markov kernel between configurations of one window, ``matrix[a, b] = K_a({b})``.

    ``kind="thinning"`` rows live on sub-configurations, ``"condensation"``
    rows on super-configurations.  ``pathological`` marks condensation rows
    set to a point mass because the conditioning configuration is null.
    """

    index: ConfigIndex
    matrix: np.ndarray
    kind: str
    pathological: np.ndarray | None = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        n = len(self.index)
        if m.shape != (n, n):
            raise DimensionError(f"expected a {n}x{n} kernel, got {m.shape}")
        if self.kind not in ("thinning", "condensation"):
            raise ValueError("kind must be 'thinning' or 'condensation'")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ValueError("kernel entries must be finite and non-negative")
        allowed = self.index.leq.T if self.kind == "thinning" else self.index.leq
        if np.any(m[~allowed] != 0):
            raise ValueError(f"{self.kind} kernel charges configurations outside its support")
        err = np.abs(m.sum(axis=1) - 1.0)
        if np.any(err > ROW_TOL):
            a = int(np.argmax(err))
            raise StochasticityError(f"row {self.index.configs[a]} sums to {m[a].sum():.17g}")
        patho = np.zeros(n, bool) if self.pathological is None else np.array(self.pathological, bool)
        m.flags.writeable = False
        patho.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "pathological", patho)

    def row(self, config) -> ConfigMeasure:
        return ConfigMeasure(self.index, self.matrix[self.index.index(config)], True)

    def __call__(self, frm, to) -> float:
        return float(self.matrix[self.index.index(frm), self.index.index(to)])


def _raw_weights(spec: ThinningSpec, idx: ConfigIndex) -> np.ndarray:
    """Unnormalized thinning weights ``W[a, b]`` (row ``mu = a``, kept ``eta = b``)."""
    B = _binomial_products(idx)
    if spec.kind == "type1":
        return B * spec.config_weights(idx.counts)[None, :]
    return B * spec.size_weights(idx.sizes[:, None], idx.sizes[None, :])


def normalizers(spec: ThinningSpec, idx: ConfigIndex) -> np.ndarray:
    """``Z_mu`` for every configuration of the window."""
    tot = _raw_weights(spec, idx).sum(axis=1)
    if np.any(~(tot > 0)):
        a = int(np.argmax(~(tot > 0)))
        raise DegenerateError(
            f"no sub-configuration of {idx.configs[a]} has positive weight", where=idx.configs[a]
        )
    return 1.0 / tot


def thinning_table(spec: ThinningSpec, s: int, n_max: int) -> KernelTable:
    """Thinning kernel on the window as a :class:`KernelTable`."""
    idx = config_index(s, n_max)
    W = _raw_weights(spec, idx)
    Z = normalizers(spec, idx)
    return KernelTable(idx, W * Z[:, None], "thinning")


def thinning_kernel(spec: ThinningSpec, config) -> ConfigMeasure:
    """Row ``T_mu`` as a measure over configurations with at most ``|mu|`` points."""
    config = tuple(int(c) for c in config)
    idx = config_index(len(config), sum(config))
    thinning = thinning_table(spec, len(config), sum(config))
    return ConfigMeasure(idx, thinning.matrix[idx.index(config)], True)


def thinned_measure(law: ConfigMeasure, spec: ThinningSpec) -> ConfigMeasure:
    """``P'(eta) = sum_mu P(mu) T_mu({eta})``."""
    thinning = thinning_table(spec, law.index.s, law.n_max)
    return ConfigMeasure(law.index, law.weights @ thinning.matrix, law.normalized, law.tail_bound)


def condensation_kernel(law: ConfigMeasure, spec: ThinningSpec, thinning: KernelTable | None = None) -> KernelTable:
    """Bayes disintegration ``Q_eta({mu}) = P(mu) T_mu({eta}) / P'(eta)``.

    Rows with ``P'(eta) = 0`` are the point mass at ``eta`` and are flagged.
    """
    if thinning is None:
        thinning = thinning_table(spec, law.index.s, law.n_max)
    joint = law.weights[:, None] * thinning.matrix  # joint[mu, eta]
    marg = joint.sum(axis=0)
    patho = marg <= 0
    cond = (joint / np.where(patho, 1.0, marg)[None, :]).T
    cond[patho] = 0.0
    ids = np.flatnonzero(patho)
    cond[ids, ids] = 1.0
    return KernelTable(law.index, cond, "condensation", patho)


def _type2_factor(spec: ThinningSpec, big, small):
    return spec.size_weights(big, small) if spec.kind == "type2" else np.ones(np.shape(big))


def reduced_palm(law: ConfigMeasure, kept) -> ConfigMeasure:
    """Reduced Palm law ``P^!_nu({eta}) ∝ P({nu + eta}) m(nu + eta, nu)`` on remainders."""
    kept = tuple(int(c) for c in kept)
    idx = law.index
    k = sum(kept)
    if k > idx.n_max:
        raise DimensionError(f"{kept} is outside the window")
    rem = config_index(idx.s, idx.n_max - k)
    nu_arr = np.array(kept)
    full = rem.counts + nu_arr[None, :]
    pos = np.array([idx.pos[tuple(r)] for r in full.tolist()], dtype=np.int64)
    mult = math.factorial(k) * np.prod(comb(full, nu_arr[None, :]), axis=1)
    w = law.weights[pos] * mult
    if not w.sum() > 0:
        raise DegenerateError(f"factorial moment measure vanishes at {kept}", where=kept)
    return ConfigMeasure(rem, w / w.sum(), True)


def _palm_parts(law: ConfigMeasure, spec: ThinningSpec, kept):
    palm = reduced_palm(law, kept)
    rem = palm.index
    nu_arr = np.array(kept)
    k = int(nu_arr.sum())
    full = rem.counts + nu_arr[None, :]
    Zall = normalizers(spec, law.index)
    pos = np.array([law.index.pos[tuple(r)] for r in full.tolist()], dtype=np.int64)
    z = Zall[pos] * _type2_factor(spec, rem.sizes + k, np.full(len(rem), k))
    return palm, z


def palm_splitting_kernel(law: ConfigMeasure, spec: ThinningSpec, kept) -> ConfigMeasure:
    """Splitting kernel ``U_nu({eta}) ∝ Z_{nu+eta} P^!_nu({eta})`` from the reduced Palm law.

    For type-2 thinnings ``Z_{nu+eta}`` is multiplied by ``t_{|nu+eta|, |nu|}``.
    """
    palm, z = _palm_parts(law, spec, tuple(int(c) for c in kept))
    w = palm.weights * z
    if not w.sum() > 0:
        raise DegenerateError(f"splitting kernel at {tuple(kept)} has no mass", where=tuple(kept))
    return ConfigMeasure(palm.index, w / w.sum(), True)


def splitting_from_condensation(cond: KernelTable, kept) -> ConfigMeasure:
    """Shift of a condensation row: ``U_nu({eta}) = Q_nu({nu + eta})``."""
    kept = tuple(int(c) for c in kept)
    k = sum(kept)
    rem = config_index(cond.index.s, cond.index.n_max - k)
    nu_arr = np.array(kept)
    pos = [cond.index.pos[tuple(r)] for r in (rem.counts + nu_arr[None, :]).tolist()]
    return ConfigMeasure(rem, cond.matrix[cond.index.index(kept), pos], True)


def condensation_atom(law: ConfigMeasure, spec: ThinningSpec, kept) -> float:
    """Atom of ``Q_nu`` at ``nu`` from Palm quantities: ``Z_nu P^!_nu(empty) / P^!_nu(Z_{nu+.})``."""
    palm, z = _palm_parts(law, spec, tuple(int(c) for c in kept))
    den = float(np.dot(palm.weights, z))
    if not den > 0:
        raise DegenerateError(f"no mass at {tuple(kept)}", where=tuple(kept))
    return float(z[0] * palm.weights[0] / den)


def _check_ibp_hypotheses(law: ConfigMeasure, spec: ThinningSpec, thinning: KernelTable):
    idx = law.index
    support = law.weights > 0
    diag = np.diagonal(thinning.matrix)
    for a in np.flatnonzero(support):
        config = idx.configs[a]
        if not diag[a] > 0:
            raise PreconditionError(f"thinning weight of the empty subset vanishes at {config}", where=config)
        if idx.sizes[a] == 0:
            continue
        single = 0.0
        for x, c in enumerate(config):
            if c == 0:
                continue
            lower = list(config)
            lower[x] -= 1
            b = idx.pos[tuple(lower)]
            single += c * thinning.matrix[a, b]
            if not support[b]:
                raise PreconditionError(f"support has a hole below {config}", where=config)
        if not single > 0:
            raise PreconditionError(f"no single-point removal has positive weight at {config}", where=config)


def death_factors(law: ConfigMeasure, spec: ThinningSpec) -> np.ndarray:
    """``delta(mu, x) = Z_mu / Z_{mu - delta_x}`` (times ``t_{m,m-1}/t_{m-1,m-1}`` for type 2).

    Array of shape ``(configs, sites)``; zero where ``mu`` has no point at ``x``.
    """
    idx = law.index
    Z = normalizers(spec, idx)
    out = np.zeros((len(idx), idx.s))
    for x in range(idx.s):
        up = idx.shift_index(x)
        src = np.flatnonzero(up >= 0)
        dst = up[src]
        m = idx.sizes[dst]
        f = Z[dst] / Z[src]
        if spec.kind == "type2":
            f = f * spec.size_weights(m, m - 1) / spec.size_weights(m - 1, m - 1)
        out[dst, x] = f
    return out


def papangelou_kernel(law: ConfigMeasure, spec: ThinningSpec, route: str = "palm") -> np.ndarray:
    """Papangelou kernel ``pi(mu, x)`` for ``mu`` with ``P(mu) > 0``.

    ``route="palm"`` uses ``Z_{mu+dx} / (Z_mu P^!_mu(empty)) * P^!_mu({delta_x})``
    (times ``t_{m+1,m}/t_{m,m}`` for type 2); ``route="condensation"`` uses
    ``Q_mu({mu + delta_x}) / Q_mu({mu})``.  Entries at the top layer and
    outside the support are zero.
    """
    idx = law.index
    out = np.zeros((len(idx), idx.s))
    if route == "condensation":
        cond = condensation_kernel(law, spec).matrix
        for x in range(idx.s):
            up = idx.shift_index(x)
            for a in np.flatnonzero((up >= 0) & (law.weights > 0)):
                out[a, x] = cond[a, up[a]] / cond[a, a]
        return out
    if route != "palm":
        raise ValueError(f"unknown route {route!r}")
    Z = normalizers(spec, idx)
    for a in np.flatnonzero(law.weights > 0):
        if idx.sizes[a] == idx.n_max:
            continue
        config = idx.configs[a]
        palm = reduced_palm(law, config)
        empty = palm.weights[0]
        m = int(idx.sizes[a])
        for x in range(idx.s):
            one = [0] * idx.s
            one[x] = 1
            rho = palm[tuple(one)]
            b = idx.pos[tuple(c + d for c, d in zip(config, one))]
            f = Z[b] / Z[a]
            if spec.kind == "type2":
                f *= float(spec.size_weights(m + 1, m) / spec.size_weights(m, m))
            out[a, x] = f * rho / empty
    return out


def default_g_family(idx: ConfigIndex) -> list:
    """Indicators of (site, total count) pairs."""
    fam = []
    for x in range(idx.s):
        for c in range(idx.n_max + 1):
            fam.append(lambda site, cfg, x=x, c=c: float(site == x and sum(cfg) == c))
    return fam


def ibp_sides(law: ConfigMeasure, spec: ThinningSpec, g: Callable):
    """Both sides of the integration-by-parts identity for a single ``g(site, config)``."""
    idx = law.index
    thinning = thinning_table(spec, idx.s, idx.n_max)
    _check_ibp_hypotheses(law, spec, thinning)
    death = death_factors(law, spec)
    birth = papangelou_kernel(law, spec)
    return _sides(law, death, birth, g)


def _sides(law, death, birth, g):
    idx = law.index
    lhs = 0.0
    rhs = 0.0
    for x in range(idx.s):
        up = idx.shift_index(x)
        for a in np.flatnonzero(law.weights > 0):
            config = idx.configs[a]
            if config[x] > 0:
                lhs += law.weights[a] * config[x] * death[a, x] * g(x, config)
            if up[a] >= 0 and birth[a, x] != 0:
                rhs += law.weights[a] * birth[a, x] * g(x, idx.configs[up[a]])
    return lhs, rhs


def verify_ibp_exact(
    law: ConfigMeasure, spec: ThinningSpec, g_family: Iterable[Callable] | None = None
) -> float:
    """Max over ``g`` of the exact integration-by-parts residual.

    ``g(site, config)`` defaults to the indicators of (site, total count).
    The support of ``P`` must be closed under removing points, and the
    thinning must keep ``mu`` whole and remove single points with positive
    probability on that support; violations raise :class:`PreconditionError`.
    """
    idx = law.index
    thinning = thinning_table(spec, idx.s, idx.n_max)
    _check_ibp_hypotheses(law, spec, thinning)
    death = death_factors(law, spec)
    birth = papangelou_kernel(law, spec)
    if g_family is None:
        lhs = np.zeros((idx.s, idx.n_max + 2))
        rhs = np.zeros((idx.s, idx.n_max + 2))
        w = law.weights
        for x in range(idx.s):
            np.add.at(lhs[x], idx.sizes, w * idx.counts[:, x] * death[:, x])
            np.add.at(rhs[x], idx.sizes + 1, w * birth[:, x])
        return float(np.max(np.abs(lhs - rhs)))
    worst = 0.0
    for g in g_family:
        l, r = _sides(law, death, birth, g)
        worst = max(worst, abs(l - r))
    return worst


def _cycle_violation(thinning: np.ndarray, cond: np.ndarray, charged: np.ndarray):
    """Max over kappa in ``kappas`` and all (nu, lam, mu) of the atomwise cycle defect."""
    worst = 0.0
    where = None
    # axes (nu, lam, mu)
    Q_lam_nu = cond.T[:, :, None]  # Q[lam, nu]
    T_mu_lam = thinning.T[None, :, :]  # T[mu, lam]
    Q_lam_mu = cond[None, :, :]  # Q[lam, mu]
    T_nu_lam = thinning[:, :, None]  # T[nu, lam]
    for kap in charged:
        lhs = thinning[:, kap][:, None, None] * Q_lam_nu * T_mu_lam * cond[kap][None, None, :]
        rhs = thinning[:, kap][None, None, :] * Q_lam_mu * T_nu_lam * cond[kap][:, None, None]
        d = np.abs(lhs - rhs)
        a = int(np.argmax(d))
        if d.flat[a] > worst:
            worst = float(d.flat[a])
            where = (int(kap),) + tuple(int(i) for i in np.unravel_index(a, d.shape))
    return worst, where


def verify_cycle_kernels(
    law: ConfigMeasure, spec: ThinningSpec, cond: KernelTable | None = None
) -> float:
    """Largest atomwise defect of the alternating kernel cycle condition.

    Checks ``T_nu(k) Q_lam(nu) T_mu(lam) Q_k(mu) = T_mu(k) Q_lam(mu) T_nu(lam) Q_k(nu)``
    over all configurations, for every ``k`` charged by the thinned measure.
    ``Q`` defaults to the condensation kernel of ``P``.
    """
    thinning = thinning_table(spec, law.index.s, law.n_max)
    if cond is None:
        cond = condensation_kernel(law, spec, thinning)
    charged = np.flatnonzero(law.weights @ thinning.matrix > 0)
    return _cycle_violation(thinning.matrix, cond.matrix, charged)[0]


@dataclass(frozen=True, eq=False)
class PPReconstruction:
    """Output of :func:`reconstruct_pp`.

    ``P_prime`` and ``P`` are unnormalized with ``P_prime(empty) = 1``.
    ``halt_layer`` is the first layer carrying no mass (``None`` if all do),
    and ``window_limited`` is set when the top layer still carries mass so
    the total cannot be certified from the window alone.
    """

    thinned: ConfigMeasure
    law: ConfigMeasure
    total_mass: float
    halt_layer: int | None
    window_limited: bool
    identity_residual: float
    cycle_violation: float
    layer_masses: np.ndarray

    @property
    def normalized(self) -> ConfigMeasure:
        return self.law.normalize()


def reconstruct_pp(
    thinning: KernelTable,
    cond: KernelTable,
    n_max: int | None = None,
    cycle_tol: float = KERNEL_CYCLE_TOL,
    identity_tol: float = IDENTITY_TOL,
) -> PPReconstruction:
    """Recover a point process from its thinning and condensation kernels.

    Layer by layer, ``P'(empty) = 1`` and for ``|mu| = n + 1``::

        P'(mu) = T_mu({mu}) / (T_mu(M_n) Q_mu({mu})) * sum_{nu in M_n} Q_nu({mu}) P'(nu)

    then ``P(mu) = sum_nu P'(nu) Q_nu({mu})``.  The kernel cycle condition is
    checked beforehand on non-degenerate rows of ``Q``, and afterwards the
    identity ``P(mu) T_mu({nu}) = P'(nu) Q_nu({mu})`` is verified atomwise.
    """
    if thinning.kind != "thinning" or cond.kind != "condensation":
        raise ValueError("expected a thinning and a condensation kernel")
    if thinning.index is not cond.index:
        raise DimensionError("kernels live on different windows")
    idx = thinning.index
    N = idx.n_max if n_max is None else int(n_max)
    if N > idx.n_max:
        raise DimensionError(f"n_max {N} exceeds the window {idx.n_max}")
    t = thinning.matrix
    q = cond.matrix
    below = idx.leq.T & ~np.eye(len(idx), dtype=bool)
    if np.any(t[below] <= 0):
        a, b = np.argwhere(below & (t <= 0))[0]
        raise PreconditionError(
            f"thinning is not positive: T_{idx.configs[a]}({idx.configs[b]}) = 0",
            where=idx.configs[a],
        )

    cyc, where = _cycle_violation(t, q, np.flatnonzero(~cond.pathological))
    if cyc > cycle_tol:
        diag = tuple(idx.configs[i] for i in where)
        raise CycleConditionError(f"kernel cycle condition violated by {cyc:.3g}", cyc, diag)

    pp = np.zeros(len(idx))
    pp[0] = 1.0
    halt = None
    for n in range(N):
        prev = idx.layer_slices[n]
        cur = idx.layer_slices[n + 1]
        for a in range(cur.start, cur.stop):
            num = float(np.dot(q[prev, a], pp[prev]))
            if num == 0.0:
                continue
            down = float(t[a, prev].sum())
            atom = q[a, a]
            if not (down > 0 and atom > 0 and t[a, a] > 0):
                raise DegenerateError(
                    f"zero denominator in layer {n + 1} at {idx.configs[a]}", where=idx.configs[a]
                )
            pp[a] = t[a, a] / (down * atom) * num
        if halt is None and not pp[cur].sum() > 0:
            halt = n + 1
    P_full = pp @ q
    P_full[idx.sizes > N] = 0.0
    thinned = ConfigMeasure(idx, pp, normalized=False)
    Pm = ConfigMeasure(idx, P_full, normalized=False)
    tot = Pm.total
    lhs = P_full[:, None] * t
    rhs = (pp[:, None] * q).T
    resid = float(np.max(np.abs(lhs - rhs))) / tot
    layers = Pm.layer_masses()
    return PPReconstruction(
        thinned=thinned,
        law=Pm,
        total_mass=tot,
        halt_layer=halt,
        window_limited=bool(layers[N] > 0) if N == idx.n_max else True,
        identity_residual=resid,
        cycle_violation=cyc,
        layer_masses=layers,
    )


def poisson_measure(space: GroundSpace, n_max: int) -> ConfigMeasure:
    """Poisson process with intensity ``lam`` restricted to the window and renormalized."""
    idx = config_index(space.site_count, n_max)
    lam = np.array(space.weights)
    logw = idx.counts @ np.log(lam) - gammaln(idx.counts + 1).sum(axis=1)
    w = np.exp(logw - logw.max())
    return ConfigMeasure(idx, w / w.sum(), True)


def mixed_sample_measure(space: GroundSpace, n_max: int, p: Sequence[float] | Callable) -> ConfigMeasure:
    """Mixed sample: ``P(mu) ∝ p_{|mu|} prod_i (lam_i / lam(X))^{mu_i} / mu_i!``.

    The count law is therefore proportional to ``p_n / n!``.  ``p`` is a
    sequence indexed by count or a callable returning ``log p_n``.
    """
    idx = config_index(space.site_count, n_max)
    if callable(p):
        logp = np.array([p(n) for n in range(n_max + 1)], dtype=float)
    else:
        arr = np.zeros(n_max + 1)
        vals = np.asarray(p, float)[: n_max + 1]
        arr[: vals.size] = vals
        if np.any(arr < 0):
            raise ValueError("count weights must be non-negative")
        with np.errstate(divide="ignore"):
            logp = np.log(arr)
    lam = np.array(space.weights) / space.total
    logw = logp[idx.sizes] + idx.counts @ np.log(lam) - gammaln(idx.counts + 1).sum(axis=1)
    if not np.any(np.isfinite(logw)):
        raise DegenerateError("mixed sample has no mass on the window")
    w = np.exp(logw - np.max(logw[np.isfinite(logw)]))
    return ConfigMeasure(idx, w / w.sum(), True)


def powerlaw_count_weights(alpha: float) -> Callable:
    """``log p_k`` for ``p_k = k! (k + 1)^(-alpha)``."""
    return lambda k: float(gammaln(k + 1) - alpha * np.log(k + 1.0))


def point_mass_measure(config, n_max: int | None = None) -> ConfigMeasure:
    config = tuple(int(c) for c in config)
    idx = config_index(len(config), sum(config) if n_max is None else n_max)
    w = np.zeros(len(idx))
    w[idx.index(config)] = 1.0
    return ConfigMeasure(idx, w, True)


def random_measure(s: int, n_max: int, seed: int, floor: float = 0.05) -> ConfigMeasure:
    """Seeded random law with every configuration charged (at least ``floor`` before normalizing)."""
    idx = config_index(s, n_max)
    rng = np.random.default_rng(seed)
    w = rng.random(len(idx)) + floor
    return ConfigMeasure(idx, w / w.sum(), True)


def count_thinning_matrix(spec: ThinningSpec, n_max: int):
    """Count-level thinning matrix of a type-2 or homogeneous product-form kernel.

    Such kernels thin the total count independently of where the points sit,
    so their count marginal is a lower-triangular :class:`TriMatrix`.
    """
    from .dist_core import TriMatrix

    n = np.arange(n_max + 1)[:, None]
    j = np.arange(n_max + 1)[None, :]
    C = np.where(j <= n, comb(n, j), 0.0)
    if spec.kind == "type2":
        W = C * spec.size_weights(n, j)
    elif spec.product_form and len(set(spec.cell_q)) == 1:
        r = spec.cell_q[0] / (1 - spec.cell_q[0])
        W = C * r ** j
    else:
        raise ValueError("count marginal depends on point locations for this thinning")
    return TriMatrix(W / W.sum(axis=1, keepdims=True), "lower")


def collapse_kernel_to_counts(K: KernelTable, law: ConfigMeasure) -> np.ndarray:
    """Count-level matrix ``K[n, k]`` averaged over ``P`` within each layer."""
    idx = K.index
    N = idx.n_max
    out = np.zeros((N + 1, N + 1))
    mass = np.zeros(N + 1)
    for a in range(len(idx)):
        w = law.weights[a]
        out[idx.sizes[a]] += w * np.bincount(idx.sizes, weights=K.matrix[a], minlength=N + 1)
        mass[idx.sizes[a]] += w
    live = mass > 0
    out[live] /= mass[live][:, None]
    return out
