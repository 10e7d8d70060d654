"""Exact thinning, condensation and splitting calculus for laws on {0, ..., n_max}.

A law ``nu`` of a count ``N`` is thinned by a lower-triangular stochastic matrix
``T`` (``T[n, k]`` is the probability of keeping ``k`` of ``n`` objects).  The
condensation matrix ``Q`` is the Bayesian inverse (``Q[k, n]`` is the posterior
of ``N = n`` after observing ``k`` kept objects) and the splitting matrix is its
re-indexing ``U[k, l] = Q[k, k + l]``.

Everything lives on a finite window.  Rows of ``Q`` that were cut off at the
window edge carry their missing mass in ``TriMatrix.row_deficit`` so that exact
(untruncated) entries can be stored without pretending the rows are complete.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import (
    CycleConditionError,
    DegenerateError,
    DimensionError,
    PreconditionError,
    StochasticityError,
)

ROW_TOL = 1e-12
BALANCE_TOL = 1e-11
CYCLE_TOL = 1e-10
HOLE_TOL = 1e-14
# Rows whose thinned mass is at most this are set to a point mass.  Bayes'
# rule is well conditioned for any positive marginal in double precision, so
# only exact zeros are treated as pathological.
PATHOLOGICAL_TOL = 0.0
TRUNCATION_TOL = 1e-13
CYCLE_CAP = 25


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TruncatedPmf:
    """Finitely supported measure on {0, ..., n_max}.

    Parameters
    ----------
    weights : array_like
        Non-negative masses indexed by count.
    tail_bound : float
        Upper bound on the mass omitted beyond ``n_max``.
    normalized : bool
        Whether the full (untruncated) measure is a probability law.  If set,
        the window mass must be within ``tail_bound`` of one.
    """

    weights: np.ndarray
    tail_bound: float = 0.0
    normalized: bool = True

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1 or w.size == 0:
            raise DimensionError("weights must be a non-empty 1-D array")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if self.tail_bound < 0:
            raise ValueError("tail_bound must be non-negative")
        if self.normalized and abs(w.sum() - 1.0) > self.tail_bound + ROW_TOL:
            raise ValueError(
                f"normalized pmf has window mass {w.sum():.17g} "
                f"with tail_bound {self.tail_bound:.3g}"
            )
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "tail_bound", float(self.tail_bound))

    @property
    def n_max(self) -> int:
        return self.weights.size - 1

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def is_hole_free(self, hole_tol: float = HOLE_TOL) -> bool:
        """True if no negligible weight is followed by a non-negligible one."""
        small = self.weights < hole_tol
        if not small.any():
            return True
        first = int(np.argmax(small))
        return bool(small[first:].all())

    def last_positive(self) -> int:
        """Largest index with positive weight, or -1 for the zero measure."""
        nz = np.flatnonzero(self.weights > 0)
        return int(nz[-1]) if nz.size else -1

    def normalize(self) -> "TruncatedPmf":
        """Probability law conditioned on the window."""
        tot = self.total
        if tot <= 0:
            raise DegenerateError("cannot normalize the zero measure")
        return TruncatedPmf(self.weights / tot, tail_bound=0.0, normalized=True)

    def mean(self) -> float:
        return float(np.dot(np.arange(self.weights.size), self.weights))

    def tv_distance(self, other: "TruncatedPmf") -> float:
        a, b = _pad(self.weights, other.weights)
        return 0.5 * float(np.abs(a - b).sum())


def _pad(a, b):
    n = max(a.size, b.size)
    return np.pad(a, (0, n - a.size)), np.pad(b, (0, n - b.size))


@dataclass(frozen=True)
class TriMatrix:
    """Triangular stochastic matrix on {0, ..., n_max}.

    ``orientation="lower"`` is a thinning matrix (``T[n, k] = 0`` for ``k > n``);
    ``"upper"`` is a condensation matrix (``Q[k, n] = 0`` for ``n < k``).

    ``row_deficit[k]`` is the mass of row ``k`` lying beyond the window, so
    ``entries[k].sum() + row_deficit[k] == 1``.  ``pathological`` flags rows
    that were set to a point mass because the conditioning event is null.
    """

    entries: np.ndarray
    orientation: str
    row_deficit: np.ndarray | None = None
    pathological: np.ndarray | None = None
    row_tol: float = ROW_TOL

    def __post_init__(self):
        e = _frozen(self.entries)
        if e.ndim != 2 or e.shape[0] != e.shape[1] or e.shape[0] == 0:
            raise DimensionError(f"expected a non-empty square matrix, got {e.shape}")
        if self.orientation not in ("lower", "upper"):
            raise ValueError("orientation must be 'lower' or 'upper'")
        if not np.all(np.isfinite(e)) or np.any(e < 0):
            raise ValueError("entries must be finite and non-negative")
        off = np.triu(e, 1) if self.orientation == "lower" else np.tril(e, -1)
        if np.any(off != 0):
            raise ValueError(f"{self.orientation} matrix has mass outside its triangle")
        n = e.shape[0]
        deficit = np.zeros(n) if self.row_deficit is None else np.array(self.row_deficit, float)
        if deficit.shape != (n,) or np.any(deficit < 0) or np.any(deficit > 1):
            raise ValueError("row_deficit must be a vector of values in [0, 1]")
        err = np.abs(e.sum(axis=1) + deficit - 1.0)
        if np.any(err > self.row_tol):
            bad = int(np.argmax(err))
            raise StochasticityError(
                f"row {bad} of {self.orientation} matrix sums to "
                f"{e[bad].sum() + deficit[bad]:.17g}"
            )
        patho = np.zeros(n, bool) if self.pathological is None else np.array(self.pathological, bool)
        object.__setattr__(self, "entries", e)
        object.__setattr__(self, "row_deficit", _frozen(deficit))
        object.__setattr__(self, "pathological", _frozen(patho, bool))

    @classmethod
    def identity(cls, n_max: int, orientation: str = "lower") -> "TriMatrix":
        return cls(np.eye(n_max + 1), orientation)

    @property
    def n_max(self) -> int:
        return self.entries.shape[0] - 1

    def __getitem__(self, idx):
        return self.entries[idx]

    def is_positive(self) -> bool:
        """All entries on the relevant triangle are strictly positive."""
        tri = np.tril(np.ones_like(self.entries, bool))
        if self.orientation == "upper":
            tri = tri.T
        return bool(np.all(self.entries[tri] > 0))

    def renormalized(self) -> "TriMatrix":
        """Rows conditioned on the window (deficits folded back in)."""
        sums = self.entries.sum(axis=1)
        e = self.entries / np.where(sums > 0, sums, 1.0)[:, None]
        return TriMatrix(e, self.orientation, pathological=self.pathological)


@dataclass(frozen=True)
class SplitView:
    """Splitting matrix ``U[k, l] = Q[k, k + l]``, defined for ``k + l <= n_max``."""

    values: np.ndarray
    row_deficit: np.ndarray

    @property
    def n_max(self) -> int:
        return self.values.shape[0] - 1

    @property
    def valid(self) -> np.ndarray:
        k, l = np.indices(self.values.shape)
        return k + l <= self.n_max

    def __getitem__(self, idx):
        return self.values[idx]


@dataclass(frozen=True)
class PapangelouSeq:
    """Birth ratios ``pi(n)`` for ``n = 0, ..., n_max - 1``."""

    values: np.ndarray
    mode: str = "raw"


def _check_lower(thinning: TriMatrix):
    if thinning.orientation != "lower":
        raise ValueError("expected a lower (thinning) matrix")


def _check_upper(cond: TriMatrix):
    if cond.orientation != "upper":
        raise ValueError("expected an upper (condensation) matrix")


def _check_dims(*objs):
    sizes = {o.n_max for o in objs}
    if len(sizes) != 1:
        raise DimensionError(f"window sizes disagree: {sorted(sizes)}")


def thin(law: TruncatedPmf, thinning: TriMatrix) -> TruncatedPmf:
    """Law of the kept count, ``nu' = nu T``.

    Thinning never moves mass upward, so the omitted tail of ``nu`` is the
    only source of error on the window and the tail bound carries over.
    """
    _check_lower(thinning)
    _check_dims(law, thinning)
    return TruncatedPmf(law.weights @ thinning.entries, law.tail_bound, law.normalized)


def condense(
    law: TruncatedPmf,
    thinning: TriMatrix,
    thinned: TruncatedPmf | None = None,
    pathological_tol: float = PATHOLOGICAL_TOL,
) -> TriMatrix:
    """Condensation matrix ``Q[k, n] = nu_n T[n, k] / nu'_k`` (Bayes' rule).

    By default ``nu'`` is the window thinning of ``nu`` and every row of ``Q``
    is the posterior conditioned on ``N <= n_max``.  Passing the exact thinned
    law as ``thinned`` gives the untruncated entries instead; the mass lost
    beyond the window is then recorded in ``row_deficit``.

    Rows with ``nu'_k <= pathological_tol`` are set to the point mass at ``k``
    and flagged.
    """
    _check_lower(thinning)
    _check_dims(law, thinning)
    joint = law.weights[:, None] * thinning.entries  # joint[n, k]
    if thinned is None:
        marg = joint.sum(axis=0)
    else:
        _check_dims(law, thinned)
        marg = thinned.weights
    patho = marg <= pathological_tol
    safe = np.where(patho, 1.0, marg)
    cond = (joint / safe[None, :]).T
    cond[patho] = 0.0
    idx = np.flatnonzero(patho)
    cond[idx, idx] = 1.0
    deficit = np.zeros(marg.size)
    if thinned is not None:
        raw = 1.0 - cond.sum(axis=1)
        deficit = np.where(raw > 0, raw, 0.0)
    return TriMatrix(cond, "upper", row_deficit=deficit, pathological=patho)


def balance_residual(
    law: TruncatedPmf, thinning: TriMatrix, cond: TriMatrix, thinned: TruncatedPmf | None = None
) -> float:
    """Max over (k, n) of ``|nu'_k Q[k, n] - nu_n T[n, k]|``."""
    _check_dims(law, thinning, cond)
    marg = thin(law, thinning).weights if thinned is None else thinned.weights
    lhs = marg[:, None] * cond.entries
    rhs = (law.weights[:, None] * thinning.entries).T
    return float(np.max(np.abs(lhs - rhs)))


def splitting_of(cond: TriMatrix) -> SplitView:
    """Re-index a condensation matrix as ``U[k, l] = Q[k, k + l]``."""
    _check_upper(cond)
    n = cond.n_max + 1
    split = np.zeros((n, n))
    for k in range(n):
        split[k, : n - k] = cond.entries[k, k:]
    return SplitView(_frozen(split), cond.row_deficit)


def _eval_grid(g, a, b):
    try:
        out = np.asarray(g(a, b), dtype=float)
        if out.shape == a.shape:
            return out
        return np.broadcast_to(out, a.shape).astype(float)
    except (TypeError, ValueError):
        return np.vectorize(lambda x, y: float(g(int(x), int(y))))(a, b).astype(float)


def split_expectation(
    thinned: TruncatedPmf, upsilon: SplitView, g: Callable
) -> float:
    """``E g(N_*, N^*) = sum_{k,l} nu'_k U[k, l] g(k, l)`` over the window.

    ``g`` should accept integer arrays; scalar-only callables are vectorized.
    With ``g(k, l) = h(k + l)`` this evaluates ``E h(N)``.
    """
    _check_dims(thinned, upsilon)
    k, l = np.indices(upsilon.values.shape)
    mask = upsilon.valid
    vals = _eval_grid(g, k, l)
    terms = thinned.weights[:, None] * upsilon.values * np.where(mask, vals, 0.0)
    return float(terms.sum())


def death_ratios(thinning: TriMatrix) -> np.ndarray:
    """``d(n) = T[n, n-1] / T[n-1, n-1]`` with ``d(0) = 0``.

    Entries whose denominator vanishes are ``nan``.
    """
    _check_lower(thinning)
    e = thinning.entries
    d = np.zeros(thinning.n_max + 1)
    sub = np.diagonal(e, -1)
    diag = np.diagonal(e)[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        d[1:] = np.where(diag > 0, sub / np.where(diag > 0, diag, 1.0), np.nan)
    return d


def papangelou_fn(thinning: TriMatrix, cond: TriMatrix, mode: str = "raw") -> PapangelouSeq:
    """Papangelou function ``pi(n) = Q[n, n+1] / Q[n, n]``.

    In ``"thinning-normalized"`` mode the raw ratio is divided further by the
    per-capita death ratio ``d(n+1) / (n+1)``; for independent q-thinning this
    is the constant ``1 - q`` and recovers the classical count intensity.
    """
    _check_upper(cond)
    _check_dims(thinning, cond)
    if mode not in ("raw", "thinning-normalized"):
        raise ValueError(f"unknown mode {mode!r}")
    e = cond.entries
    diag = np.diagonal(e)[:-1]
    sup = np.diagonal(e, 1)
    bad = (diag == 0) & (sup > 0)
    if bad.any():
        n = int(np.argmax(bad))
        raise DegenerateError(f"Q[{n}, {n}] = 0 while Q[{n}, {n + 1}] > 0", where=n)
    birth = np.where(diag > 0, sup / np.where(diag > 0, diag, 1.0), 0.0)
    if mode == "thinning-normalized":
        per_capita = death_ratios(thinning)[1:] / np.arange(1, thinning.n_max + 1)
        if np.any(~(per_capita > 0)):
            n = int(np.argmax(~(per_capita > 0)))
            raise DegenerateError(f"death ratio vanishes at n = {n + 1}", where=n + 1)
        birth = birth / per_capita
    return PapangelouSeq(_frozen(birth), mode)


def _ibp_preconditions(law: TruncatedPmf, thinning: TriMatrix, hole_tol: float) -> int:
    if not law.is_hole_free(hole_tol):
        raise PreconditionError("law has a hole in its support")
    top = law.last_positive()
    e = thinning.entries
    for n in range(1, top + 1):
        if not (e[n, n] > 0 and e[n, n - 1] > 0):
            raise PreconditionError(
                f"thinning needs T[{n},{n}] > 0 and T[{n},{n - 1}] > 0", where=n
            )
    return top


def _ibp_sides(law, thinning, cond, hole_tol):
    top = _ibp_preconditions(law, thinning, hole_tol)
    w = law.weights
    d = np.nan_to_num(death_ratios(thinning))
    birth = papangelou_fn(thinning, cond).values
    lhs = np.zeros(w.size)
    rhs = np.zeros(w.size)
    lhs[: top + 1] = w[: top + 1] * d[: top + 1]
    # rhs[m] = nu_{m-1} pi(m-1): mass that g(N+1) sees at N + 1 = m
    m = min(top + 1, w.size - 1)
    rhs[1 : m + 1] = w[:m] * birth[:m]
    return top, lhs, rhs


def detailed_balance_residual(
    law: TruncatedPmf, thinning: TriMatrix, cond: TriMatrix, hole_tol: float = HOLE_TOL
) -> np.ndarray:
    """``|nu_n d(n) - nu_{n-1} pi(n-1)|`` for ``n = 1, ..., last positive index``.

    Entry ``i`` of the result belongs to ``n = i + 1``; a point mass at zero
    yields an empty vector.
    """
    _check_dims(law, thinning, cond)
    top, lhs, rhs = _ibp_sides(law, thinning, cond, hole_tol)
    return np.abs(lhs - rhs)[1 : top + 1]


def verify_ibp(
    law: TruncatedPmf,
    thinning: TriMatrix,
    cond: TriMatrix,
    g_family: Iterable[Callable] | None = None,
    hole_tol: float = HOLE_TOL,
) -> float:
    """Max over ``g`` of ``|E[g(N) d(N)] - E[g(N+1) pi(N)]|``.

    The default family is every indicator ``1{n = m}`` on the window, which
    turns the identity into detailed balance pointwise.
    """
    _check_dims(law, thinning, cond)
    top, lhs, rhs = _ibp_sides(law, thinning, cond, hole_tol)
    if g_family is None:
        return float(np.max(np.abs(lhs - rhs)))
    n = np.arange(law.weights.size)
    worst = 0.0
    for g in g_family:
        gv = np.asarray(g(n), dtype=float) * np.ones(n.size)
        worst = max(worst, abs(float(np.dot(gv, lhs) - np.dot(gv, rhs))))
    return worst


@dataclass(frozen=True)
class CycleReport:
    """Largest violation of both alternating cycle orderings."""

    t_first: float
    q_first: float
    where_t_first: tuple
    where_q_first: tuple
    n_cap: int

    @property
    def violation(self) -> float:
        return max(self.t_first, self.q_first)

    @property
    def where(self) -> tuple:
        return self.where_t_first if self.t_first >= self.q_first else self.where_q_first


def verify_cycle(thinning: TriMatrix, cond: TriMatrix, n_cap: int | None = None) -> CycleReport:
    """Check ``T_ni Q_ij T_jk Q_kn = T_nk Q_kj T_ji Q_in`` on all admissible quadruples.

    Admissible means ``i <= j``, ``i <= n <= j`` and all indices ``<= n_cap``.
    Both products are also evaluated in the order that starts from ``Q``; the
    two orderings agree as real numbers and differ only in rounding.
    Quadruples are reported as ``(n, k, i, j)``.
    """
    _check_lower(thinning)
    _check_upper(cond)
    _check_dims(thinning, cond)
    c = thinning.n_max if n_cap is None else int(n_cap)
    if not 0 <= c <= thinning.n_max:
        raise ValueError(f"n_cap must lie in [0, {thinning.n_max}]")
    t = thinning.entries[: c + 1, : c + 1]
    q = cond.entries[: c + 1, : c + 1]
    idx = np.arange(c + 1)
    best6 = (0.0, (0, 0, 0, 0))
    best7 = (0.0, (0, 0, 0, 0))
    # axes: (k, i, j)
    i_le_j = idx[None, :, None] <= idx[None, None, :]
    for n in range(c + 1):
        mask = i_le_j & (idx[None, :, None] <= n) & (idx[None, None, :] >= n)
        t_ni = t[n][None, :, None]
        q_ij = q[None, :, :]
        t_jk = t.T[:, None, :]
        q_kn = q[:, n][:, None, None]
        t_nk = t[n][:, None, None]
        q_kj = q[:, None, :]
        t_ji = t.T[None, :, :]
        q_in = q[:, n][None, :, None]
        d6 = np.abs(t_ni * q_ij * t_jk * q_kn - t_nk * q_kj * t_ji * q_in)
        d7 = np.abs(q_ij * t_jk * q_kn * t_ni - q_in * t_nk * q_kj * t_ji)
        d6 = np.where(mask, d6, 0.0)
        d7 = np.where(mask, d7, 0.0)
        for d, best, name in ((d6, best6, 6), (d7, best7, 7)):
            a = int(np.argmax(d))
            v = float(d.flat[a])
            if v > best[0]:
                k, i, j = np.unravel_index(a, d.shape)
                if name == 6:
                    best6 = (v, (n, int(k), int(i), int(j)))
                else:
                    best7 = (v, (n, int(k), int(i), int(j)))
    return CycleReport(best6[0], best7[0], best6[1], best7[1], c)


@dataclass(frozen=True)
class Reconstruction:
    """Result of recovering a law from a thinning/condensation pair.

    ``measure`` has ``measure[0] == 1``.  ``cutoff`` is the end of the support
    (``None`` if the support runs past the window).  ``finite`` is exact when
    a cutoff was found and a heuristic otherwise (``window_limited``), based
    on the log-log decay exponent ``decay_exponent`` of the last half window.
    """

    measure: TruncatedPmf
    log_weights: np.ndarray
    finite: bool
    window_limited: bool
    normalized: TruncatedPmf | None
    cutoff: int | None
    decay_exponent: float
    tail_estimate: float
    cycle: CycleReport
    balance_residual: float | None = None
    balanced: bool | None = None
    notes: list = field(default_factory=list)


def _support_cutoff(cond: TriMatrix) -> int | None:
    sup = np.diagonal(cond.entries, 1)
    zero = np.flatnonzero(sup == 0)
    return int(zero[0]) if zero.size else None


def reconstruct(
    thinning: TriMatrix,
    cond: TriMatrix,
    n_max: int | None = None,
    cycle_tol: float = CYCLE_TOL,
    cycle_cap: int = CYCLE_CAP,
    balance_tol: float = BALANCE_TOL,
    mass_cap: float = 1e12,
    require_positive: bool = True,
) -> Reconstruction:
    """Recover ``nu`` (up to scale) from ``T`` and ``Q`` by the birth-death recursion.

    ``nu_0 = 1`` and ``nu_n = nu_{n-1} * T[n-1,n-1]/T[n,n-1] * Q[n-1,n]/Q[n-1,n-1]``
    up to the first ``n`` with ``Q[n, n+1] = 0``.  Products are accumulated in
    log space.  The cycle condition is checked first on indices up to
    ``cycle_cap`` and a violation above ``cycle_tol`` is rejected.

    The recovery is only guaranteed for thinnings that are positive on the
    lower triangle; ``require_positive=False`` skips that check and relies on
    the diagonal and subdiagonal alone.
    """
    _check_lower(thinning)
    _check_upper(cond)
    _check_dims(thinning, cond)
    N = thinning.n_max if n_max is None else int(n_max)
    if N > thinning.n_max:
        raise DimensionError(f"n_max {N} exceeds matrix window {thinning.n_max}")
    if N < thinning.n_max:
        thinning = TriMatrix(thinning.entries[: N + 1, : N + 1], "lower", row_tol=np.inf)
        cond = TriMatrix(cond.entries[: N + 1, : N + 1], "upper", row_tol=np.inf)
    if require_positive and not thinning.is_positive():
        raise PreconditionError("thinning matrix is not positive on its lower triangle")

    cycle = verify_cycle(thinning, cond, min(cycle_cap, N))
    if cycle.violation > cycle_tol:
        raise CycleConditionError(
            f"cycle condition violated by {cycle.violation:.3g} at (n,k,i,j)={cycle.where}",
            cycle.violation,
            cycle.where,
        )

    n0 = _support_cutoff(cond)
    top = N if n0 is None else n0
    t, q = thinning.entries, cond.entries
    logw = np.full(N + 1, -np.inf)
    logw[0] = 0.0
    for n in range(1, top + 1):
        if not t[n, n - 1] > 0:
            raise PreconditionError(f"T[{n},{n - 1}] = 0 below the support cutoff", where=n)
        if not (t[n - 1, n - 1] > 0 and q[n - 1, n - 1] > 0):
            raise DegenerateError(f"zero diagonal entry at {n - 1}", where=n - 1)
        logw[n] = (
            logw[n - 1]
            + np.log(t[n - 1, n - 1]) - np.log(t[n, n - 1])
            + np.log(q[n - 1, n]) - np.log(q[n - 1, n - 1])
        )
    if np.max(logw) > 700:
        raise DegenerateError("reconstructed measure overflows the window; it is not finite")
    w = np.exp(logw)
    measure = TruncatedPmf(w, tail_bound=0.0, normalized=False)
    total = float(w.sum())

    notes = []
    if n0 is not None:
        window_limited = False
        finite = True
        slope = np.inf
        tail = 0.0
    else:
        window_limited = True
        half = max(N // 2, 0)
        if N >= 2 and np.isfinite(logw[half]) and logw[N] > -np.inf:
            slope = float(-(logw[N] - logw[half]) / (np.log(N + 1) - np.log(half + 1)))
        else:
            slope = np.inf
        finite = bool(slope > 1 + 1e-6 and total < mass_cap)
        tail = float((N + 1) * w[N] / (slope - 1)) if finite and np.isfinite(slope) else (
            0.0 if finite else np.inf
        )
        notes.append("finiteness verdict is window-limited (decay heuristic)")

    normalized = None
    bal = None
    balanced = None
    if finite:
        normalized = TruncatedPmf(np.exp(logw - logsumexp(logw)), 0.0, True)
        marg = thin(normalized, thinning).weights
        Qr = cond.renormalized().entries
        live = marg > 0
        lhs = marg[:, None] * Qr
        rhs = (normalized.weights[:, None] * thinning.entries).T
        bal = float(np.max(np.abs(lhs - rhs)[live])) if live.any() else 0.0
        balanced = bal <= balance_tol
    return Reconstruction(
        measure=measure,
        log_weights=_frozen(logw),
        finite=finite,
        window_limited=window_limited,
        normalized=normalized,
        cutoff=n0,
        decay_exponent=slope,
        tail_estimate=tail,
        cycle=cycle,
        balance_residual=bal,
        balanced=balanced,
        notes=notes,
    )


def invariant_residual(
    law: TruncatedPmf, thinning: TriMatrix, cond: TriMatrix, truncation_tol: float = TRUNCATION_TOL
) -> float:
    """``max_n |nu_n - (nu T Q)_n|`` over indices untouched by truncation.

    Row deficits of ``Q`` make ``(nu T Q)_n`` fall short by
    ``nu_n * (T @ deficit)_n``; indices where that shortfall exceeds
    ``truncation_tol`` are excluded.
    """
    _check_lower(thinning)
    _check_upper(cond)
    _check_dims(law, thinning, cond)
    w = law.weights
    image = (w @ thinning.entries) @ cond.entries
    shortfall = w * (thinning.entries @ cond.row_deficit)
    mask = shortfall <= truncation_tol
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(w - image)[mask]))


def row_sums(M: TriMatrix) -> np.ndarray:
    return M.entries.sum(axis=1)


__all__: Sequence[str] = [
    "TruncatedPmf",
    "TriMatrix",
    "SplitView",
    "PapangelouSeq",
    "CycleReport",
    "Reconstruction",
    "thin",
    "condense",
    "balance_residual",
    "splitting_of",
    "split_expectation",
    "death_ratios",
    "papangelou_fn",
    "detailed_balance_residual",
    "verify_ibp",
    "verify_cycle",
    "reconstruct",
    "invariant_residual",
]
