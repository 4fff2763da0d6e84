"""Distance structures and optimal pair matching.

Bipartite designs pair each treated unit with one control by solving a
min-cost assignment problem exactly (shortest augmenting paths with dual
potentials). Calipers mark arcs infeasible rather than expensive.
Nonbipartite nearfar matching pairs units regardless of treatment, near in
covariates and far apart in an instrument.

Tie-break: among assignments of equal total cost the solver returns the one
whose row-to-column vector is lexicographically smallest, rows being treated
units in index order (controls when the problem is transposed).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Sequence

import numba
import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist

from .data import format_float, read_table, write_table, _parse_column
from .errors import (
    DataError,
    Infeasible,
    MissingColumn,
    MissingInstrument,
    NoControls,
    NoTreated,
    SingularCovariance,
    TooFewUnits,
)
from .score import ScoredDataset

MODES = ("require-all-treated", "max-cardinality")
METRICS = ("mahalanobis", "propensity-absdiff")
EXACT_NONBIPARTITE_MAX = 18


@dataclass(frozen=True)
class DistanceSpec:
    metric: str = "mahalanobis"
    covariate_subset: tuple | None = None
    propensity_caliper: float | None = None
    prognostic_caliper: float | None = None
    ridge_epsilon: float = 1e-8
    caliper_scale: str = "probability"

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.caliper_scale not in ("probability", "linear"):
            raise ValueError(f"unknown caliper scale {self.caliper_scale!r}")
        if self.covariate_subset is not None:
            object.__setattr__(self, "covariate_subset", tuple(self.covariate_subset))
            if self.metric == "mahalanobis" and not self.covariate_subset:
                raise ValueError("mahalanobis distance needs at least one covariate")
        for name in ("propensity_caliper", "prognostic_caliper"):
            v = getattr(self, name)
            if v is not None and not v >= 0:
                raise ValueError(f"{name} must be >= 0")
        if self.ridge_epsilon < 0:
            raise ValueError("ridge_epsilon must be >= 0")


@dataclass(frozen=True)
class NearfarSpec:
    near_metric: DistanceSpec = field(default_factory=DistanceSpec)
    iv_caliper: float = 1.0
    penalty: float = 1.0
    sink_fraction: float = 0.0
    exact_max_units: int = EXACT_NONBIPARTITE_MAX

    def __post_init__(self):
        if not self.iv_caliper > 0:
            raise ValueError("iv_caliper must be > 0")
        if not self.penalty >= 0:
            raise ValueError("penalty must be >= 0")
        if not 0.0 <= self.sink_fraction < 1.0:
            raise ValueError("sink_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class DistanceMatrix:
    """Treated-by-control distances; ``inf`` marks an infeasible arc."""

    values: np.ndarray
    treated: np.ndarray
    control: np.ndarray
    spec: DistanceSpec | None = None

    @property
    def feasible(self) -> np.ndarray:
        return np.isfinite(self.values)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class Matching:
    """Pairs of row positions plus per-pair distances.

    Bipartite pairs are ``(treated, control)``; nonbipartite pairs are
    ``(a, b)`` with ``a < b``. ``dropped`` lists unmatched treated units
    (bipartite) or units paired with a sink (nonbipartite).
    """

    pairs: np.ndarray
    pair_distances: np.ndarray
    total_distance: float
    dropped: np.ndarray
    design: dict
    bipartite: bool = True
    components: dict = field(default_factory=dict)

    @property
    def n_pairs(self) -> int:
        return int(self.pairs.shape[0])

    def units(self) -> np.ndarray:
        return self.pairs.ravel()


def _matching(pairs, dists, dropped, design, bipartite=True, components=None) -> Matching:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    dists = np.asarray(dists, dtype=float)
    order = np.lexsort((pairs[:, 1], pairs[:, 0])) if len(pairs) else np.arange(0)
    comps = {k: np.asarray(v, dtype=float)[order] for k, v in (components or {}).items()}
    return Matching(
        pairs[order],
        dists[order],
        math.fsum(dists.tolist()),
        np.sort(np.asarray(dropped, dtype=np.int64)),
        design,
        bipartite,
        comps,
    )


# ---------------------------------------------------------------------------
# distances


def mahalanobis_distance(Xa, Xb, cov) -> np.ndarray:
    """Pairwise sqrt((a - b)' cov^-1 (a - b)) between rows of Xa and Xb."""
    Xa = np.atleast_2d(np.asarray(Xa, dtype=float))
    Xb = np.atleast_2d(np.asarray(Xb, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularCovariance("covariance matrix is not positive definite") from None
    Wa = solve_triangular(L, Xa.T, lower=True).T
    Wb = solve_triangular(L, Xb.T, lower=True).T
    return cdist(Wa, Wb)


def _covariates(scored: ScoredDataset, spec: DistanceSpec) -> np.ndarray:
    names = scored.data.covariate_names
    if spec.covariate_subset is None:
        cols = list(range(len(names)))
    else:
        cols = []
        for c in spec.covariate_subset:
            if c not in names:
                raise MissingColumn(f"no covariate named {c!r}")
            cols.append(names.index(c))
    if not cols:
        raise DataError("mahalanobis distance needs at least one covariate")
    return scored.X[:, cols]


def pooled_covariance(X: np.ndarray, ridge_epsilon: float) -> np.ndarray:
    k = X.shape[1]
    S = np.atleast_2d(np.cov(X, rowvar=False)) if X.shape[0] > 1 else np.zeros((k, k))
    S = S + ridge_epsilon * np.eye(k)
    if ridge_epsilon == 0 and np.linalg.matrix_rank(S) < k:
        raise SingularCovariance("pooled covariance is singular; set ridge_epsilon > 0")
    return S


def _groups(scored: ScoredDataset):
    treated = np.flatnonzero(scored.T == 1)
    control = np.flatnonzero(scored.T == 0)
    if treated.size == 0:
        raise NoTreated("no treated units")
    if control.size == 0:
        raise NoControls("no control units")
    return treated, control


def mahalanobis_matrix(scored: ScoredDataset, spec: DistanceSpec) -> DistanceMatrix:
    """Treated x control Mahalanobis distances, covariance pooled over all units."""
    treated, control = _groups(scored)
    X = _covariates(scored, spec)
    S = pooled_covariance(X, spec.ridge_epsilon)
    d = mahalanobis_distance(X[treated], X[control], S)
    return DistanceMatrix(d, treated, control, spec)


def propensity_matrix(scored: ScoredDataset, spec: DistanceSpec) -> DistanceMatrix:
    treated, control = _groups(scored)
    e = scored.propensity_on(spec.caliper_scale)
    d = np.abs(e[treated][:, None] - e[control][None, :])
    return DistanceMatrix(d, treated, control, spec)


def score_space_matrix(scored: ScoredDataset, ridge_epsilon: float = 1e-8) -> DistanceMatrix:
    """Mahalanobis distances in assignment-control space.

    Units are compared on (propensity linear predictor, prognostic score), so
    a zero distance means identical scores on both axes.
    """
    treated, control = _groups(scored)
    A = np.column_stack([scored.propensity_lp, scored.prognostic])
    S = pooled_covariance(A, ridge_epsilon)
    return DistanceMatrix(mahalanobis_distance(A[treated], A[control], S), treated, control, None)


def apply_calipers(matrix: DistanceMatrix, scored: ScoredDataset, spec: DistanceSpec) -> DistanceMatrix:
    """Mark arcs whose score gaps exceed the active calipers as infeasible."""
    values = np.array(matrix.values, dtype=float, copy=True)
    t, c = matrix.treated, matrix.control
    if spec.propensity_caliper is not None:
        e = scored.propensity_on(spec.caliper_scale)
        values[np.abs(e[t][:, None] - e[c][None, :]) > spec.propensity_caliper] = np.inf
    if spec.prognostic_caliper is not None:
        psi = scored.prognostic
        values[np.abs(psi[t][:, None] - psi[c][None, :]) > spec.prognostic_caliper] = np.inf
    return DistanceMatrix(values, t, c, spec)


def distance_matrix(scored: ScoredDataset, spec: DistanceSpec) -> DistanceMatrix:
    """Base distances for ``spec.metric`` with its calipers applied."""
    if spec.metric == "mahalanobis":
        base = mahalanobis_matrix(scored, spec)
    else:
        base = propensity_matrix(scored, spec)
    if spec.propensity_caliper is None and spec.prognostic_caliper is None:
        return base
    return apply_calipers(base, scored, spec)


# ---------------------------------------------------------------------------
# assignment solver


@numba.njit(cache=True)
def _assign_kernel(a):
    # Shortest augmenting paths with potentials (Hungarian / SSP), n <= m.
    # Columns and rows are 1-based internally; column 0 is the path root.
    n, m = a.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    minv = np.empty(m + 1)
    used = np.zeros(m + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv[:] = np.inf
        used[:] = False
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = -1
            for j in range(1, m + 1):
                if not used[j]:
                    cur = a[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            if j1 < 0 or delta == np.inf:
                return p, u, v, False
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    return p, u, v, True


def _lex_refine(cost, col, u, v, tol):
    """Move to the lexicographically smallest optimal assignment.

    Uses the optimal duals: an assignment is optimal iff it only uses tight
    arcs and leaves free only columns with zero potential. Row i (in order)
    is moved to the smallest tight column reachable by a zero-cost
    alternating path through rows > i.
    """
    n, m = cost.shape
    owner = np.full(m, -1, dtype=np.int64)
    owner[col] = np.arange(n)
    tight_cache: dict[int, np.ndarray] = {}

    def tight(r):
        t = tight_cache.get(r)
        if t is None:
            t = np.flatnonzero(cost[r] - u[r] - v <= tol)
            tight_cache[r] = t
        return t

    for i in range(n):
        cur = col[i]
        cands = tight(i)
        cands = cands[cands < cur]
        if cands.size == 0:
            continue
        for j in cands.tolist():
            r0 = owner[j]
            if r0 == -1:
                if v[cur] >= -tol:
                    owner[cur] = -1
                    col[i] = j
                    owner[j] = i
                    break
                continue
            if r0 < i:
                continue
            parent = {r0: -1}
            queue = [r0]
            seen_cols = {j}
            found = None
            while queue and found is None:
                x = queue.pop(0)
                for c in tight(x).tolist():
                    if c in seen_cols or c == col[x]:
                        continue
                    if c == cur:
                        found = (x, c)
                        break
                    o = owner[c]
                    if o == -1:
                        if v[cur] >= -tol:
                            found = (x, c)
                            break
                        continue
                    if o <= i or o in parent:
                        continue
                    seen_cols.add(c)
                    parent[o] = x
                    queue.append(o)
            if found is None:
                continue
            y, take = found
            if owner[take] == -1:
                owner[cur] = -1
            while True:
                old = col[y]
                col[y] = take
                owner[take] = y
                if y == r0:
                    break
                take = old
                y = parent[y]
            col[i] = j
            owner[j] = i
            break
    return col


def solve_assignment(cost: np.ndarray, tie_break: bool = True):
    """Min-cost assignment of every row of ``cost`` (rows <= columns).

    ``inf`` entries are forbidden. Returns the column of each row, or raises
    :class:`Infeasible` when no complete assignment exists.
    """
    cost = np.ascontiguousarray(cost, dtype=float)
    n, m = cost.shape
    if n > m:
        raise Infeasible(f"{n} rows cannot be assigned to {m} columns")
    if n == 0:
        return np.empty(0, dtype=np.int64)
    if not np.all(np.isfinite(cost).any(axis=1)):
        raise Infeasible("some row has no feasible column")
    p, u, v, ok = _assign_kernel(cost)
    if not ok:
        raise Infeasible("no assignment covers every row")
    col = np.empty(n, dtype=np.int64)
    rows = p[1:]
    matched = np.flatnonzero(rows)
    col[rows[matched] - 1] = matched
    if tie_break:
        finite = cost[np.isfinite(cost)]
        scale = max(1.0, float(np.max(np.abs(finite)))) if finite.size else 1.0
        col = _lex_refine(cost, col, u[1:], v[1:], 1e-11 * scale)
    return col


def optimal_bipartite_match(
    matrix,
    mode: str = "require-all-treated",
    tie_break: bool = True,
) -> Matching:
    """Optimal 1:1 treated-control matching on a (caliper-masked) matrix.

    ``require-all-treated`` matches every treated unit or raises
    :class:`Infeasible`. ``max-cardinality`` first maximizes the number of
    feasible pairs, then minimizes total distance among such matchings.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if isinstance(matrix, DistanceMatrix):
        values, treated, control, spec = matrix.values, matrix.treated, matrix.control, matrix.spec
    else:
        values = np.asarray(matrix, dtype=float)
        treated, control, spec = np.arange(values.shape[0]), np.arange(values.shape[1]), None
    if values.ndim != 2 or values.size == 0:
        raise DataError("distance matrix must be a nonempty 2-d array")
    if np.any(np.isnan(values)) or np.any(values < 0):
        raise DataError("distances must be nonnegative numbers")
    nt, nc = values.shape
    feasible = np.isfinite(values)
    design = {"solver": "shortest-augmenting-path", "mode": mode, "tie_break": "lexicographic"}
    if spec is not None:
        design["distance"] = asdict(spec)

    if mode == "require-all-treated":
        if nt > nc:
            raise Infeasible(f"{nt} treated units but only {nc} controls")
        col = solve_assignment(values, tie_break)
        rows = np.arange(nt)
    else:
        big_base = float(values[feasible].max()) if feasible.any() else 0.0
        big = (min(nt, nc) + 1) * (big_base + 1.0)
        cost = np.where(feasible, values, big)
        transposed = nt > nc
        if transposed:
            rows_ctrl = np.arange(nc)
            col_t = solve_assignment(cost.T, tie_break)
            rows, col = col_t, rows_ctrl
        else:
            col = solve_assignment(cost, tie_break)
            rows = np.arange(nt)
        keep = feasible[rows, col]
        rows, col = rows[keep], col[keep]
        design["transposed"] = bool(transposed)

    pairs = np.column_stack([treated[rows], control[col]])
    dists = values[rows, col]
    matched = np.zeros(nt, dtype=bool)
    matched[rows] = True
    return _matching(pairs, dists, treated[~matched], design)


# ---------------------------------------------------------------------------
# nonbipartite matching


def _count_sinks(n: int, sink_fraction: float) -> int:
    k = int(math.ceil(round(sink_fraction * n, 9)))
    if (n - k) % 2:
        k += 1
    return k


def _exact_nonbipartite(cost: np.ndarray, n_drop: int):
    n = cost.shape[0]
    c = cost.tolist()
    inf = math.inf

    @lru_cache(maxsize=None)
    def best(mask: int, drops: int):
        if mask == 0:
            return (0.0, None) if drops == 0 else (inf, None)
        remaining = bin(mask).count("1")
        if remaining < drops or (remaining - drops) % 2:
            return (inf, None)
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        top, choice = inf, None
        m = rest
        while m:
            jb = m & -m
            j = jb.bit_length() - 1
            m ^= jb
            sub = best(rest & ~jb, drops)[0]
            val = c[i][j] + sub
            if val < top - 1e-12 * max(1.0, abs(top) if top < inf else 1.0):
                top, choice = val, j
        if drops:
            val = best(rest, drops - 1)[0]
            if val < top - 1e-12 * max(1.0, abs(top) if top < inf else 1.0):
                top, choice = val, -1
        return (top, choice)

    full = (1 << n) - 1
    total, _ = best(full, n_drop)
    if total == inf:
        raise Infeasible("no nonbipartite matching exists")
    pairs, dropped = [], []
    mask, drops = full, n_drop
    while mask:
        i = (mask & -mask).bit_length() - 1
        _, choice = best(mask, drops)
        if choice == -1:
            dropped.append(i)
            mask &= ~(1 << i)
            drops -= 1
        else:
            pairs.append((i, choice))
            mask &= ~((1 << i) | (1 << choice))
    best.cache_clear()
    return pairs, dropped


def _greedy_nonbipartite(cost: np.ndarray, n_drop: int, max_sweeps: int = 200):
    n = cost.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    w = cost[iu, ju]
    order = np.lexsort((ju, iu, w))
    target = (n - n_drop) // 2
    free = np.ones(n, dtype=bool)
    A, B = [], []
    for k in order.tolist():
        a, b = int(iu[k]), int(ju[k])
        if free[a] and free[b]:
            free[a] = free[b] = False
            A.append(a)
            B.append(b)
            if len(A) == target:
                break
    A = np.array(A, dtype=np.int64)
    B = np.array(B, dtype=np.int64)
    D = np.flatnonzero(free)
    # local search: re-pair two pairs, or swap a paired unit with a dropped one
    for _ in range(max_sweeps):
        improved = False
        for k in range(A.size):
            a, b = A[k], B[k]
            cur = cost[a, b] + cost[A, B]
            alt1 = cost[a, A] + cost[b, B]
            alt2 = cost[a, B] + cost[b, A]
            gain1, gain2 = cur - alt1, cur - alt2
            gain1[k] = gain2[k] = 0.0
            l1, l2 = int(np.argmax(gain1)), int(np.argmax(gain2))
            tol = 1e-12 * max(1.0, float(cur[k]))
            if max(gain1[l1], gain2[l2]) > tol:
                if gain1[l1] >= gain2[l2]:
                    A[k], B[k], A[l1], B[l1] = a, A[l1], b, B[l1]
                else:
                    A[k], B[k], A[l2], B[l2] = a, B[l2], b, A[l2]
                improved = True
                continue
            if D.size:
                base = cost[a, b]
                ga = base - cost[D, b]
                gb = base - cost[a, D]
                da, db = int(np.argmax(ga)), int(np.argmax(gb))
                if max(ga[da], gb[db]) > 1e-12 * max(1.0, base):
                    if ga[da] >= gb[db]:
                        A[k], D[da] = D[da], a
                    else:
                        B[k], D[db] = D[db], b
                    improved = True
        if not improved:
            break
    pairs = [(int(min(a, b)), int(max(a, b))) for a, b in zip(A, B)]
    return pairs, sorted(D.tolist())


def nonbipartite_match(cost: np.ndarray, n_drop: int = 0, exact_max_units: int = EXACT_NONBIPARTITE_MAX):
    """Minimum-cost pairing of all but ``n_drop`` units under a symmetric cost.

    Exact (subset dynamic program) up to ``exact_max_units`` units, greedy
    edge insertion with pairwise-exchange local search above that. Among
    equal-cost optima the exact solver pairs the lowest-indexed unit with its
    lowest-indexed admissible partner, recursively, preferring pairing over
    dropping.
    """
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0]
    if (n - n_drop) % 2 or n_drop < 0 or n - n_drop < 0:
        raise ValueError(f"cannot drop {n_drop} of {n} units and pair the rest")
    if n <= exact_max_units:
        pairs, dropped = _exact_nonbipartite(cost, n_drop)
        method = "exact-subset-dp"
    else:
        pairs, dropped = _greedy_nonbipartite(cost, n_drop)
        method = "greedy-edge-insertion+pair-exchange (heuristic)"
    return pairs, dropped, method


def nearfar_costs(scored: ScoredDataset, spec: NearfarSpec, near: np.ndarray | None = None):
    if scored.Z is None:
        raise MissingInstrument("nearfar matching needs an instrument column")
    n = scored.n
    if n < 2:
        raise TooFewUnits("nearfar matching needs at least 2 units")
    if near is None:
        metric = spec.near_metric
        if metric.metric == "mahalanobis":
            X = _covariates(scored, metric)
            S = pooled_covariance(X, metric.ridge_epsilon)
            near = mahalanobis_distance(X, X, S)
        else:
            e = scored.propensity_on(metric.caliper_scale)
            near = np.abs(e[:, None] - e[None, :])
    near = np.asarray(near, dtype=float)
    if near.shape != (n, n):
        raise DataError(f"near-distance matrix has shape {near.shape}, expected {(n, n)}")
    off = near[~np.eye(n, dtype=bool)]
    near_max = float(off.max()) if off.size else 0.0
    penalty = float(spec.penalty)
    if 0 < penalty <= near_max:
        penalty = 2.0 * near_max
    z = np.asarray(scored.Z, dtype=float)
    shortfall = np.maximum(0.0, spec.iv_caliper - np.abs(z[:, None] - z[None, :]))
    return near, penalty * shortfall, penalty


def nearfar_match(scored: ScoredDataset, spec: NearfarSpec, near: np.ndarray | None = None) -> Matching:
    """Pair units near in covariates and at least ``iv_caliper`` apart in Z.

    Pair cost is ``near(i, j) + P * max(0, iv_caliper - |Z_i - Z_j|)``. When
    ``0 < P <= max near distance`` the penalty is raised to twice that
    maximum so a shortfall always outweighs covariate distance.
    """
    near, pen, p_eff = nearfar_costs(scored, spec, near)
    n = scored.n
    n_drop = _count_sinks(n, spec.sink_fraction)
    if n - n_drop < 2:
        raise TooFewUnits(f"{n} units leave no pairs after {n_drop} sinks")
    cost = near + pen
    pairs, dropped, method = nonbipartite_match(cost, n_drop, spec.exact_max_units)
    pairs_arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    a, b = pairs_arr[:, 0], pairs_arr[:, 1]
    design = {
        "solver": method,
        "nearfar": {
            "near_metric": asdict(spec.near_metric),
            "iv_caliper": spec.iv_caliper,
            "penalty": spec.penalty,
            "effective_penalty": p_eff,
            "sink_fraction": spec.sink_fraction,
            "sinks": n_drop,
        },
    }
    return _matching(
        pairs_arr,
        cost[a, b],
        dropped,
        design,
        bipartite=False,
        components={"near": near[a, b], "penalty": pen[a, b]},
    )


# ---------------------------------------------------------------------------
# serialization


def write_matching(matching: Matching, scored: ScoredDataset, path, sidecar=None) -> None:
    """CSV of pairs (source-row indices) plus a JSON sidecar with the design."""
    a, b = matching.pairs[:, 0], matching.pairs[:, 1]
    T = scored.T
    write_table(
        path,
        ["pair_id", "index_a", "index_b", "t_a", "t_b", "distance"],
        [
            [str(k) for k in range(matching.n_pairs)],
            [str(int(v)) for v in scored.index[a].tolist()],
            [str(int(v)) for v in scored.index[b].tolist()],
            [str(int(v)) for v in T[a].tolist()],
            [str(int(v)) for v in T[b].tolist()],
            [format_float(v) for v in matching.pair_distances.tolist()],
        ],
    )
    if sidecar is None:
        sidecar = str(path)[:-4] + ".json" if str(path).endswith(".csv") else str(path) + ".json"
    meta = {
        "bipartite": matching.bipartite,
        "n_pairs": matching.n_pairs,
        "total_distance": matching.total_distance,
        "dropped": [int(v) for v in scored.index[matching.dropped].tolist()],
        "design": matching.design,
    }
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def read_matching(path, scored: ScoredDataset, sidecar=None) -> Matching:
    header, cols = read_table(path)
    need = ["index_a", "index_b", "distance"]
    for h in need:
        if h not in header:
            raise MissingColumn(f"matching file lacks column {h!r}")
    pos = {int(r): k for k, r in enumerate(scored.index.tolist())}
    try:
        a = [pos[int(v)] for v in cols[header.index("index_a")]]
        b = [pos[int(v)] for v in cols[header.index("index_b")]]
    except (KeyError, ValueError) as exc:
        raise DataError(f"matching refers to a unit absent from the scored data: {exc}") from None
    dist = _parse_column(cols[header.index("distance")], "distance")
    if sidecar is None:
        sidecar = str(path)[:-4] + ".json" if str(path).endswith(".csv") else str(path) + ".json"
    meta = {}
    try:
        with open(sidecar, encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        pass
    bipartite = bool(meta.get("bipartite", True))
    dropped = [pos[int(v)] for v in meta.get("dropped", []) if int(v) in pos]
    return _matching(np.column_stack([a, b]) if a else np.empty((0, 2)), dist, dropped,
                     meta.get("design", {}), bipartite)


def check_calipers(matching: Matching, scored: ScoredDataset, spec: DistanceSpec) -> int:
    """Number of pairs violating the active calipers, recomputed from scores."""
    a, b = matching.pairs[:, 0], matching.pairs[:, 1]
    bad = np.zeros(matching.n_pairs, dtype=bool)
    if spec.propensity_caliper is not None:
        e = scored.propensity_on(spec.caliper_scale)
        bad |= np.abs(e[a] - e[b]) > spec.propensity_caliper
    if spec.prognostic_caliper is not None:
        bad |= np.abs(scored.prognostic[a] - scored.prognostic[b]) > spec.prognostic_caliper
    return int(bad.sum())


def match_scored(
    scored: ScoredDataset,
    spec: DistanceSpec,
    mode: str = "require-all-treated",
) -> Matching:
    """Distance matrix, calipers and optimal matching in one call."""
    return optimal_bipartite_match(distance_matrix(scored, spec), mode)


def design_spec(
    design: str,
    scored: ScoredDataset,
    propensity_caliper: float = 0.1,
    prognostic_caliper: float | None = None,
    covariates: Sequence[str] | None = None,
) -> DistanceSpec:
    """DistanceSpec for a named bipartite design.

    ``mahalanobis``, ``propensity``, ``caliper-propensity`` (Mahalanobis within
    a propensity caliper) and ``caliper-both`` (also a prognostic caliper,
    defaulting to 0.2 standard deviations of the prognostic score).
    """
    subset = tuple(covariates) if covariates else None
    if design == "mahalanobis":
        return DistanceSpec("mahalanobis", subset)
    if design == "propensity":
        return DistanceSpec("propensity-absdiff")
    if design == "caliper-propensity":
        return DistanceSpec("mahalanobis", subset, propensity_caliper=propensity_caliper)
    if design == "caliper-both":
        if prognostic_caliper is None:
            prognostic_caliper = 0.2 * float(np.std(scored.prognostic, ddof=1))
        return DistanceSpec(
            "mahalanobis",
            subset,
            propensity_caliper=propensity_caliper,
            prognostic_caliper=prognostic_caliper,
        )
    raise ValueError(f"unknown design {design!r}")


BIPARTITE_DESIGNS = ("mahalanobis", "propensity", "caliper-propensity", "caliper-both")
