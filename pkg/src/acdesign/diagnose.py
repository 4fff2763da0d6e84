"""Balance, overlap, assignment-control geometry and effect diagnostics.

All functions are pure: they read scores, outcomes and matchings and return
plain dataclasses that serialize to JSON or CSV.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, format_float, write_table
from .errors import DataError, EmptyGroup, MissingMatching, MissingOutcome, MissingTruth
from .match import Matching
from .score import ScoredDataset
from .simulate import SimTruth

PROJECTIONS = ("assignment-control", "control-iv", "assignment-iv")


# ---------------------------------------------------------------------------
# standardized mean differences


@dataclass(frozen=True)
class SmdRow:
    name: str
    smd_unadjusted: float
    smd_adjusted: float | None
    denominator: float
    zero_variance: bool = False


@dataclass(frozen=True)
class SmdTable:
    rows: tuple

    @property
    def names(self) -> list[str]:
        return [r.name for r in self.rows]

    @property
    def unadjusted(self) -> np.ndarray:
        return np.array([r.smd_unadjusted for r in self.rows])

    @property
    def adjusted(self) -> np.ndarray | None:
        if not self.rows or self.rows[0].smd_adjusted is None:
            return None
        return np.array([r.smd_adjusted for r in self.rows])

    @property
    def has_adjusted(self) -> bool:
        return self.adjusted is not None

    def row(self, name: str) -> SmdRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> list[dict]:
        return [
            {
                "name": r.name,
                "smd_unadjusted": _num(r.smd_unadjusted),
                "smd_adjusted": _num(r.smd_adjusted),
                "denominator": _num(r.denominator),
                "zero_variance": r.zero_variance,
            }
            for r in self.rows
        ]


def _var(x: np.ndarray) -> np.ndarray:
    return x.var(axis=0, ddof=1) if x.shape[0] > 1 else np.zeros(x.shape[1])


def _weighted_mean(X: np.ndarray, w: np.ndarray) -> np.ndarray:
    total = w.sum()
    if total <= 0:
        raise EmptyGroup("adjusted group has no weight")
    return (w[:, None] * X).sum(axis=0) / total


def smd(source, matching: Matching | None = None, weights=None, covariates=None) -> SmdTable:
    """Standardized mean differences, treated minus control.

    The denominator sqrt((s_t^2 + s_c^2) / 2) uses sample variances of the
    unadjusted groups and is reused for the adjusted column, which weights
    each unit by how often it appears in ``matching`` (or by ``weights``).
    A covariate with zero pooled variance reports 0 and sets the flag.
    """
    data: Dataset = source.data if isinstance(source, ScoredDataset) else source
    X = data.X
    T = data.T
    names = list(data.covariate_names)
    if covariates is not None:
        cols = [names.index(c) for c in covariates]
        X, names = X[:, cols], [names[c] for c in cols]
    t, c = T == 1, T == 0
    if not t.any():
        raise EmptyGroup("no treated units")
    if not c.any():
        raise EmptyGroup("no control units")
    denom = np.sqrt((_var(X[t]) + _var(X[c])) / 2.0)
    diff = X[t].mean(axis=0) - X[c].mean(axis=0)

    if matching is not None and weights is not None:
        raise ValueError("pass a matching or weights, not both")
    adj = None
    if matching is not None:
        weights = np.bincount(matching.units(), minlength=data.n).astype(float)
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        if w.shape != (data.n,) or np.any(w < 0):
            raise DataError("weights must be a nonnegative vector with one entry per unit")
        adj = _weighted_mean(X[t], w[t]) - _weighted_mean(X[c], w[c])

    rows = []
    for k, name in enumerate(names):
        zero = not denom[k] > 0
        s_u = 0.0 if zero else float(diff[k] / denom[k])
        s_a = None
        if adj is not None:
            s_a = 0.0 if zero else float(adj[k] / denom[k])
        rows.append(SmdRow(name, s_u, s_a, float(denom[k]), zero))
    return SmdTable(tuple(rows))


# ---------------------------------------------------------------------------
# propensity overlap


@dataclass(frozen=True)
class OverlapHistogram:
    edges: np.ndarray
    density_treated: np.ndarray
    density_control: np.ndarray
    overlap: float
    scale: str = "probability"

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "edges": [_num(v) for v in self.edges],
            "density_treated": [_num(v) for v in self.density_treated],
            "density_control": [_num(v) for v in self.density_control],
            "overlap_coefficient": _num(self.overlap),
        }


def _density(x: np.ndarray, edges: np.ndarray) -> np.ndarray:
    counts, _ = np.histogram(x, bins=edges)
    return counts / (x.size * (edges[1] - edges[0]))


def overlap_histogram(scored: ScoredDataset, bins: int = 20, scale: str = "probability") -> OverlapHistogram:
    """Per-group densities of the propensity score on equal-width bins.

    Bins span [0, 1] on the probability scale and the observed range on the
    linear-predictor scale. The overlap coefficient is sum(min(f_t, f_c)) * width.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    e = scored.propensity_on(scale)
    T = scored.T
    et, ec = e[T == 1], e[T == 0]
    if et.size == 0 or ec.size == 0:
        raise EmptyGroup("overlap needs treated and control units")
    if scale == "probability":
        lo, hi = 0.0, 1.0
    else:
        lo, hi = float(e.min()), float(e.max())
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    ft, fc = _density(et, edges), _density(ec, edges)
    ov = float(np.minimum(ft, fc).sum() * (edges[1] - edges[0]))
    return OverlapHistogram(edges, ft, fc, min(ov, 1.0), scale)


# ---------------------------------------------------------------------------
# assignment-control geometry


@dataclass(frozen=True)
class AcPlotData:
    """Points (one per analysis unit) and match segments in one projection.

    ``pairs`` holds row positions into the point arrays; for bipartite
    matchings the first column is the treated unit.
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    pairs: np.ndarray
    x_label: str
    y_label: str
    provenance: str
    projection: str = "assignment-control"
    units: np.ndarray = field(default=None)
    bipartite: bool = True

    @property
    def n_points(self) -> int:
        return int(self.x.size)

    @property
    def n_segments(self) -> int:
        return int(self.pairs.shape[0])

    def segments(self) -> np.ndarray:
        """(K, 4) array of x_a, y_a, x_b, y_b."""
        a, b = self.pairs[:, 0], self.pairs[:, 1]
        return np.column_stack([self.x[a], self.y[a], self.x[b], self.y[b]])

    def with_pairs(self, pairs) -> "AcPlotData":
        return AcPlotData(self.x, self.y, self.t, np.asarray(pairs, dtype=np.int64).reshape(-1, 2),
                          self.x_label, self.y_label, self.provenance, self.projection,
                          self.units, self.bipartite)

    def to_dict(self) -> dict:
        return {
            "projection": self.projection,
            "provenance": self.provenance,
            "x_label": self.x_label,
            "y_label": self.y_label,
            "n_points": self.n_points,
            "n_segments": self.n_segments,
        }


def _axis_values(scored, truth, axes, which, assignment, scale):
    idx = scored.index
    if which == "iv":
        if scored.Z is None:
            raise DataError("projection needs an instrument column")
        return np.asarray(scored.Z, dtype=float), "instrument Z"
    if axes == "fitted":
        if which == "assignment":
            label = "propensity score" if scale == "probability" else "propensity linear predictor"
            return scored.propensity_on(scale), label
        return scored.prognostic, "prognostic score"
    if which == "assignment":
        phi = truth.phi_confounding if assignment == "confounding" else truth.phi
        return phi[idx], "true assignment score"
    return truth.psi[idx], "true prognostic score"


def ac_plot_data(
    scored: ScoredDataset,
    matching: Matching | None = None,
    truth: SimTruth | None = None,
    axes: str = "fitted",
    project: str = "assignment-control",
    segments: bool | None = None,
    assignment: str = "full",
    scale: str = "probability",
) -> AcPlotData:
    """Points and segments for an assignment-control style plot.

    Prognosis runs along x and assignment along y (so propensity level sets
    are horizontal bands). ``project`` picks the pair of axes:
    assignment-control (x=prognostic, y=assignment), control-iv
    (x=prognostic, y=Z) or assignment-iv (x=Z, y=assignment).
    ``axes="true"`` uses the simulated phi and psi including confounder and
    instrument terms; ``assignment="confounding"`` drops the instrument term
    from phi.
    """
    if axes not in ("fitted", "true"):
        raise ValueError(f"unknown axes {axes!r}")
    if project not in PROJECTIONS:
        raise ValueError(f"unknown projection {project!r}")
    if assignment not in ("full", "confounding"):
        raise ValueError(f"unknown assignment axis {assignment!r}")
    if axes == "true" and truth is None:
        raise MissingTruth("true axes need simulation truth")
    if segments and matching is None:
        raise MissingMatching("segments requested without a matching")
    xw, yw = {
        "assignment-control": ("prognostic", "assignment"),
        "control-iv": ("prognostic", "iv"),
        "assignment-iv": ("iv", "assignment"),
    }[project]
    x, xl = _axis_values(scored, truth, axes, xw, assignment, scale)
    y, yl = _axis_values(scored, truth, axes, yw, assignment, scale)
    use = matching is not None if segments is None else segments
    pairs = matching.pairs if use else np.empty((0, 2), dtype=np.int64)
    if pairs.size and pairs.max() >= scored.n:
        raise DataError("matching refers to rows outside the scored data")
    return AcPlotData(
        np.asarray(x, dtype=float),
        np.asarray(y, dtype=float),
        np.asarray(scored.T, dtype=np.int8),
        np.asarray(pairs, dtype=np.int64).reshape(-1, 2),
        xl,
        yl,
        axes,
        project,
        np.asarray(scored.index, dtype=np.int64),
        True if matching is None else matching.bipartite,
    )


def pair_axis_differences(data: AcPlotData) -> tuple[np.ndarray, np.ndarray]:
    """Within-pair (first - second) differences along x and y.

    For bipartite matchings the first member is the treated unit.
    """
    s = data.segments()
    return s[:, 0] - s[:, 2], s[:, 1] - s[:, 3]


# ---------------------------------------------------------------------------
# effect estimates


@dataclass(frozen=True)
class EffectReport:
    naive_diff: float
    naive_se: float
    n_treated: int
    n_control: int
    matched_diff: float | None = None
    matched_se: float | None = None
    n_pairs: int = 0

    def to_dict(self) -> dict:
        return {
            "naive_diff": _num(self.naive_diff),
            "naive_se": _num(self.naive_se),
            "n_treated": self.n_treated,
            "n_control": self.n_control,
            "matched_diff": _num(self.matched_diff),
            "matched_se": _num(self.matched_se),
            "n_pairs": self.n_pairs,
        }


def effect_estimates(scored: ScoredDataset, matching: Matching | None = None) -> EffectReport:
    """Naive two-sample and paired treated-minus-control mean differences.

    The naive standard error is sqrt(s_t^2/n_t + s_c^2/n_c); the paired one
    is sd(d)/sqrt(K) over the K within-pair differences.
    """
    Y = scored.Y
    if Y is None:
        raise MissingOutcome("effect estimates need an outcome")
    T = scored.T
    yt, yc = Y[T == 1], Y[T == 0]
    if yt.size == 0 or yc.size == 0:
        raise EmptyGroup("effect estimates need treated and control units")
    naive = float(yt.mean() - yc.mean())
    vt = yt.var(ddof=1) if yt.size > 1 else math.nan
    vc = yc.var(ddof=1) if yc.size > 1 else math.nan
    naive_se = float(math.sqrt(vt / yt.size + vc / yc.size))
    if matching is None:
        return EffectReport(naive, naive_se, int(yt.size), int(yc.size))
    if not matching.bipartite:
        raise DataError("paired estimates need a bipartite treated-control matching")
    if matching.n_pairs == 0:
        raise EmptyGroup("matching has no pairs")
    d = Y[matching.pairs[:, 0]] - Y[matching.pairs[:, 1]]
    k = d.size
    se = float(d.std(ddof=1) / math.sqrt(k)) if k > 1 else math.nan
    return EffectReport(naive, naive_se, int(yt.size), int(yc.size), float(d.mean()), se, int(k))


# ---------------------------------------------------------------------------
# level sets


@dataclass(frozen=True)
class LevelSetBin:
    lower: float
    upper: float
    n: int
    mean_score: float
    treated_fraction: float
    z: float

    @property
    def empty(self) -> bool:
        return self.n == 0


@dataclass(frozen=True)
class LevelSetReport:
    bins: tuple

    @property
    def z(self) -> np.ndarray:
        return np.array([b.z for b in self.bins])

    @property
    def empty_bins(self) -> int:
        return sum(b.empty for b in self.bins)

    def count_within(self, bound: float = 3.0) -> int:
        return int(sum(abs(b.z) <= bound for b in self.bins if not b.empty and math.isfinite(b.z)))

    def to_dict(self) -> list[dict]:
        return [
            {
                "lower": _num(b.lower),
                "upper": _num(b.upper),
                "n": b.n,
                "mean_score": _num(b.mean_score),
                "treated_fraction": _num(b.treated_fraction),
                "z": _num(b.z),
            }
            for b in self.bins
        ]


def level_set_check(source, T=None, bins: int = 10) -> LevelSetReport:
    """Compare treated fractions with mean propensity in quantile bins.

    ``source`` is a ScoredDataset, a SimTruth (true propensities; pass ``T``)
    or a vector of scores in (0, 1). Units are sorted by score and split into
    ``bins`` groups of near-equal size; each reports
    z = (frac - mean e) / sqrt(mean e (1 - mean e) / n_bin).
    Bins without units are reported with n = 0 and z = nan.
    """
    if isinstance(source, ScoredDataset):
        e, T = source.propensity, source.T if T is None else T
    elif isinstance(source, SimTruth):
        e = source.e_true
    else:
        e = np.asarray(source, dtype=float)
    if T is None:
        raise DataError("level-set check needs the assignment vector")
    T = np.asarray(T, dtype=float)
    if e.shape != T.shape:
        raise DataError("scores and assignments differ in length")
    if np.any((e <= 0) | (e >= 1)):
        raise DataError("scores must lie strictly inside (0, 1)")
    order = np.argsort(e, kind="stable")
    out = []
    for chunk in np.array_split(order, bins):
        if chunk.size == 0:
            out.append(LevelSetBin(math.nan, math.nan, 0, math.nan, math.nan, math.nan))
            continue
        m = float(e[chunk].mean())
        frac = float(T[chunk].mean())
        sd = math.sqrt(m * (1 - m) / chunk.size)
        z = (frac - m) / sd if sd > 0 else math.nan
        out.append(LevelSetBin(float(e[chunk].min()), float(e[chunk].max()), int(chunk.size), m, frac, z))
    return LevelSetReport(tuple(out))


# ---------------------------------------------------------------------------
# match quality


def match_quality(scored: ScoredDataset, matching: Matching) -> dict:
    """Score gaps and distances averaged over matched pairs."""
    if matching.n_pairs == 0:
        raise EmptyGroup("matching has no pairs")
    a, b = matching.pairs[:, 0], matching.pairs[:, 1]
    de = np.abs(scored.propensity[a] - scored.propensity[b])
    dpsi = np.abs(scored.prognostic[a] - scored.prognostic[b])
    near = matching.components.get("near", matching.pair_distances)
    out = {
        "n_pairs": matching.n_pairs,
        "mean_abs_delta_propensity": float(de.mean()),
        "max_abs_delta_propensity": float(de.max()),
        "mean_abs_delta_prognostic": float(dpsi.mean()),
        "max_abs_delta_prognostic": float(dpsi.max()),
        "mean_near_distance": float(np.mean(near)),
        "mean_abs_delta_iv": None,
    }
    if scored.Z is not None:
        out["mean_abs_delta_iv"] = float(np.abs(scored.Z[a] - scored.Z[b]).mean())
    return out


# ---------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class DiagnosticsReport:
    smd: SmdTable
    overlap: OverlapHistogram
    effects: EffectReport | None = None
    quality: dict | None = None
    level_sets: LevelSetReport | None = None

    def to_dict(self) -> dict:
        return {
            "smd": self.smd.to_dict(),
            "overlap": self.overlap.to_dict(),
            "effects": None if self.effects is None else self.effects.to_dict(),
            "match_quality": None if self.quality is None else {k: _num(v) for k, v in self.quality.items()},
            "level_sets": None if self.level_sets is None else self.level_sets.to_dict(),
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, allow_nan=False)
            fh.write("\n")

    def write_csvs(self, directory) -> list[Path]:
        """smd.csv, overlap.csv and (when present) level_sets.csv, effects.csv."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        written = []
        rows = self.smd.to_dict()
        write_table(
            d / "smd.csv",
            ["name", "smd_unadjusted", "smd_adjusted", "denominator", "zero_variance"],
            _columns(rows, ["name", "smd_unadjusted", "smd_adjusted", "denominator", "zero_variance"]),
        )
        written.append(d / "smd.csv")
        h = self.overlap
        write_table(
            d / "overlap.csv",
            ["lower", "upper", "density_treated", "density_control"],
            [
                [format_float(v) for v in h.edges[:-1]],
                [format_float(v) for v in h.edges[1:]],
                [format_float(v) for v in h.density_treated],
                [format_float(v) for v in h.density_control],
            ],
        )
        written.append(d / "overlap.csv")
        if self.level_sets is not None:
            keys = ["lower", "upper", "n", "mean_score", "treated_fraction", "z"]
            write_table(d / "level_sets.csv", keys, _columns(self.level_sets.to_dict(), keys))
            written.append(d / "level_sets.csv")
        if self.effects is not None:
            eff = self.effects.to_dict()
            write_table(d / "effects.csv", list(eff), _columns([eff], list(eff)))
            written.append(d / "effects.csv")
        return written


def diagnose(
    scored: ScoredDataset,
    matching: Matching | None = None,
    bins: int = 20,
    level_bins: int = 10,
) -> DiagnosticsReport:
    """Standard report: SMD table, overlap, effects, match quality, level sets."""
    effects = effect_estimates(scored, matching if matching is None or matching.bipartite else None) \
        if scored.Y is not None else None
    quality = match_quality(scored, matching) if matching is not None and matching.n_pairs else None
    levels = None
    e = scored.propensity
    if np.all((e > 0) & (e < 1)):
        levels = level_set_check(scored, bins=level_bins)
    return DiagnosticsReport(
        smd(scored, matching if matching is None or matching.bipartite else None),
        overlap_histogram(scored, bins),
        effects,
        quality,
        levels,
    )


def _num(v):
    if v is None:
        return None
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return v if math.isfinite(v) else None


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format_float(v)
    return str(v)


def _columns(rows: list[dict], keys: list[str]) -> list[list[str]]:
    return [[_cell(r[k]) for r in rows] for k in keys]
