"""Propensity and prognostic score models.

Propensity models are unpenalized logistic regressions fit by iteratively
reweighted least squares. Prognostic models are lasso fits (linear or
logistic) computed by cyclic coordinate descent on a held-aside pilot set of
controls, so the units used to learn prognosis never enter the analysis.

All fitting happens on standardized covariates; a model stores the
standardization it was trained with and applies it when predicting.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.special import expit, logit

from .data import Dataset, RngSpec, format_float, read_table, write_table, _parse_column
from .errors import (
    BadFraction,
    DataError,
    DimensionMismatch,
    EmptyPilot,
    MissingColumn,
    MissingOutcome,
    NoControls,
    NoVariation,
    SeparationWarning,
)
from .simulate import SimTruth, link as sim_link

IRLS_TOL = 1e-8
IRLS_MAX_ITER = 50
NORM_CAP = 1e3
RIDGE_FALLBACK = 1e-4
DEFAULT_PILOT_FRACTION = 0.10


@dataclass(frozen=True)
class ScoreModel:
    """A fitted score model on the standardized covariate scale.

    ``coefficients`` and ``intercept`` apply to ``(x - center) / scale``; use
    :meth:`original_coefficients` for the raw covariate scale.
    """

    kind: str
    family: str
    coefficients: np.ndarray
    intercept: float
    center: np.ndarray
    scale: np.ndarray
    lam: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return self.coefficients.shape[0]

    @property
    def converged(self) -> bool:
        return bool(self.diagnostics.get("converged", False))

    def linear_predictor(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.p:
            raise DimensionMismatch(f"model expects {self.p} covariates, got shape {X.shape}")
        return ((X - self.center) / self.scale) @ self.coefficients + self.intercept

    def original_coefficients(self) -> np.ndarray:
        return self.coefficients / self.scale

    def original_intercept(self) -> float:
        return float(self.intercept - np.sum(self.coefficients * self.center / self.scale))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "family": self.family,
            "coefficients": [float(v) for v in self.coefficients],
            "intercept": float(self.intercept),
            "standardization": {
                "mean": [float(v) for v in self.center],
                "scale": [float(v) for v in self.scale],
            },
            "lambda": float(self.lam),
            "diagnostics": _jsonable(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreModel":
        std = d["standardization"]
        return cls(
            kind=d["kind"],
            family=d["family"],
            coefficients=np.asarray(d["coefficients"], dtype=float),
            intercept=float(d["intercept"]),
            center=np.asarray(std["mean"], dtype=float),
            scale=np.asarray(std["scale"], dtype=float),
            lam=float(d.get("lambda", 0.0)),
            diagnostics=dict(d.get("diagnostics", {})),
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def dump_models(models: dict, path) -> None:
    payload = {k: m.to_dict() for k, m in models.items()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_models(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return {k: ScoreModel.from_dict(v) for k, v in payload.items()}


# ---------------------------------------------------------------------------
# pilot split


@dataclass(frozen=True)
class PilotSplit:
    pilot_indices: np.ndarray
    analysis_indices: np.ndarray
    fraction: float
    strata_column: str | None = None


def _ceil(x: float) -> int:
    # guards against 0.1 * 30 == 3.0000000000000004
    return int(math.ceil(round(x, 9)))


def _largest_remainder(total: int, sizes: np.ndarray) -> np.ndarray:
    exact = total * sizes / sizes.sum()
    base = np.floor(exact).astype(np.int64)
    short = total - int(base.sum())
    order = np.argsort(-(exact - base), kind="stable")
    base[order[:short]] += 1
    return base


def split_pilot(
    dataset: Dataset,
    fraction: float = DEFAULT_PILOT_FRACTION,
    strata: str | None = None,
    rng: RngSpec | None = None,
) -> PilotSplit:
    """Hold aside ``ceil(fraction * n_controls)`` controls as a pilot set.

    With ``strata``, the pilot is allocated across the distinct values of that
    covariate in proportion to their control counts (largest remainder).
    """
    if not (0.0 <= fraction < 1.0):
        raise BadFraction(f"pilot fraction must be in [0, 1), got {fraction}")
    rng = rng or RngSpec()
    controls = np.flatnonzero(dataset.T == 0)
    if fraction > 0 and controls.size == 0:
        raise NoControls("pilot split needs at least one control")
    k = _ceil(fraction * controls.size)
    g = rng.generator()
    if k == 0:
        pilot = np.empty(0, dtype=np.int64)
    elif strata is None:
        pilot = g.choice(controls, size=k, replace=False)
    else:
        labels = dataset.covariate(strata)[controls]
        levels, inverse, sizes = np.unique(labels, return_inverse=True, return_counts=True)
        quotas = _largest_remainder(k, sizes)
        parts = []
        for s in range(levels.size):
            members = controls[inverse == s]
            if quotas[s]:
                parts.append(g.choice(members, size=int(quotas[s]), replace=False))
        pilot = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    pilot = np.sort(pilot.astype(np.int64))
    mask = np.ones(dataset.n, dtype=bool)
    mask[pilot] = False
    return PilotSplit(pilot, np.flatnonzero(mask), float(fraction), strata)


# ---------------------------------------------------------------------------
# shared helpers


def _standardize(X: np.ndarray):
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return (X - center) / scale, center, scale


def _loglik_logistic(eta: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _select(indices, n: int) -> np.ndarray:
    if indices is None:
        return np.arange(n)
    return np.asarray(indices, dtype=np.int64)


# ---------------------------------------------------------------------------
# IRLS


def fit_logistic_irls(
    X,
    y,
    max_iter: int = IRLS_MAX_ITER,
    tol: float = IRLS_TOL,
    norm_cap: float = NORM_CAP,
    ridge: float = 0.0,
    kind: str = "propensity",
) -> ScoreModel:
    """Maximum-likelihood logistic regression by Newton/IRLS with step halving.

    ``ridge`` adds ``ridge * n / 2 * ||beta||^2`` to the negative
    log-likelihood (intercept unpenalized). Iteration stops when the largest
    coefficient change falls below ``tol``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    Xs, center, scale = _standardize(X)
    A = np.column_stack([np.ones(n), Xs])
    pen = np.full(p + 1, ridge * n)
    pen[0] = 0.0

    def objective(b):
        return _loglik_logistic(A @ b, y) - 0.5 * float(np.sum(pen * b * b))

    b = np.zeros(p + 1)
    ybar = y.mean()
    b[0] = logit(np.clip(ybar, 1e-12, 1 - 1e-12))
    ll = objective(b)
    history = [ll]
    converged = separated = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = A @ b
        mu = expit(eta)
        w = mu * (1.0 - mu)
        grad = A.T @ (y - mu) - pen * b
        H = (A * w[:, None]).T @ A + np.diag(pen)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                step = scipy.linalg.solve(H, grad, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        for _ in range(40):
            cand = b + t * step
            ll_new = objective(cand)
            if ll_new >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            t *= 0.5
        else:
            cand, ll_new = b, ll
        change = float(np.max(np.abs(cand - b)))
        b, ll = cand, max(ll_new, ll)
        history.append(ll)
        if np.linalg.norm(b[1:]) > norm_cap:
            separated = True
            break
        if change < tol:
            converged = True
            break

    eta = A @ b
    if not converged and not separated and np.max(np.abs(eta)) > 30.0:
        # probabilities pinned at 0/1 while coefficients keep growing
        separated = True
    if separated:
        converged = False
        warnings.warn(
            "logistic fit did not converge: classes appear separable "
            f"(coefficient norm {np.linalg.norm(b[1:]):.3g})",
            SeparationWarning,
            stacklevel=3,
        )
    diagnostics = {
        "iterations": it,
        "converged": converged,
        "separation": separated,
        "deviance": -2.0 * _loglik_logistic(eta, y),
        "ridge": ridge,
        "loglik_history": history,
    }
    return ScoreModel(kind, "logistic", b[1:].copy(), float(b[0]), center, scale, 0.0, diagnostics)


def fit_propensity(
    dataset: Dataset,
    indices=None,
    ridge_fallback: bool = True,
    max_iter: int = IRLS_MAX_ITER,
    tol: float = IRLS_TOL,
) -> ScoreModel:
    """Logistic regression of T on the covariates of the selected units."""
    idx = _select(indices, dataset.n)
    X = dataset.X[idx]
    t = dataset.T[idx].astype(float)
    if t.size == 0 or t.min() == t.max():
        raise NoVariation("propensity model needs both treated and control units")
    ridge = 0.0
    Xs = _standardize(X)[0]
    rank = np.linalg.matrix_rank(np.column_stack([np.ones(len(idx)), Xs]))
    if rank < X.shape[1] + 1:
        if not ridge_fallback:
            raise DataError("propensity design matrix is rank deficient")
        warnings.warn(
            f"design matrix rank {rank} < {X.shape[1] + 1}; using ridge penalty {RIDGE_FALLBACK}",
            RuntimeWarning,
            stacklevel=2,
        )
        ridge = RIDGE_FALLBACK
    return fit_logistic_irls(X, t, max_iter=max_iter, tol=tol, ridge=ridge)


# ---------------------------------------------------------------------------
# lasso by coordinate descent


def _soft(x: float, lam: float) -> float:
    if x > lam:
        return x - lam
    if x < -lam:
        return x + lam
    return 0.0


def _cd_weighted(Xs, z, w, lam, beta, b0, tol, max_cycles, history=None, objective=None):
    """Minimize (1/2n) sum w (z - b0 - Xs beta)^2 + lam |beta|_1 in place."""
    n, p = Xs.shape
    beta = beta.copy()
    r = z - b0 - Xs @ beta
    wx = Xs * w[:, None]
    a = np.einsum("ij,ij->j", wx, Xs) / n
    wsum = w.sum()
    cycles = 0
    for cycles in range(1, max_cycles + 1):
        delta = 0.0
        shift = float(np.dot(w, r) / wsum)
        if shift != 0.0:
            b0 += shift
            r -= shift
            delta = abs(shift)
        for j in range(p):
            if a[j] <= 0.0:
                continue
            old = beta[j]
            g = float(np.dot(wx[:, j], r)) / n + a[j] * old
            new = _soft(g, lam) / a[j]
            if new != old:
                r -= Xs[:, j] * (new - old)
                beta[j] = new
                delta = max(delta, abs(new - old))
        if history is not None:
            history.append(objective(b0, beta))
        if delta < tol:
            break
    return beta, b0, cycles


def _gaussian_objective(Xs, y, lam):
    n = y.size

    def f(b0, beta):
        r = y - b0 - Xs @ beta
        return float(r @ r) / (2 * n) + lam * float(np.abs(beta).sum())

    return f


def _logistic_objective(Xs, y, lam):
    n = y.size

    def f(b0, beta):
        return -_loglik_logistic(b0 + Xs @ beta, y) / n + lam * float(np.abs(beta).sum())

    return f


def _lasso_gaussian(Xs, y, lam, beta, b0, tol, max_cycles, history=None):
    obj = _gaussian_objective(Xs, y, lam)
    if history is not None and not history:
        history.append(obj(b0, beta))
    beta, b0, cycles = _cd_weighted(
        Xs, y, np.ones_like(y), lam, beta, b0, tol, max_cycles, history, obj
    )
    return beta, b0, cycles, True


def _lasso_logistic(Xs, y, lam, beta, b0, tol, max_cycles, history=None, max_outer=100):
    obj = _logistic_objective(Xs, y, lam)
    f = obj(b0, beta)
    if history is not None and not history:
        history.append(f)
    cycles = 0
    converged = False
    for _ in range(max_outer):
        eta = b0 + Xs @ beta
        mu = expit(eta)
        w = np.maximum(mu * (1.0 - mu), 1e-5)
        z = eta + (y - mu) / w
        nb, nb0, c = _cd_weighted(Xs, z, w, lam, beta, b0, tol * 0.1, max_cycles)
        cycles += c
        t = 1.0
        for _ in range(40):
            cb, cb0 = beta + t * (nb - beta), b0 + t * (nb0 - b0)
            fn = obj(cb0, cb)
            if fn <= f + 1e-13 * max(1.0, abs(f)):
                break
            t *= 0.5
        else:
            cb, cb0, fn = beta, b0, f
        change = max(float(np.max(np.abs(cb - beta), initial=0.0)), abs(cb0 - b0))
        beta, b0, f = cb, cb0, min(fn, f)
        if history is not None:
            history.append(f)
        if change < tol:
            converged = True
            break
    return beta, b0, cycles, converged


def lambda_max(Xs: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty at which every lasso coefficient is zero."""
    if Xs.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(Xs.T @ (y - y.mean()))) / y.size)


def _null_intercept(y: np.ndarray, family: str) -> float:
    ybar = float(y.mean())
    return ybar if family == "linear" else float(logit(ybar))


def _solve(family, Xs, y, lam, beta, b0, tol, max_cycles, history=None):
    if lam >= lambda_max(Xs, y):
        beta = np.zeros(Xs.shape[1])
        b0 = _null_intercept(y, family)
        if history is not None:
            obj = (_gaussian_objective if family == "linear" else _logistic_objective)(Xs, y, lam)
            history.append(obj(b0, beta))
        return beta, b0, 0, True
    if family == "linear":
        return _lasso_gaussian(Xs, y, lam, beta, b0, tol, max_cycles, history)
    return _lasso_logistic(Xs, y, lam, beta, b0, tol, max_cycles, history)


def _path(family, Xs, y, lambdas, tol, max_cycles):
    beta = np.zeros(Xs.shape[1])
    b0 = _null_intercept(y, family)
    out = []
    for lam in lambdas:
        beta, b0, _, _ = _solve(family, Xs, y, lam, beta, b0, tol, max_cycles)
        out.append((beta.copy(), b0))
    return out


def _heldout_deviance(family, eta, y) -> float:
    if family == "linear":
        return float(np.sum((y - eta) ** 2))
    return -2.0 * _loglik_logistic(eta, y)


def lambda_grid(lam_max: float, n_lambda: int = 50, ratio: float = 1e-4) -> np.ndarray:
    if lam_max <= 0:
        return np.zeros(1)
    return np.geomspace(lam_max, ratio * lam_max, n_lambda)


def fit_lasso(
    X,
    y,
    family: str = "linear",
    lam="cv",
    rng: RngSpec | None = None,
    n_folds: int = 5,
    n_lambda: int = 50,
    lambda_ratio: float = 1e-4,
    tol: float = 1e-10,
    max_cycles: int = 100_000,
    threads: int = 1,
    kind: str = "prognostic",
    cv_rule: str = "min",
) -> ScoreModel:
    """Lasso-penalized linear or logistic regression on standardized covariates.

    ``lam`` is a fixed penalty or ``"cv"``; the latter picks the grid value
    with the smallest mean held-out deviance over ``n_folds`` folds
    (``cv_rule="min"``), or the largest penalty within one standard error of
    that minimum (``cv_rule="1se"``).
    """
    if family not in ("linear", "logistic"):
        raise ValueError(f"unknown family {family!r}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    if family == "logistic":
        if not np.all((y == 0) | (y == 1)):
            raise DataError("logistic prognostic model needs a 0/1 outcome")
        if y.min() == y.max():
            raise NoVariation("logistic prognostic model needs both outcome classes")
    Xs, center, scale = _standardize(X)
    lmax = lambda_max(Xs, y)
    diagnostics: dict = {"lambda_max": lmax}

    if isinstance(lam, str):
        if lam != "cv":
            raise ValueError(f"lambda must be a number or 'cv', got {lam!r}")
        grid = lambda_grid(lmax, n_lambda, lambda_ratio)
        k = min(n_folds, n)
        if k < 2:
            raise DataError("cross-validation needs at least 2 pilot units")
        g = (rng or RngSpec()).derive("cv-folds").generator()
        folds = np.empty(n, dtype=np.int64)
        folds[g.permutation(n)] = np.arange(n) % k

        if cv_rule not in ("min", "1se"):
            raise ValueError(f"unknown cv rule {cv_rule!r}")

        def run_fold(f):
            train, test = folds != f, folds == f
            Xt, c_t, s_t = _standardize(X[train])
            path = _path(family, Xt, y[train], grid, tol, max_cycles)
            Xv = (X[test] - c_t) / s_t
            return [_heldout_deviance(family, b0 + Xv @ beta, y[test]) for beta, b0 in path]

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                per_fold = list(pool.map(run_fold, range(k)))
        else:
            per_fold = [run_fold(f) for f in range(k)]
        per_fold = np.asarray(per_fold)
        sizes = np.bincount(folds, minlength=k)[:, None]
        cv_dev = per_fold.sum(axis=0) / n
        cv_se = (per_fold / sizes).std(axis=0, ddof=1) / np.sqrt(k)
        best = int(np.argmin(cv_dev))
        if cv_rule == "1se":
            best = int(np.flatnonzero(cv_dev <= cv_dev[best] + cv_se[best])[0])
        chosen = float(grid[best])
        diagnostics.update(cv_lambdas=grid, cv_deviance=cv_dev, cv_se=cv_se, cv_folds=k, cv_rule=cv_rule)
        path = _path(family, Xs, y, grid[:best], tol, max_cycles)
        beta, b0 = path[-1] if path else (np.zeros(X.shape[1]), _null_intercept(y, family))
    else:
        chosen = float(lam)
        if chosen < 0:
            raise ValueError("lambda must be >= 0")
        beta, b0 = np.zeros(X.shape[1]), _null_intercept(y, family)

    history: list = []
    beta, b0, cycles, converged = _solve(
        family, Xs, y, chosen, beta, b0, tol, max_cycles, history
    )
    eta = b0 + Xs @ beta
    diagnostics.update(
        iterations=cycles,
        converged=converged,
        deviance=_heldout_deviance(family, eta, y),
        objective_history=history,
    )
    return ScoreModel(kind, family, beta, float(b0), center, scale, chosen, diagnostics)


def fit_prognostic(
    dataset: Dataset,
    pilot: PilotSplit,
    family: str = "linear",
    lam="cv",
    rng: RngSpec | None = None,
    threads: int = 1,
    **kwargs,
) -> ScoreModel:
    """Fit the prognostic model on pilot controls only.

    Only the pilot rows of X and Y are read.
    """
    idx = np.asarray(pilot.pilot_indices, dtype=np.int64)
    if idx.size == 0:
        raise EmptyPilot("prognostic model needs a nonempty pilot set")
    if dataset.Y is None:
        raise MissingOutcome("dataset has no outcome column")
    if np.any(dataset.T[idx] != 0):
        raise DataError("pilot set contains treated units")
    y = dataset.Y[idx]
    if not np.all(np.isfinite(y)):
        raise MissingOutcome("pilot units have missing outcomes")
    return fit_lasso(dataset.X[idx], y, family=family, lam=lam, rng=rng, threads=threads, **kwargs)


def predict(model: ScoreModel, dataset: Dataset, indices=None, scale: str | None = None) -> np.ndarray:
    """Scores for the selected units.

    ``scale`` is ``"response"`` (probabilities for logistic models) or
    ``"link"``; the default is response for logistic and link for linear.
    """
    if dataset.p != model.p:
        raise DimensionMismatch(f"model has {model.p} covariates, dataset has {dataset.p}")
    idx = _select(indices, dataset.n)
    eta = model.linear_predictor(dataset.X[idx])
    if scale is None:
        scale = "response" if model.family == "logistic" else "link"
    if scale == "link" or model.family == "linear":
        return eta
    if scale != "response":
        raise ValueError(f"unknown scale {scale!r}")
    return expit(eta)


def deviance(model: ScoreModel, dataset: Dataset, indices=None, response=None) -> float:
    """Deviance of ``model`` on the selected units.

    The response defaults to T for propensity models and Y otherwise.
    """
    idx = _select(indices, dataset.n)
    if response is None:
        response = dataset.T if model.kind == "propensity" else dataset.Y
    y = np.asarray(response, dtype=float)[idx]
    eta = predict(model, dataset, idx, scale="link")
    if model.family == "linear":
        return float(np.sum((y - eta) ** 2))
    return -2.0 * _loglik_logistic(eta, y)


# ---------------------------------------------------------------------------
# scored datasets


@dataclass(frozen=True)
class ScoredDataset:
    """Analysis units with their propensity and prognostic scores.

    ``index`` maps each row back to the source dataset; matchings refer to
    rows of this object by position.
    """

    data: Dataset
    index: np.ndarray
    propensity: np.ndarray
    prognostic: np.ndarray
    propensity_lp: np.ndarray
    source: str = "fitted"

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def T(self) -> np.ndarray:
        return self.data.T

    @property
    def Y(self):
        return self.data.Y

    @property
    def Z(self):
        return self.data.Z

    @property
    def X(self) -> np.ndarray:
        return self.data.X

    def propensity_on(self, scale: str = "probability") -> np.ndarray:
        if scale == "probability":
            return self.propensity
        if scale == "linear":
            return self.propensity_lp
        raise ValueError(f"unknown propensity scale {scale!r}")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def score_dataset(
    dataset: Dataset,
    pilot: PilotSplit,
    propensity_model: ScoreModel,
    prognostic_model: ScoreModel,
) -> ScoredDataset:
    """Attach fitted scores to the analysis units of ``pilot``."""
    idx = np.asarray(pilot.analysis_indices, dtype=np.int64)
    lp = predict(propensity_model, dataset, idx, scale="link")
    return ScoredDataset(
        dataset.subset(idx),
        idx,
        _frozen(expit(lp)),
        _frozen(predict(prognostic_model, dataset, idx)),
        _frozen(lp),
        "fitted",
    )


def score_from_truth(
    dataset: Dataset,
    truth: SimTruth,
    indices=None,
    observed_only: bool = False,
) -> ScoredDataset:
    """Use simulation ground truth in place of fitted models.

    With ``observed_only`` the scores omit the unmeasured confounder, i.e. they
    are what perfectly specified models of the measured covariates would give.
    """
    idx = _select(indices, dataset.n)
    phi = truth.phi_observed if observed_only else truth.phi
    psi = truth.psi_observed if observed_only else truth.psi
    sign = 1.0 if truth.link_orientation == "standard" else -1.0
    lp = sign * phi[idx]
    e = sim_link(phi[idx], truth.link_orientation)
    return ScoredDataset(
        dataset.subset(idx),
        idx,
        _frozen(e),
        _frozen(psi[idx]),
        _frozen(lp),
        "observed" if observed_only else "true",
    )


_SCORE_ROLES = ("propensity", "propensity_lp", "prognostic", "index")


def write_scored_csv(scored: ScoredDataset, path) -> None:
    from .data import dataset_columns

    header, columns = dataset_columns(scored.data)
    header += ["e:propensity", "lp:propensity_lp", "psi:prognostic", "row:index"]
    columns += [
        [format_float(v) for v in scored.propensity.tolist()],
        [format_float(v) for v in scored.propensity_lp.tolist()],
        [format_float(v) for v in scored.prognostic.tolist()],
        [str(int(v)) for v in scored.index.tolist()],
    ]
    write_table(path, header, columns)


def read_scored_csv(path) -> ScoredDataset:
    """Inverse of :func:`write_scored_csv`."""
    from .data import read_csv

    header, cols = read_table(path)
    found = {}
    for k, cell in enumerate(header):
        _, _, role = cell.partition(":")
        if role in _SCORE_ROLES:
            found[role] = _parse_column(cols[k], cell)
    missing = [r for r in ("propensity", "prognostic") if r not in found]
    if missing:
        raise MissingColumn(f"scored file lacks column(s): {', '.join(missing)}")
    schema = {h: "ignore" for h in header if h.partition(":")[2] in _SCORE_ROLES}
    data = read_csv(path, schema)
    n = data.n
    e = found["propensity"]
    lp = found.get("propensity_lp")
    if lp is None:
        lp = logit(np.clip(e, 1e-15, 1 - 1e-15))
    index = found.get("index", np.arange(n, dtype=float)).astype(np.int64)
    return ScoredDataset(data, index, _frozen(e), _frozen(found["prognostic"]), _frozen(lp), "fitted")


def subset_scored(scored: ScoredDataset, rows: Sequence[int]) -> ScoredDataset:
    rows = np.asarray(rows, dtype=np.int64)
    return ScoredDataset(
        scored.data.subset(rows),
        scored.index[rows],
        _frozen(scored.propensity[rows]),
        _frozen(scored.prognostic[rows]),
        _frozen(scored.propensity_lp[rows]),
        scored.source,
    )
