"""Synthetic observational studies with known propensity and prognostic scores.

Baseline model, for unit i with covariates X_i ~ N(0, I_p):

    assignment score   phi(X) = c1 * X1 + c2 * Z + eta * U - c0
    prognostic score   psi(X) = rho * X1 + sqrt(1 - rho^2) * X2 + eta * U
    T ~ Bernoulli(link(phi)),   Y(0) = psi + N(0, sigma^2),   Y(1) = Y(0) + tau

Two variants reshape the score geometry: ``quadratic-assignment`` uses
phi = c1 * (1 - psi^2) - c0 (intermediate prognosis is likeliest treated) and
``discontinuous-prognosis`` adds ``delta * 1[X3 > 0]`` to psi (a binary
covariate splitting prognosis into two clusters).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .data import Dataset, RngSpec
from .errors import InvalidConfig

SCENARIOS = ("linear", "quadratic-assignment", "discontinuous-prognosis")
LINKS = ("standard", "paper-literal")

# keeps true propensities strictly inside (0, 1) in floating point
_E_FLOOR = np.finfo(float).tiny
_E_CEIL = 1.0 - np.finfo(float).epsneg


@dataclass(frozen=True)
class SimConfig:
    n: int = 1000
    p: int = 10
    c1: float = 1.0
    c0: float = 0.0
    rho: float = 0.0
    sigma: float = 1.0
    tau: float = 0.0
    eta: float = 0.0
    c2: float = 0.0
    scenario: str = "linear"
    link_orientation: str = "standard"
    delta: float = 3.0
    rng: RngSpec = field(default_factory=RngSpec)
    name: str = ""
    description: str = ""

    def validate(self) -> "SimConfig":
        if int(self.n) != self.n or self.n < 1:
            raise InvalidConfig(f"n must be a positive integer, got {self.n}")
        if int(self.p) != self.p or self.p < 2:
            raise InvalidConfig(f"p must be an integer >= 2, got {self.p}")
        if not -1.0 <= self.rho <= 1.0:
            raise InvalidConfig(f"rho must lie in [-1, 1], got {self.rho}")
        if not self.sigma >= 0:
            raise InvalidConfig(f"sigma must be >= 0, got {self.sigma}")
        if self.scenario not in SCENARIOS:
            raise InvalidConfig(f"unknown scenario {self.scenario!r}")
        if self.link_orientation not in LINKS:
            raise InvalidConfig(f"unknown link orientation {self.link_orientation!r}")
        if self.scenario == "discontinuous-prognosis" and self.p < 3:
            raise InvalidConfig("discontinuous-prognosis needs p >= 3")
        for name in ("c1", "c0", "tau", "eta", "c2", "delta"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidConfig(f"{name} must be finite")
        return self

    def with_seed(self, seed: int, stream_id: int = 0) -> "SimConfig":
        return replace(self, rng=RngSpec(seed, stream_id))


@dataclass(frozen=True)
class SimTruth:
    """Ground truth for a simulated dataset, aligned with its rows.

    ``phi_observed`` / ``psi_observed`` are the scores a perfect model of the
    measured covariates would produce (no U term); ``phi_confounding`` is phi
    with the instrument term removed.
    """

    phi: np.ndarray
    psi: np.ndarray
    e_true: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    phi_observed: np.ndarray
    psi_observed: np.ndarray
    phi_confounding: np.ndarray
    link_orientation: str = "standard"

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    def link(self, score):
        return link(score, self.link_orientation)


def link(score, orientation: str = "standard"):
    """Map an assignment score to a probability of treatment."""
    score = np.asarray(score, dtype=float)
    e = expit(score) if orientation == "standard" else expit(-score)
    return np.clip(e, _E_FLOOR, _E_CEIL)


def generate(config: SimConfig) -> tuple[Dataset, SimTruth]:
    """Draw one dataset from ``config``.

    Every component (X, U, Z, assignment uniforms, outcome noise) is always
    drawn in that order, so configs differing only in coefficients share
    their random draws.
    """
    cfg = config.validate()
    n, p = int(cfg.n), int(cfg.p)
    g = cfg.rng.generator()
    X = g.standard_normal((n, p))
    U = g.standard_normal(n)
    Z = g.standard_normal(n)
    draw = g.random(n)
    eps = g.standard_normal(n)

    x1, x2 = X[:, 0], X[:, 1]
    psi_obs = cfg.rho * x1 + np.sqrt(1.0 - cfg.rho**2) * x2
    if cfg.scenario == "discontinuous-prognosis":
        psi_obs = psi_obs + cfg.delta * (X[:, 2] > 0)
    psi = psi_obs + cfg.eta * U

    if cfg.scenario == "quadratic-assignment":
        phi_conf = cfg.c1 * (1.0 - psi**2) - cfg.c0
        phi_obs = cfg.c1 * (1.0 - psi_obs**2) - cfg.c0 + cfg.c2 * Z
    else:
        phi_conf = cfg.c1 * x1 + cfg.eta * U - cfg.c0
        phi_obs = cfg.c1 * x1 + cfg.c2 * Z - cfg.c0
    phi = phi_conf + cfg.c2 * Z

    e = link(phi, cfg.link_orientation)
    T = (draw < e).astype(np.int8)
    y0 = psi + cfg.sigma * eps
    y1 = y0 + cfg.tau
    Y = np.where(T == 1, y1, y0)

    data = Dataset(
        X,
        T,
        Y,
        Z if cfg.c2 != 0 else None,
        U if cfg.eta != 0 else None,
    )
    truth = SimTruth(
        phi=phi,
        psi=psi,
        e_true=e,
        y0=y0,
        y1=y1,
        phi_observed=phi_obs,
        psi_observed=psi_obs,
        phi_confounding=phi_conf,
        link_orientation=cfg.link_orientation,
    )
    return data, truth


def scenario_presets() -> list[SimConfig]:
    """Named configurations for the standard illustrative scenarios.

    Constants are illustrative choices. fig1a-c share c1/c0 so their propensity distributions coincide.
    """
    base = SimConfig(n=1000, p=10, c1=1.0, c0=1.0, sigma=1.0)
    return [
        replace(base, name="fig1a", rho=0.0,
                description="prognosis unrelated to assignment"),
        replace(base, name="fig1b", rho=-0.5,
                description="assignment and prognosis negatively correlated"),
        replace(base, name="fig1c", rho=0.5,
                description="assignment and prognosis positively correlated"),
        replace(base, name="fig2a", rho=0.5, c1=2.0, c0=1.0,
                scenario="quadratic-assignment",
                description="intermediate prognosis likeliest to be treated"),
        replace(base, name="fig2b", rho=0.5, scenario="discontinuous-prognosis", delta=3.0,
                description="binary covariate splits prognosis into two clusters"),
        replace(base, name="fig4-poor-overlap", rho=0.5, c1=2.0, c0=-1.5,
                description="treated propensities concentrated near 1"),
        replace(base, name="fig5-confounded", rho=0.5, eta=1.0,
                description="unmeasured confounder U drives assignment and prognosis"),
        replace(base, name="fig6-iv", rho=0.5, eta=1.0, c2=1.0,
                description="unmeasured confounder plus a measured instrument Z"),
    ]


def get_preset(name: str, **overrides) -> SimConfig:
    for cfg in scenario_presets():
        if cfg.name == name:
            return replace(cfg, **overrides) if overrides else cfg
    raise InvalidConfig(f"unknown preset {name!r}")


def replicate_configs(config: SimConfig, count: int) -> list[SimConfig]:
    """Configs for ``count`` independent replicates, one stream id each."""
    base = config.rng
    return [
        replace(config, rng=RngSpec(base.seed, (base.stream_id + k) % 2**64))
        for k in range(count)
    ]
