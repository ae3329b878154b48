"""Simulation designs on the quadrant boundary and a Monte Carlo harness.

All designs draw ``X`` on ``[-1, 1]^2`` and treat the quadrant
``X1, X2 >= 0``.  The piecewise design ``m(x)`` equals ``(x1 + x2)/3`` on
the treated quadrant, ``(1 - x1)/3`` below it, ``(1 - x2)/3`` left of it and
``1/3`` on the opposite quadrant.  Its jump at ``(t, 0)`` or ``(0, t)`` is
``(2t - 1)/3``, so the jump is nonnegative iff ``t >= 1/2``.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .data import Dataset
from .errors import ConfigurationError, RdGlobalError
from .forest_density import DensityParams
from .forest_regression import ForestParams
from .geometry import BoundaryGeometry, quadrant_boundary
from .global_test import (
    DensityTestParams,
    HetParams,
    TestResult,
    density_test,
    distance_rd,
    heterogeneity_test,
    make_plan,
)

__all__ = [
    "DGP_NAMES",
    "DgpSpec",
    "SimulatedData",
    "McConfig",
    "McReport",
    "piecewise_mean",
    "generate",
    "run_replication",
    "run_monte_carlo",
]

DGP_NAMES = ("intro_quadrant", "het_dgp1", "het_dgp2", "dens_dgp1", "dens_dgp2")
DEFAULT_NOISE_SD = float(np.sqrt(0.05))
LEVEL = 0.05
_REJECTION_CHUNK = 4096


@dataclass(frozen=True)
class DgpSpec:
    """A named design with sample size and noise SD."""

    name: str
    n: int
    noise_sd: float = DEFAULT_NOISE_SD
    seed: int | None = None

    def __post_init__(self):
        if self.name not in DGP_NAMES:
            raise ConfigurationError(f"unknown design {self.name!r}; choose from {', '.join(DGP_NAMES)}")
        if self.n < 1:
            raise ConfigurationError("n must be >= 1")
        if self.noise_sd < 0:
            raise ConfigurationError("noise_sd must be >= 0")

    @property
    def kind(self) -> str:
        return "density" if self.name.startswith("dens") else "heterogeneity"


def piecewise_mean(X) -> np.ndarray:
    """The piecewise design ``m(x)``; also the unnormalised density of ``dens_dgp1``."""
    X = np.atleast_2d(X)
    x1, x2 = X[:, 0], X[:, 1]
    out = np.full(len(X), 1.0)
    q1 = (x1 >= 0) & (x2 >= 0)
    q4 = (x1 >= 0) & (x2 < 0)
    q2 = (x1 < 0) & (x2 >= 0)
    out[q1] = x1[q1] + x2[q1]
    out[q4] = 1.0 - x1[q4]
    out[q2] = 1.0 - x2[q2]
    return out / 3.0


def _jump_sign(points) -> np.ndarray:
    """Sign indicator of the piecewise design's jump at quadrant-boundary points."""
    points = np.atleast_2d(points)
    return (points[:, 0] + points[:, 1] >= 0.5).astype(np.int8)


def _nonnegative(points) -> np.ndarray:
    return np.ones(len(np.atleast_2d(points)), dtype=np.int8)


@dataclass(frozen=True)
class SimulatedData:
    """A draw from a design, with its boundary, true estimand and true sign."""

    spec: DgpSpec
    data: Dataset
    boundary: BoundaryGeometry
    truth: float
    sign_oracle: Callable[[np.ndarray], np.ndarray] = field(repr=False)


_TRUTH = {"intro_quadrant": 0.0, "het_dgp1": 1.0 / 6.0, "het_dgp2": 0.0, "dens_dgp1": 1.0 / 3.0, "dens_dgp2": 0.0}


def _rejection_sample(n: int, rng: np.random.Generator) -> np.ndarray:
    # Envelope: uniform on the square with density 1/4; the design density is at most 2/3.
    out = np.empty((0, 2))
    while len(out) < n:
        m = max(_REJECTION_CHUNK, 2 * (n - len(out)))
        cand = rng.uniform(-1.0, 1.0, size=(m, 2))
        keep = rng.random(m) < 1.5 * piecewise_mean(cand)
        out = np.vstack([out, cand[keep]])
    return out[:n]


def generate(spec: DgpSpec, rng=None) -> SimulatedData:
    """Draw ``spec.n`` observations; ``rng`` defaults to ``spec.seed``."""
    rng = np.random.default_rng(spec.seed if rng is None else rng)
    if spec.name == "dens_dgp1":
        X = _rejection_sample(spec.n, rng)
        Y = None
    elif spec.name == "dens_dgp2":
        X = rng.uniform(-1.0, 1.0, size=(spec.n, 2))
        Y = None
    else:
        X = rng.uniform(-1.0, 1.0, size=(spec.n, 2))
        mean = piecewise_mean(X) if spec.name == "het_dgp1" else (X[:, 0] + X[:, 1]) / 3.0
        Y = mean + spec.noise_sd * rng.standard_normal(spec.n)
    sign = _jump_sign if spec.name in ("het_dgp1", "dens_dgp1") else _nonnegative
    data = Dataset(X, Y, ("x1", "x2"), None if Y is None else "y")
    return SimulatedData(spec, data, quadrant_boundary(), _TRUTH[spec.name], sign)


@dataclass(frozen=True)
class McConfig:
    """Test configuration applied to every replication.

    ``test`` is ``"auto"`` (by design kind), ``"heterogeneity"``,
    ``"density"`` or ``"distance_rd"``.  ``oracle`` supplies the true sign.
    """

    test: str = "auto"
    K: int = 2
    S: int = 1
    bootstrap: int = 999
    forest: ForestParams = field(default_factory=lambda: ForestParams(num_trees=100))
    density_forest: DensityParams = field(default_factory=DensityParams)
    oracle: bool = False

    def __post_init__(self):
        if self.test not in ("auto", "heterogeneity", "density", "distance_rd"):
            raise ConfigurationError(f"unknown test {self.test!r}")

    def resolve(self, spec: DgpSpec) -> str:
        return spec.kind if self.test == "auto" else self.test


def _rep_seeds(master: int, r: int):
    ss = np.random.SeedSequence([master, r])
    data_ss, plan_ss = ss.spawn(2)
    return data_ss, int(plan_ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def run_replication(spec: DgpSpec, config: McConfig, master_seed: int, r: int) -> TestResult:
    """Replication ``r``: seeds depend only on ``(master_seed, r)``."""
    data_ss, plan_seed = _rep_seeds(master_seed, r)
    sim = generate(spec, np.random.default_rng(data_ss))
    test = config.resolve(spec)
    X, Y, b = sim.data.X, sim.data.Y, sim.boundary
    proj = b.project(X)
    if test == "distance_rd":
        return distance_rd(X, Y, b, HetParams(config.forest, config.bootstrap), seed=plan_seed, projections=proj)
    plan = make_plan(len(X), config.K, config.S, seed=plan_seed, delta=proj.delta)
    oracle = sim.sign_oracle if config.oracle else None
    if test == "heterogeneity":
        if Y is None:
            raise ConfigurationError(f"design {spec.name} has no outcome")
        return heterogeneity_test(X, Y, b, plan, HetParams(config.forest, config.bootstrap), oracle, proj)
    return density_test(X, b, plan, DensityTestParams(config.density_forest, config.bootstrap), oracle, proj)


def _safe_replication(spec, config, master_seed, r):
    try:
        return r, run_replication(spec, config, master_seed, r), None
    except RdGlobalError as exc:
        return r, None, f"{type(exc).__name__}: {exc}"


@dataclass
class McReport:
    """Aggregates over replications.

    ``bias`` is the mean point estimate minus the true estimand;
    ``statistic_bias`` does the same for the tested statistic.
    """

    dgp: str
    test: str
    n: int
    K: int
    S: int
    R: int
    master_seed: int
    truth: float
    n_completed: int
    n_failed: int
    bias: float
    statistic_bias: float
    mean_se: float
    sd_statistic: float
    rejection_rate: float
    rejection_mc_se: float
    records: list = field(default_factory=list, repr=False)
    failures: list = field(default_factory=list)
    wall_time: float = field(default=0.0, compare=False)

    def to_record(self) -> dict:
        out = asdict(self)
        out.pop("records")
        return out


def run_monte_carlo(
    spec: DgpSpec, config: McConfig | None = None, R: int = 500, master_seed: int = 0, n_jobs: int = 1
) -> McReport:
    """Run ``R`` replications and aggregate.

    Results do not depend on ``n_jobs``: each replication's seeds come from
    ``(master_seed, r)`` alone.  ``n_jobs > 1`` requires joblib.
    """
    if R < 1:
        raise ConfigurationError("R must be >= 1")
    config = config or McConfig()
    t0 = time.perf_counter()
    if n_jobs == 1:
        out = [_safe_replication(spec, config, master_seed, r) for r in range(R)]
    else:
        from joblib import Parallel, delayed

        out = Parallel(n_jobs=n_jobs)(delayed(_safe_replication)(spec, config, master_seed, r) for r in range(R))
    out.sort(key=lambda t: t[0])
    records = [{"replication": r, **res.to_record()} for r, res, _ in out if res is not None]
    for rec in records:
        rec.pop("per_fold")
        rec.pop("per_split")
    failures = [{"replication": r, "error": msg} for r, res, msg in out if res is None]
    truth = _TRUTH[spec.name]
    if records:
        stat = np.array([rec["statistic"] for rec in records])
        est = np.array([rec["estimate"] for rec in records])
        se = np.array([rec["se"] for rec in records])
        rej = np.array([rec["p_value"] < LEVEL for rec in records])
        p = float(rej.mean())
        summary = dict(
            bias=float(est.mean() - truth),
            statistic_bias=float(stat.mean() - truth),
            mean_se=float(se.mean()),
            sd_statistic=float(stat.std(ddof=1)) if len(stat) > 1 else 0.0,
            rejection_rate=p,
            rejection_mc_se=float(np.sqrt(p * (1 - p) / len(rej))),
        )
    else:
        summary = dict.fromkeys(
            ("bias", "statistic_bias", "mean_se", "sd_statistic", "rejection_rate", "rejection_mc_se"), float("nan")
        )
    return McReport(
        dgp=spec.name,
        test=config.resolve(spec),
        n=spec.n,
        K=config.K,
        S=config.S,
        R=R,
        master_seed=master_seed,
        truth=truth,
        n_completed=len(records),
        n_failed=len(failures),
        records=records,
        failures=failures,
        wall_time=time.perf_counter() - t0,
        **summary,
    )
