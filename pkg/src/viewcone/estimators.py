"""Black-box maximizers: cross-entropy method and 1-D Bayesian optimization.

Both are built from first principles (diagonal-Gaussian CEM; exact GP
regression with a squared-exponential kernel and expected improvement on a
grid) so nothing opaque sits between the likelihood and the estimates.
Objectives passed to the estimators are mean per-step log-likelihoods, which
keeps the configured defaults usable across dataset sizes without moving the
argmax.
"""

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import SchemaVersionError
from .expert import ExpertGains
from .likelihood import DatasetEvaluator, LikelihoodConfig
from .sim import Dataset

__all__ = [
    "CemConfig",
    "BoConfig",
    "HistoryEntry",
    "EstimationReport",
    "cem_maximize",
    "estimate_observation_params",
    "gp_posterior",
    "expected_improvement",
    "estimate_p_obs",
    "default_obs_cem_config",
    "write_report",
    "read_report",
]

REPORT_SCHEMA = 1


@dataclass(frozen=True, eq=False)
class CemConfig:
    """Cross-entropy method settings over a bounded box.

    ``bounds`` is a (d, 2) array of [lo, hi] rows.  ``init_mean`` defaults to
    the box center and ``init_std`` to a quarter of the box width.
    ``smoothing`` is the weight on the newly fitted mean/std when blending
    with the previous iterate.
    """

    bounds: np.ndarray
    population: int = 64
    elite_frac: float = 0.125
    iterations: int = 30
    init_mean: np.ndarray | None = None
    init_std: np.ndarray | None = None
    std_floor: float = 1e-3
    smoothing: float = 0.7

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.bounds, dtype=float))
        if b.ndim != 2 or b.shape[1] != 2:
            raise ValueError("bounds must be a (d, 2) array of [lo, hi]")
        if not np.all(np.isfinite(b)) or not np.all(b[:, 0] < b[:, 1]):
            raise ValueError("bounds must be finite with lo < hi")
        object.__setattr__(self, "bounds", b)
        if self.population * self.elite_frac < 1:
            raise ValueError("population * elite_frac must be >= 1")
        if not (0 < self.elite_frac <= 1):
            raise ValueError("elite_frac must be in (0, 1]")
        if not (0 <= self.smoothing <= 1):
            raise ValueError("smoothing must be in [0, 1]")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        mean = (
            np.asarray(self.init_mean, dtype=float)
            if self.init_mean is not None
            else b.mean(axis=1)
        )
        std = (
            np.asarray(self.init_std, dtype=float)
            if self.init_std is not None
            else (b[:, 1] - b[:, 0]) / 4.0
        )
        if mean.shape != (b.shape[0],) or std.shape != (b.shape[0],):
            raise ValueError("init_mean/init_std must match the bounds dimension")
        object.__setattr__(self, "init_mean", mean)
        object.__setattr__(self, "init_std", std)

    @property
    def n_elite(self) -> int:
        return math.ceil(self.population * self.elite_frac)


@dataclass(frozen=True)
class BoConfig:
    """1-D Bayesian-optimization settings on the unit interval."""

    init_points: int = 8
    iterations: int = 40
    kernel_lengthscale: float = 0.15
    kernel_variance: float = 1.0
    noise: float = 1e-6
    acq_grid: int = 2001

    def __post_init__(self):
        if self.init_points < 1 or self.iterations < 1 or self.acq_grid < 2:
            raise ValueError("init_points, iterations >= 1 and acq_grid >= 2 required")
        for name in ("kernel_lengthscale", "kernel_variance", "noise"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class HistoryEntry:
    """One optimizer round: the round's parameter vector (CEM distribution
    mean / BO evaluation point), its value, and the incumbent best value."""

    params: tuple[float, ...]
    value: float
    incumbent_value: float


@dataclass(eq=False)
class EstimationReport:
    best_params: np.ndarray
    best_value: float
    history: list[HistoryEntry]
    evaluations: int

    def history_value_variance(self) -> float:
        vals = np.array([h.value for h in self.history])
        return float(vals.var())

    def is_flat(self, tol: float = 1e-6) -> bool:
        """Non-identifiability flag: the objective barely moved across rounds."""
        return self.history_value_variance() < tol


def cem_maximize(
    objective: Callable[[np.ndarray], float],
    cfg: CemConfig,
    rng: np.random.Generator,
    evaluate_batch: Callable[[list[np.ndarray]], list[float]] | None = None,
) -> EstimationReport:
    """Maximize a black-box objective with the cross-entropy method.

    Each iteration samples from a diagonal Gaussian clipped to the bounds,
    refits mean/std on the top elite fraction with smoothing, and floors the
    std.  NaN objective values are treated as -inf and can never be elite.
    Deterministic given the generator state.
    """
    mean = cfg.init_mean.copy()
    std = cfg.init_std.copy()
    lo, hi = cfg.bounds[:, 0], cfg.bounds[:, 1]
    best_value = -math.inf
    best_params = mean.copy()
    history: list[HistoryEntry] = []
    evaluations = 0
    for _ in range(cfg.iterations):
        samples = rng.normal(mean, std, size=(cfg.population, len(mean)))
        samples = np.clip(samples, lo, hi)
        if evaluate_batch is not None:
            values = np.asarray(evaluate_batch(list(samples)), dtype=float)
        else:
            values = np.array([objective(s) for s in samples], dtype=float)
        evaluations += cfg.population
        values = np.where(np.isnan(values), -np.inf, values)
        order = np.argsort(-values, kind="stable")
        elite = samples[order[: cfg.n_elite]]
        iter_best = float(values[order[0]])
        if iter_best > best_value:
            best_value = iter_best
            best_params = samples[order[0]].copy()
        mean = cfg.smoothing * elite.mean(axis=0) + (1.0 - cfg.smoothing) * mean
        std = cfg.smoothing * elite.std(axis=0) + (1.0 - cfg.smoothing) * std
        std = np.maximum(std, cfg.std_floor)
        history.append(HistoryEntry(tuple(mean), iter_best, best_value))
    return EstimationReport(best_params, best_value, history, evaluations)


def default_obs_cem_config(
    r_bounds: tuple[float, float] = (10.0, 120.0),
    theta_bounds: tuple[float, float] = (0.1, 1.0),
    **overrides,
) -> CemConfig:
    return CemConfig(bounds=np.array([r_bounds, theta_bounds]), **overrides)


class _ObsObjective:
    """Picklable mean-per-step log-likelihood over (r_obs, theta_obs)."""

    def __init__(self, dataset: Dataset, p_obs: float, lik_cfg, gains):
        self.dataset = dataset
        self.p_obs = p_obs
        self.lik_cfg = lik_cfg
        self.gains = gains
        self._evaluator: DatasetEvaluator | None = None

    def evaluator(self) -> DatasetEvaluator:
        if self._evaluator is None:
            self._evaluator = DatasetEvaluator(self.dataset, self.gains, self.lik_cfg)
        return self._evaluator

    def __call__(self, params: np.ndarray) -> float:
        r, theta = float(params[0]), float(params[1])
        return self.evaluator().mean_step_loglik(r, theta, self.p_obs)

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_evaluator"] = None  # rebuilt lazily in each worker
        return state


_WORKER_OBJECTIVE: _ObsObjective | None = None


def _pool_init(objective: _ObsObjective) -> None:
    global _WORKER_OBJECTIVE
    _WORKER_OBJECTIVE = objective
    objective.evaluator()


def _pool_eval(params: np.ndarray) -> float:
    return _WORKER_OBJECTIVE(params)


def estimate_observation_params(
    dataset: Dataset,
    p_obs_known: float,
    cfg: CemConfig | None = None,
    lik_cfg: LikelihoodConfig | None = None,
    gains: ExpertGains | None = None,
    seed: int = 0,
    jobs: int = 1,
) -> EstimationReport:
    """CEM maximum likelihood over (r_obs, theta_obs) at a known p_obs."""
    if len(dataset) < 1:
        raise ValueError("dataset must be non-empty")
    if not (0 <= p_obs_known <= 1):
        raise ValueError("p_obs_known must be in [0, 1]")
    cfg = cfg if cfg is not None else default_obs_cem_config()
    objective = _ObsObjective(dataset, p_obs_known, lik_cfg, gains)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    if jobs > 1:
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_pool_init, initargs=(objective,)
        ) as pool:
            batch = lambda samples: list(pool.map(_pool_eval, samples))
            return cem_maximize(objective, cfg, rng, evaluate_batch=batch)
    return cem_maximize(objective, cfg, rng)


# ---------------------------------------------------------------------------
# Gaussian-process regression and expected improvement


def _se_kernel(a: np.ndarray, b: np.ndarray, cfg: BoConfig) -> np.ndarray:
    d = a[:, None] - b[None, :]
    return cfg.kernel_variance * np.exp(-(d * d) / (2.0 * cfg.kernel_lengthscale**2))


def gp_posterior(
    train_x: Sequence[float],
    train_y: Sequence[float],
    cfg: BoConfig,
    query_x: Sequence[float],
) -> tuple[np.ndarray, np.ndarray]:
    """Exact GP posterior mean and variance at the query points.

    Squared-exponential kernel with observation noise on the diagonal.  On
    Cholesky failure the diagonal jitter escalates tenfold up to 1e-2 before
    giving up with a numerical error.
    """
    x = np.asarray(train_x, dtype=float)
    y = np.asarray(train_y, dtype=float)
    q = np.asarray(query_x, dtype=float)
    if x.size == 0:
        return np.zeros(q.shape), np.full(q.shape, cfg.kernel_variance)
    if x.size > 1:
        gaps = np.abs(x[:, None] - x[None, :]) + np.eye(x.size)
        if gaps.min() <= 1e-12:
            raise ValueError("train_x must be distinct within 1e-12")
    K = _se_kernel(x, x, cfg)
    jitter = cfg.noise
    L = None
    while True:
        try:
            L = np.linalg.cholesky(K + jitter * np.eye(x.size))
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > 1e-2:
                raise
    alpha = np.linalg.solve(L.T, np.linalg.solve(L, y))
    Ks = _se_kernel(x, q, cfg)
    mean = Ks.T @ alpha
    v = np.linalg.solve(L, Ks)
    var = np.maximum(cfg.kernel_variance - np.einsum("ij,ij->j", v, v), 0.0)
    return mean, var


def expected_improvement(mean, variance, best_so_far: float) -> np.ndarray:
    """EI for maximization; zero wherever sigma = 0 and mean <= incumbent."""
    mu = np.asarray(mean, dtype=float)
    var = np.asarray(variance, dtype=float)
    if np.any(var < 0):
        raise ValueError("variance must be >= 0")
    sigma = np.sqrt(var)
    improve = mu - best_so_far
    out = np.maximum(improve, 0.0)
    pos = sigma > 0
    z = np.zeros_like(mu)
    np.divide(improve, sigma, out=z, where=pos)
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    ei_pos = improve * ndtr(z) + sigma * pdf
    out = np.where(pos, ei_pos, out)
    return np.maximum(out, 0.0)


class _PObjective:
    """Mean-per-step log-likelihood over p_obs at known (r_obs, theta_obs)."""

    def __init__(self, dataset, r_obs, theta_obs, lik_cfg, gains):
        self.evaluator = DatasetEvaluator(dataset, gains, lik_cfg)
        self.r_obs = r_obs
        self.theta_obs = theta_obs

    def __call__(self, p: float) -> float:
        return self.evaluator.mean_step_loglik(self.r_obs, self.theta_obs, float(p))


def estimate_p_obs(
    dataset: Dataset,
    sensor_known: tuple[float, float],
    cfg: BoConfig | None = None,
    lik_cfg: LikelihoodConfig | None = None,
    gains: ExpertGains | None = None,
) -> EstimationReport:
    """Bayesian-optimization maximum likelihood for p_obs on [0, 1].

    Initial evaluations sit on a uniform grid; each round fits the GP to the
    centered observations, maximizes expected improvement on the acquisition
    grid (excluding already-evaluated points), and evaluates the winner.
    Deterministic: no random draws are involved.
    """
    if len(dataset) < 1:
        raise ValueError("dataset must be non-empty")
    cfg = cfg if cfg is not None else BoConfig()
    r_obs, theta_obs = float(sensor_known[0]), float(sensor_known[1])
    f = _PObjective(dataset, r_obs, theta_obs, lik_cfg, gains)

    xs = [float(x) for x in np.linspace(0.0, 1.0, cfg.init_points)]
    ys = [f(x) for x in xs]
    grid = np.linspace(0.0, 1.0, cfg.acq_grid)
    history: list[HistoryEntry] = []
    for _ in range(cfg.iterations):
        y_arr = np.asarray(ys)
        center = float(y_arr.mean())
        mean, var = gp_posterior(xs, y_arr - center, cfg, grid)
        ei = expected_improvement(mean, var, float((y_arr - center).max()))
        taken = np.min(np.abs(grid[:, None] - np.asarray(xs)[None, :]), axis=1) <= 1e-12
        ei = np.where(taken, -1.0, ei)
        x_new = float(grid[int(np.argmax(ei))])
        y_new = f(x_new)
        xs.append(x_new)
        ys.append(y_new)
        incumbent = float(np.max(ys))
        history.append(HistoryEntry((x_new,), y_new, incumbent))
    best_i = int(np.argmax(ys))
    return EstimationReport(
        np.array([xs[best_i]]), float(ys[best_i]), history, len(xs)
    )


# ---------------------------------------------------------------------------
# Report persistence (same line-delimited object style as datasets)


def write_report(report: EstimationReport, path) -> None:
    header = {
        "schema": REPORT_SCHEMA,
        "kind": "estimation_report",
        "best_params": [float(v) for v in report.best_params],
        "best_value": report.best_value,
        "evaluations": report.evaluations,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for h in report.history:
            fh.write(
                json.dumps(
                    {
                        "params": list(h.params),
                        "value": h.value,
                        "incumbent": h.incumbent_value,
                    },
                    separators=(",", ":"),
                )
                + "\n"
            )


def read_report(path) -> EstimationReport:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = json.loads(lines[0])
    if header.get("schema") != REPORT_SCHEMA:
        raise SchemaVersionError(f"unsupported report schema {header.get('schema')}")
    history = [
        HistoryEntry(tuple(obj["params"]), obj["value"], obj["incumbent"])
        for obj in (json.loads(s) for s in lines[1:] if s.strip())
    ]
    return EstimationReport(
        np.asarray(header["best_params"], dtype=float),
        float(header["best_value"]),
        history,
        int(header["evaluations"]),
    )
