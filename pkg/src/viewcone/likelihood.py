"""Trajectory and dataset log-likelihood, marginalized over detection outcomes.

The per-step action marginal sums, over subsets S of the obstacles visible
under candidate sensor parameters, the subset's Bernoulli weight times the
Gaussian kernel density of the observed control around the memoryless expert
control given S.  Obstacles whose repulsion is identically zero (at or beyond
the cutoff d0) cannot change the control, so their detection outcomes
marginalize out exactly; enumeration therefore runs over the visible
obstacles that actually influence the control, and the exact branch is taken
whenever that influence set is small enough.

Controls are compared in normalized units: forward speed divided by the
expert's v_max, turn rate divided by its maximum magnitude k_heading * pi.

``DatasetEvaluator`` precomputes all candidate-independent geometry once so
that optimizers can evaluate thousands of candidate parameters cheaply; the
scalar functions are the readable reference implementation it is tested
against.
"""

import math
import zlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .expert import ExpertGains, LikelihoodKernel
from .sim import Dataset, Trajectory
from .world import AgentState, Control, Scenario, SensorParams, wrap_angle, wrap_angles

__all__ = [
    "LikelihoodConfig",
    "step_marginal",
    "exact_step_marginal",
    "mc_step_marginal",
    "trajectory_loglik",
    "dataset_loglik",
    "DatasetEvaluator",
    "normalized_control",
    "control_scales",
]

_COLLINEAR_TOL = 1e-9
_MAX_ENUM = 20  # hard cap on exact subset enumeration (2^k table rows)


@dataclass(frozen=True)
class LikelihoodConfig:
    """Evaluation settings.

    ``max_exact_visible`` bounds the size of the influence set enumerated
    exactly; beyond it the marginal falls back to Monte Carlo with
    ``mc_samples`` draws (stratified over detection counts unless
    ``mc_stratified`` is off).  ``log_floor`` bounds each step's
    log-probability from below; ``mc_seed`` roots the per-(trajectory, step)
    Monte-Carlo streams.
    """

    max_exact_visible: int = 12
    mc_samples: int = 512
    log_floor: float = -30.0
    kernel: LikelihoodKernel = LikelihoodKernel()
    mc_seed: int = 0
    mc_stratified: bool = True

    def __post_init__(self):
        if not (0 <= self.max_exact_visible <= _MAX_ENUM):
            raise ValueError(f"max_exact_visible must be in [0, {_MAX_ENUM}]")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        if self.log_floor >= 0:
            raise ValueError("log_floor must be < 0")


def control_scales(gains: ExpertGains) -> np.ndarray:
    """Per-dimension normalizers for (v, omega)."""
    return np.array([gains.v_max, gains.k_heading * math.pi])


def normalized_control(u: Control, gains: ExpertGains) -> np.ndarray:
    return np.array([u.v, u.omega]) / control_scales(gains)


def trajectory_key(traj: Trajectory) -> int:
    """Content-derived key for per-trajectory random streams.

    Depends on the trajectory itself, not its dataset position, so dataset
    permutations do not change Monte-Carlo draws.
    """
    first = traj.steps[0].state
    last = traj.steps[-1].state
    data = np.array(
        [first.p, first.q, first.phi, last.p, last.q, last.phi, float(len(traj.steps))]
    )
    return zlib.crc32(data.tobytes())


@lru_cache(maxsize=_MAX_ENUM + 1)
def _subset_masks(k: int) -> tuple[np.ndarray, np.ndarray]:
    """(2^k, k) membership matrix (bit j of the row index) and popcounts."""
    if k == 0:
        return np.zeros((1, 0)), np.zeros(1)
    codes = np.arange(2**k, dtype=np.uint32)
    members = ((codes[:, None] >> np.arange(k, dtype=np.uint32)) & 1).astype(float)
    return members, members.sum(axis=1)


def _controls_for_subsets(
    att: np.ndarray,
    rep_vectors: np.ndarray,
    members: np.ndarray,
    phi: float,
    gains: ExpertGains,
) -> np.ndarray:
    """Normalized (v, omega) of the expert for each detection subset.

    ``rep_vectors`` holds one precomputed repulsion vector per influencing
    obstacle; a subset's force is the attraction plus its members' sum, with
    the collinear tie-break nudge applied exactly as in the scalar
    controller.
    """
    rep = members @ rep_vectors  # (n_subsets, 2)
    rep_norm = np.hypot(rep[:, 0], rep[:, 1])
    nonzero = rep_norm > 0.0
    if np.any(nonzero):
        a_unit = att / gains.k_att
        r_unit = rep[nonzero] / rep_norm[nonzero, None]
        cross = a_unit[0] * r_unit[:, 1] - a_unit[1] * r_unit[:, 0]
        dot = a_unit[0] * r_unit[:, 0] + a_unit[1] * r_unit[:, 1]
        tie = (dot < 0.0) & (np.abs(cross) <= _COLLINEAR_TOL)
        if np.any(tie):
            nudge = 1e-3 * gains.k_rep * np.stack([-r_unit[tie, 1], r_unit[tie, 0]], axis=1)
            rep[np.flatnonzero(nonzero)[tie]] += nudge
    force = att[None, :] + rep
    f_norm = np.hypot(force[:, 0], force[:, 1])
    v = np.minimum(gains.v_max, f_norm * gains.v_max)
    omega = gains.k_heading * wrap_angles(np.arctan2(force[:, 1], force[:, 0]) - phi)
    return np.stack([v, omega], axis=1) / control_scales(gains)


def _kernel_values(u_norm: np.ndarray, nominals: np.ndarray, sigma: float) -> np.ndarray:
    diff = nominals - u_norm[None, :]
    sq = np.einsum("ij,ij->i", diff, diff)
    peak = (2.0 * math.pi * sigma * sigma) ** (-u_norm.size / 2.0)
    return peak * np.exp(-sq / (2.0 * sigma * sigma))


def _repulsion_vector(pos: np.ndarray, obst: np.ndarray, gains: ExpertGains) -> np.ndarray:
    away = pos - obst
    d = float(np.hypot(away[0], away[1]))
    if d >= gains.d0:
        return np.zeros(2)
    if d < 1e-9:
        return np.array([gains.rep_cap, 0.0])
    mag = min(gains.rep_cap, gains.k_rep * (1.0 / d - 1.0 / gains.d0) / (d * d))
    return (mag / d) * away


def _mc_plan(
    k: int, p: float, rng: np.random.Generator, n: int, stratified: bool
) -> tuple[np.ndarray, np.ndarray, list[tuple[int, int, float]] | None]:
    """Detection subsets and estimator weights for the Monte-Carlo marginal.

    Stratified mode allocates draws to detection-count strata in proportion
    to their binomial weights (at least one draw each); plain mode samples
    independent Bernoulli detections.  Returns (members, weights, strata)
    where the estimate is ``weights @ kernel_values`` and strata lists
    (start, stop, stratum_weight) slices for variance estimation.
    """
    if not stratified:
        members = (rng.random((n, k)) < p).astype(float)
        return members, np.full(n, 1.0 / n), None
    counts = np.arange(k + 1)
    weights = np.array(
        [
            math.exp(
                math.lgamma(k + 1)
                - math.lgamma(m + 1)
                - math.lgamma(k - m + 1)
                + m * math.log(p)
                + (k - m) * math.log(1.0 - p)
            )
            for m in counts
        ]
    )
    alloc = np.maximum(1, np.round(n * weights).astype(int))
    blocks = []
    w_rows = []
    strata = []
    start = 0
    for m, w, n_m in zip(counts, weights, alloc):
        rows = np.zeros((n_m, k))
        for r in range(n_m):
            rows[r, rng.permutation(k)[:m]] = 1.0
        blocks.append(rows)
        w_rows.append(np.full(n_m, w / n_m))
        strata.append((start, start + n_m, float(w)))
        start += n_m
    return np.concatenate(blocks), np.concatenate(w_rows), strata


def _mc_standard_error(
    kv: np.ndarray, strata: list[tuple[int, int, float]] | None
) -> float:
    if strata is None:
        n = kv.size
        return float(kv.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    var = 0.0
    for start, stop, w in strata:
        n_m = stop - start
        if n_m > 1:
            var += w * w * float(kv[start:stop].var(ddof=1)) / n_m
    return math.sqrt(var)


def _step_geometry(
    x: AgentState, scenario: Scenario, t: int, sensor: SensorParams, gains: ExpertGains
):
    """Visible ids, influencing ids, their repulsions, attraction, goal distance."""
    pos = np.array([x.p, x.q])
    visible: list[int] = []
    influence: list[int] = []
    rep_vectors: list[np.ndarray] = []
    for o in scenario.obstacles:
        ox, oy = o.position_at(t)
        dp, dq = ox - x.p, oy - x.q
        d = math.hypot(dp, dq)
        inside = (dp == 0.0 and dq == 0.0) or (
            d <= sensor.r_obs and abs(wrap_angle(math.atan2(dq, dp) - x.psi)) <= sensor.theta_obs
        )
        if not inside:
            continue
        visible.append(o.id)
        rv = _repulsion_vector(pos, np.array([ox, oy]), gains)
        if rv[0] != 0.0 or rv[1] != 0.0:
            influence.append(o.id)
            rep_vectors.append(rv)
    to_goal = np.asarray(scenario.goal) - pos
    d_goal = float(np.hypot(to_goal[0], to_goal[1]))
    att = (gains.k_att / d_goal) * to_goal if d_goal > 1e-12 else np.zeros(2)
    reps = np.array(rep_vectors) if rep_vectors else np.zeros((0, 2))
    return visible, influence, reps, att, d_goal


def exact_step_marginal(
    x: AgentState,
    u: Control,
    scenario: Scenario,
    t: int,
    sensor: SensorParams,
    cfg: LikelihoodConfig,
    gains: ExpertGains,
) -> float:
    """Exact subset enumeration of the per-step action marginal."""
    _, influence, reps, att, d_goal = _step_geometry(x, scenario, t, sensor, gains)
    u_norm = normalized_control(u, gains)
    sigma = cfg.kernel.sigma_u
    if d_goal <= gains.stop_radius:
        return float(_kernel_values(u_norm, np.zeros((1, 2)), sigma)[0])
    k = len(influence)
    p = sensor.p_obs
    if k == 0 or p == 0.0 or p == 1.0:
        members = np.full((1, k), 1.0 if p == 1.0 else 0.0)
        nominals = _controls_for_subsets(att, reps, members, x.phi, gains)
        return float(_kernel_values(u_norm, nominals, sigma)[0])
    if k > _MAX_ENUM:
        raise ValueError(f"influence set of size {k} too large for exact enumeration")
    members, sizes = _subset_masks(k)
    nominals = _controls_for_subsets(att, reps, members, x.phi, gains)
    kv = _kernel_values(u_norm, nominals, sigma)
    weights = p**sizes * (1.0 - p) ** (k - sizes)
    return float(weights @ kv)


def mc_step_marginal(
    x: AgentState,
    u: Control,
    scenario: Scenario,
    t: int,
    sensor: SensorParams,
    cfg: LikelihoodConfig,
    gains: ExpertGains,
    rng: np.random.Generator,
    n_samples: int | None = None,
) -> tuple[float, float]:
    """Monte-Carlo estimate of the per-step marginal with its standard error.

    Detection sets are sampled over the influencing obstacles only; p in
    {0, 1} short-circuits to the single realizable subset, so the exact and
    Monte-Carlo paths agree bit-for-bit there.
    """
    _, influence, reps, att, d_goal = _step_geometry(x, scenario, t, sensor, gains)
    u_norm = normalized_control(u, gains)
    sigma = cfg.kernel.sigma_u
    if d_goal <= gains.stop_radius:
        return float(_kernel_values(u_norm, np.zeros((1, 2)), sigma)[0]), 0.0
    k = len(influence)
    p = sensor.p_obs
    if k == 0 or p == 0.0 or p == 1.0:
        members = np.full((1, k), 1.0 if p == 1.0 else 0.0)
        nominals = _controls_for_subsets(att, reps, members, x.phi, gains)
        return float(_kernel_values(u_norm, nominals, sigma)[0]), 0.0
    n = cfg.mc_samples if n_samples is None else n_samples
    members, weights, strata = _mc_plan(k, p, rng, n, cfg.mc_stratified)
    nominals = _controls_for_subsets(att, reps, members, x.phi, gains)
    kv = _kernel_values(u_norm, nominals, sigma)
    return float(weights @ kv), _mc_standard_error(kv, strata)


def step_marginal(
    x: AgentState,
    u: Control,
    scenario: Scenario,
    t: int,
    sensor: SensorParams,
    cfg: LikelihoodConfig | None = None,
    gains: ExpertGains | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Per-step action marginal under candidate sensor parameters.

    Enumerates exactly while the influence set is small enough, otherwise
    falls back to Monte Carlo, seeded from ``(cfg.mc_seed, t)`` unless an
    explicit generator is given.
    """
    cfg = cfg if cfg is not None else LikelihoodConfig()
    gains = gains if gains is not None else ExpertGains()
    _, influence, _, _, _ = _step_geometry(x, scenario, t, sensor, gains)
    if len(influence) <= cfg.max_exact_visible or sensor.p_obs in (0.0, 1.0):
        return exact_step_marginal(x, u, scenario, t, sensor, cfg, gains)
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((cfg.mc_seed, t))))
    est, _ = mc_step_marginal(x, u, scenario, t, sensor, cfg, gains, rng)
    return est


def trajectory_loglik(
    traj: Trajectory,
    sensor: SensorParams,
    cfg: LikelihoodConfig | None = None,
    gains: ExpertGains | None = None,
) -> float:
    """Sum of floored per-step log marginals over the pre-terminal steps."""
    if len(traj.steps) < 1:
        raise ValueError("trajectory must be non-empty")
    evaluator = DatasetEvaluator.from_trajectories([traj], gains, cfg)
    return evaluator.loglik(sensor.r_obs, sensor.theta_obs, sensor.p_obs)


def dataset_loglik(
    dataset: Dataset,
    sensor: SensorParams,
    cfg: LikelihoodConfig | None = None,
    gains: ExpertGains | None = None,
) -> float:
    """Dataset log-likelihood: per-trajectory terms combined by exact summation,
    so the value is invariant under dataset permutation."""
    if dataset.meta.mode != "unicycle":
        raise ValueError(
            f"likelihood is defined for unicycle demonstrations, got mode {dataset.meta.mode!r}"
        )
    evaluator = DatasetEvaluator(dataset, gains, cfg)
    return evaluator.loglik(sensor.r_obs, sensor.theta_obs, sensor.p_obs)


# ---------------------------------------------------------------------------
# Vectorized evaluator for repeated evaluation at many candidate parameters.


class DatasetEvaluator:
    """Reusable whole-dataset likelihood evaluator.

    Per evaluated step the following are candidate-independent and
    precomputed: obstacle distances, absolute bearings from the sensor axis,
    repulsion vectors, the attraction vector, the empty-detection nominal
    control, and its kernel value.  A candidate (r_obs, theta_obs, p_obs)
    evaluation rebuilds only the visibility mask and enumerates subsets on
    steps with a non-empty influence set; subset kernel values are cached per
    step across calls, keyed by the influence-set bitmask.
    """

    def __init__(
        self,
        dataset: Dataset,
        gains: ExpertGains | None = None,
        cfg: LikelihoodConfig | None = None,
    ):
        if dataset.meta.mode != "unicycle":
            raise ValueError("DatasetEvaluator requires a unicycle dataset")
        self._init_from(dataset.trajectories, gains, cfg)

    @classmethod
    def from_trajectories(
        cls,
        trajectories: Sequence[Trajectory],
        gains: ExpertGains | None = None,
        cfg: LikelihoodConfig | None = None,
    ) -> "DatasetEvaluator":
        self = cls.__new__(cls)
        self._init_from(trajectories, gains, cfg)
        return self

    def _init_from(self, trajectories, gains, cfg):
        self.gains = gains if gains is not None else ExpertGains()
        self.cfg = cfg if cfg is not None else LikelihoodConfig()
        g = self.gains
        scales = control_scales(g)

        rows_phi: list[float] = []
        rows_u: list[np.ndarray] = []
        rows_goal_d: list[float] = []
        rows_att: list[np.ndarray] = []
        rows_t: list[int] = []
        rows_key: list[int] = []
        dist_blocks: list[np.ndarray] = []
        bear_blocks: list[np.ndarray] = []
        rep_blocks: list[np.ndarray] = []
        m_max = max((len(tr.scenario.obstacles) for tr in trajectories), default=0)
        self._traj_slices: list[tuple[int, int]] = []
        n_rows = 0
        for tr in trajectories:
            sc = tr.scenario
            key = trajectory_key(tr)
            begin = n_rows
            for st in tr.steps[:-1]:
                x = st.state
                pos = np.array([x.p, x.q])
                to_goal = np.asarray(sc.goal) - pos
                d_goal = float(np.hypot(to_goal[0], to_goal[1]))
                att = (g.k_att / d_goal) * to_goal if d_goal > 1e-12 else np.zeros(2)
                dists = np.full(m_max, np.inf)
                bears = np.full(m_max, np.inf)
                reps = np.zeros((m_max, 2))
                for j, o in enumerate(sc.obstacles):
                    ox, oy = o.position_at(st.t)
                    dp, dq = ox - x.p, oy - x.q
                    d = math.hypot(dp, dq)
                    dists[j] = d
                    bears[j] = (
                        0.0
                        if (dp == 0.0 and dq == 0.0)
                        else abs(wrap_angle(math.atan2(dq, dp) - x.psi))
                    )
                    reps[j] = _repulsion_vector(pos, np.array([ox, oy]), g)
                rows_phi.append(x.phi)
                rows_u.append(np.array([st.control.v, st.control.omega]) / scales)
                rows_goal_d.append(d_goal)
                rows_att.append(att)
                rows_t.append(st.t)
                rows_key.append(key)
                dist_blocks.append(dists)
                bear_blocks.append(bears)
                rep_blocks.append(reps)
                n_rows += 1
            self._traj_slices.append((begin, n_rows))

        self.n_rows = n_rows
        self.total_steps = n_rows
        self._phi = np.array(rows_phi) if n_rows else np.zeros(0)
        self._u = np.array(rows_u) if n_rows else np.zeros((0, 2))
        self._goal_d = np.array(rows_goal_d) if n_rows else np.zeros(0)
        self._att = np.array(rows_att) if n_rows else np.zeros((0, 2))
        self._t = np.array(rows_t, dtype=int) if n_rows else np.zeros(0, dtype=int)
        self._key = rows_key
        self._dist = np.array(dist_blocks) if n_rows else np.zeros((0, m_max))
        self._bear = np.array(bear_blocks) if n_rows else np.zeros((0, m_max))
        self._rep = np.array(rep_blocks) if n_rows else np.zeros((0, m_max, 2))
        self._rep_nonzero = np.any(self._rep != 0.0, axis=2)

        sigma = self.cfg.kernel.sigma_u
        self._stop = self._goal_d <= g.stop_radius
        nom_empty = np.zeros((n_rows, 2))
        if n_rows:
            free = ~self._stop
            att_free = self._att[free]
            f_norm = np.hypot(att_free[:, 0], att_free[:, 1])
            v = np.minimum(g.v_max, f_norm * g.v_max)
            omega = g.k_heading * wrap_angles(
                np.arctan2(att_free[:, 1], att_free[:, 0]) - self._phi[free]
            )
            nom_empty[free] = np.stack([v, omega], axis=1) / scales
        diff = nom_empty - self._u
        self._k_empty = (2.0 * math.pi * sigma * sigma) ** -1.0 * np.exp(
            -np.einsum("ij,ij->i", diff, diff) / (2.0 * sigma * sigma)
        )
        # Per-row cache: influence-set bitmask -> (kernel values, subset sizes).
        self._cache: list[dict[int, tuple[np.ndarray, np.ndarray]]] = [
            {} for _ in range(n_rows)
        ]

    def _row_subset_kernels(self, row: int, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        key = int(np.sum(1 << idx.astype(np.uint64)))
        cached = self._cache[row].get(key)
        if cached is not None:
            return cached
        k = len(idx)
        if k > _MAX_ENUM:
            raise ValueError(f"influence set of size {k} too large for exact enumeration")
        members, sizes = _subset_masks(k)
        nominals = _controls_for_subsets(
            self._att[row], self._rep[row, idx], members, float(self._phi[row]), self.gains
        )
        kv = _kernel_values(self._u[row], nominals, self.cfg.kernel.sigma_u)
        out = (kv, sizes)
        self._cache[row][key] = out
        return out

    def _row_single_kernel(self, row: int, idx: np.ndarray) -> float:
        """Kernel value for the full influence set (the p = 1 case)."""
        if len(idx) <= self.cfg.max_exact_visible:
            kv, _ = self._row_subset_kernels(row, idx)
            return float(kv[-1])
        members = np.ones((1, len(idx)))
        nominals = _controls_for_subsets(
            self._att[row], self._rep[row, idx], members, float(self._phi[row]), self.gains
        )
        return float(_kernel_values(self._u[row], nominals, self.cfg.kernel.sigma_u)[0])

    def loglik(self, r_obs: float, theta_obs: float, p_obs: float) -> float:
        cfg, gains = self.cfg, self.gains
        influence = (self._dist <= r_obs) & (self._bear <= theta_obs) & self._rep_nonzero
        marginals = self._k_empty.copy()
        if self.n_rows:
            active_rows = np.flatnonzero(influence.any(axis=1) & ~self._stop)
        else:
            active_rows = np.zeros(0, dtype=int)
        if p_obs != 0.0:
            for row in active_rows:
                idx = np.flatnonzero(influence[row])
                if p_obs == 1.0:
                    marginals[row] = self._row_single_kernel(row, idx)
                elif len(idx) <= cfg.max_exact_visible:
                    kv, sizes = self._row_subset_kernels(row, idx)
                    weights = p_obs**sizes * (1.0 - p_obs) ** (len(idx) - sizes)
                    marginals[row] = float(weights @ kv)
                else:
                    rng = np.random.Generator(
                        np.random.PCG64(
                            np.random.SeedSequence(
                                (cfg.mc_seed, self._key[row], int(self._t[row]))
                            )
                        )
                    )
                    members, weights, _ = _mc_plan(
                        len(idx), p_obs, rng, cfg.mc_samples, cfg.mc_stratified
                    )
                    nominals = _controls_for_subsets(
                        self._att[row], self._rep[row, idx], members, float(self._phi[row]), gains
                    )
                    kv = _kernel_values(self._u[row], nominals, cfg.kernel.sigma_u)
                    marginals[row] = float(weights @ kv)
        with np.errstate(divide="ignore"):
            logs = np.log(marginals)
        logs = np.maximum(logs, cfg.log_floor)
        per_traj = [float(logs[a:b].sum()) for a, b in self._traj_slices]
        return math.fsum(per_traj)

    def mean_step_loglik(self, r_obs: float, theta_obs: float, p_obs: float) -> float:
        return self.loglik(r_obs, theta_obs, p_obs) / max(1, self.total_steps)
