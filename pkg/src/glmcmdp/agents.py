"""GLM-ORL (optimistic) and GLM-RLSVI (randomized) agents for GLM contextual MDPs.

Both agents keep one transition estimator and one reward estimator per
(state, action) pair, turn them into point estimates and confidence widths
for the current context, and plan by backward induction over the horizon.
Stages are 0-based in code: stage ``h`` here is step ``h + 1`` of the episode.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .env import CmdpTruth, TrajectoryStep, backward_induction, realize_mdp
from .estimator import (
    CHECKPOINT_VERSION,
    ColumnSimplex,
    OnsState,
    RewardEstState,
    RowBall,
    confidence_radius,
    ons_from_dict,
    ons_to_dict,
    ons_update,
    reward_ci,
    reward_from_dict,
    reward_to_dict,
    reward_update,
    transition_ci,
)
from .linkfn import LinkFunction, LinkKind, convexity_params, predict_distribution


class PlanningError(ValueError):
    pass


@dataclass
class AgentConfig:
    delta: float = 0.1
    bonus_scale: float = 1.0
    eta: float = 1.0
    lam: float = 1.0
    B: float | None = None  # Frobenius bound on W*; defaults per link
    B_p: float | None = None  # row bound on W*; defaults per link
    B_r: float = 1.0
    R: float = 1.0
    rlsvi: bool = False
    rlsvi_literal_variance: bool = False
    zero_last_row: bool = False
    tabular_recovery: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.bonus_scale < 0:
            raise ValueError("bonus_scale must be nonnegative")

    def bounds(self, link: LinkFunction, d: int) -> tuple[float, float]:
        """Frobenius bound ``B`` and row bound ``B_p`` for the given link."""
        S = link.output_dim
        if link.kind is LinkKind.QUADRATIC:
            B_p = math.sqrt(d) if self.B_p is None else self.B_p
            B = math.sqrt(d) if self.B is None else self.B
        else:
            B_p = 1.0 if self.B_p is None else self.B_p
            B = B_p * math.sqrt(S) if self.B is None else self.B
        return B, B_p


class Estimates(NamedTuple):
    P_hat: np.ndarray  # (S, A, S)
    r_hat: np.ndarray  # (S, A)
    xi_p: np.ndarray  # (S, A)
    xi_r: np.ndarray  # (S, A)


class PlanOutput(NamedTuple):
    Q: np.ndarray  # (H, S, A)
    V: np.ndarray  # (H + 1, S)
    policy: np.ndarray  # (H, S) ints


def _check_estimates(est: Estimates):
    for name, arr in zip(Estimates._fields, est):
        if not np.all(np.isfinite(arr)):
            raise PlanningError(f"non-finite values in {name}")
    if est.xi_p.min() < 0 or est.xi_r.min() < 0:
        raise PlanningError("confidence widths must be nonnegative")


def greedy(Q_h: np.ndarray) -> np.ndarray:
    # np.argmax breaks ties toward the lowest action index
    return np.argmax(Q_h, axis=1)


def orl_plan(est: Estimates, H: int, bonus_scale: float = 1.0) -> PlanOutput:
    """Optimistic backward induction with bonus ``|V_{h+1}|_inf * xi_p + xi_r``.

    Values at stage ``h`` (0-based) are clipped to ``[0, H - h]``.
    """
    _check_estimates(est)
    S, A = est.r_hat.shape
    Q = np.zeros((H, S, A))
    V = np.zeros((H + 1, S))
    pi = np.zeros((H, S), dtype=int)
    for h in range(H - 1, -1, -1):
        v_next = V[h + 1]
        bonus = bonus_scale * (np.abs(v_next).max() * est.xi_p + est.xi_r)
        Q[h] = np.clip(est.P_hat @ v_next + est.r_hat + bonus, 0.0, H - h)
        pi[h] = greedy(Q[h])
        V[h] = Q[h][np.arange(S), pi[h]]
    return PlanOutput(Q, V, pi)


def rlsvi_plan(
    est: Estimates,
    H: int,
    rng: np.random.Generator,
    bonus_scale: float = 1.0,
    literal_variance: bool = False,
) -> PlanOutput:
    """Backward induction on point estimates plus Gaussian reward perturbations.

    At stage ``h`` the scale is ``phi = (H - h - 1) * xi_p + xi_r`` (capped
    widths expected) and the perturbation has variance ``S*H*phi**2``, or
    ``S*H*phi`` with ``literal_variance``. No clipping.
    """
    _check_estimates(est)
    S, A = est.r_hat.shape
    Q = np.zeros((H, S, A))
    V = np.zeros((H + 1, S))
    pi = np.zeros((H, S), dtype=int)
    for h in range(H - 1, -1, -1):
        phi = bonus_scale * ((H - h - 1) * est.xi_p + est.xi_r)
        std = np.sqrt(S * H * phi) if literal_variance else math.sqrt(S * H) * phi
        b = std * rng.standard_normal((S, A))
        Q[h] = est.P_hat @ V[h + 1] + est.r_hat + b
        pi[h] = greedy(Q[h])
        V[h] = Q[h][np.arange(S), pi[h]]
    return PlanOutput(Q, V, pi)


class GlmAgent:
    """Shared estimation state; subclasses choose how to plan."""

    name = "glm"
    capped = False

    def __init__(self, S: int, A: int, H: int, d: int, link: LinkFunction, cfg: AgentConfig | None = None):
        self.S, self.A, self.H, self.d = S, A, H, d
        self.link = link
        self.cfg = AgentConfig() if cfg is None else cfg
        self.B, self.B_p = self.cfg.bounds(link, d)
        self.B_pR = self.B_p * self.cfg.R
        if link.kind is LinkKind.QUADRATIC:
            # W x is a distribution, so every logit is at most 1
            self.B_pR = min(self.B_pR, 1.0)
        conv = convexity_params(link, self.B_p, self.cfg.R, S)
        self.alpha, self.beta = conv.alpha, conv.beta
        # one failure probability shared by every interval
        self.delta_prime = self.cfg.delta / (2 * S * A + S * H)
        if link.kind is LinkKind.QUADRATIC:
            constraint = ColumnSimplex()
        else:
            constraint = RowBall(self.B_p, self.cfg.zero_last_row)
        self.ons = [
            [
                OnsState.create(
                    link, d, self.alpha, constraint,
                    eta=self.cfg.eta, lam=self.cfg.lam,
                    tabular_recovery=self.cfg.tabular_recovery,
                )
                for _ in range(A)
            ]
            for _ in range(S)
        ]
        self.rewards = [[RewardEstState.create(d, self.cfg.lam or 1.0, self.cfg.B_r) for _ in range(A)] for _ in range(S)]
        self.rng = np.random.default_rng(self.cfg.seed)
        self.last_plan: PlanOutput | None = None

    def estimates(self, x) -> Estimates:
        x = np.asarray(x, dtype=float)
        S, A = self.S, self.A
        P_hat = np.empty((S, A, S))
        r_hat = np.empty((S, A))
        xi_p = np.empty((S, A))
        xi_r = np.empty((S, A))
        for s in range(S):
            for a in range(A):
                ons = self.ons[s][a]
                rew = self.rewards[s][a]
                P_hat[s, a] = predict_distribution(self.link, ons.W_hat, x)
                r_hat[s, a] = rew.theta_hat @ x
                # before any data the t=1 radius is used
                gamma = confidence_radius(ons, self.B, self.B_pR, self.delta_prime, t=max(ons.t, 1))
                xi_p[s, a] = transition_ci(ons, gamma, x, self.beta, S, capped=self.capped)
                xi_r[s, a] = reward_ci(rew, x, self.delta_prime, capped=self.capped, R=self.cfg.R)
        return Estimates(P_hat, r_hat, xi_p, xi_r)

    def plan(self, est: Estimates) -> PlanOutput:
        raise NotImplementedError

    def step(self, x) -> np.ndarray:
        """Policy table (H, S) for the episode with context ``x``."""
        self._x = np.asarray(x, dtype=float)
        self.last_plan = self.plan(self.estimates(self._x))
        return self.last_plan.policy

    def observe(self, trajectory: list[TrajectoryStep], x=None):
        x = self._x if x is None else np.asarray(x, dtype=float)
        for st in trajectory:
            if not (0 <= st.s < self.S and 0 <= st.a < self.A and 0 <= st.s_next < self.S):
                raise ValueError(f"trajectory step out of range: {st}")
        for st in trajectory:
            ons_update(self.ons[st.s][st.a], x, st.s_next)
            reward_update(self.rewards[st.s][st.a], x, st.r_obs)

    # checkpoints

    def to_dict(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "type": "agent",
            "agent": self.name,
            "dims": {"S": self.S, "A": self.A, "H": self.H, "d": self.d},
            "link": {"kind": self.link.kind.value, "S": self.link.output_dim},
            "config": asdict(self.cfg),
            "rng_state": self.rng.bit_generator.state,
            "ons": [[ons_to_dict(o) for o in row] for row in self.ons],
            "rewards": [[reward_to_dict(r) for r in row] for row in self.rewards],
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict()))
        return path

    @staticmethod
    def from_dict(data: dict) -> "GlmAgent":
        if data.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {data.get('version')}")
        cls = {c.name: c for c in (GlmOrlAgent, GlmRlsviAgent)}[data["agent"]]
        dims = data["dims"]
        link = LinkFunction(data["link"]["kind"], data["link"]["S"])
        agent = cls(dims["S"], dims["A"], dims["H"], dims["d"], link, AgentConfig(**data["config"]))
        agent.rng.bit_generator.state = data["rng_state"]
        agent.ons = [[ons_from_dict(o) for o in row] for row in data["ons"]]
        agent.rewards = [[reward_from_dict(r) for r in row] for row in data["rewards"]]
        return agent

    @staticmethod
    def load(path) -> "GlmAgent":
        return GlmAgent.from_dict(json.loads(Path(path).read_text()))


class GlmOrlAgent(GlmAgent):
    name = "glm-orl"

    def plan(self, est: Estimates) -> PlanOutput:
        return orl_plan(est, self.H, self.cfg.bonus_scale)


class GlmRlsviAgent(GlmAgent):
    name = "glm-rlsvi"
    capped = True

    def plan(self, est: Estimates) -> PlanOutput:
        return rlsvi_plan(est, self.H, self.rng, self.cfg.bonus_scale, self.cfg.rlsvi_literal_variance)


class OracleAgent:
    """Plans on the true MDP; zero regret by construction."""

    name = "oracle"

    def __init__(self, truth: CmdpTruth, H: int):
        self.truth, self.H = truth, H

    def step(self, x) -> np.ndarray:
        mdp = realize_mdp(self.truth, x, self.H)
        return backward_induction(mdp.P, mdp.r, self.H)[2]

    def observe(self, trajectory, x=None):
        pass


class UniformRandomAgent:
    """Draws a fresh uniformly random deterministic policy every episode."""

    name = "random"

    def __init__(self, S: int, A: int, H: int, seed: int = 0):
        self.S, self.A, self.H = S, A, H
        self.rng = np.random.default_rng(seed)

    def step(self, x) -> np.ndarray:
        return self.rng.integers(self.A, size=(self.H, self.S))

    def observe(self, trajectory, x=None):
        pass


def make_agent(kind: str, S: int, A: int, H: int, d: int, link: LinkFunction, cfg: AgentConfig | None = None, truth: CmdpTruth | None = None):
    cfg = AgentConfig() if cfg is None else cfg
    if kind == "glm-orl":
        return GlmOrlAgent(S, A, H, d, link, cfg)
    if kind == "glm-rlsvi":
        return GlmRlsviAgent(S, A, H, d, link, cfg)
    if kind == "oracle":
        if truth is None:
            raise ValueError("oracle agent needs the true CMDP")
        return OracleAgent(truth, H)
    if kind == "random":
        return UniformRandomAgent(S, A, H, cfg.seed)
    raise ValueError(f"unknown agent kind {kind!r}")
