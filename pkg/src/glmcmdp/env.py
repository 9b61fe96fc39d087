"""Contextual MDP environments.

A :class:`CmdpTruth` holds the true GLM weights for every (state, action)
pair; :func:`realize_mdp` turns it plus one context into an ordinary
episodic MDP. Arrays are indexed ``[s, a, ...]`` throughout and the start
state is always 0.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .linkfn import LinkFunction, LinkKind, NEG_TOL, SUM_TOL, InvalidWeightError

START_STATE = 0


class ContextKind(str, enum.Enum):
    DIRICHLET = "dirichlet"
    INDICATOR_CYCLE = "indicator_cycle"


@dataclass
class EnvConfig:
    S: int = 10
    A: int = 10
    H: int = 6
    d: int = 5
    link_kind: LinkKind = LinkKind.QUADRATIC
    context_kind: ContextKind = ContextKind.DIRICHLET
    context_concentration: float | list[float] = 0.35
    reward_noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        self.link_kind = LinkKind(self.link_kind)
        self.context_kind = ContextKind(self.context_kind)
        if min(self.S, self.A, self.H, self.d) < 1:
            raise ValueError("S, A, H and d must be positive")
        if np.any(self.concentration <= 0):
            raise ValueError("Dirichlet concentrations must be positive")
        if self.reward_noise_sigma < 0:
            raise ValueError("reward noise must be nonnegative")

    @property
    def concentration(self) -> np.ndarray:
        c = np.asarray(self.context_concentration, dtype=float)
        return np.full(self.d, float(c)) if c.ndim == 0 else c

    def to_dict(self) -> dict:
        return {
            "S": self.S,
            "A": self.A,
            "H": self.H,
            "d": self.d,
            "link_kind": self.link_kind.value,
            "context_kind": self.context_kind.value,
            "context_concentration": self.context_concentration,
            "reward_noise_sigma": self.reward_noise_sigma,
            "seed": self.seed,
        }


@dataclass
class CmdpTruth:
    W_star: np.ndarray  # (S, A, S, d)
    theta_star: np.ndarray  # (S, A, d)
    link: LinkFunction
    H: int | None = None

    @property
    def S(self) -> int:
        return self.W_star.shape[0]

    @property
    def A(self) -> int:
        return self.W_star.shape[1]

    @property
    def d(self) -> int:
        return self.W_star.shape[3]

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "link_kind": self.link.kind.value,
            "S": self.S,
            "A": self.A,
            "d": self.d,
            "H": self.H,
            "W_star": self.W_star.tolist(),
            "theta_star": self.theta_star.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CmdpTruth":
        W = np.array(data["W_star"], dtype=float)
        theta = np.array(data["theta_star"], dtype=float)
        return cls(W, theta, LinkFunction(data["link_kind"], W.shape[0]), data.get("H"))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict()))
        return path

    @classmethod
    def load(cls, path) -> "CmdpTruth":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ContextualMdp:
    P: np.ndarray  # (S, A, S)
    r: np.ndarray  # (S, A) mean rewards
    H: int
    x: np.ndarray
    clamped: int = 0

    @property
    def S(self) -> int:
        return self.P.shape[0]

    @property
    def A(self) -> int:
        return self.P.shape[1]


class TrajectoryStep(NamedTuple):
    h: int  # 1-based step index
    s: int
    a: int
    r_obs: float
    s_next: int


class ExactValues(NamedTuple):
    v_star: float
    v_pi: float | None
    Q_star: np.ndarray  # (H, S, A)


def generate_benchmark(
    cfg: EnvConfig,
    dirichlet_base: float = 0.4,
    beta_reward: tuple[float, float] = (0.4, 0.4),
    rng: np.random.Generator | None = None,
) -> CmdpTruth:
    """Random linear-combination CMDP built from ``d`` base MDPs.

    Column ``i`` of ``W_star[s, a]`` is the next-state distribution of base
    MDP ``i`` and ``theta_star[s, a, i]`` its mean reward.
    """
    if cfg.link_kind is not LinkKind.QUADRATIC:
        raise ValueError("the benchmark generator builds linear-combination (quadratic link) truths")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    S, A, d = cfg.S, cfg.A, cfg.d
    # base MDP index is the outer loop so d base MDPs are drawn one after another
    P = rng.dirichlet(np.full(S, dirichlet_base), size=(d, S, A))  # (d, S, A, S)
    R = rng.beta(*beta_reward, size=(d, S, A))
    W_star = np.transpose(P, (1, 2, 3, 0)).copy()
    theta_star = np.transpose(R, (1, 2, 0)).copy()
    return CmdpTruth(W_star, theta_star, LinkFunction.quadratic(S), cfg.H)


class ContextSampler:
    """Draws episode contexts; ``IndicatorCycle`` walks e_1, e_2, ..., e_d, e_1, ..."""

    def __init__(self, cfg: EnvConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self._next = 0

    def __call__(self) -> np.ndarray:
        return sample_context(self.cfg, self.rng, self)


def sample_context(cfg: EnvConfig, rng: np.random.Generator, sampler: ContextSampler | None = None) -> np.ndarray:
    if cfg.context_kind is ContextKind.DIRICHLET:
        return rng.dirichlet(cfg.concentration)
    i = 0
    if sampler is not None:
        i = sampler._next
        sampler._next = (i + 1) % cfg.d
    x = np.zeros(cfg.d)
    x[i] = 1.0
    return x


def realize_mdp(truth: CmdpTruth, x, H: int | None = None) -> ContextualMdp:
    """MDP for context ``x``: ``P[s, a] = grad Phi(W*[s, a] x)``, ``r[s, a] = theta*[s, a] . x``."""
    x = np.asarray(x, dtype=float)
    logits = truth.W_star @ x  # (S, A, S)
    if truth.link.kind is LinkKind.LOGIT:
        e = np.exp(logits - logits.max(axis=-1, keepdims=True))
        P = e / e.sum(axis=-1, keepdims=True)
    else:
        if logits.min() < -NEG_TOL or np.abs(logits.sum(axis=-1) - 1).max() > SUM_TOL:
            raise InvalidWeightError("truth does not yield distributions at this context")
        P = np.clip(logits, 0.0, None)
        sums = P.sum(axis=-1, keepdims=True)
        # renormalise only rows that are off, so indicator contexts reproduce base MDPs bit for bit
        P = np.where(np.abs(sums - 1.0) > 1e-12, P / sums, P)
    r = truth.theta_star @ x
    clamped = int(np.count_nonzero((r < 0) | (r > 1)))
    H = truth.H if H is None else H
    if H is None:
        raise ValueError("horizon unknown: pass H or set it on the truth")
    return ContextualMdp(P=P, r=np.clip(r, 0.0, 1.0), H=H, x=x, clamped=clamped)


def rollout(
    mdp: ContextualMdp,
    policy: np.ndarray,
    s1: int = START_STATE,
    sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> list[TrajectoryStep]:
    """Run one episode of ``mdp.H`` steps; ``policy[h, s]`` is the action."""
    rng = np.random.default_rng() if rng is None else rng
    policy = np.asarray(policy)
    H = mdp.H
    steps = []
    s = s1
    for h in range(H):
        a = int(policy[h, s])
        r_obs = float(mdp.r[s, a])
        if sigma > 0:
            r_obs += sigma * rng.standard_normal()
        s_next = int(rng.choice(mdp.S, p=mdp.P[s, a]))
        steps.append(TrajectoryStep(h + 1, s, a, r_obs, s_next))
        s = s_next
    return steps


def backward_induction(P: np.ndarray, r: np.ndarray, H: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Optimal ``Q`` (H, S, A), ``V`` (H+1, S) and greedy policy (H, S)."""
    S, A = r.shape
    Q = np.zeros((H, S, A))
    V = np.zeros((H + 1, S))
    pi = np.zeros((H, S), dtype=int)
    for h in range(H - 1, -1, -1):
        Q[h] = r + P @ V[h + 1]
        pi[h] = np.argmax(Q[h], axis=1)
        V[h] = Q[h].max(axis=1)
    return Q, V, pi


def policy_values(P: np.ndarray, r: np.ndarray, policy: np.ndarray) -> np.ndarray:
    """State values (H+1, S) of a deterministic nonstationary policy."""
    H = policy.shape[0]
    S = r.shape[0]
    V = np.zeros((H + 1, S))
    idx = np.arange(S)
    for h in range(H - 1, -1, -1):
        a = policy[h]
        V[h] = r[idx, a] + P[idx, a] @ V[h + 1]
    return V


def exact_values(mdp: ContextualMdp, policy: np.ndarray | None = None, s1: int = START_STATE) -> ExactValues:
    """Optimal value from ``s1``, the value of ``policy`` if given, and ``Q*``."""
    Q, V, _ = backward_induction(mdp.P, mdp.r, mdp.H)
    v_pi = None
    if policy is not None:
        v_pi = float(policy_values(mdp.P, mdp.r, np.asarray(policy))[0, s1])
    return ExactValues(float(V[0, s1]), v_pi, Q)


def generate_hard_instance(
    S: int = 2,
    A: int = 2,
    H: int = 10,
    d: int = 2,
    epsilon: float = 0.1,
    link_kind: LinkKind | str = LinkKind.LOGIT,
) -> CmdpTruth:
    """Lower-bound family of bandit-like two-state blocks.

    Each block ``j`` has a non-rewarding state ``2j`` and a rewarding state
    ``2j+1`` (mean reward 1). In the rewarding state, the designated action
    ``a*_i = i mod A`` for context index ``i`` stays with probability
    ``1/2 + epsilon`` and every other action with probability ``1/2``;
    leaving moves to the block's non-rewarding state. From a non-rewarding
    state every action reaches the block's rewarding state with probability
    ``1/2 + epsilon`` and otherwise moves to the next block's non-rewarding
    state (cyclically). Contexts are meant to be indicator vectors.
    """
    link_kind = LinkKind(link_kind)
    if S < 2 or S % 2:
        raise ValueError("hard instance needs an even number of states (pairs of states per block)")
    if not 0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 1/2)")
    high = 0.5 + epsilon
    m = S // 2
    designated = np.arange(d) % A

    # target probabilities per (s, a, s', context index)
    probs = np.zeros((S, A, S, d))
    for j in range(m):
        zero, rew = 2 * j, 2 * j + 1
        nxt = 2 * ((j + 1) % m)
        probs[zero, :, rew, :] = high
        probs[zero, :, nxt, :] += 1 - high
        for a in range(A):
            stay = np.where(designated == a, high, 0.5)
            probs[rew, a, rew, :] = stay
            probs[rew, a, zero, :] = 1 - stay

    theta = np.zeros((S, A, d))
    theta[1::2] = 1.0

    if link_kind is LinkKind.QUADRATIC:
        return CmdpTruth(probs, theta, LinkFunction.quadratic(S), H)

    # logit: the leave state is the reference (logit 0), unreachable states get
    # a logit low enough that exp underflows to exactly zero after max-shift
    W = np.full((S, A, S, d), -1e3)
    for j in range(m):
        zero, rew = 2 * j, 2 * j + 1
        nxt = 2 * ((j + 1) % m)
        if nxt == zero:
            W[zero, :, zero, :] = 0.0
            W[zero, :, rew, :] = _logit(high)
        else:
            W[zero, :, nxt, :] = 0.0
            W[zero, :, rew, :] = _logit(high)
        W[rew, :, zero, :] = 0.0
        W[rew, :, rew, :] = _logit(probs[rew, :, rew, :])
    return CmdpTruth(W, theta, LinkFunction.logit(S), H)


def _logit(p):
    return np.log(p) - np.log1p(-p)
