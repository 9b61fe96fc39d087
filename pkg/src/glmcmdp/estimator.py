"""Online estimation of GLM transition weights and linear reward weights.

Each (state, action) pair owns one :class:`OnsState` (transition weights,
fitted by an online Newton step on the multinomial negative log-likelihood)
and one :class:`RewardEstState` (ridge regression on observed rewards).
:class:`ConversionState` turns the predictions of any external online
learner into a confidence ellipsoid around a ridge-style center.

All update functions mutate the state in place and return it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .linkfn import LinkFunction, LinkKind, phi_gradient

CHECKPOINT_VERSION = 1


class NumericFailure(RuntimeError):
    """Constrained step did not converge; ``residual`` is the last KKT residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


# --------------------------------------------------------------------------
# constraint sets


def project_simplex_columns(M: np.ndarray) -> np.ndarray:
    """Euclidean projection of every column of ``M`` onto the probability simplex.

    Sort-based; exact up to floating point.
    """
    M = np.asarray(M, dtype=float)
    S = M.shape[0]
    u = -np.sort(-M, axis=0)
    css = np.cumsum(u, axis=0) - 1.0
    ind = np.arange(1, S + 1)[:, None]
    cond = u - css / ind > 0
    rho = S - 1 - np.argmax(cond[::-1], axis=0)
    tau = css[rho, np.arange(M.shape[1])] / (rho + 1)
    return np.maximum(M - tau, 0.0)


@dataclass(frozen=True)
class RowBall:
    """Every row of W has l2 norm at most ``B_p``; optionally the last row is 0."""

    B_p: float
    zero_last_row: bool = False
    kind: str = field(default="row_ball", init=False)

    def project(self, W: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(W, axis=1, keepdims=True)
        scale = np.minimum(1.0, self.B_p / np.maximum(norms, 1e-300))
        P = W * scale
        if self.zero_last_row:
            P[-1] = 0.0
        return P

    def contains(self, W: np.ndarray, tol: float = 1e-12) -> bool:
        if self.zero_last_row and np.any(W[-1] != 0.0):
            return False
        return bool(np.all(np.linalg.norm(W, axis=1) <= self.B_p + tol))

    def initial_point(self, S: int, d: int) -> np.ndarray:
        return np.zeros((S, d))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "B_p": self.B_p, "zero_last_row": self.zero_last_row}


@dataclass(frozen=True)
class ColumnSimplex:
    """Every column of W is a probability distribution over next states."""

    kind: str = field(default="column_simplex", init=False)

    def project(self, W: np.ndarray) -> np.ndarray:
        return project_simplex_columns(W)

    def contains(self, W: np.ndarray, tol: float = 1e-12) -> bool:
        return bool(W.min() >= 0.0 and np.all(np.abs(W.sum(axis=0) - 1.0) <= tol))

    def initial_point(self, S: int, d: int) -> np.ndarray:
        # zero is infeasible here; start from its projection (uniform columns)
        return np.full((S, d), 1.0 / S)

    def to_dict(self) -> dict:
        return {"kind": self.kind}


ConstraintSet = RowBall | ColumnSimplex


def constraint_from_dict(data: dict) -> ConstraintSet:
    if data["kind"] == "row_ball":
        return RowBall(float(data["B_p"]), bool(data.get("zero_last_row", False)))
    if data["kind"] == "column_simplex":
        return ColumnSimplex()
    raise ValueError(f"unknown constraint kind {data['kind']!r}")


def solve_constrained_step(
    W0: np.ndarray,
    G: np.ndarray,
    Z: np.ndarray,
    eta: float,
    constraint: ConstraintSet,
    start: np.ndarray | None = None,
    tol: float = 1e-11,
    max_iter: int = 500,
) -> np.ndarray:
    """Minimise ``0.5*||W - W0||_Z^2 + eta*<G, W - W0>`` over the constraint set.

    ``||W||_Z^2`` is ``sum_i W[i] @ Z @ W[i]``. Accelerated projected gradient
    with adaptive restart; stops once the gradient-mapping norm drops below
    ``tol``.
    """
    L = float(np.linalg.eigvalsh(Z)[-1])
    if L <= 0:
        raise NumericFailure("covariance is not positive definite", float("nan"))

    def grad(W):
        return (W - W0) @ Z + eta * G

    def obj(W):
        D = W - W0
        return 0.5 * float(np.sum((D @ Z) * D)) + eta * float(np.sum(G * D))

    W = constraint.project(W0 if start is None else start)
    Y, tk, f_prev = W.copy(), 1.0, obj(W)
    residual = np.inf
    for _ in range(max_iter):
        W_next = constraint.project(Y - grad(Y) / L)
        f_next = obj(W_next)
        if f_next > f_prev:
            # restart momentum from the last iterate
            Y, tk = W.copy(), 1.0
            W_next = constraint.project(W - grad(W) / L)
            f_next = obj(W_next)
        residual = L * float(np.linalg.norm(W_next - W))
        tk_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        Y = W_next + ((tk - 1.0) / tk_next) * (W_next - W)
        W, tk, f_prev = W_next, tk_next, f_next
        if residual < tol:
            return W
    # accept near-converged iterates; the projection tolerance is 1e-7
    if residual < 1e-7:
        return W
    raise NumericFailure("constrained step hit the iteration cap", residual)


# --------------------------------------------------------------------------
# transition estimator


@dataclass
class OnsState:
    W_hat: np.ndarray
    Z: np.ndarray
    Z_inv: np.ndarray
    log_det_Z: float
    log_det_Z1: float
    eta: float
    lam: float
    alpha: float
    link: LinkFunction
    constraint: ConstraintSet
    t: int = 0
    tabular_recovery: bool = False

    @classmethod
    def create(
        cls,
        link: LinkFunction,
        d: int,
        alpha: float,
        constraint: ConstraintSet,
        eta: float = 1.0,
        lam: float = 1.0,
        tabular_recovery: bool = False,
    ) -> "OnsState":
        if eta <= 0 or lam < 0:
            raise ValueError("need eta > 0 and lam >= 0")
        S = link.output_dim
        log_det = d * math.log(lam) if lam > 0 else -math.inf
        Z_inv = np.eye(d) / lam if lam > 0 else np.zeros((d, d))
        return cls(
            W_hat=constraint.initial_point(S, d),
            Z=lam * np.eye(d),
            Z_inv=Z_inv,
            log_det_Z=log_det,
            log_det_Z1=log_det,
            eta=eta,
            lam=lam,
            alpha=alpha,
            link=link,
            constraint=constraint,
            tabular_recovery=tabular_recovery,
        )

    @property
    def z_coef(self) -> float:
        """Weight of ``x x^T`` added to Z per observation."""
        c = self.eta * self.alpha
        return c if self.tabular_recovery else 0.5 * c

    @property
    def S(self) -> int:
        return self.link.output_dim

    @property
    def d(self) -> int:
        return self.Z.shape[0]


def _rank_one_update(Z, Z_inv, log_det, x, c, lam):
    """Add ``c*x x^T`` to Z and keep its inverse and log-determinant in sync."""
    Z = Z + c * np.outer(x, x)
    if lam > 0:
        Zx = Z_inv @ x
        q = float(x @ Zx)
        Z_inv = Z_inv - (c / (1.0 + c * q)) * np.outer(Zx, Zx)
        log_det = log_det + math.log1p(c * q)
    else:
        # no regulariser: Z may be singular early on
        Z_inv = np.linalg.pinv(Z)
        sign, ld = np.linalg.slogdet(Z)
        log_det = ld if sign > 0 else -math.inf
    return Z, Z_inv, log_det


def ons_update(state: OnsState, x, y: int) -> OnsState:
    """One online Newton step on the observation (context ``x``, next state ``y``)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (state.d,) or not np.all(np.isfinite(x)):
        raise ValueError(f"context must be a finite vector of length {state.d}")
    if not 0 <= y < state.S:
        raise ValueError(f"next state {y} out of range [0, {state.S})")

    W = state.W_hat
    g = phi_gradient(state.link, W @ x, check=False)
    g[y] -= 1.0
    state.Z, state.Z_inv, state.log_det_Z = _rank_one_update(
        state.Z, state.Z_inv, state.log_det_Z, x, state.z_coef, state.lam
    )
    W_new = W - state.eta * np.outer(g, state.Z_inv @ x)
    if not state.constraint.contains(W_new):
        W_new = solve_constrained_step(
            W, np.outer(g, x), state.Z, state.eta, state.constraint, start=W_new
        )
    state.W_hat = W_new
    state.t += 1
    return state


def confidence_radius(state: OnsState, B: float, B_pR: float, delta: float, t: int | None = None) -> float:
    """Squared Z-norm radius of the confidence set after ``t`` samples.

    ``B`` bounds the Frobenius norm of the true weights and ``B_pR`` bounds
    every logit ``|W x|_inf``.
    """
    t = state.t if t is None else t
    if t < 1:
        raise ValueError("confidence radius needs at least one sample")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    tau = math.log(2 * math.ceil(2 * math.log(state.S * t)) * t * t / delta)
    a, eta = state.alpha, state.eta
    log_ratio = state.log_det_Z - state.log_det_Z1
    return (
        state.lam * B * B
        + 8 * eta * B_pR
        + 2 * eta * ((4 / a + 8 / 3 * B_pR) * tau + (4 / a) * log_ratio)
    )


def transition_ci(state: OnsState, gamma: float, x, beta_smooth: float, S: int | None = None, capped: bool = False) -> float:
    """l1 width of the next-state distribution at context ``x``."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    x = np.asarray(x, dtype=float)
    S = state.S if S is None else S
    width = beta_smooth * math.sqrt(S * gamma) * math.sqrt(max(float(x @ state.Z_inv @ x), 0.0))
    return min(2.0, width) if capped else width


# --------------------------------------------------------------------------
# reward estimator


@dataclass
class RewardEstState:
    theta_hat: np.ndarray
    Zr: np.ndarray
    Zr_inv: np.ndarray
    log_det_Zr: float
    b: np.ndarray
    lam: float
    B_r: float = 1.0
    t: int = 0

    @classmethod
    def create(cls, d: int, lam: float = 1.0, B_r: float = 1.0) -> "RewardEstState":
        if lam <= 0:
            raise ValueError("reward regulariser must be positive")
        return cls(
            theta_hat=np.zeros(d),
            Zr=lam * np.eye(d),
            Zr_inv=np.eye(d) / lam,
            log_det_Zr=d * math.log(lam),
            b=np.zeros(d),
            lam=lam,
            B_r=B_r,
        )

    @property
    def d(self) -> int:
        return self.b.shape[0]


def reward_update(state: RewardEstState, x, r: float) -> RewardEstState:
    x = np.asarray(x, dtype=float)
    if not (np.all(np.isfinite(x)) and math.isfinite(r)):
        raise ValueError("reward observation must be finite")
    state.Zr, state.Zr_inv, state.log_det_Zr = _rank_one_update(
        state.Zr, state.Zr_inv, state.log_det_Zr, x, 1.0, state.lam
    )
    state.b = state.b + r * x
    state.theta_hat = state.Zr_inv @ state.b
    state.t += 1
    return state


def reward_ci(
    state: RewardEstState,
    x,
    delta_r: float,
    d: int | None = None,
    capped: bool = False,
    R: float = 1.0,
) -> float:
    """Width of the mean-reward confidence interval at context ``x``.

    The capped variant is bounded by ``B_r * R``, the largest possible reward.
    """
    if not 0 < delta_r < 1:
        raise ValueError("delta_r must lie in (0, 1)")
    x = np.asarray(x, dtype=float)
    d = state.d if d is None else d
    log_ratio = state.log_det_Zr - d * math.log(state.lam) - 2 * math.log(delta_r)
    zeta = math.sqrt(state.lam * d) + math.sqrt(max(0.25 * log_ratio, 0.0))
    width = zeta * math.sqrt(max(float(x @ state.Zr_inv @ x), 0.0))
    return min(state.B_r * R, width) if capped else width


# --------------------------------------------------------------------------
# online-to-confidence-set conversion


@dataclass
class ConversionState:
    XtC: np.ndarray  # d x S
    Z: np.ndarray
    c_sq: float
    lam: float
    alpha: float
    t: int = 0

    @classmethod
    def create(cls, d: int, S: int, lam: float = 1.0, alpha: float = 1.0) -> "ConversionState":
        return cls(XtC=np.zeros((d, S)), Z=lam * np.eye(d), c_sq=0.0, lam=lam, alpha=alpha)


class ConfidenceSet(NamedTuple):
    center: np.ndarray
    radius: float
    degenerate: bool = False


def conversion_update(state: ConversionState, x, w_pred) -> ConversionState:
    """Record one prediction ``w_pred @ x`` of an external learner at context ``x``."""
    x = np.asarray(x, dtype=float)
    w_pred = np.asarray(w_pred, dtype=float)
    if w_pred.shape != (state.XtC.shape[1], x.shape[0]):
        raise ValueError(f"w_pred shape {w_pred.shape} does not match S x d")
    c = w_pred @ x
    state.XtC = state.XtC + np.outer(x, c)
    state.Z = state.Z + np.outer(x, x)
    state.c_sq += float(c @ c)
    state.t += 1
    return state


def conversion_gamma_prime(B_t: float, alpha: float, delta: float) -> float:
    """Bound on the summed squared prediction error given learner regret ``B_t``."""
    inner = 4 + 8 * B_t / alpha + 16 / (alpha**4 * delta**2)
    return 1 + 4 * B_t / alpha + (8 / alpha**2) * math.log(math.sqrt(inner) / delta)


def conversion_confidence(state: ConversionState, B_t: float, delta: float, B: float) -> ConfidenceSet:
    """Center (S x d) and squared Z-norm radius of the converted confidence set.

    ``B`` bounds the l2 norm of each weight row. A negative radius is
    clamped to 0 and flagged as degenerate.
    """
    if B_t < 0:
        raise ValueError("regret bound must be nonnegative")
    S = state.XtC.shape[1]
    center_t = np.linalg.solve(state.Z, state.XtC)  # d x S
    radius = (
        conversion_gamma_prime(B_t, state.alpha, delta)
        + state.lam * B * B * S
        - (state.c_sq - float(np.sum(center_t * state.XtC)))
    )
    if radius < 0:
        return ConfidenceSet(center_t.T, 0.0, True)
    return ConfidenceSet(center_t.T, radius, False)


# --------------------------------------------------------------------------
# checkpoints


def ons_to_dict(state: OnsState) -> dict:
    return {
        "W_hat": state.W_hat.tolist(),
        "Z": state.Z.tolist(),
        "Z_inv": state.Z_inv.tolist(),
        "log_det_Z": state.log_det_Z,
        "log_det_Z1": state.log_det_Z1,
        "eta": state.eta,
        "lam": state.lam,
        "alpha": state.alpha,
        "link": {"kind": state.link.kind.value, "S": state.link.output_dim},
        "constraint": state.constraint.to_dict(),
        "t": state.t,
        "tabular_recovery": state.tabular_recovery,
    }


def ons_from_dict(data: dict) -> OnsState:
    return OnsState(
        W_hat=np.array(data["W_hat"], dtype=float),
        Z=np.array(data["Z"], dtype=float),
        Z_inv=np.array(data["Z_inv"], dtype=float),
        log_det_Z=float(data["log_det_Z"]),
        log_det_Z1=float(data["log_det_Z1"]),
        eta=float(data["eta"]),
        lam=float(data["lam"]),
        alpha=float(data["alpha"]),
        link=LinkFunction(LinkKind(data["link"]["kind"]), int(data["link"]["S"])),
        constraint=constraint_from_dict(data["constraint"]),
        t=int(data["t"]),
        tabular_recovery=bool(data.get("tabular_recovery", False)),
    )


def reward_to_dict(state: RewardEstState) -> dict:
    return {
        "theta_hat": state.theta_hat.tolist(),
        "Zr": state.Zr.tolist(),
        "Zr_inv": state.Zr_inv.tolist(),
        "log_det_Zr": state.log_det_Zr,
        "b": state.b.tolist(),
        "lam": state.lam,
        "B_r": state.B_r,
        "t": state.t,
    }


def reward_from_dict(data: dict) -> RewardEstState:
    return RewardEstState(
        theta_hat=np.array(data["theta_hat"], dtype=float),
        Zr=np.array(data["Zr"], dtype=float),
        Zr_inv=np.array(data["Zr_inv"], dtype=float),
        log_det_Zr=float(data["log_det_Zr"]),
        b=np.array(data["b"], dtype=float),
        lam=float(data["lam"]),
        B_r=float(data["B_r"]),
        t=int(data["t"]),
    )


def save_estimators(path, ons: dict, rewards: dict | None = None) -> Path:
    """Write estimator states keyed by ``"s,a"`` strings to a JSON checkpoint."""
    path = Path(path)
    payload = {
        "version": CHECKPOINT_VERSION,
        "type": "estimators",
        "ons": {k: ons_to_dict(v) for k, v in ons.items()},
        "rewards": {k: reward_to_dict(v) for k, v in (rewards or {}).items()},
    }
    path.write_text(json.dumps(payload))
    return path


def load_estimators(path) -> tuple[dict, dict]:
    data = json.loads(Path(path).read_text())
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('version')}")
    ons = {k: ons_from_dict(v) for k, v in data["ons"].items()}
    rewards = {k: reward_from_dict(v) for k, v in data["rewards"].items()}
    return ons, rewards
