"""GLM link functions for next-state distributions.

A link is a convex potential ``Phi`` on R^S whose gradient maps a linear
predictor ``W @ x`` to a distribution over S next states. Two links are
supported: the multinomial logit (log-sum-exp potential) and the linear
combination of base MDPs (half squared norm potential).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class LinkKind(str, enum.Enum):
    LOGIT = "logit"
    QUADRATIC = "quadratic"


class InvalidWeightError(ValueError):
    """Raised when a quadratic-link predictor is not a probability vector."""


# tolerances for accepting W @ x as a distribution under the quadratic link
NEG_TOL = 1e-9
SUM_TOL = 1e-6


@dataclass(frozen=True)
class LinkFunction:
    kind: LinkKind
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "kind", LinkKind(self.kind))
        if self.output_dim < 1:
            raise ValueError(f"output_dim must be positive, got {self.output_dim}")

    @classmethod
    def logit(cls, S: int) -> "LinkFunction":
        return cls(LinkKind.LOGIT, S)

    @classmethod
    def quadratic(cls, S: int) -> "LinkFunction":
        return cls(LinkKind.QUADRATIC, S)


@dataclass(frozen=True)
class ConvexityParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta >= self.alpha):
            raise ValueError(f"need 0 < alpha <= beta, got {self.alpha}, {self.beta}")


def _check_input(link: LinkFunction, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (link.output_dim,):
        raise ValueError(f"expected input of shape ({link.output_dim},), got {y.shape}")
    return y


def _logsumexp(y: np.ndarray) -> float:
    m = y.max()
    return float(m + np.log(np.exp(y - m).sum()))


def _softmax(y: np.ndarray) -> np.ndarray:
    e = np.exp(y - y.max())
    return e / e.sum()


def phi_value(link: LinkFunction, y) -> float:
    """Evaluate the potential: log-sum-exp for logit, ``0.5*|y|^2`` for quadratic."""
    y = _check_input(link, y)
    if link.kind is LinkKind.LOGIT:
        return _logsumexp(y)
    return 0.5 * float(y @ y)


def phi_gradient(link: LinkFunction, y, check: bool = True) -> np.ndarray:
    """Gradient of the potential, i.e. the next-state distribution.

    For the quadratic link the gradient is ``y`` itself and is only a valid
    distribution on the feasible set; with ``check`` an
    :class:`InvalidWeightError` is raised outside it.
    """
    y = _check_input(link, y)
    if link.kind is LinkKind.LOGIT:
        return _softmax(y)
    if check and (y.min() < -NEG_TOL or abs(y.sum() - 1.0) > SUM_TOL):
        raise InvalidWeightError(f"quadratic link output is not a distribution: {y}")
    return y.copy()


def convexity_params(link: LinkFunction, B: float, R: float, S: int | None = None) -> ConvexityParams:
    """Strong convexity / smoothness constants of the link.

    ``B`` bounds each weight row in l2 and ``R`` bounds the context norm, so
    every logit lies in ``[-B*R, B*R]``.
    """
    S = link.output_dim if S is None else S
    if B < 0 or R < 0 or S < 2:
        raise ValueError("need B >= 0, R >= 0 and S >= 2")
    if link.kind is LinkKind.LOGIT:
        return ConvexityParams(alpha=1.0 / (np.exp(B * R) * S**2), beta=1.0)
    return ConvexityParams(alpha=1.0, beta=1.0)


def predict_distribution(link: LinkFunction, W, x, check: bool = True) -> np.ndarray:
    """Next-state distribution ``grad Phi(W @ x)``."""
    W = np.asarray(W, dtype=float)
    x = np.asarray(x, dtype=float)
    if W.ndim != 2 or W.shape[1] != x.shape[0]:
        raise ValueError(f"shape mismatch: W {W.shape}, x {x.shape}")
    return phi_gradient(link, W @ x, check=check)
