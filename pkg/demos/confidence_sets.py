"""
Online Newton step and its confidence ellipsoid
===============================================

Fit a softmax transition model from streaming contexts and watch the
estimate stay inside the confidence set while the set shrinks.
"""

import numpy as np

from glmcmdp import LinkFunction, OnsState, RowBall, confidence_radius, convexity_params, ons_update

rng = np.random.default_rng(0)
S, d = 3, 3
link = LinkFunction.logit(S)

# true weights with every row inside the unit ball; softmax ignores a common
# shift of the logits, so the last row is pinned at zero to make W* identifiable
W_star = rng.normal(size=(S, d))
W_star *= 0.8 / np.linalg.norm(W_star, axis=1, keepdims=True)
W_star[-1] = 0.0

alpha = convexity_params(link, 1.0, 1.0, S).alpha
state = OnsState.create(link, d, alpha, RowBall(1.0, zero_last_row=True))

for t in range(1, 20001):
    x = rng.normal(size=d)
    x /= np.linalg.norm(x)
    p = np.exp(W_star @ x)
    y = rng.choice(S, p=p / p.sum())
    ons_update(state, x, y)
    if t in (10, 100, 1000, 20000):
        D = state.W_hat - W_star
        dist = np.einsum("id,de,ie->", D, state.Z, D)
        gamma = confidence_radius(state, np.sqrt(S), 1.0, 0.1)
        print(f"t={t:5d}  |W-W*|_Z^2={dist:8.3f}  gamma={gamma:9.1f}  |W-W*|_F={np.linalg.norm(D):.3f}")
