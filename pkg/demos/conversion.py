"""
Confidence sets from any online learner
=======================================

Projected online gradient descent on the squared-link loss predicts
transition weights; the conversion turns its predictions and regret into
an ellipsoid around the true weights.
"""

import numpy as np

from glmcmdp import ColumnSimplex, ConversionState, LinkFunction, conversion_confidence, conversion_update, phi_value

rng = np.random.default_rng(1)
S, d = 2, 2
link = LinkFunction.quadratic(S)
W_star = rng.dirichlet(np.ones(S), size=d).T

simplex = ColumnSimplex()
W = simplex.initial_point(S, d)
conv = ConversionState.create(d, S)
regret = 0.0


def loss(M, x, y):
    return phi_value(link, M @ x) - (M @ x)[y]


for t in range(1, 201):
    x = rng.dirichlet(np.ones(d))
    y = rng.choice(S, p=W_star @ x)
    conversion_update(conv, x, W)
    regret += loss(W, x, y) - loss(W_star, x, y)
    g = W @ x
    g[y] -= 1
    W = simplex.project(W - np.outer(g, x) / np.sqrt(t))
    if t % 50 == 0:
        center, radius, _ = conversion_confidence(conv, max(regret, 0.0), 0.1, B=1.0)
        D = W_star - center
        print(f"t={t:3d}  regret={regret:6.2f}  |W*-center|_Z^2={np.einsum('id,de,ie->', D, conv.Z, D):6.2f}  radius={radius:6.1f}")
