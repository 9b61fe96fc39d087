"""Independent reference computations used by the test-suite.

Nothing here calls into the code paths being checked: the constrained
step oracle is a zooming grid search, optimal values come from enumerating
deterministic policies, and gradients from finite differences.
"""

import itertools

import numpy as np


def ons_objective(W, W0, G, Z, eta):
    D = W - W0
    return 0.5 * np.einsum("...ij,jk,...ik->...", D, Z, D) + eta * np.einsum("...ij,ij->...", D, G)


def _zoom(obj, center, half, lo, hi, n=9, levels=50, shrink=0.5):
    """Grid search on a box around ``center`` clipped to ``[lo, hi]``.

    The box is re-centred on the best point each round and shrinks unless
    that point sits on an unclipped box edge (the optimum may lie beyond).
    """
    dim = center.size
    offsets = np.stack(np.meshgrid(*[np.linspace(-1, 1, n)] * dim, indexing="ij"), -1).reshape(-1, dim)
    best_x = np.clip(center, lo, hi)
    best_f = obj(best_x[None])[0]
    done = 0
    for _ in range(levels * 6):
        raw = best_x + half * offsets
        pts = np.clip(raw, lo, hi)
        f = obj(pts)
        i = int(np.argmin(f))
        on_edge = False
        if f[i] < best_f:
            best_x, best_f = pts[i], f[i]
            on_edge = np.abs(offsets[i]).max() == 1.0 and np.all(raw[i] == pts[i])
        if not on_edge:
            half = half * shrink
            done += 1
            if done == levels:
                break
    return best_x


def _grid_start(obj, lo, hi, n):
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(lo))
    return grid[np.argmin(obj(grid))], (np.asarray(hi) - np.asarray(lo)) / (n - 1)


def brute_force_row_ball(W0, G, Z, eta, B_p):
    """Rows decouple under the row-wise Z norm; each row is searched in polar coordinates."""
    S, d = W0.shape
    out = np.zeros_like(W0)
    for i in range(S):
        if d == 1:
            def to_row(P):
                return P
            lo, hi = np.array([-B_p]), np.array([B_p])
        else:
            def to_row(P):
                return np.stack([P[:, 0] * np.cos(P[:, 1]), P[:, 0] * np.sin(P[:, 1])], axis=1)
            # angle left unbounded so the search can wrap around
            lo, hi = np.array([0.0, -np.inf]), np.array([B_p, np.inf])

        def obj(P, i=i, to_row=to_row):
            D = to_row(P) - W0[i]
            return 0.5 * np.einsum("nj,jk,nk->n", D, Z, D) + eta * D @ G[i]

        glo = np.where(np.isfinite(lo), lo, -np.pi)
        ghi = np.where(np.isfinite(hi), hi, np.pi)
        start, step = _grid_start(obj, glo, ghi, 201)
        best = _zoom(obj, start, 4 * step, lo, hi)
        out[i] = to_row(best[None])[0]
    return out


def _stick_breaking(U):
    """Map (n, k) points of the unit box to (n, k+1) points of the simplex."""
    n, k = U.shape
    out = np.zeros((n, k + 1))
    rest = np.ones(n)
    for j in range(k):
        out[:, j] = rest * U[:, j]
        rest = rest - out[:, j]
    out[:, k] = rest
    return out


def brute_force_column_simplex(W0, G, Z, eta):
    """Every column is stick-breaking parametrised; joint search over all columns."""
    S, d = W0.shape
    k = S - 1

    def to_W(U):
        cols = [_stick_breaking(U[:, j * k:(j + 1) * k]) for j in range(d)]
        return np.stack(cols, axis=2)  # (n, S, d)

    def obj(U):
        return ons_objective(to_W(U), W0, G, Z, eta)

    lo, hi = np.zeros(k * d), np.ones(k * d)
    start, step = _grid_start(obj, lo, hi, 41 if k * d <= 2 else 15 if k * d <= 4 else 7)
    best = _zoom(obj, start, 2 * step, lo, hi, n=7, levels=80, shrink=0.8)
    return to_W(best[None])[0]


def enumerate_policies(S, A, H):
    for flat in itertools.product(range(A), repeat=S * H):
        yield np.array(flat).reshape(H, S)


def evaluate_policy(P, r, policy):
    H = policy.shape[0]
    S = r.shape[0]
    V = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        for s in range(S):
            a = policy[h, s]
            V[h, s] = r[s, a] + sum(P[s, a, t] * V[h + 1, t] for t in range(S))
    return V


def brute_force_q_star(P, r, H):
    """Q*[h, s, a] = max over all deterministic policies of r + P . V^pi_{h+1}."""
    S, A = r.shape
    best_V = np.full((H + 1, S), -np.inf)
    for pi in enumerate_policies(S, A, H):
        best_V = np.maximum(best_V, evaluate_policy(P, r, pi))
    Q = np.zeros((H, S, A))
    for h in range(H):
        for s in range(S):
            for a in range(A):
                Q[h, s, a] = r[s, a] + P[s, a] @ best_V[h + 1]
    return Q, best_V


def central_difference(f, y, step=1e-5):
    g = np.zeros_like(y)
    for i in range(y.size):
        e = np.zeros_like(y)
        e[i] = step
        g[i] = (f(y + e) - f(y - e)) / (2 * step)
    return g
