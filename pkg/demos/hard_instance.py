"""
The two-state hard instance
===========================

Each context index designates one action whose stay probability in the
rewarding state is 0.6; every other action stays with probability 0.5.
"""

import numpy as np

from glmcmdp import exact_values, generate_hard_instance, realize_mdp

truth = generate_hard_instance(S=2, A=2, H=10, d=2, epsilon=0.1)
for i in range(truth.d):
    mdp = realize_mdp(truth, np.eye(truth.d)[i])
    ev = exact_values(mdp)
    print(f"context e_{i}: stay probabilities {mdp.P[1, :, 1]}, v* = {ev.v_star:.4f}")
    # acting with the wrong action everywhere costs a little value each step
    wrong = np.full((truth.H, truth.S), 1 - i % truth.A)
    print(f"             wrong-action value {exact_values(mdp, wrong).v_pi:.4f}")
