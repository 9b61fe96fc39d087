"""
Regret on the random benchmark
==============================

GLM-ORL against a uniform-random baseline on the default 10-state,
10-action, horizon-6 benchmark. Pass a larger episode count as the first
argument for a longer run (the full study uses 20000).
"""

import sys

import numpy as np

from glmcmdp import ExperimentConfig, run_single, windowed_average

K = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
window = max(1, K // 5)

for kind in ("random", "glm-orl"):
    cfg = ExperimentConfig(K=K, agent_kind=kind, report_window=window)
    regret = np.array([r.regret for r in run_single(cfg, seed=0)])
    print(f"{kind:8s} windowed regret: {np.round(windowed_average(regret, window), 3)}")
