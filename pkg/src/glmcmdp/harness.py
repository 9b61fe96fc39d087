"""Experiment orchestration: seeded runs, regret/mistake metrics and result files."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .agents import AgentConfig, make_agent
from .env import (
    START_STATE,
    CmdpTruth,
    ContextKind,
    ContextSampler,
    EnvConfig,
    exact_values,
    generate_benchmark,
    generate_hard_instance,
    realize_mdp,
    rollout,
)
from .linkfn import LinkKind

log = logging.getLogger(__name__)


class ExperimentError(RuntimeError):
    def __init__(self, message: str, episode: int | None = None, seed: int | None = None):
        super().__init__(message if episode is None else f"episode {episode} (seed {seed}): {message}")
        self.episode = episode
        self.seed = seed


@dataclass
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=lambda: AgentConfig(bonus_scale=0.1))
    agent_kind: str = "glm-orl"
    preset: str = "appendix-f"  # or "hard-instance"
    epsilon: float = 0.1  # gap of the hard instance
    K: int = 20_000
    epsilon_list: list[float] = field(default_factory=lambda: [0.1, 0.5])
    report_window: int = 2000
    output_dir: str = "results"
    seeds: list[int] = field(default_factory=lambda: [0])

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not 1 <= self.report_window <= self.K:
            raise ValueError("report_window must lie in [1, K]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["env"] = self.env.to_dict()
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        env = EnvConfig(**data.pop("env", {}))
        agent = AgentConfig(**data.pop("agent", {}))
        return cls(env=env, agent=agent, **data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def config_hash(self) -> str:
        d = self.to_dict()
        # seeds and output location do not change any single run
        d.pop("seeds")
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


class RegretRecord(NamedTuple):
    k: int
    v_star: float
    v_pi: float
    regret: float
    cum_regret: float
    mistakes: tuple[int, ...]


def build_truth(cfg: ExperimentConfig) -> CmdpTruth:
    e = cfg.env
    if cfg.preset == "appendix-f":
        return generate_benchmark(e)
    if cfg.preset == "hard-instance":
        return generate_hard_instance(e.S, e.A, e.H, e.d, cfg.epsilon, e.link_kind)
    raise ValueError(f"unknown preset {cfg.preset!r}")


def appendix_f_config(**overrides) -> ExperimentConfig:
    """Benchmark recipe: S=10, A=10, d=5, H=6, Dirichlet(0.35) contexts, bonus scale 0.1."""
    return ExperimentConfig(**overrides)


def hard_instance_config(**overrides) -> ExperimentConfig:
    env = EnvConfig(S=2, A=2, H=10, d=2, link_kind=LinkKind.LOGIT, context_kind=ContextKind.INDICATOR_CYCLE)
    return ExperimentConfig(env=env, preset="hard-instance", **overrides)


def run_single(cfg: ExperimentConfig, seed: int, truth: CmdpTruth | None = None, agent=None) -> list[RegretRecord]:
    """Run ``cfg.K`` episodes for one seed; deterministic in ``(cfg, seed)``.

    The truth is drawn from ``cfg.env.seed``; contexts, rollouts and agent
    randomness come from independent streams spawned from ``seed``.
    """
    truth = build_truth(cfg) if truth is None else truth
    e = cfg.env
    ctx_ss, roll_ss, agent_ss = np.random.SeedSequence(seed).spawn(3)
    ctx = ContextSampler(e, np.random.default_rng(ctx_ss))
    roll_rng = np.random.default_rng(roll_ss)
    if agent is None:
        agent_cfg = AgentConfig(**{**asdict(cfg.agent), "seed": int(agent_ss.generate_state(1)[0])})
        agent = make_agent(cfg.agent_kind, truth.S, truth.A, e.H, truth.d, truth.link, agent_cfg, truth)

    eps = np.asarray(cfg.epsilon_list, dtype=float)
    mistakes = np.zeros(len(eps), dtype=int)
    cum = 0.0
    records = []
    for k in range(1, cfg.K + 1):
        try:
            x = ctx()
            mdp = realize_mdp(truth, x, e.H)
            policy = agent.step(x)
            traj = rollout(mdp, policy, START_STATE, e.reward_noise_sigma, roll_rng)
            agent.observe(traj, x)
            ev = exact_values(mdp, policy)
        except Exception as exc:
            raise ExperimentError(str(exc), episode=k, seed=seed) from exc
        regret = ev.v_star - ev.v_pi
        cum += regret
        mistakes += regret >= eps
        records.append(RegretRecord(k, ev.v_star, ev.v_pi, regret, cum, tuple(int(m) for m in mistakes)))
    return records


def _run_task(args):
    cfg, seed = args
    t0 = time.perf_counter()
    records = run_single(cfg, seed)
    return seed, records, time.perf_counter() - t0


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> dict[int, list[RegretRecord]]:
    """Run every seed in ``cfg.seeds``; returns records keyed by seed."""
    tasks = [(cfg, s) for s in cfg.seeds]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    out = {}
    for seed, records, wall in results:
        log.info("seed %d: %d episodes in %.1fs", seed, len(records), wall)
        out[seed] = records
    return out


def windowed_average(values, window: int) -> np.ndarray:
    """Means over consecutive non-overlapping windows; a trailing partial window is dropped."""
    v = np.asarray(values, dtype=float)
    n = len(v) // window
    return v[: n * window].reshape(n, window).mean(axis=1)


def compute_metrics(records: list[RegretRecord], epsilon_list=(0.1,), report_window: int = 2000) -> dict:
    if not records:
        raise ValueError("no records")
    regrets = np.array([r.regret for r in records])
    window = min(report_window, len(records))
    return {
        "episodes": len(records),
        "report_window": window,
        "window_avg_regret": windowed_average(regrets, window).tolist(),
        "final_cum_regret": float(records[-1].cum_regret),
        "mean_v_star": float(np.mean([r.v_star for r in records])),
        "mistakes": {repr(float(e)): int(np.count_nonzero(regrets >= e)) for e in epsilon_list},
    }


def aggregate(summaries: list[dict]) -> dict:
    """Mean and standard error across seeds of the windowed averages and final regret."""
    w = np.array([s["window_avg_regret"] for s in summaries])
    f = np.array([s["final_cum_regret"] for s in summaries])
    n = len(summaries)
    se = (lambda a: (a.std(axis=0, ddof=1) / np.sqrt(n)) if n > 1 else np.zeros_like(a.mean(axis=0)))
    return {
        "n_seeds": n,
        "window_avg_regret_mean": w.mean(axis=0).tolist(),
        "window_avg_regret_se": np.atleast_1d(se(w)).tolist(),
        "final_cum_regret_mean": float(f.mean()),
        "final_cum_regret_se": float(se(f)),
    }


CSV_HEADER = ["k", "v_star", "v_pi", "regret", "cum_regret"]


def records_to_csv(records: list[RegretRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([r.k, repr(r.v_star), repr(r.v_pi), repr(r.regret), repr(r.cum_regret)])
    return buf.getvalue()


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return [{k: (int(v) if k == "k" else float(v)) for k, v in row.items()} for row in csv.DictReader(f)]


def emit_results(
    cfg: ExperimentConfig,
    results: dict[int, list[RegretRecord]],
    out_dir=None,
    wall_clock: float | None = None,
) -> dict[str, Path]:
    """Write one CSV per seed plus a summary JSON; returns the written paths."""
    out = Path(cfg.output_dir if out_dir is None else out_dir)
    h = cfg.config_hash()
    paths = {}
    try:
        out.mkdir(parents=True, exist_ok=True)
        summaries = {}
        for seed, records in sorted(results.items()):
            p = out / f"regret_{h}_seed{seed}.csv"
            p.write_text(records_to_csv(records))
            paths[f"csv_{seed}"] = p
            summaries[seed] = compute_metrics(records, cfg.epsilon_list, cfg.report_window)
        summary = {
            "config": cfg.to_dict(),
            "config_hash": h,
            "per_seed": {str(s): m for s, m in summaries.items()},
            "aggregate": aggregate(list(summaries.values())),
            "wall_clock_s": wall_clock,
        }
        p = out / f"summary_{h}.json"
        p.write_text(json.dumps(summary, indent=2))
        paths["summary"] = p
    except OSError as exc:
        raise ExperimentError(f"could not write results to {exc.filename or out}: {exc.strerror}") from exc
    return paths
