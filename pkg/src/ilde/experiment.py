"""Experiment runner: builds the environment and demos, dispatches the
algorithm for every (tremble level, seed) job, and writes result files.

Output layout (all paths relative to the output directory)::

    trace_p{tremble}_s{seed}.csv    per-seed trace (schema depends on algorithm)
    regret_p{tremble}_s{seed}.csv   NPG only: regret ledger
    summary.csv                     one row per tremble level (SUMMARY_COLUMNS)
    manifest.kv                     format version, config hash, seeds, job status

No file carries timestamps or absolute paths, so a rerun with the same
config and seeds reproduces every file byte for byte.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kvformat
from .config import ExperimentConfig, config_hash, to_dict
from .curiosity import fit_demo_model
from .envs import build_environment
from .evaluation import NEVER, compute_regret, improvement_vs_expert, saddle_policy, sample_efficiency
from .function_class import FeatureMap
from .imitation import LinearRewardClass
from .mdp import expected_return, make_demos
from .npg import run_ilde_npg, trace_rows
from .practical import run_ilde_practical

MANIFEST_FORMAT_VERSION = 1
SUMMARY_COLUMNS = (
    "tremble_prob", "algorithm", "variant", "num_seeds", "num_failed", "expert_J",
    "final_J", "final_J_mean", "final_J_std", "sample_efficiency", "sample_efficiency_reached",
    "improvement_vs_expert", "improvement_vs_expert_std",
)
EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2, 3


def _fmt(p) -> str:
    return repr(float(p))


def trace_name(tremble, seed) -> str:
    return f"trace_p{_fmt(tremble)}_s{seed}.csv"


def regret_name(tremble, seed) -> str:
    return f"regret_p{_fmt(tremble)}_s{seed}.csv"


def _csv_text(rows, columns) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def write_atomic(path, text) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


@dataclass
class JobResult:
    tremble: float
    seed: int
    ok: bool
    final_j: float = float("nan")
    expert_j: float = float("nan")
    efficiency: object = NEVER
    error: str = ""
    files: list = field(default_factory=list)


def run_job(cfg: ExperimentConfig, tremble: float, seed: int, out_dir: str) -> JobResult:
    """One seed at one noise level; exceptions become a failed result."""
    try:
        return _run_job(cfg, tremble, seed, out_dir)
    except Exception as exc:  # one bad seed must not sink the sweep
        return JobResult(tremble, seed, False, error=f"{type(exc).__name__}: {exc}")


def _run_job(cfg, tremble, seed, out_dir) -> JobResult:
    mdp, expert = build_environment(cfg.env.kind, rng_seed=cfg.env.seed, expert_epsilon=cfg.env.expert_epsilon, **cfg.env.size())
    demos = make_demos(mdp, expert, cfg.demo.n, cfg.demo.truncation_fraction, tremble, rng_seed=seed, tag="demos")
    expert_j = expected_return(mdp, expert, mdp.true_reward)
    files = []
    if cfg.algorithm == "ilde_practical":
        pcfg = cfg.practical_config(seed)
        policy, trace = run_ilde_practical(mdp, demos, pcfg, cfg.variant)
        rows = trace.rows()
        final_j = rows[-1]["J_true"]
        evals = [r for r in rows if r["evaluation_step"] > 0]
        total = pcfg.T
        columns = ("evaluation_step", "J_true", "mean_disc_reward", "mean_curiosity", "mean_bonus", "variant")
    else:
        ncfg = cfg.npg_config(seed)
        model = fit_demo_model(demos, mdp.num_states, mdp.num_actions, cfg.npg.curiosity_smoothing)
        policy, trace = run_ilde_npg(mdp, demos, ncfg, curiosity_model=model)
        reward_class = LinearRewardClass(FeatureMap.one_hot(mdp.num_states, mdp.num_actions), ncfg.reward_radius)
        reference, _ = saddle_policy(mdp, expert, reward_class, model, ncfg.lam)
        ledger = compute_regret(mdp, trace.policies(), reward_class, reference, expert, model, ncfg.lam)
        rows = trace_rows(trace, mdp, ledger.increments)
        final_j = expected_return(mdp, policy, mdp.true_reward)
        evals = [{"evaluation_step": r["iteration"], "J_true": r["J_true"]} for r in rows]
        total = ncfg.K
        columns = ("iteration", "refresh_flag", "k_prime", "L_hat", "mean_bonus", "J_true", "regret_increment")
        name = regret_name(tremble, seed)
        write_atomic(os.path.join(out_dir, name), _csv_text(ledger.rows(), ("t", "ell_increment_at_max_r", "cumulative_regret", "regret_at_t")))
        files.append(name)
    name = trace_name(tremble, seed)
    write_atomic(os.path.join(out_dir, name), _csv_text(rows, columns))
    files.append(name)
    eff = sample_efficiency([r["J_true"] for r in evals], expert_j, total, [r["evaluation_step"] for r in evals]) if evals else NEVER
    return JobResult(tremble, seed, True, float(final_j), float(expert_j), eff, files=files)


def _std(x) -> float:
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def summary_row(cfg, tremble, results) -> dict:
    ok = [r for r in results if r.ok]
    row = {"tremble_prob": float(tremble), "algorithm": cfg.algorithm,
           "variant": cfg.variant if cfg.algorithm == "ilde_practical" else "",
           "num_seeds": len(ok), "num_failed": len(results) - len(ok)}
    if not ok:
        return {**row, **{c: "" for c in SUMMARY_COLUMNS if c not in row}}
    finals = np.array([r.final_j for r in ok])
    expert = ok[0].expert_j
    reached = [r.efficiency for r in ok if r.efficiency != NEVER]
    mean, std = float(finals.mean()), _std(finals)
    row.update({
        "expert_J": expert,
        "final_J": f"{mean:.3f} ± {std:.3f}",
        "final_J_mean": mean,
        "final_J_std": std,
        "sample_efficiency": float(np.mean(reached)) if reached else NEVER,
        "sample_efficiency_reached": len(reached),
    })
    if expert == 0:
        row["improvement_vs_expert"] = row["improvement_vs_expert_std"] = "undefined"
    else:
        row["improvement_vs_expert"] = improvement_vs_expert(finals, expert)
        row["improvement_vs_expert_std"] = _std(finals / expert)
    return row


@dataclass
class ExperimentOutcome:
    out_dir: str
    results: list
    summary: list

    @property
    def exit_code(self) -> int:
        failed = sum(not r.ok for r in self.results)
        if failed == 0:
            return EXIT_OK
        return EXIT_FAILED if failed == len(self.results) else EXIT_PARTIAL


def run_experiment(cfg: ExperimentConfig, out_dir, workers=1) -> ExperimentOutcome:
    """Run every (tremble level, seed) job and write traces, summary and manifest.

    Jobs are independent; with ``workers > 1`` they run in separate processes.
    Results are collected in job order, so the files do not depend on
    scheduling.
    """
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    jobs = [(p, s) for p in cfg.demo.tremble_prob for s in cfg.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_job, cfg, p, s, out_dir) for p, s in jobs]
            results = [f.result() for f in futures]
    else:
        results = [run_job(cfg, p, s, out_dir) for p, s in jobs]

    summary = [summary_row(cfg, p, [r for r in results if r.tremble == p]) for p in cfg.demo.tremble_prob]
    write_atomic(os.path.join(out_dir, "summary.csv"), _csv_text(summary, SUMMARY_COLUMNS))

    manifest = {
        "format": "ilde-manifest",
        "format_version": MANIFEST_FORMAT_VERSION,
        "config_hash": config_hash(cfg),
        "seeds": list(cfg.seeds),
        "tremble_levels": list(cfg.demo.tremble_prob),
        "num_jobs": len(results),
        "num_failed": sum(not r.ok for r in results),
        "summary_file": "summary.csv",
        "summary_columns": list(SUMMARY_COLUMNS),
    }
    for i, r in enumerate(results):
        manifest[f"job.{i}.tremble_prob"] = r.tremble
        manifest[f"job.{i}.seed"] = r.seed
        manifest[f"job.{i}.status"] = "ok" if r.ok else "failed"
        manifest[f"job.{i}.files"] = r.files
        if not r.ok:
            manifest[f"job.{i}.error"] = r.error
    for key, value in to_dict(cfg, include_output=False).items():
        manifest[f"config.{key}"] = value
    kvformat.dump(manifest, os.path.join(out_dir, "manifest.kv"))
    return ExperimentOutcome(out_dir, results, summary)
