"""REINFORCE with a frozen greedy-rollout baseline and paired t-test baseline replacement."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from . import autodiff as ad
from .instances import GenConfig, generate, preset
from .model import MAAM, ModelConfig, rollout_batch
from .problem import Instance

log = logging.getLogger(__name__)

LOG_FIELDS = ["epoch", "train_cost_mean", "eval_cost_mean", "baseline_replaced", "seconds"]


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    gen_config: GenConfig = field(default_factory=lambda: preset("10C-2V"))
    epochs: int = 20
    instances_per_epoch: int = 2000
    batch_size: int = 64
    learning_rate: float = 1e-4
    ttest_alpha: float = 0.05
    eval_set_size: int = 256
    embed_dim: int = 64
    n_layers: int = 2
    n_heads: int = 4
    logit_scale: Optional[float] = None
    context_order: str = "acting_first"
    glimpse_mask: bool = False
    grad_clip: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or min(self.instances_per_epoch, self.batch_size, self.eval_set_size) < 1:
            raise ValueError("epochs must be >= 0 and all counts positive")
        if not 0 < self.ttest_alpha < 1:
            raise ValueError("ttest_alpha must lie in (0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def model_config(self) -> ModelConfig:
        return ModelConfig(embed_dim=self.embed_dim, n_layers=self.n_layers, n_heads=self.n_heads,
                           fleet_size=self.gen_config.fleet_size, horizon=self.gen_config.window_horizon,
                           logit_scale=self.logit_scale, context_order=self.context_order,
                           glimpse_mask=self.glimpse_mask)


# full training budget for the 20-customer settings; expressible, far too slow to run here
FULL_BUDGET_SMALL = TrainConfig(gen_config=preset("20C-2V"), epochs=100, instances_per_epoch=1_280_000,
                                batch_size=512, embed_dim=128, n_layers=3, n_heads=8)


@dataclass
class TrainLog:
    records: list = field(default_factory=list)
    initial_eval_cost: float = math.nan
    clipped_batches: int = 0

    def append(self, rec: dict) -> None:
        self.records.append(dict(rec))

    def write_csv(self, path, include_time: bool = True) -> None:
        fields = LOG_FIELDS if include_time else LOG_FIELDS[:-1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(fields)
            for r in self.records:
                w.writerow([_fmt(r[k]) for k in fields])


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts]).generate_state(1)[0])


def greedy_costs(model: MAAM, instances: Sequence[Instance]) -> np.ndarray:
    return np.array([s.cost.total for s in model.solve(instances, mode="greedy")])


def reinforce_batch(batch: Sequence[Instance], model: MAAM, baseline: MAAM,
                    rng: np.random.Generator) -> dict:
    """Accumulate the gradient of mean(-(R - R_BL) * log p) into ``model``'s parameters.

    The advantage is a constant: no gradient flows through either reward.
    """
    sols, logp, _, _ = rollout_batch(batch, model.params, model.cfg, "sample", rng)
    with ad.no_grad():
        bl_sols, _, _, _ = rollout_batch(batch, baseline.params, baseline.cfg, "greedy")
    cost = np.array([s.cost.total for s in sols])
    bl_cost = np.array([s.cost.total for s in bl_sols])
    advantage = (-cost) - (-bl_cost)
    loss = ad.scale(ad.sum_(ad.mul(ad.Tensor(-advantage), logp)), 1.0 / len(batch))
    if not np.isfinite(loss.data).all():
        raise TrainingError("non-finite loss")
    ad.backward(loss)
    return {"cost": cost, "baseline_cost": bl_cost, "advantage": advantage,
            "loss": float(loss.data), "log_prob": logp.data.copy()}


def paired_ttest(candidate: Sequence[float], baseline: Sequence[float]) -> tuple[float, float]:
    """One-sided paired t-test of mean(candidate - baseline) < 0; returns (t, p)."""
    diff = np.asarray(candidate, float) - np.asarray(baseline, float)
    n = len(diff)
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    mean = diff.mean()
    sd = diff.std(ddof=1)
    if sd == 0.0:
        # t undefined; only a uniform strict improvement counts as significant
        return (-math.inf, 0.0) if mean < 0 else (math.nan, 1.0)
    t = mean / (sd / math.sqrt(n))
    return t, float(special.stdtr(n - 1, t))


def paired_ttest_update(model: MAAM, baseline: MAAM, eval_set: Sequence[Instance], alpha: float = 0.05,
                        baseline_costs: Optional[np.ndarray] = None):
    """Greedy-decode both models on ``eval_set``; copy model into baseline if significantly better.

    Returns (replaced, p_value, candidate_costs, baseline_costs_after).
    """
    if not eval_set:
        raise ValueError("empty evaluation set")
    cand = greedy_costs(model, eval_set)
    base = greedy_costs(baseline, eval_set) if baseline_costs is None else baseline_costs
    _, p = paired_ttest(cand, base)
    if p < alpha:
        baseline.load_state(model)
        return True, p, cand, cand
    return False, p, cand, base


def _clip(params, max_norm: float) -> bool:
    norm = math.sqrt(sum(float((p.grad**2).sum()) for p in params if p.grad is not None))
    if norm > max_norm:
        for p in params:
            if p.grad is not None:
                p.grad *= max_norm / norm
        return True
    return False


def train(cfg: TrainConfig, eval_set: Optional[Sequence[Instance]] = None,
          progress: Optional[callable] = None) -> tuple[MAAM, TrainLog]:
    """Run the epoch/batch loop; returns the best-eval model and the per-epoch log."""
    model = MAAM(cfg.model_config(), seed=derive_seed(cfg.seed, 1))
    baseline = model.clone()
    params = model.parameters()
    adam = ad.AdamState.for_params(params, learning_rate=cfg.learning_rate)
    if eval_set is None:
        eval_set = generate(cfg.gen_config, cfg.eval_set_size, seed=derive_seed(cfg.seed, 2))
    tlog = TrainLog()
    base_costs = greedy_costs(baseline, eval_set)
    tlog.initial_eval_cost = float(base_costs.mean())
    best_cost, best = math.inf, model.clone()

    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        data_seed = derive_seed(cfg.seed, 3, epoch)
        data = generate(cfg.gen_config, cfg.instances_per_epoch, seed=data_seed)
        rng = np.random.Generator(np.random.PCG64(derive_seed(cfg.seed, 4, epoch)))
        costs = []
        for k in range(0, len(data), cfg.batch_size):
            ad.zero_grad(params)
            try:
                stats = reinforce_batch(data[k:k + cfg.batch_size], model, baseline, rng)
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch}, batch at {k} (data seed {data_seed}): {exc}") from exc
            if cfg.grad_clip is not None and _clip(params, cfg.grad_clip):
                tlog.clipped_batches += 1
            ad.adam_step(params, adam)
            costs.extend(stats["cost"])
        ad.zero_grad(params)
        replaced, p, cand, base_costs = paired_ttest_update(
            model, baseline, eval_set, cfg.ttest_alpha, base_costs)
        eval_cost = float(cand.mean())
        if eval_cost < best_cost:
            best_cost, best = eval_cost, model.clone()
        rec = {"epoch": epoch + 1, "train_cost_mean": float(np.mean(costs)), "eval_cost_mean": eval_cost,
               "baseline_replaced": replaced, "seconds": time.perf_counter() - start}
        tlog.append(rec)
        log.info("epoch %d train %.4f eval %.4f p=%.3g replaced=%s", epoch + 1,
                 rec["train_cost_mean"], eval_cost, p, replaced)
        if progress is not None:
            progress(rec)
    if tlog.clipped_batches:
        log.warning("gradient clipping applied to %d batches", tlog.clipped_batches)
    return (best if cfg.epochs else model), tlog
