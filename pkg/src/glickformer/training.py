"""Noisy-target MSE training with RMSprop and cyclical optimizer restarts."""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .encoder import EncodedDataset
from .kvtext import write_kv
from .model import GlickFormerBase, save_model
from .nn import NumericError, RngState

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-6
    rho: float = 0.99
    batch_size: int = 64
    total_steps: int = 28000
    cycle_base: int = 1000
    seed: int = 0
    eps: float = 1e-8
    log_every: int = 10
    target_seed: Optional[int] = None   # separate seed for target draws; defaults to ``seed``

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.total_steps < 1 or self.cycle_base < 1:
            raise ValueError("batch_size, total_steps and cycle_base must be positive")

    @classmethod
    def full_scale(cls, **kw) -> "TrainConfig":
        base = dict(learning_rate=1e-6, rho=0.99, batch_size=4096, total_steps=28000, cycle_base=1000)
        base.update(kw)
        return cls(**base)


def sample_target(mu, phi, rng: np.random.Generator):
    """Draw from N(mu, phi^2) and clamp to mu +- 3 phi.  Vectorised."""
    mu = np.asarray(mu, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if np.any(phi < 0):
        raise ValueError("phi must be non-negative")
    z = rng.standard_normal(np.broadcast(mu, phi).shape)
    y = mu + phi * z
    out = np.clip(y, mu - 3 * phi, mu + 3 * phi)
    return float(out) if out.ndim == 0 else out


def mse_loss(preds, targets):
    """Return ``(loss, d loss / d preds)``."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {targets.shape}")
    if preds.size == 0:
        raise ValueError("empty batch")
    diff = preds - targets
    return float(np.mean(diff * diff)), 2.0 * diff / preds.size


class RMSprop:
    """Plain RMSprop: no momentum, no centering."""

    def __init__(self, params, learning_rate: float, rho: float, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.rho, self.eps = learning_rate, rho, eps
        self.acc = {p.name: np.zeros_like(p.value) for p in self.params}
        self.steps = 0

    def step(self):
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise NumericError(f"non-finite gradient in {p.name}")
        for p in self.params:
            a = self.acc[p.name]
            a *= self.rho
            a += (1.0 - self.rho) * p.grad * p.grad
            p.value -= self.lr * p.grad / (np.sqrt(a) + self.eps)
        self.steps += 1

    def reset(self):
        for a in self.acc.values():
            a[...] = 0.0


def cycle_boundaries(total_steps: int, cycle_base: int) -> list:
    """Cumulative step counts at which cycle k (length ``k * cycle_base``)
    ends; the last cycle is cut at ``total_steps``."""
    if total_steps < 1 or cycle_base < 1:
        raise ValueError("total_steps and cycle_base must be positive")
    out, pos, k = [], 0, 1
    while pos < total_steps:
        pos = min(pos + k * cycle_base, total_steps)
        out.append(pos)
        k += 1
    return out


@dataclass
class TrainResult:
    trace: list = field(default_factory=list)        # (step, loss, cycle)
    checkpoints: list = field(default_factory=list)

    def losses(self) -> np.ndarray:
        return np.array([t[1] for t in self.trace])


def _forward_backward(model: GlickFormerBase, boards, mask, targets):
    model.zero_grad()
    preds, cache = model.forward(boards, mask)
    loss, dpred = mse_loss(preds, targets)
    if not np.isfinite(loss):
        return loss
    model.backward(dpred, cache)
    return loss


def train(
    model: GlickFormerBase,
    data: EncodedDataset,
    cfg: TrainConfig,
    out_dir: Optional[Path] = None,
    on_step: Optional[Callable] = None,
) -> TrainResult:
    """Train ``model`` in place.

    Each step draws ``batch_size`` puzzles with replacement and a fresh
    noisy target per puzzle.  Optimizer accumulators are zeroed at every cycle
    boundary.  With ``out_dir`` set, writes boundary and final checkpoints,
    ``loss.csv`` and ``manifest.txt``.  ``on_step(step, loss, optimizer)``
    is called after every update.
    """
    if len(data) == 0:
        raise ValueError("empty training set")
    if data.n_max != model.cfg.n_max:
        raise ValueError(f"data n_max {data.n_max} != model n_max {model.cfg.n_max}")
    streams = RngState(cfg.seed)
    batch_rng = streams.stream("batch")
    target_seed = cfg.seed if cfg.target_seed is None else cfg.target_seed
    target_rng = RngState(target_seed).stream("target")
    opt = RMSprop(model.parameters(), cfg.learning_rate, cfg.rho, cfg.eps)
    bounds = cycle_boundaries(cfg.total_steps, cfg.cycle_base)
    bound_set = set(bounds)
    result = TrainResult()
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = {f"train.{k}": v for k, v in asdict(cfg).items()}
        manifest.update({f"model.{k}": v for k, v in model.cfg.to_dict().items()})
        manifest["data.size"] = len(data)
        write_kv(out_dir / "manifest.txt", manifest)

    cycle = 0
    for step in range(1, cfg.total_steps + 1):
        idx = batch_rng.integers(0, len(data), size=cfg.batch_size)
        targets = sample_target(data.mu[idx], data.phi[idx], target_rng)
        loss = _forward_backward(model, data.boards[idx], data.mask[idx], targets)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite loss at step {step}")
        opt.step()
        result.trace.append((step, loss, cycle))
        if step % cfg.log_every == 0:
            log.info("step %d cycle %d loss %.6f", step, cycle, loss)
        if step in bound_set:
            opt.reset()
            if out_dir is not None:
                path = out_dir / f"checkpoint_step{step:06d}.glkw"
                save_model(path, model)
                result.checkpoints.append(path)
            cycle += 1
        if on_step is not None:
            on_step(step, loss, opt)

    if out_dir is not None:
        final = out_dir / "checkpoint.glkw"
        save_model(final, model)
        result.checkpoints.append(final)
        write_loss_trace(out_dir / "loss.csv", result.trace)
    return result


def write_loss_trace(path, trace) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss", "cycle"])
        for step, loss, cycle in trace:
            w.writerow([step, repr(float(loss)), cycle])
