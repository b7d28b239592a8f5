"""Optimization: Adam, the halving LR schedule, the combined loss, and
the PSNR-oriented / GAN-oriented training stages.

Every random decision inside the loop is derived from (seed, iteration),
so runs are bit-reproducible and resuming from a checkpoint continues the
stream exactly where the interrupted run left it.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import ops
from .config import CropPolicy, DegradationSpec, TrainConfig
from .data import ImageRecord, assemble_batch
from .layers import Module
from .metrics import y_psnr
from .model import load_checkpoint, save_checkpoint
from .rng import CounterRng
from .tensor import Tensor, backward, no_grad

logger = logging.getLogger(__name__)


class NumericError(RuntimeError):
    """Non-finite loss or gradient encountered during optimization."""


def lr_schedule(iteration: int, base_lr: float, decay_every: Optional[int],
                factor: float = 0.5) -> float:
    """Piecewise-constant schedule: halve every `decay_every` iterations.

    `decay_every=None` keeps the rate constant (the GAN stage).
    """
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0, got {iteration}")
    if not decay_every:
        return base_lr
    return base_lr * factor ** (iteration // decay_every)


class Adam:
    """Bias-corrected Adam over a module's named parameters."""

    def __init__(self, module: Module, beta1: float = 0.9, beta2: float = 0.99,
                 eps: float = 1e-8):
        self.params = dict(module.named_parameters())
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self, lr: float, grad_clip: float = 0.0):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for parameter {name!r}")
            if grad_clip > 0.0:
                norm = float(np.linalg.norm(g))
                if norm > grad_clip:
                    g = g * (grad_clip / norm)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= (lr * update).astype(p.data.dtype)

    def state_dict(self) -> dict:
        out = {}
        for name in self.params:
            out[f"m:{name}"] = self.m[name]
            out[f"v:{name}"] = self.v[name]
        return out

    def load_state_dict(self, state: dict, t: int):
        self.t = t
        for name in self.params:
            mk, vk = f"m:{name}", f"v:{name}"
            if mk not in state or vk not in state:
                raise KeyError(f"optimizer state missing moments for {name!r}")
            self.m[name] = np.asarray(state[mk], dtype=self.m[name].dtype).reshape(self.m[name].shape).copy()
            self.v[name] = np.asarray(state[vk], dtype=self.v[name].dtype).reshape(self.v[name].shape).copy()


# default per-stage weights for the pluggable feature extractor
PERCEPTUAL_STAGE_WEIGHTS = (0.1, 0.1, 1.0, 1.0, 1.0)


def perceptual_loss(sr: Tensor, hr: Tensor, extractor: Callable,
                    stage_weights: Sequence[float] = PERCEPTUAL_STAGE_WEIGHTS) -> Tensor:
    """Weighted L1 distance over the extractor's feature stages.

    The extractor maps an image tensor to a sequence of feature tensors
    (five stages for the intended VGG-style plug-in); no extractor is
    bundled, so callers supply their own.
    """
    feats_sr = extractor(sr)
    feats_hr = extractor(hr)
    if len(feats_sr) != len(feats_hr):
        raise ValueError("extractor returned differing stage counts")
    total: Optional[Tensor] = None
    for w, fs, fh in zip(stage_weights, feats_sr, feats_hr):
        term = ops.mul(ops.l1_distance(fs, fh), Tensor(np.asarray(w, dtype=fs.dtype)))
        total = term if total is None else ops.add(total, term)
    if total is None:
        raise ValueError("extractor produced no feature stages")
    return total


def adversarial_generator_loss(fake_logits: Tensor) -> Tensor:
    """Non-saturating logistic loss: mean softplus(-D(G(x)))."""
    return ops.mean_all(ops.softplus(ops.neg(fake_logits)))


def discriminator_loss(real_logits: Tensor, fake_logits: Tensor) -> Tensor:
    """Per-pixel real/fake logistic loss."""
    real_term = ops.mean_all(ops.softplus(ops.neg(real_logits)))
    fake_term = ops.mean_all(ops.softplus(fake_logits))
    return ops.add(real_term, fake_term)


def total_loss(sr: Tensor, hr: Tensor, disc_logits: Optional[Tensor] = None,
               perceptual: Optional[Callable] = None,
               weights: Tuple[float, float, float] = (1.0, 1.0, 0.1)
               ) -> Tuple[Tensor, dict]:
    """Combined objective: w_l1*L1 + w_perc*L_perc + w_adv*L_adv.

    Components that have no inputs (no discriminator logits, no feature
    extractor) contribute exactly zero. Returns (total, components).
    """
    w_l1, w_perc, w_adv = weights
    l1 = ops.l1_distance(sr, hr)
    components = {"l1": l1.item()}
    total = ops.mul(l1, Tensor(np.asarray(w_l1, dtype=sr.dtype)))
    if perceptual is not None and w_perc > 0:
        perc = perceptual_loss(sr, hr, perceptual)
        components["perc"] = perc.item()
        total = ops.add(total, ops.mul(perc, Tensor(np.asarray(w_perc, dtype=sr.dtype))))
    else:
        components["perc"] = 0.0
    if disc_logits is not None and w_adv > 0:
        adv = adversarial_generator_loss(disc_logits)
        components["adv"] = adv.item()
        total = ops.add(total, ops.mul(adv, Tensor(np.asarray(w_adv, dtype=sr.dtype))))
    else:
        components["adv"] = 0.0
    components["total"] = total.item()
    return total, components


@dataclass
class TrainResult:
    iterations_run: int
    loss_history: List[float] = field(default_factory=list)
    val_history: List[Tuple[int, float]] = field(default_factory=list)
    checkpoint_path: Optional[Path] = None
    log_path: Optional[Path] = None
    halted: Optional[str] = None
    initial_val_l1: Optional[float] = None
    final_val_psnr: Optional[float] = None
    final_val_l1: Optional[float] = None


def validate_psnr(model: Module, val_pairs: Sequence[Tuple[np.ndarray, np.ndarray]],
                  border: int) -> Tuple[float, float]:
    """Mean Y-PSNR and mean L1 of the model over (lr, hr) pairs."""
    psnrs = []
    l1s = []
    with no_grad():
        for lr_arr, hr_arr in val_pairs:
            sr = model(Tensor(lr_arr[None] if lr_arr.ndim == 3 else lr_arr))
            sr_np = np.clip(sr.data[0], 0.0, 1.0)
            hr_np = hr_arr if hr_arr.ndim == 3 else hr_arr[0]
            psnrs.append(y_psnr(sr_np, hr_np, border=border))
            l1s.append(float(np.mean(np.abs(sr.data[0] - hr_np))))
    return float(np.mean(psnrs)), float(np.mean(l1s))


class _CsvLog:
    def __init__(self, path: Optional[Path]):
        self.path = path
        if path is not None and not path.exists():
            with open(path, "w", newline="") as fh:
                csv.writer(fh).writerow(["iteration", "lr", "loss", "val_psnr"])

    def row(self, iteration: int, lr: float, loss: float, val_psnr: Optional[float]):
        if self.path is None:
            return
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow(
                [iteration, f"{lr:.8g}", f"{loss:.8g}",
                 "" if val_psnr is None else f"{val_psnr:.6f}"])


def _resume(model: Module, opt: Adam, path) -> int:
    ckpt = load_checkpoint(path)
    model.load_state_dict(ckpt.params)
    opt.load_state_dict(ckpt.optimizer, t=ckpt.iteration)
    return ckpt.iteration


def train_psnr_stage(model: Module, images: Sequence[ImageRecord], cfg: TrainConfig,
                     spec: DegradationSpec, crop: CropPolicy, *, seed: int = 0,
                     out_dir=None, val_pairs: Optional[Sequence] = None,
                     resume=None, ckpt_name: str = "gen") -> TrainResult:
    """L1-only stage: sample batch, degrade, step Adam, log, checkpoint."""
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    opt = Adam(model, cfg.beta1, cfg.beta2, cfg.adam_eps)
    start = _resume(model, opt, resume) if resume else 0
    # stage-independent stream: a GAN run with zero adversarial weight
    # replays the exact batch sequence of an L1 run with the same seed
    root = CounterRng(seed, "train")
    log = _CsvLog(out_dir / f"train_{cfg.stage}.csv" if out_dir else None)
    result = TrainResult(iterations_run=start)
    ckpt_path = out_dir / f"{ckpt_name}.nlcu" if out_dir else None
    border = spec.scale

    if val_pairs:
        psnr0, l10 = validate_psnr(model, val_pairs, border)
        result.val_history.append((start, psnr0))
        result.initial_val_l1 = l10

    for it in range(start, cfg.iterations):
        it_rng = root.spawn("iter", it)
        lr_batch, hr_batch = assemble_batch(images, crop, spec,
                                            cfg.batch_size, it_rng)
        sr = model(lr_batch)
        loss, _ = total_loss(sr, hr_batch, weights=(cfg.w_l1, 0.0, 0.0))
        loss_val = loss.item()
        if not math.isfinite(loss_val):
            result.halted = f"non-finite loss at iteration {it}"
            logger.error("%s; last checkpoint retained", result.halted)
            break
        model.zero_grad()
        backward(loss)
        rate = lr_schedule(it, cfg.lr, cfg.decay_every, cfg.lr_decay)
        opt.step(rate, cfg.grad_clip)
        result.loss_history.append(loss_val)
        result.iterations_run = it + 1

        val_psnr = None
        if val_pairs and (it + 1) % cfg.val_every == 0:
            val_psnr, _ = validate_psnr(model, val_pairs, border)
            result.val_history.append((it + 1, val_psnr))
        log.row(it, rate, loss_val, val_psnr)
        if ckpt_path is not None and ((it + 1) % cfg.ckpt_every == 0 or it + 1 == cfg.iterations):
            save_checkpoint(ckpt_path, model, it + 1, opt.state_dict())
            result.checkpoint_path = ckpt_path

    if ckpt_path is not None and result.checkpoint_path is None and result.halted is None:
        save_checkpoint(ckpt_path, model, result.iterations_run, opt.state_dict())
        result.checkpoint_path = ckpt_path
    if val_pairs and result.halted is None:
        result.final_val_psnr, result.final_val_l1 = validate_psnr(model, val_pairs, border)
    result.log_path = log.path
    return result


def train_gan_stage(gen: Module, disc: Module, images: Sequence[ImageRecord],
                    cfg: TrainConfig, spec: DegradationSpec, crop: CropPolicy, *,
                    seed: int = 0, out_dir=None, val_pairs: Optional[Sequence] = None,
                    perceptual: Optional[Callable] = None,
                    init_from=None, resume=None) -> TrainResult:
    """Adversarial stage: generator step (L1 + perceptual + adversarial),
    then a discriminator step on the detached fake, 1:1, constant lr."""
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    if init_from is not None:
        gen.load_state_dict(load_checkpoint(init_from).params)
    g_opt = Adam(gen, cfg.beta1, cfg.beta2, cfg.adam_eps)
    d_opt = Adam(disc, cfg.beta1, cfg.beta2, cfg.adam_eps)
    start = 0
    if resume:
        gen_path, disc_path = resume
        start = _resume(gen, g_opt, gen_path)
        _resume(disc, d_opt, disc_path)
    root = CounterRng(seed, "train")
    log = _CsvLog(out_dir / "train_gan.csv" if out_dir else None)
    result = TrainResult(iterations_run=start)
    gen_path = out_dir / "gen_gan.nlcu" if out_dir else None
    disc_path = out_dir / "disc_gan.nlcu" if out_dir else None
    border = spec.scale
    weights = (cfg.w_l1, cfg.w_perc, cfg.w_adv)

    if val_pairs:
        psnr0, l10 = validate_psnr(gen, val_pairs, border)
        result.val_history.append((start, psnr0))
        result.initial_val_l1 = l10

    for it in range(start, cfg.iterations):
        it_rng = root.spawn("iter", it)
        lr_batch, hr_batch = assemble_batch(images, crop, spec,
                                            cfg.batch_size, it_rng)
        # generator update (discriminator frozen)
        sr = gen(lr_batch)
        logits = disc(sr) if cfg.w_adv > 0 else None
        g_loss, comps = total_loss(sr, hr_batch, disc_logits=logits,
                                   perceptual=perceptual, weights=weights)
        g_val = g_loss.item()
        if not math.isfinite(g_val):
            result.halted = f"non-finite generator loss at iteration {it}"
            logger.error("%s; last checkpoint retained", result.halted)
            break
        gen.zero_grad()
        disc.zero_grad()
        backward(g_loss)
        rate = lr_schedule(it, cfg.lr, cfg.decay_every, cfg.lr_decay)
        g_opt.step(rate, cfg.grad_clip)

        # discriminator update on detached fake
        if cfg.w_adv > 0:
            d_loss = discriminator_loss(disc(hr_batch), disc(sr.detach()))
            d_val = d_loss.item()
            if not math.isfinite(d_val):
                result.halted = f"non-finite discriminator loss at iteration {it}"
                logger.error("%s; last checkpoint retained", result.halted)
                break
            disc.zero_grad()
            gen.zero_grad()
            backward(d_loss)
            d_opt.step(rate, cfg.grad_clip)

        result.loss_history.append(g_val)
        result.iterations_run = it + 1
        val_psnr = None
        if val_pairs and (it + 1) % cfg.val_every == 0:
            val_psnr, _ = validate_psnr(gen, val_pairs, border)
            result.val_history.append((it + 1, val_psnr))
        log.row(it, rate, g_val, val_psnr)
        if gen_path is not None and ((it + 1) % cfg.ckpt_every == 0 or it + 1 == cfg.iterations):
            save_checkpoint(gen_path, gen, it + 1, g_opt.state_dict())
            save_checkpoint(disc_path, disc, it + 1, d_opt.state_dict())
            result.checkpoint_path = gen_path

    if val_pairs and result.halted is None:
        result.final_val_psnr, result.final_val_l1 = validate_psnr(gen, val_pairs, border)
    result.log_path = log.path
    return result
