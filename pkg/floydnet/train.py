# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information

"""Losses, AdamW, the plateau schedule and the online training loop"""

import logging
import math
import os
import queue
import threading
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Tuple

import numpy as np

from .converters import write_jsonl
from .errors import (ConfigError, NonFiniteError, ShapeError,
                     TrainingDiverged)
from .model import ModelConfig, ModelParams, init_params, predict
from .nn import GradTape, Tensor, checked, sigmoid
from .tasks import TASKS, eval_set, training_sample


log = logging.getLogger(__name__)

LOSSES = ('mse', 'mae', 'bce')
BCE_CLAMP = 1e-12


@dataclass
class TrainConfig:
    task: str = 'shortest_path'
    loss: str = 'mae'
    lr: float = 1e-3
    betas: Tuple[float, float] = (0.9, 0.95)
    weight_decay: float = 0.01
    epochs: int = 10
    steps_per_epoch: int = 50
    batch_size: int = 1
    accumulation: int = 8
    clip_norm: float = 1.0
    warmup_steps: int = 100
    plateau_patience: int = 10
    plateau_factor: float = 0.5
    min_lr: float = 1e-6
    min_nodes: int = 6
    max_nodes: int = 10
    eval_nodes: Tuple[int, ...] = (12,)
    eval_graphs: int = 16
    edge_prob: float = 0.3
    max_weight: int = 1
    cycle_len: int = 3
    prefetch: int = 0
    seed: int = 0

    def __post_init__(self):
        self.betas = tuple(self.betas)
        self.eval_nodes = tuple(self.eval_nodes)
        if self.task not in TASKS:
            raise ConfigError('unknown task %r' % self.task)
        if self.loss not in LOSSES:
            raise ConfigError('unknown loss %r' % self.loss)
        if not self.lr > 0:
            raise ConfigError('lr must be positive')
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise ConfigError('betas must be two values in [0, 1)')
        if self.weight_decay < 0 or self.clip_norm <= 0:
            raise ConfigError('invalid weight decay or clipping norm')
        if min(self.steps_per_epoch, self.batch_size, self.accumulation,
               self.eval_graphs) < 1 or self.epochs < 0:
            raise ConfigError('epochs, steps, batch and accumulation sizes '
                              'must be positive')
        if not 1 <= self.min_nodes <= self.max_nodes:
            raise ConfigError('invalid training size range %s..%s'
                              % (self.min_nodes, self.max_nodes))
        if not 0 < self.plateau_factor < 1:
            raise ConfigError('plateau factor must be in (0, 1)')

    @classmethod
    def from_dict(cls, values):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in names})

    def to_dict(self):
        return asdict(self)


# Losses

def loss(pred: Tensor, target, kind='mae', mask=None, tape=None) -> Tensor:
    """Masked mean of the elementwise ``kind`` loss.

    ``bce`` expects probabilities in ``pred``; masked entries receive an
    exactly zero gradient.

    Raises:
        ShapeError: shape mismatch or empty mask
    """
    target = np.asarray(target, dtype=np.float64)
    if kind not in LOSSES:
        raise ShapeError('unknown loss %r' % kind)
    if target.shape != pred.shape:
        raise ShapeError('prediction shape %s, target shape %s'
                         % (pred.shape, target.shape))
    mask = (np.ones(target.shape, dtype=bool) if mask is None
            else np.asarray(mask, dtype=bool))
    if mask.shape != target.shape:
        raise ShapeError('mask shape %s, target shape %s'
                         % (mask.shape, target.shape))
    count = int(mask.sum())
    if count == 0:
        raise ShapeError('loss mask selects no entry')
    p = pred.data
    diff = p - target
    if kind == 'mse':
        values = diff ** 2
    elif kind == 'mae':
        values = np.abs(diff)
    else:
        pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
        values = -(target * np.log(pc) + (1.0 - target) * np.log1p(-pc))
    out = checked(np.sum(np.where(mask, values, 0.0)).reshape(()) / count,
                  'loss')

    def backward(g):
        if kind == 'mse':
            local = 2.0 * diff
        elif kind == 'mae':
            local = np.sign(diff)
        else:
            pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
            local = (pc - target) / (pc * (1.0 - pc))
        return (np.where(mask, local, 0.0) * (g / count),)

    if tape is not None:
        tape.record('loss_%s' % kind, (pred,), out, backward)
    return out


def masked_mae(pred, target, mask) -> float:
    return float(np.abs(pred - target)[mask].mean())


# Optimizer

@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(named, state: AdamState, lr, betas=(0.9, 0.95),
               weight_decay=0.0, eps=1e-8):
    """One decoupled-weight-decay Adam update of the ``(name, Tensor)``
    pairs, from the gradients accumulated in them.

    Raises:
        NonFiniteError: a gradient holds NaN or Inf
    """
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in named:
        grad = p.grad if p.grad is not None else np.zeros(p.shape)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError('non-finite gradient for %s' % name)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros(p.shape)
            v = np.zeros(p.shape)
        elif m.shape != p.shape:
            raise ShapeError('optimizer state for %s has shape %s, parameter '
                             '%s' % (name, m.shape, p.shape))
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        state.m[name] = m
        state.v[name] = v
        data = p.data * (1.0 - lr * weight_decay)
        p.data = data - lr * (m / c1) / (np.sqrt(v / c2) + eps)


def clip_grad_norm(named, max_norm) -> float:
    """Scale gradients so that their global norm is at most ``max_norm``;
    returns the norm before clipping."""
    grads = [p.grad for _, p in named if p.grad is not None]
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm:
        scale = max_norm / total
        for _, p in named:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


class PlateauScheduler:
    """Linear warmup, then the rate is multiplied by ``factor`` whenever
    the watched metric has not improved for more than ``patience``
    evaluations."""

    def __init__(self, base_lr, factor=0.5, patience=10, warmup_steps=100,
                 min_lr=0.0):
        self.base_lr = base_lr
        self.factor = factor
        self.patience = patience
        self.warmup_steps = warmup_steps
        self.min_lr = min_lr
        self.scale = 1.0
        self.best = math.inf
        self.bad_evals = 0

    def lr(self, step) -> float:
        warm = 1.0
        if self.warmup_steps > 0:
            warm = min(1.0, (step + 1) / self.warmup_steps)
        return max(self.base_lr * self.scale * warm, self.min_lr)

    def observe(self, metric):
        if metric < self.best:
            self.best = metric
            self.bad_evals = 0
            return
        self.bad_evals += 1
        if self.bad_evals > self.patience:
            self.scale *= self.factor
            self.bad_evals = 0
            log.info('plateau: learning rate scale now %s' % self.scale,
                     extra={
                         'floydnet_type': 'lr_plateau',
                         'floydnet_scale': self.scale,
                     })


# Loop

@dataclass
class TrainRun:
    records: List[dict]
    wall_time: float
    checkpoint: Optional[str] = None
    params: Optional[ModelParams] = field(default=None, repr=False)

    @property
    def final_mae(self) -> float:
        return self.records[-1]['eval_mae']

    @property
    def initial_mae(self) -> float:
        return self.records[0]['eval_mae']


def sample_options(cfg: TrainConfig, model_cfg: ModelConfig):
    """Keyword arguments of the task samplers for a run"""
    return {
        'edge_prob': cfg.edge_prob,
        'max_weight': cfg.max_weight,
        'cycle_len': cfg.cycle_len,
        'node_dim': model_cfg.node_dim,
    }


def evaluate(model_cfg: ModelConfig, params: ModelParams, samples) -> float:
    """Mean over ``samples`` of the masked MAE"""
    errors = []
    for sample in samples:
        pred = predict(sample.graph, model_cfg, params, level=sample.level)
        errors.append(masked_mae(pred.data, sample.target, sample.mask))
    return float(np.mean(errors))


class _Prefetcher:
    """Produces the training samples of consecutive steps on a background
    thread, behind a bounded queue."""

    def __init__(self, make, start, depth):
        self.queue = queue.Queue(maxsize=depth)  # type: queue.Queue
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, args=(make, start),
                                        daemon=True)
        self._thread.start()

    def _run(self, make, index):
        while not self._stop.is_set():
            item = make(index)
            while not self._stop.is_set():
                try:
                    self.queue.put(item, timeout=0.1)
                    break
                except queue.Full:
                    continue
            index += 1

    def get(self):
        return self.queue.get()

    def close(self):
        self._stop.set()
        self._thread.join()


def train_task(task, model_cfg: ModelConfig, cfg: TrainConfig,
               out_dir=None, params=None) -> TrainRun:
    """Online training on freshly generated graphs.

    Every epoch runs ``steps_per_epoch`` optimizer steps, each accumulating
    gradients over ``batch_size * accumulation`` samples, then evaluates on
    the held-out set. With ``out_dir`` the run log (``train.jsonl``) and the
    final checkpoint (``model.ckpt``) are written there.

    Raises:
        TrainingDiverged: a loss or gradient became non-finite
    """
    if task not in TASKS:
        raise ConfigError('unknown task %r' % task)
    if task == 'cycle_count' and model_cfg.order < 2:
        raise ConfigError('edge level tasks need order >= 2')
    start = time.monotonic()
    params = params or init_params(model_cfg)
    kwargs = sample_options(cfg, model_cfg)
    held_out = eval_set(task, cfg.eval_nodes, cfg.eval_graphs, cfg.seed,
                        **kwargs)
    scheduler = PlateauScheduler(cfg.lr, cfg.plateau_factor,
                                 cfg.plateau_patience, cfg.warmup_steps,
                                 cfg.min_lr)
    state = AdamState()
    named = params.named_parameters()
    per_step = cfg.batch_size * cfg.accumulation
    records = []

    def record(epoch, step, train_loss, lr):
        entry = {
            'epoch': epoch,
            'step': step,
            'train_loss': train_loss,
            'eval_mae': evaluate(model_cfg, params, held_out),
            'lr': lr,
            'wall_s': time.monotonic() - start,
        }
        records.append(entry)
        log.info('epoch %s: train loss %s, eval mae %.5f'
                 % (epoch, train_loss, entry['eval_mae']), extra={
                     'floydnet_type': 'train_eval',
                     'floydnet_epoch': epoch,
                     'floydnet_eval_mae': entry['eval_mae'],
                 })
        return entry

    def make(index):
        return training_sample(task, cfg.seed, index, cfg.min_nodes,
                               cfg.max_nodes, **kwargs)

    def write_log():
        if out_dir is not None:
            header = {'task': task, 'model': model_cfg.to_dict(),
                      'train': cfg.to_dict()}
            write_jsonl(os.path.join(out_dir, 'train.jsonl'), header, records)

    record(0, 0, None, scheduler.lr(0))
    prefetcher = _Prefetcher(make, 0, cfg.prefetch) if cfg.prefetch else None
    step = 0
    index = 0
    try:
        for epoch in range(1, cfg.epochs + 1):
            losses = []
            for _ in range(cfg.steps_per_epoch):
                lr = scheduler.lr(step)
                total = 0.0
                for _ in range(per_step):
                    sample = prefetcher.get() if prefetcher else make(index)
                    index += 1
                    tape = GradTape()
                    pred = predict(sample.graph, model_cfg, params, tape,
                                   level=sample.level)
                    if cfg.loss == 'bce':
                        pred = sigmoid(pred, tape)
                    value = loss(pred, sample.target, cfg.loss, sample.mask,
                                 tape)
                    tape.backward(value, seed=1.0 / per_step)
                    total += value.item()
                clip_grad_norm(named, cfg.clip_norm)
                adamw_step(named, state, lr, cfg.betas, cfg.weight_decay)
                params.zero_grad()
                losses.append(total / per_step)
                step += 1
            entry = record(epoch, step, float(np.mean(losses)), lr)
            scheduler.observe(entry['eval_mae'])
    except NonFiniteError as e:
        write_log()
        raise TrainingDiverged('training diverged at step %s: %s'
                               % (step, e)) from e
    finally:
        if prefetcher is not None:
            prefetcher.close()

    write_log()
    checkpoint = None
    if out_dir is not None:
        checkpoint = os.path.join(out_dir, 'model.ckpt')
        params.save(checkpoint)
    return TrainRun(records, time.monotonic() - start, checkpoint, params)
