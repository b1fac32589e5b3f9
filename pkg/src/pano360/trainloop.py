"""Desk-scale joint training: labeled + pseudo-labeled batches, plain GD.

The reference model is a coarse parameter grid, bilinearly upsampled to the
ERP resolution and pushed through softplus so the predicted disparity stays
positive. Every stage of the forward pass (upsample, rotation, cube
projection) is a fixed sparse linear gather, so the batch gradient is
computed analytically by chaining the gathers' transposes with the
frozen-statistics loss gradient. Real networks can replace GridPredictor
behind the same predict/apply-gradient surface.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .depthspace import affine_invariant_loss, affine_invariant_loss_grad
from .errors import DataError, DegenerateMapError
from .pseudolabel import PseudoSample, generate_pseudo, stable_seed
from .resample import cube_gather, grid_upsample_gather, rotation_gather

_CKPT_MAGIC = b"P360GRID"
_TRANSFORM_SOFTPLUS = 0


@dataclass
class BatchSpec:
    batch_size: int = 4
    gt_ratio: tuple[int, int] = (1, 1)  # labeled : pseudo
    seed: int = 0

    def counts(self) -> tuple[int, int]:
        l, p = self.gt_ratio
        if l < 0 or p < 0 or l + p == 0:
            raise DataError(f"invalid ratio {self.gt_ratio}")
        if self.batch_size % (l + p) != 0:
            raise DataError(
                f"batch size {self.batch_size} not divisible by ratio {l}:{p}"
            )
        unit = self.batch_size // (l + p)
        return l * unit, p * unit


@dataclass
class TrainConfig:
    learning_rate: float = 10.0
    lr_decay_steps: int = 30  # harmonic decay time constant; 0 = constant lr
    n_steps: int = 500
    erp_h: int = 64
    face_px: int = 32
    rotation_mode: str = "full_so3"
    grid_h: int = 16
    grid_w: int = 32
    loss_weights: tuple[float, float] = (0.5, 0.5)  # labeled, pseudo
    batch: BatchSpec = field(default_factory=BatchSpec)

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise DataError("learning rate must be positive")
        if self.n_steps < 1:
            raise DataError("need at least one step")

    def lr_at(self, step_idx: int) -> float:
        # the L1 sign gradient never shrinks near the optimum, so constant-lr
        # plain GD settles into a limit cycle; harmonic decay closes it
        if self.lr_decay_steps <= 0:
            return self.learning_rate
        return self.learning_rate / (1.0 + step_idx / self.lr_decay_steps)


@dataclass
class LabeledSample:
    id: str
    disparity: np.ndarray  # normalized gt disparity at (erp_h, 2 erp_h)
    mask: np.ndarray


@dataclass
class UnlabeledSample:
    id: str
    rgb: np.ndarray  # (erp_h, 2 erp_h, 3)
    mask: np.ndarray | None = None


class GridPredictor:
    """Coarse grid -> bilinear upsample -> softplus positive disparity."""

    def __init__(self, grid_h: int, grid_w: int, seed: int = 0):
        rng = np.random.default_rng(stable_seed(seed, "grid-init"))
        # small random init: a constant grid is degenerate for the loss
        self.params = rng.normal(0.0, 0.05, size=(grid_h, grid_w))
        self._gathers: dict[int, object] = {}

    @property
    def shape(self) -> tuple[int, int]:
        return self.params.shape

    def _up(self, h: int):
        if h not in self._gathers:
            gh, gw = self.params.shape
            self._gathers[h] = grid_upsample_gather(gh, gw, h, 2 * h)
        return self._gathers[h]

    def predict(self, h: int) -> np.ndarray:
        """Positive disparity raster at (h, 2h)."""
        return _softplus(self._up(h).apply(self.params))

    def backprop(self, h: int, grad_pred: np.ndarray) -> np.ndarray:
        """Map a gradient w.r.t. the prediction to a parameter gradient."""
        pre = self._up(h).apply(self.params)
        return self._up(h).vjp(np.asarray(grad_pred) * _sigmoid(pre))

    def apply_gradient(self, grad: np.ndarray, lr: float) -> None:
        self.params = self.params - lr * grad


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x)))


def save_checkpoint(path, model: GridPredictor) -> None:
    gh, gw = model.shape
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<III", 1, _TRANSFORM_SOFTPLUS, 0))
        f.write(struct.pack("<II", gh, gw))
        f.write(model.params.astype("<f8").tobytes())


def load_checkpoint(path) -> GridPredictor:
    with open(path, "rb") as f:
        if f.read(8) != _CKPT_MAGIC:
            raise DataError(f"{path}: not a grid checkpoint")
        version, transform, _ = struct.unpack("<III", f.read(12))
        if version != 1 or transform != _TRANSFORM_SOFTPLUS:
            raise DataError(f"{path}: unsupported checkpoint layout")
        gh, gw = struct.unpack("<II", f.read(8))
        buf = f.read(8 * gh * gw)
    model = GridPredictor(gh, gw)
    model.params = np.frombuffer(buf, dtype="<f8").reshape(gh, gw).copy()
    return model


# ---------------------------------------------------------------------------
# batching


def compose_batch(n_labeled: int, n_pseudo: int, spec: BatchSpec, epoch: int):
    """Indices of the batch at position `epoch` in two deterministic streams.

    Each pool is an endless concatenation of seeded permutations; the two
    streams cycle independently and the configured ratio is exact per batch.
    Returns (labeled_indices, pseudo_indices).
    """
    want_l, want_p = spec.counts()
    if (want_l > 0 and n_labeled == 0) or (want_p > 0 and n_pseudo == 0):
        raise DataError("empty pool with a nonzero batch share")

    def take(pool_size, count, tag):
        if count == 0:
            return []
        out = []
        for i in range(epoch * count, (epoch + 1) * count):
            cycle, pos = divmod(i, pool_size)
            rng = np.random.default_rng(stable_seed(spec.seed, tag, cycle))
            out.append(int(rng.permutation(pool_size)[pos]))
        return out

    return take(n_labeled, want_l, "labeled"), take(n_pseudo, want_p, "pseudo")


# ---------------------------------------------------------------------------
# losses with analytic gradients


def _labeled_term(pred, sample: LabeledSample):
    loss = affine_invariant_loss(pred, sample.disparity, sample.mask)
    grad = affine_invariant_loss_grad(pred, sample.disparity, sample.mask)
    return loss, grad


def pseudo_face_losses(pred: np.ndarray, ps: PseudoSample, face_px: int):
    """Per-face loss of the prediction projected with the recorded rotation.

    Returns (mean face loss, gradient w.r.t. pred); faces that are unusable
    or have < 2 valid pixels are excluded from the mean's denominator.
    """
    h = pred.shape[0]
    rg = rotation_gather(h, ps.rotation)
    cg = cube_gather(h, face_px)
    pred_faces = cg.apply(rg.apply(pred))
    losses, face_grads = [], np.zeros_like(pred_faces)
    for i in range(6):
        if not ps.face_usable[i]:
            continue
        m = ps.masks[i]
        if m.sum() < 2:
            continue
        try:
            losses.append(affine_invariant_loss(pred_faces[i], ps.pseudo[i], m))
            face_grads[i] = affine_invariant_loss_grad(pred_faces[i], ps.pseudo[i], m)
        except DegenerateMapError:
            continue
    if not losses:
        raise DegenerateMapError(f"sample {ps.sample_id}: no usable faces")
    grad = rg.vjp(cg.vjp(face_grads / len(losses)))
    return float(np.mean(losses)), grad


@dataclass
class StepResult:
    loss_total: float
    loss_gt: float | None
    loss_pseudo: float | None
    grad: np.ndarray
    skipped: bool = False


def batch_gradient(
    model: GridPredictor,
    labeled: list[LabeledSample],
    pseudo: list[PseudoSample],
    cfg: TrainConfig,
) -> StepResult:
    """Loss breakdown and parameter gradient for one composed batch."""
    pred = model.predict(cfg.erp_h)
    wl, wp = cfg.loss_weights
    grad_pred = np.zeros_like(pred)
    loss_gt = loss_ps = None
    if labeled:
        terms = [_labeled_term(pred, s) for s in labeled]
        loss_gt = float(np.mean([t[0] for t in terms]))
        grad_pred += wl * np.mean([t[1] for t in terms], axis=0)
    usable = []
    for ps in pseudo:
        try:
            usable.append(pseudo_face_losses(pred, ps, cfg.face_px))
        except DegenerateMapError:
            continue
    if pseudo and not usable:
        return StepResult(float("nan"), loss_gt, None, np.zeros(model.shape), skipped=True)
    if usable:
        loss_ps = float(np.mean([u[0] for u in usable]))
        grad_pred += wp * np.mean([u[1] for u in usable], axis=0)
    if loss_gt is None and loss_ps is None:
        raise DataError("batch produced no loss terms")
    if loss_gt is not None and loss_ps is not None:
        total = wl * loss_gt + wp * loss_ps
    else:
        # single-sided batch: the present term is the whole objective
        total = loss_gt if loss_gt is not None else loss_ps
        grad_pred /= wl if loss_gt is not None else wp
    return StepResult(total, loss_gt, loss_ps, model.backprop(cfg.erp_h, grad_pred))


def step(
    model: GridPredictor,
    labeled: list[LabeledSample],
    pseudo: list[PseudoSample],
    cfg: TrainConfig,
    step_idx: int = 0,
) -> StepResult:
    """One gradient-descent update in place; skipped batches leave the model."""
    res = batch_gradient(model, labeled, pseudo, cfg)
    if not res.skipped:
        model.apply_gradient(res.grad, cfg.lr_at(step_idx))
    return res


def train(
    labeled_pool: list[LabeledSample],
    unlabeled_pool: list[UnlabeledSample],
    teacher,
    cfg: TrainConfig,
    log_path=None,
    model: GridPredictor | None = None,
):
    """Run the joint loop; returns (model, list of per-step log records)."""
    want_l, want_p = cfg.batch.counts()
    if want_l > 0 and not labeled_pool:
        raise DataError("labeled share requested but the labeled pool is empty")
    if want_p > 0 and not unlabeled_pool:
        raise DataError("pseudo share requested but the unlabeled pool is empty")
    if model is None:
        model = GridPredictor(cfg.grid_h, cfg.grid_w, seed=cfg.batch.seed)
    log: list[dict] = []
    fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for k in range(cfg.n_steps):
            li, pi = compose_batch(len(labeled_pool), len(unlabeled_pool), cfg.batch, k)
            labeled = [labeled_pool[i] for i in li]
            pseudo = [
                generate_pseudo(
                    unlabeled_pool[i].id,
                    unlabeled_pool[i].rgb,
                    teacher,
                    seed=stable_seed(cfg.batch.seed, "pseudo", k, unlabeled_pool[i].id),
                    face_px=cfg.face_px,
                    rotation_mode=cfg.rotation_mode,
                    mask=unlabeled_pool[i].mask,
                )
                for i in pi
            ]
            res = step(model, labeled, pseudo, cfg, step_idx=k)
            rec = {
                "step": k,
                "loss_total": None if res.skipped else res.loss_total,
                "loss_gt": res.loss_gt,
                "loss_pseudo": res.loss_pseudo,
                "lr": cfg.lr_at(k),
            }
            if res.skipped:
                rec["skipped"] = True
            log.append(rec)
            if fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    finally:
        if fh:
            fh.close()
    return model, log
