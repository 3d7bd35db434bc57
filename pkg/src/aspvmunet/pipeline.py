"""Data ingestion, synthetic lesions, augmentation, BCE+Dice loss, metrics and the training loop."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, DataError, DimensionError
from .network import ASPVMUNet, Checkpoint, load_checkpoint, save_checkpoint
from .numerics import AdamW, NumericError, Tensor, cosine_lr, finite_checks
from .numerics import functional as F

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
MASK_SUFFIXES = (".png",)
LOG_FIELDS = ("epoch", "lr", "loss", "miou", "dsc", "acc", "spe", "sen")


@dataclass
class Sample:
    """One image/mask pair: image 3×H×W float32, mask 1×H×W uint8 in {0, 1}."""

    image: np.ndarray
    mask: np.ndarray
    id: str = ""

    def __post_init__(self):
        if self.image.ndim != 3 or self.mask.ndim != 3 or self.mask.shape[0] != 1:
            raise DataError(f"{self.id}: expected 3×H×W image and 1×H×W mask, got {self.image.shape} and {self.mask.shape}")
        if self.image.shape[1:] != self.mask.shape[1:]:
            raise DataError(f"{self.id}: image {self.image.shape[1:]} and mask {self.mask.shape[1:]} differ in size")
        if not np.isin(self.mask, (0, 1)).all():
            raise DataError(f"{self.id}: mask is not binary")


# -- loading ----------------------------------------------------------------------


def _index(folder: Path, suffixes: tuple[str, ...]) -> dict[str, Path]:
    if not folder.is_dir():
        return {}
    return {p.stem: p for p in sorted(folder.iterdir()) if p.suffix.lower() in suffixes}


def _read(path: Path, mode: str, size: tuple[int, int], resample) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im = im.convert(mode).resize((size[1], size[0]), resample)
            return np.asarray(im)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def load_dataset(root: str | Path, size: tuple[int, int] = (256, 256)) -> list[Sample]:
    """Read ``root/images`` and ``root/masks`` pairs matched by basename.

    Images are resized bilinearly and scaled to [0, 1]; masks are resized
    with nearest neighbour and binarized at > 127.  Samples come back in
    lexicographic order of basename.
    """
    root = Path(root)
    images = _index(root / "images", IMAGE_SUFFIXES)
    masks = _index(root / "masks", MASK_SUFFIXES)
    if not images and not masks:
        warnings.warn(f"no image/mask pairs found under {root}", stacklevel=2)
        return []
    orphans = sorted(f"images/{images[k].name}" for k in images.keys() - masks.keys())
    orphans += sorted(f"masks/{masks[k].name}" for k in masks.keys() - images.keys())
    if orphans:
        raise DataError(f"unpaired files under {root}: {', '.join(orphans)}")
    out = []
    for key in sorted(images):
        img = _read(images[key], "RGB", size, Image.BILINEAR).astype(np.float32) / 255.0
        mask = _read(masks[key], "L", size, Image.NEAREST) > 127
        out.append(Sample(img.transpose(2, 0, 1).copy(), mask[None].astype(np.uint8), key))
    return out


def save_dataset(samples: Iterable[Sample], root: str | Path) -> Path:
    """Write samples as ``images/<id>.png`` and bilevel ``masks/<id>.png``."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    for s in samples:
        rgb = np.clip(np.rint(s.image.transpose(1, 2, 0) * 255), 0, 255).astype(np.uint8)
        Image.fromarray(rgb, "RGB").save(root / "images" / f"{s.id}.png")
        Image.fromarray(s.mask[0] * np.uint8(255), "L").save(root / "masks" / f"{s.id}.png")
    return root


# -- synthetic lesions ------------------------------------------------------------

FG_RANGE = (0.05, 0.6)


def _blob(H: int, W: int, rng: np.random.Generator) -> np.ndarray:
    """Ellipse with a few low-order radial harmonics roughening its edge."""
    side = min(H, W)
    a, b = rng.uniform(0.12, 0.32, 2) * side
    cy, cx = rng.uniform(0.3, 0.7) * H, rng.uniform(0.3, 0.7) * W
    tilt = rng.uniform(0, np.pi)
    ks = np.arange(2, 6)
    amp = rng.uniform(0, 0.05, ks.size)
    phase = rng.uniform(0, 2 * np.pi, ks.size)
    y, x = np.mgrid[0:H, 0:W] + 0.5
    dy, dx = y - cy, x - cx
    u = (dx * np.cos(tilt) + dy * np.sin(tilt)) / a
    v = (-dx * np.sin(tilt) + dy * np.cos(tilt)) / b
    theta = np.arctan2(v, u)
    edge = 1 + (amp[:, None, None] * np.cos(ks[:, None, None] * theta + phase[:, None, None])).sum(0)
    return np.hypot(u, v) <= edge


def _smooth_noise(H: int, W: int, cells: int, rng: np.random.Generator) -> np.ndarray:
    coarse = rng.random((cells + 1, cells + 1)).astype(np.float32)
    img = Image.fromarray(coarse, "F").resize((W, H), Image.BICUBIC)
    return np.asarray(img)


def synth_sample(H: int, W: int, rng: np.random.Generator, separable: bool = False, id: str = "") -> Sample:
    """One synthetic lesion image; redraws until the foreground fraction lies in ``FG_RANGE``."""
    while True:
        mask = _blob(H, W, rng)
        if rng.random() < 0.5:
            mask |= _blob(H, W, rng)
        if FG_RANGE[0] <= mask.mean() <= FG_RANGE[1]:
            break
    if separable:
        skin, lesion = np.array([0.85, 0.7, 0.6]), np.array([0.3, 0.15, 0.1])
        img = np.where(mask, lesion[:, None, None], skin[:, None, None])
    else:
        skin = rng.uniform([0.7, 0.5, 0.4], [0.95, 0.8, 0.7])
        lesion = skin * rng.uniform(0.35, 0.7)
        shade = _smooth_noise(H, W, 4, rng) - 0.5
        texture = _smooth_noise(H, W, max(H // 4, 2), rng) - 0.5
        base = np.where(mask, lesion[:, None, None], skin[:, None, None])
        img = base + 0.15 * shade + 0.08 * texture * mask + 0.03 * rng.standard_normal((3, H, W))
    img = np.clip(img, 0, 1).astype(np.float32)
    return Sample(img, mask[None].astype(np.uint8), id)


def synth_dataset(n: int, H: int = 64, W: int = 64, seed: int = 0, separable: bool = False) -> list[Sample]:
    if n < 1:
        raise ConfigError(f"synth_dataset needs n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    width = len(str(n - 1))
    return [synth_sample(H, W, rng, separable, id=f"synth_{i:0{width}d}") for i in range(n)]


# -- augmentation -----------------------------------------------------------------


def channel_stats(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and std over every pixel of every image."""
    stack = np.stack([s.image for s in samples]).astype(np.float64)
    mean = stack.mean(axis=(0, 2, 3))
    std = stack.std(axis=(0, 2, 3))
    return mean.astype(np.float32), np.maximum(std, 1e-6).astype(np.float32)


def normalize(image: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return ((image - mean[:, None, None]) / std[:, None, None]).astype(np.float32)


def augment(
    s: Sample,
    rng: np.random.Generator,
    mean: np.ndarray,
    std: np.ndarray,
    *,
    hflip: bool | None = None,
    vflip: bool | None = None,
    quarter_turns: int | None = None,
) -> Sample:
    """Random flips and right-angle rotation, applied to image and mask alike, then normalization.

    Three draws are taken from ``rng`` on every call, so forcing a transform
    does not shift the stream for later samples.
    """
    draw_h, draw_v, draw_k = rng.random() < 0.5, rng.random() < 0.5, int(rng.integers(4))
    hflip = draw_h if hflip is None else hflip
    vflip = draw_v if vflip is None else vflip
    k = draw_k if quarter_turns is None else quarter_turns
    img, mask = s.image, s.mask
    if hflip:
        img, mask = img[:, :, ::-1], mask[:, :, ::-1]
    if vflip:
        img, mask = img[:, ::-1], mask[:, ::-1]
    if k % 4:
        img, mask = np.rot90(img, k, axes=(1, 2)), np.rot90(mask, k, axes=(1, 2))
    return Sample(normalize(img, mean, std), np.ascontiguousarray(mask), s.id)


# -- loss and metrics -------------------------------------------------------------

CLAMP = 1e-7
DICE_EPS = 1e-5


def bce_dice_loss(pred: Tensor, target: Tensor | np.ndarray) -> Tensor:
    """Mean BCE plus soft Dice loss (per-image Dice, averaged over the batch), weighted 1:1."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    if t.shape != pred.shape:
        raise DimensionError(f"prediction {pred.shape} and target {t.shape} differ")
    t = t.astype(pred.dtype)
    p = F.clip(pred, CLAMP, 1 - CLAMP)
    tt = Tensor(t)
    bce = -F.mean(tt * F.log(p) + (1.0 - tt) * F.log(1.0 - p))
    axes = tuple(range(1, p.ndim))
    inter = F.sum(p * tt, axis=axes)
    denom = F.sum(p, axis=axes) + Tensor(t.sum(axis=axes))
    dice = 1.0 - F.mean((2.0 * inter + DICE_EPS) / (denom + DICE_EPS))
    return bce + dice


def _ratio(num: int, den: int, both_empty: bool) -> float:
    if den:
        return num / den
    return 1.0 if both_empty else 0.0


@dataclass(frozen=True)
class Metrics:
    """Confusion counts; derived scores are computed on demand from the counts."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    two_class_miou: bool = False

    def __add__(self, other: "Metrics") -> "Metrics":
        return Metrics(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn, self.two_class_miou)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def foreground_iou(self) -> float:
        return _ratio(self.tp, self.tp + self.fp + self.fn, True)

    @property
    def miou(self) -> float:
        if not self.two_class_miou:
            return self.foreground_iou
        background = _ratio(self.tn, self.tn + self.fn + self.fp, True)
        return (self.foreground_iou + background) / 2

    @property
    def dsc(self) -> float:
        return _ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn, True)

    @property
    def acc(self) -> float:
        return _ratio(self.tp + self.tn, self.total, True)

    @property
    def sen(self) -> float:
        # empty target: perfect only if the prediction is empty as well
        return _ratio(self.tp, self.tp + self.fn, self.fp == 0)

    @property
    def spe(self) -> float:
        return _ratio(self.tn, self.tn + self.fp, self.fn == 0)

    def scores(self) -> dict[str, float]:
        return {"miou": self.miou, "dsc": self.dsc, "acc": self.acc, "spe": self.spe, "sen": self.sen}

    def report(self) -> str:
        s = self.scores()
        return f"MIOU={100 * s['miou']:.2f} DSC={100 * s['dsc']:.2f} Acc={100 * s['acc']:.2f} Spe={100 * s['spe']:.2f} Sen={100 * s['sen']:.2f}"


def compute_metrics(pred: np.ndarray, target: np.ndarray, threshold: float = 0.5, two_class_miou: bool = False) -> Metrics:
    """Confusion counts of ``pred >= threshold`` against a binary target."""
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} differ")
    if not np.isin(target, (0, 1)).all():
        raise DataError("target mask is not binary")
    p = pred >= threshold
    t = target.astype(bool)
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    return Metrics(tp, fp, t.size - tp - fp - fn, fn, two_class_miou)


# -- training ---------------------------------------------------------------------


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-2
    t_max: int = 50
    eta_min: float = 1e-5
    epochs: int = 50
    batch_size: int = 8
    seed: int = 0
    augment: bool = True
    op_checks: bool = False  # per-op NaN checks; the loss is always checked

    def validate(self) -> "TrainConfig":
        for name in ("lr", "t_max", "epochs", "batch_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("weight_decay", "eta_min"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.eta_min > self.lr:
            raise ConfigError(f"eta_min ({self.eta_min}) exceeds lr ({self.lr})")
        return self

    def lr_at(self, epoch: int) -> float:
        return cosine_lr(epoch, self.lr, self.t_max, self.eta_min)

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list[dict[str, float]] = field(default_factory=list)
    path: Path | None = None


def _batches(samples: Sequence[Sample], order: np.ndarray, size: int):
    for i in range(0, len(order), size):
        yield [samples[j] for j in order[i : i + size]]


def write_log(rows: Sequence[dict[str, float]], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (r[k] if k == "epoch" else repr(float(r[k]))) for k in LOG_FIELDS})
    return path


def read_log(path: str | Path) -> list[dict[str, float]]:
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)]


def train(
    net: ASPVMUNet,
    dataset: Sequence[Sample],
    tc: TrainConfig,
    *,
    out_dir: str | Path | None = None,
    resume: str | Path | None = None,
    progress=None,
) -> TrainResult:
    """AdamW + cosine schedule over shuffled, augmented mini-batches.

    One generator seeded from ``tc.seed`` drives shuffling and augmentation;
    its state is saved with every checkpoint so that resuming continues the
    exact stream.  Logged metrics are accumulated over the epoch's training
    batches.  With ``out_dir`` set, ``last.npz`` and ``log.csv`` are
    rewritten after every epoch.
    """
    tc.validate()
    if not dataset:
        raise DataError("training dataset is empty")
    rng = np.random.default_rng(tc.seed)
    mean, std = channel_stats(dataset)
    opt = AdamW(net.parameters(), lr=tc.lr, weight_decay=tc.weight_decay)
    log: list[dict[str, float]] = []
    start = 0
    if resume is not None:
        loaded, ck = load_checkpoint(resume, expected=net.cfg)
        net.load_state_dict(loaded.state_dict())
        opt.load_state_dict(ck.optimizer_state, ck.optimizer_meta)
        rng.bit_generator.state = ck.rng_state
        mean = np.asarray(ck.extra["norm_mean"], dtype=np.float32)
        std = np.asarray(ck.extra["norm_std"], dtype=np.float32)
        log = [dict(r) for r in ck.extra.get("log", [])]
        start = ck.epoch
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    net.train()
    path = None
    ck = None
    for epoch in range(start, tc.epochs):
        opt.lr = tc.lr_at(epoch)
        order = rng.permutation(len(dataset))
        total_loss, seen, counts = 0.0, 0, Metrics()
        for step, batch in enumerate(_batches(dataset, order, tc.batch_size)):
            if tc.augment:
                batch = [augment(s, rng, mean, std) for s in batch]
            else:
                batch = [Sample(normalize(s.image, mean, std), s.mask, s.id) for s in batch]
            x = np.stack([s.image for s in batch]).astype(net.dtype)
            y = np.stack([s.mask for s in batch])
            opt.zero_grad()
            try:
                # the loss check below reports blow-ups; numpy's own warnings would only repeat them
                with finite_checks(tc.op_checks), np.errstate(over="ignore", invalid="ignore"):
                    pred = net(Tensor(x))
                    loss = bce_dice_loss(pred, y)
                    value = float(loss.data)
                    if not math.isfinite(value):
                        raise NumericError("loss is not finite")
                    loss.backward()
            except NumericError as exc:
                raise NumericError(f"training diverged at epoch {epoch} step {step}: {exc}") from None
            opt.step()
            total_loss += value * len(batch)
            seen += len(batch)
            counts = counts + compute_metrics(pred.data, y)
        row = {"epoch": epoch, "lr": opt.lr, "loss": total_loss / seen, **counts.scores()}
        log.append(row)
        if progress is not None:
            progress(row)
        arrays, meta = opt.state_dict()
        extra = {"norm_mean": mean.tolist(), "norm_std": std.tolist(), "train": tc.as_dict(), "log": log}
        ck = Checkpoint(net.cfg, epoch + 1, arrays, meta, rng.bit_generator.state, extra)
        if out is not None:
            path = save_checkpoint(
                net, out / "last.npz", epoch=epoch + 1, optimizer_state=arrays, optimizer_meta=meta, rng_state=ck.rng_state, extra=extra
            )
            write_log(log, out / "log.csv")
    if ck is None:  # resumed at or past the final epoch
        arrays, meta = opt.state_dict()
        extra = {"norm_mean": mean.tolist(), "norm_std": std.tolist(), "train": tc.as_dict(), "log": log}
        ck = Checkpoint(net.cfg, start, arrays, meta, rng.bit_generator.state, extra)
    return TrainResult(ck, log, path)


def evaluate(
    net: ASPVMUNet,
    dataset: Sequence[Sample],
    norm: tuple[np.ndarray, np.ndarray] | None = None,
    batch_size: int = 8,
    two_class_miou: bool = False,
) -> Metrics:
    """Micro-averaged metrics in inference mode.

    ``norm`` is the (mean, std) used in training; without it the statistics
    of ``dataset`` itself are used.
    """
    if not dataset:
        return Metrics(two_class_miou=two_class_miou)
    mean, std = norm if norm is not None else channel_stats(dataset)
    mean, std = np.asarray(mean, np.float32), np.asarray(std, np.float32)
    x = np.stack([normalize(s.image, mean, std) for s in dataset])
    probs = net.predict(x, batch_size=batch_size)
    total = Metrics(two_class_miou=two_class_miou)
    for p, s in zip(probs, dataset):
        total = total + compute_metrics(p, s.mask, two_class_miou=two_class_miou)
    return total


def window_means(values: Sequence[float], width: int = 5) -> list[float]:
    """Means over consecutive non-overlapping windows; a trailing partial window is dropped."""
    n = len(values) // width
    return [float(np.mean(values[i * width : (i + 1) * width])) for i in range(n)]

__all__ = [
    "LOG_FIELDS",
    "Metrics",
    "Sample",
    "TrainConfig",
    "TrainResult",
    "augment",
    "bce_dice_loss",
    "channel_stats",
    "compute_metrics",
    "evaluate",
    "load_dataset",
    "normalize",
    "read_log",
    "save_dataset",
    "synth_dataset",
    "synth_sample",
    "train",
    "window_means",
    "write_log",
]
