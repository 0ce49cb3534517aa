"""Student network distilled from aggregated point features.

The student is a per-point MLP over (x, y, z): an encoder of configurable
hidden widths followed by a projection head of exactly three fully
connected layers emitting the embedding dimension d.  It trains with plain
SGD (momentum 0.9) under a cosine-annealed learning rate, minimizing

* feature loss: one minus the mean cosine similarity between student
  outputs and teacher features, and
* label loss: cross-entropy between the student's temperature-softened
  cosine softmax over text prototypes and the teacher's hard argmax class.

The teacher side is constant; no gradient flows through it.  Everything
runs in float64, and all gradients are hand-derived and checked against
central finite differences by ``grad_check``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aggregate import PointFeatureField
from .bundle import SceneBundle, TextPrototypes
from .pixels import _unit_rows

DEFAULT_TAU = 0.07
DEFAULT_LR0 = 0.001


class DistillError(RuntimeError):
    """Raised on unusable training input or divergence."""


@dataclass
class StudentConfig:
    hidden: tuple[int, ...] = (64, 64)   # encoder widths
    head_width: int | None = None        # defaults to last encoder width
    activation: str = "relu"             # relu | tanh | identity
    lr0: float = DEFAULT_LR0
    momentum: float = 0.9
    epochs: int = 200
    batch_size: int = 256
    lambda_feature: float = 1.0   # 0 turns the feature term off (loss ablations)
    lambda_label: float = 1.0
    tau: float = DEFAULT_TAU
    seed: int = 0
    unseen: tuple[int, ...] = ()
    # exclude: unseen-labeled points leave training entirely (default);
    # label-only: they keep the feature term but skip the label term
    unseen_mode: str = "exclude"

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("StudentConfig: lr0 must be > 0")
        if self.tau <= 0:
            raise ValueError("StudentConfig: tau must be > 0")
        if self.lambda_label < 0 or self.lambda_feature < 0:
            raise ValueError("StudentConfig: loss weights must be >= 0")
        if self.lambda_label == 0 and self.lambda_feature == 0:
            raise ValueError("StudentConfig: at least one loss term must be active")
        if any(h < 1 for h in self.hidden):
            raise ValueError("StudentConfig: hidden widths must be positive")
        if self.batch_size < 1:
            raise ValueError("StudentConfig: batch_size must be >= 1")
        if self.activation not in ("relu", "tanh", "identity"):
            raise ValueError(f"StudentConfig: unknown activation {self.activation!r}")
        if self.unseen_mode not in ("exclude", "label-only"):
            raise ValueError(f"StudentConfig: unknown unseen_mode {self.unseen_mode!r}")


@dataclass
class StudentModel:
    weights: list[np.ndarray]   # per layer, (out, in) float64
    biases: list[np.ndarray]    # per layer, (out,) float64
    activation: str
    step: int = 0

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self) -> "StudentModel":
        return StudentModel(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
            self.step,
        )


def layer_dims(d_out: int, cfg: StudentConfig, d_in: int = 3) -> list[int]:
    """Full layer width sequence: input, encoder widths, 3-layer head."""
    hw = cfg.head_width if cfg.head_width is not None else (cfg.hidden[-1] if cfg.hidden else 64)
    return [d_in, *cfg.hidden, hw, hw, d_out]


def init_student(d_out: int, cfg: StudentConfig, d_in: int = 3) -> StudentModel:
    """Uniform fan-in initialization, all randomness from cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    dims = layer_dims(d_out, cfg, d_in)
    weights, biases = [], []
    for a, b in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(a)
        weights.append(rng.uniform(-bound, bound, size=(b, a)))
        biases.append(rng.uniform(-bound, bound, size=b))
    return StudentModel(weights, biases, cfg.activation)


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _act_grad(z: np.ndarray, h: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - h * h
    return np.ones_like(z)


def _forward_cache(model: StudentModel, x: np.ndarray):
    h = np.asarray(x, dtype=np.float64)
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = [h]
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.T + b
        h = z if l == last else _act(z, model.activation)
        pre.append(z)
        post.append(h)
    return h, pre, post


def forward(model: StudentModel, coords: np.ndarray) -> np.ndarray:
    """Student embeddings for an (N, 3) coordinate array."""
    fo, _, _ = _forward_cache(model, coords)
    if not np.all(np.isfinite(fo)):
        raise DistillError("forward: non-finite activations")
    return fo


def _backprop(model: StudentModel, pre, post, dout):
    """Parameter gradients given dL/d(output); mirrors _forward_cache."""
    grads_w = [np.zeros_like(w) for w in model.weights]
    grads_b = [np.zeros_like(b) for b in model.biases]
    delta = dout
    last = len(model.weights) - 1
    for l in range(last, -1, -1):
        if l != last:
            delta = delta * _act_grad(pre[l], post[l + 1], model.activation)
        grads_w[l] = delta.T @ post[l]
        grads_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ model.weights[l]
    return grads_w, grads_b


# ---------------------------------------------------------------------------
# losses


def feature_loss(fo: np.ndarray, fc: np.ndarray) -> float:
    """1 - mean cosine similarity; 0 when aligned, 2 when antiparallel."""
    fo = np.asarray(fo, dtype=np.float64)
    fc = np.asarray(fc, dtype=np.float64)
    if fo.shape != fc.shape:
        raise ValueError("feature_loss: shape mismatch between fo and fc")
    cos = np.sum(_unit_rows(fo, "fo") * _unit_rows(fc, "fc"), axis=1)
    return float(1.0 - np.mean(cos))


def _teacher_classes(fc: np.ndarray, text: TextPrototypes) -> np.ndarray:
    sims = _unit_rows(fc, "fc") @ _unit_rows(text.rows, "text.rows").T
    return np.argmax(sims, axis=1)


def _label_loss_parts(fo, text, classes, tau):
    """Per-point cross-entropy of the softened student prediction."""
    t_unit = _unit_rows(text.rows, "text.rows")
    fo_norm = np.linalg.norm(fo, axis=1, keepdims=True)
    if np.any(fo_norm == 0.0):
        raise ValueError("label_loss: zero-norm student output")
    fo_unit = fo / fo_norm
    s = fo_unit @ t_unit.T                       # cosine scores
    logits = s / tau
    logits -= logits.max(axis=1, keepdims=True)  # stable softmax
    expl = np.exp(logits)
    p = expl / expl.sum(axis=1, keepdims=True)
    ce = np.log(expl.sum(axis=1)) - logits[np.arange(len(classes)), classes]
    return ce, p, s, fo_unit, fo_norm, t_unit


def label_loss(
    fo: np.ndarray, fc: np.ndarray, text: TextPrototypes, tau: float = DEFAULT_TAU
) -> float:
    """Cross-entropy between softened student prediction and hard teacher class."""
    fo = np.asarray(fo, dtype=np.float64)
    fc = np.asarray(fc, dtype=np.float64)
    if text.num_categories < 2:
        raise ValueError("label_loss: needs at least two categories")
    classes = _teacher_classes(fc, text)
    ce, *_ = _label_loss_parts(fo, text, classes, tau)
    return float(np.mean(ce))


def total_loss(
    fo: np.ndarray,
    fc: np.ndarray,
    text: TextPrototypes,
    lambda_label: float = 1.0,
    tau: float = DEFAULT_TAU,
) -> float:
    """feature_loss + lambda_label * label_loss."""
    t = feature_loss(fo, fc)
    if lambda_label != 0.0:
        t += lambda_label * label_loss(fo, fc, text, tau)
    return float(t)


def _loss_and_dfo(fo, fc, text, lambda_label, tau, label_mask=None, lambda_feature=1.0):
    """Total loss and its gradient w.r.t. the student output batch.

    label_mask restricts the label term to a subset of points (the
    unseen-category protocol); the label mean runs over that subset.
    """
    n = fo.shape[0]
    fo_unit = _unit_rows(fo, "fo")
    fc_unit = _unit_rows(fc, "fc")
    fo_norm = np.linalg.norm(fo, axis=1, keepdims=True)
    cos = np.sum(fo_unit * fc_unit, axis=1)
    loss = lambda_feature * (1.0 - np.mean(cos))
    dfo = -lambda_feature * (fc_unit - cos[:, None] * fo_unit) / fo_norm / n

    if lambda_label != 0.0:
        mask = np.ones(n, dtype=bool) if label_mask is None else label_mask
        k = int(np.count_nonzero(mask))
        if k > 0:
            classes = _teacher_classes(fc[mask], text)
            ce, p, s, fom_unit, fom_norm, t_unit = _label_loss_parts(
                fo[mask], text, classes, tau
            )
            loss += lambda_label * float(np.mean(ce))
            resid = p.copy()
            resid[np.arange(k), classes] -= 1.0   # p - onehot
            dscore = resid / tau
            dfo_m = (dscore @ t_unit - np.sum(dscore * s, axis=1, keepdims=True) * fom_unit)
            dfo_m /= fom_norm
            dfo[mask] += lambda_label * dfo_m / k
    return float(loss), dfo


def loss_param_grads(
    model: StudentModel,
    coords: np.ndarray,
    fc: np.ndarray,
    text: TextPrototypes,
    lambda_label: float = 1.0,
    tau: float = DEFAULT_TAU,
    label_mask: np.ndarray | None = None,
    lambda_feature: float = 1.0,
):
    """Loss and analytic gradients for every weight and bias tensor."""
    fo, pre, post = _forward_cache(model, coords)
    loss, dfo = _loss_and_dfo(fo, fc, text, lambda_label, tau, label_mask, lambda_feature)
    grads_w, grads_b = _backprop(model, pre, post, dfo)
    return loss, grads_w, grads_b


def grad_check(
    model: StudentModel,
    coords: np.ndarray,
    fc: np.ndarray,
    text: TextPrototypes,
    tau: float = DEFAULT_TAU,
    lambda_label: float = 1.0,
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    The relative error uses max(1, |g_a|, |g_fd|) in the denominator; batches
    should stay small (<= 8 points) to keep this fast.
    """
    _, grads_w, grads_b = loss_param_grads(model, coords, fc, text, lambda_label, tau)

    def loss_at() -> float:
        fo, _, _ = _forward_cache(model, coords)
        loss, _ = _loss_and_dfo(fo, fc, text, lambda_label, tau)
        return loss

    worst = 0.0
    for params, grads in ((model.weights, grads_w), (model.biases, grads_b)):
        for tensor, grad in zip(params, grads):
            flat = tensor.reshape(-1)
            gflat = grad.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                hi = loss_at()
                flat[i] = orig - step
                lo = loss_at()
                flat[i] = orig
                g_fd = (hi - lo) / (2.0 * step)
                err = abs(gflat[i] - g_fd) / max(1.0, abs(gflat[i]), abs(g_fd))
                worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# training


def cosine_lr(lr0: float, epoch: int, epochs: int) -> float:
    """Cosine annealing from lr0 toward 0 over the epoch schedule."""
    if epochs <= 0:
        return lr0
    return lr0 * 0.5 * (1.0 + np.cos(np.pi * epoch / epochs))


def train(
    bundle: SceneBundle,
    teacher: PointFeatureField,
    cfg: StudentConfig,
) -> tuple[StudentModel, list[dict]]:
    """Distill the teacher field into a fresh student; returns the loss curve.

    Only teacher-valid points train.  Unseen-category points are dropped
    entirely (default) or kept for the feature term only, per
    cfg.unseen_mode.  Identical (bundle, teacher, cfg) reproduce bitwise
    identical parameters.
    """
    rng = np.random.default_rng(cfg.seed)
    model = init_student(bundle.dim, cfg)

    keep = teacher.valid.copy()
    if cfg.unseen and cfg.unseen_mode == "exclude":
        keep &= ~np.isin(teacher.labels, np.asarray(cfg.unseen))
    idx = np.nonzero(keep)[0]
    if idx.size == 0:
        raise DistillError("train: no valid teacher points to train on")

    coords = bundle.points.coords[idx].astype(np.float64)
    fc = teacher.features[idx]
    label_ok = np.ones(idx.size, dtype=bool)
    if cfg.unseen and cfg.unseen_mode == "label-only":
        label_ok = ~np.isin(teacher.labels[idx], np.asarray(cfg.unseen))

    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    curve: list[dict] = []

    for epoch in range(cfg.epochs):
        lr = cosine_lr(cfg.lr0, epoch, cfg.epochs)
        perm = rng.permutation(idx.size)
        for start in range(0, idx.size, cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            # overflow in a diverging run is detected and reported, not warned about
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads_w, grads_b = loss_param_grads(
                    model, coords[batch], fc[batch], bundle.text,
                    cfg.lambda_label, cfg.tau, label_mask=label_ok[batch],
                    lambda_feature=cfg.lambda_feature,
                )
            if not np.isfinite(loss):
                raise DistillError(f"train: diverged (non-finite loss) at epoch {epoch}")
            for w, b, gw, gb, vw, vb in zip(
                model.weights, model.biases, grads_w, grads_b, vel_w, vel_b
            ):
                vw *= cfg.momentum
                vw -= lr * gw
                w += vw
                vb *= cfg.momentum
                vb -= lr * gb
                b += vb
            model.step += 1

        with np.errstate(over="ignore", invalid="ignore"):
            fo, _, _ = _forward_cache(model, coords)
        if not np.all(np.isfinite(fo)):
            raise DistillError(f"train: diverged (non-finite activations) at epoch {epoch}")
        f_l = feature_loss(fo, fc)
        l_l = (
            label_loss(fo[label_ok], fc[label_ok], bundle.text, cfg.tau)
            if (cfg.lambda_label != 0.0 and label_ok.any())
            else 0.0
        )
        curve.append(
            {
                "epoch": epoch,
                "lr": float(lr),
                "feature_loss": f_l,
                "label_loss": l_l,
                "total_loss": cfg.lambda_feature * f_l + cfg.lambda_label * l_l,
            }
        )
    return model, curve


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model: StudentModel, path: str | Path, meta: dict | None = None) -> None:
    """Write architecture manifest + one float32 blob per tensor."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": "student-checkpoint/1",
        "dims": model.dims,
        "activation": model.activation,
        "step": model.step,
        "meta": meta or {},
    }
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        (out / f"w{l}.bin").write_bytes(np.ascontiguousarray(w, dtype="<f4").tobytes())
        (out / f"b{l}.bin").write_bytes(np.ascontiguousarray(b, dtype="<f4").tobytes())
    (out / "student.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_checkpoint(path: str | Path) -> StudentModel:
    root = Path(path)
    manifest = json.loads((root / "student.json").read_text(encoding="utf-8"))
    dims = manifest["dims"]
    weights, biases = [], []
    for l, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        wraw = (root / f"w{l}.bin").read_bytes()
        braw = (root / f"b{l}.bin").read_bytes()
        weights.append(np.frombuffer(wraw, dtype="<f4").reshape(b, a).astype(np.float64))
        biases.append(np.frombuffer(braw, dtype="<f4").astype(np.float64))
    return StudentModel(weights, biases, manifest["activation"], int(manifest["step"]))
