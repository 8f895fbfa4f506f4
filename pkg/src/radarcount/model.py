"""People-count regressor: spatial pooling features plus a small MLP trained
with MSE, Adam, and early stopping, and the fine-tuning protocol for
cross-environment transfer.

Features are permutation-invariant temporal statistics (mean, std, max over
frames) of region-pooled frames, so the regressor exercises the same
preprocessing signal the std-based methods manipulate.  Training is plain
numpy and single-threaded for bit-reproducibility.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import Dataset, RadarCube

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
BASE_LR = 1e-3
FINE_TUNE_LR = 1e-4

CHECKPOINT_MAGIC = b"RCM1"


@dataclass(frozen=True)
class FeatureExtractor:
    """Average-pool each frame on a grid, then take temporal stats per region.

    Default 3x7 grid on 12x91 frames -> 21 regions; {mean, std, max} over
    frames -> 63 features.  The last region along each axis absorbs any
    remainder when the grid does not tile evenly.
    """

    pool_grid: tuple = (3, 7)

    def n_features(self) -> int:
        return 3 * self.pool_grid[0] * self.pool_grid[1]

    def _edges(self, size: int, parts: int) -> list:
        step = size // parts
        edges = [i * step for i in range(parts)] + [size]
        return edges

    def __call__(self, cube: RadarCube) -> np.ndarray:
        a = np.asarray(cube.amplitudes, dtype=np.float64)
        nt, nr, na = a.shape
        pr, pc = self.pool_grid
        re = self._edges(nr, pr)
        ce = self._edges(na, pc)
        pooled = np.empty((nt, pr, pc))
        for i in range(pr):
            for j in range(pc):
                pooled[:, i, j] = a[:, re[i]:re[i + 1],
                                    ce[j]:ce[j + 1]].mean(axis=(1, 2))
        flat = pooled.reshape(nt, -1)
        feats = np.concatenate([
            flat.mean(axis=0),
            flat.std(axis=0, ddof=0),
            flat.max(axis=0),
        ])
        return feats


def extract_features(cube: RadarCube,
                     fx: FeatureExtractor = FeatureExtractor()) -> np.ndarray:
    return fx(cube)


def features_matrix(cubes, fx: FeatureExtractor = FeatureExtractor()) -> np.ndarray:
    return np.stack([fx(c) for c in cubes])


@dataclass
class CountModel:
    """63 -> hidden -> 1 fully connected regressor with ReLU hidden layer."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    extractor: FeatureExtractor = FeatureExtractor()

    @classmethod
    def init(cls, n_in: int = 63, hidden: int = 64, seed: int = 0,
             extractor: FeatureExtractor | None = None) -> "CountModel":
        rng = np.random.default_rng(seed)
        w1 = rng.standard_normal((n_in, hidden)) * np.sqrt(2.0 / n_in)
        w2 = rng.standard_normal((hidden, 1)) * np.sqrt(2.0 / hidden)
        return cls(w1=w1, b1=np.zeros(hidden), w2=w2, b2=np.zeros(1),
                   extractor=extractor or FeatureExtractor())

    def params(self) -> dict:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> "CountModel":
        return CountModel(w1=self.w1.copy(), b1=self.b1.copy(),
                          w2=self.w2.copy(), b2=self.b2.copy(),
                          extractor=self.extractor)

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.maximum(x @ self.w1 + self.b1, 0.0)
        return (h @ self.w2 + self.b2).ravel()

    def loss_and_grad(self, x: np.ndarray, y: np.ndarray):
        """MSE loss and its analytic gradient for a batch."""
        n = len(y)
        z1 = x @ self.w1 + self.b1
        h = np.maximum(z1, 0.0)
        pred = (h @ self.w2 + self.b2).ravel()
        err = pred - y
        loss = float(np.mean(err ** 2))
        dpred = (2.0 / n) * err
        dw2 = h.T @ dpred[:, None]
        db2 = np.array([dpred.sum()])
        dh = dpred[:, None] @ self.w2.T
        dz1 = dh * (z1 > 0)
        dw1 = x.T @ dz1
        db1 = dz1.sum(axis=0)
        return loss, {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}


@dataclass
class OptimizerState:
    """Adam first/second moment accumulators and step counter."""

    m: dict
    v: dict
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_model(cls, model: CountModel) -> "OptimizerState":
        return cls(m={k: np.zeros_like(p) for k, p in model.params().items()},
                   v={k: np.zeros_like(p) for k, p in model.params().items()})


def adam_step(model: CountModel, grads: dict, state: OptimizerState,
              lr: float) -> None:
    state.step += 1
    t = state.step
    for k, p in model.params().items():
        g = grads[k]
        state.m[k] = state.beta1 * state.m[k] + (1 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1 - state.beta2) * g * g
        m_hat = state.m[k] / (1 - state.beta1 ** t)
        v_hat = state.v[k] / (1 - state.beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = BASE_LR
    max_epochs: int = 100
    patience: int = 10
    batch: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")


def _mse(model: CountModel, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((model.forward(x) - y) ** 2))


def train_features(model: CountModel, x_train, y_train, x_val, y_val,
                   cfg: TrainConfig):
    """Adam + early stopping on pre-extracted features.

    Returns the checkpoint with the lowest validation MSE seen and the
    per-epoch history [(epoch, train_mse, val_mse), ...].
    """
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("train and val splits must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    model = model.copy()
    state = OptimizerState.for_model(model)
    best = model.copy()
    best_val = np.inf
    stale = 0
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(x_train))
        for start in range(0, len(order), cfg.batch):
            idx = order[start:start + cfg.batch]
            loss, grads = model.loss_and_grad(x_train[idx], y_train[idx])
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite training loss at epoch {epoch}: {loss}"
                )
            adam_step(model, grads, state, cfg.lr)
        train_mse = _mse(model, x_train, y_train)
        val_mse = _mse(model, x_val, y_val)
        history.append((epoch, train_mse, val_mse))
        if val_mse < best_val:
            best_val = val_mse
            best = model.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best, history


def _split_features(model: CountModel, ds: Dataset):
    for tag in ("train", "val"):
        if ds.split is None or tag not in ds.split:
            raise ValueError(f"dataset is missing a {tag!r} split")
    tr = ds.subset("train")
    va = ds.subset("val")
    x_tr = features_matrix(tr.cubes, model.extractor)
    x_va = features_matrix(va.cubes, model.extractor)
    return x_tr, tr.labels().astype(float), x_va, va.labels().astype(float)


def train(model: CountModel, ds: Dataset, cfg: TrainConfig):
    """Train on a dataset with train/val split tags (see train_features)."""
    return train_features(model, *_split_features(model, ds), cfg)


def fine_tune(model: CountModel, target: Dataset, n_train: int,
              cfg: TrainConfig | None = None):
    """Update all parameters on `n_train` stratified target samples at the
    reduced transfer learning rate.  n_train = 0 returns the model as is."""
    if n_train == 0:
        return model.copy(), []
    cfg = cfg or TrainConfig(lr=FINE_TUNE_LR)
    x_tr, y_tr, x_va, y_va = _split_features(model, target)
    if n_train > len(x_tr):
        raise ValueError(
            f"n_train={n_train} exceeds target train pool of {len(x_tr)}"
        )
    idx = _stratified_take(y_tr, n_train, cfg.seed)
    return train_features(model, x_tr[idx], y_tr[idx], x_va, y_va, cfg)


def _stratified_take(y: np.ndarray, n: int, seed: int) -> np.ndarray:
    """First `n` indices of a seeded per-class round-robin ordering."""
    rng = np.random.default_rng(seed)
    classes = np.unique(y)
    pools = [list(rng.permutation(np.flatnonzero(y == c))) for c in classes]
    picked = []
    while len(picked) < n:
        for pool in pools:
            if pool and len(picked) < n:
                picked.append(pool.pop())
    return np.array(picked, dtype=int)


def predict(model: CountModel, cube: RadarCube) -> float:
    """Raw (unclamped) count estimate for one cube."""
    return float(model.forward(model.extractor(cube)[None, :])[0])


def predict_batch(model: CountModel, cubes) -> np.ndarray:
    return model.forward(features_matrix(cubes, model.extractor))


def save_checkpoint(model: CountModel, path) -> None:
    """Versioned binary: magic 'RCM1', layer dims, then f64 parameters."""
    n_in, hidden = model.w1.shape
    header = struct.pack("<4sIII", CHECKPOINT_MAGIC, 1, n_in, hidden)
    blobs = [p.astype("<f8").tobytes()
             for p in (model.w1, model.b1, model.w2, model.b2)]
    Path(path).write_bytes(header + b"".join(blobs))


def load_checkpoint(path,
                    extractor: FeatureExtractor | None = None) -> CountModel:
    raw = Path(path).read_bytes()
    magic, version, n_in, hidden = struct.unpack_from("<4sIII", raw)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic {magic!r}")
    if version != 1:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = struct.calcsize("<4sIII")
    sizes = [(n_in * hidden, (n_in, hidden)), (hidden, (hidden,)),
             (hidden, (hidden, 1)), (1, (1,))]
    arrays = []
    for count, shape in sizes:
        arr = np.frombuffer(raw, dtype="<f8", offset=off, count=count)
        arrays.append(arr.reshape(shape).copy())
        off += 8 * count
    return CountModel(w1=arrays[0], b1=arrays[1], w2=arrays[2], b2=arrays[3],
                      extractor=extractor or FeatureExtractor())


def save_history(history, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_mse", "val_mse"])
        for epoch, tr, va in history:
            writer.writerow([epoch, f"{tr:.10g}", f"{va:.10g}"])
