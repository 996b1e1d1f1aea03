"""Joint model: patch autoencoder -> quantum feature extraction -> dense
softmax classifier, trained against cross entropy plus a weighted
reconstruction error (``loss = l_ce + alpha * l_mse``).

Gradients flow along two routes into the shared encoder: the classification
path chains through the data-bound rotation angles of the encoding circuit
(adjoint sweep), and the reconstruction path chains through the decoder.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import circuits
from .autoencoder import PatchAutoencoder, reconstruction_loss
from .errors import ConfigError, DataError, DivergenceError

SEGMENTS = ("autoencoder", "quantum", "classifier")
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
LOG_CLIP = 1e-12
CHECKPOINT_MAGIC = "QVNCKPT1"


@dataclass(frozen=True)
class ModelConfig:
    """All structural and optimization scalars of one experiment."""

    image_size: int = 32
    patch_size: int = 4
    features: int = 9
    blocks: int = 2
    kernels: int = 2
    channels: int = 4
    num_classes: int = 4
    alpha: float = 5.0
    learning_rate: float = 0.01
    batch_size: int = 50
    epochs: int = 200
    runs: int = 3
    seed: int = 0
    reconstruction_enabled: bool = True
    lwm_enabled: bool = True

    def __post_init__(self):
        if self.patch_size < 1 or self.image_size % self.patch_size:
            raise ConfigError("image size must be divisible by patch size")
        grid = self.image_size // self.patch_size
        if grid < 2 or grid & (grid - 1):
            raise ConfigError("superpixel grid per side must be a power of 2 and >= 2")
        if self.patch_size & (self.patch_size - 1):
            raise ConfigError("patch size must be a power of 2")
        try:
            self.circuit_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if min(self.batch_size, self.epochs, self.runs, self.num_classes, self.channels) < 1:
            raise ConfigError("batch size, epochs, runs, classes, and channels must be positive")

    @property
    def grid_log(self) -> int:
        return (self.image_size // self.patch_size).bit_length() - 1

    def circuit_config(self) -> circuits.CircuitConfig:
        return circuits.CircuitConfig(
            grid_log=self.grid_log,
            features_per_superpixel=self.features,
            num_blocks=self.blocks,
            kernels_per_block=self.kernels,
            lwm_enabled=self.lwm_enabled,
        )


@dataclass
class ParameterStore:
    """Named flat parameter segments with matching Adam moment vectors."""

    segments: dict
    adam_m: dict
    adam_v: dict
    step: int = 0

    def copy(self) -> "ParameterStore":
        return ParameterStore(
            {k: v.copy() for k, v in self.segments.items()},
            {k: v.copy() for k, v in self.adam_m.items()},
            {k: v.copy() for k, v in self.adam_v.items()},
            self.step,
        )

    def lengths(self) -> dict:
        return {k: v.size for k, v in self.segments.items()}


@dataclass
class EpochRow:
    epoch: int
    l_ce: float
    l_mse: float
    loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class RunResult:
    run_index: int
    seed: int
    rows: list
    best_epoch: int
    best_val_loss: float
    best_store: ParameterStore


@dataclass
class EvalMetrics:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray


class HybridModel:
    """Stateless evaluation machinery for one configuration."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.circuit_config = config.circuit_config()
        self.autoencoder = PatchAutoencoder(config.patch_size, config.channels, config.features)
        self.evaluator = circuits.get_evaluator(self.circuit_config)
        self.num_features = self.evaluator.num_features
        self.grid = config.image_size // config.patch_size
        self.segment_lengths = {
            "autoencoder": self.autoencoder.num_params,
            "quantum": self.evaluator.program.param_arity,
            "classifier": self.num_features * config.num_classes + config.num_classes,
        }

    # -- parameters ----------------------------------------------------------

    def init_store(self, seed: int) -> ParameterStore:
        rng = np.random.default_rng(seed)
        ae = self.autoencoder.init_params(rng)
        quantum = rng.uniform(0.0, 2 * np.pi, self.segment_lengths["quantum"])
        classifier = np.zeros(self.segment_lengths["classifier"])
        bound = np.sqrt(6.0 / (self.num_features + self.config.num_classes))
        w_size = self.num_features * self.config.num_classes
        classifier[:w_size] = rng.uniform(-bound, bound, w_size)
        segments = {"autoencoder": ae, "quantum": quantum, "classifier": classifier}
        zeros = lambda: {k: np.zeros_like(v) for k, v in segments.items()}
        return ParameterStore(segments, zeros(), zeros())

    def _classifier_views(self, flat: np.ndarray):
        c = self.config.num_classes
        w = flat[: self.num_features * c].reshape(self.num_features, c)
        return w, flat[self.num_features * c :]

    def check_store(self, store: ParameterStore) -> None:
        if store.lengths() != self.segment_lengths:
            raise ConfigError(
                f"parameter store layout {store.lengths()} does not match model {self.segment_lengths}"
            )

    # -- forward -------------------------------------------------------------

    def _to_patches(self, images: np.ndarray) -> np.ndarray:
        b = images.shape[0]
        s, p, c = self.grid, self.config.patch_size, self.config.channels
        return images.reshape(b, s, p, s, p, c).transpose(0, 1, 3, 2, 4, 5).reshape(b * s * s, p, p, c)

    def _from_patches(self, patches: np.ndarray, batch: int) -> np.ndarray:
        s, p, c = self.grid, self.config.patch_size, self.config.channels
        return patches.reshape(batch, s, s, p, p, c).transpose(0, 1, 3, 2, 4, 5).reshape(
            batch, s * p, s * p, c
        )

    def forward_batch(self, images: np.ndarray, store: ParameterStore, with_caches: bool = False) -> dict:
        cfg = self.config
        images = np.asarray(images, dtype=np.float64)
        if images.shape[1:] != (cfg.image_size, cfg.image_size, cfg.channels):
            raise ConfigError(f"images must have shape (*, {cfg.image_size}, {cfg.image_size}, {cfg.channels})")
        batch = images.shape[0]
        patches = self._to_patches(images)
        angles, enc_cache = self.autoencoder.encode(store.segments["autoencoder"], patches)
        processed = angles.reshape(batch, self.grid, self.grid, cfg.features)
        data = processed.reshape(batch, -1)
        psi, features = self.evaluator.forward(data, store.segments["quantum"])
        w, bias = self._classifier_views(store.segments["classifier"])
        logits = features @ w + bias
        shifted = logits - logits.max(axis=1, keepdims=True)
        expz = np.exp(shifted)
        probs = expz / expz.sum(axis=1, keepdims=True)
        out = {"probs": probs, "processed": processed, "features": features}
        if cfg.reconstruction_enabled:
            recon_patches, dec_cache = self.autoencoder.decode(store.segments["autoencoder"], angles)
            out["reconstruction"] = self._from_patches(recon_patches, batch)
            if with_caches:
                out["recon_patches"] = recon_patches
                out["dec_cache"] = dec_cache
        else:
            out["reconstruction"] = None
        if with_caches:
            out["patches"] = patches
            out["enc_cache"] = enc_cache
            out["psi"] = psi
            out["data"] = data
        return out

    def forward(self, image: np.ndarray, store: ParameterStore):
        """Single sample: (class probabilities, reconstruction, processed image,
        feature vector) -- the last two feed the representation analyses."""
        self.check_store(store)
        out = self.forward_batch(np.asarray(image)[None], store)
        recon = out["reconstruction"][0] if out["reconstruction"] is not None else None
        return out["probs"][0], recon, out["processed"][0], out["features"][0]

    # -- losses and gradients --------------------------------------------------

    def loss_and_grads(self, images: np.ndarray, labels: np.ndarray, store: ParameterStore):
        """One batch: (l_ce, l_mse, correct count, gradient dict)."""
        cfg = self.config
        labels = np.asarray(labels)
        out = self.forward_batch(images, store, with_caches=True)
        batch = images.shape[0]
        probs = out["probs"]
        l_ce = cross_entropy(probs, labels)
        correct = int((probs.argmax(axis=1) == labels).sum())

        # classifier path
        onehot = np.zeros_like(probs)
        onehot[np.arange(batch), labels] = 1.0
        dlogits = (probs - onehot) / batch
        # rows whose clipped true-class probability saturates contribute no
        # gradient: the computed loss is exactly flat there
        clipped = probs[np.arange(batch), labels] < LOG_CLIP
        dlogits[clipped] = 0.0
        w, _ = self._classifier_views(store.segments["classifier"])
        grad_classifier = np.concatenate(
            [(out["features"].T @ dlogits).ravel(), dlogits.sum(axis=0)]
        )
        cotangents = dlogits @ w.T

        # quantum path, chaining into the encoder through the data slots
        grad_quantum, data_grads = self.evaluator.backward(
            out["psi"], out["data"], store.segments["quantum"], cotangents
        )
        dangles = data_grads.reshape(-1, cfg.features)

        if cfg.reconstruction_enabled:
            l_mse = reconstruction_loss(images, out["reconstruction"])
            scale = cfg.alpha * 2.0 / (batch * cfg.image_size**2 * cfg.channels)
            dout = scale * (out["recon_patches"] - out["patches"])
            grad_ae, dangles_recon = self.autoencoder.decode_backward(
                store.segments["autoencoder"], out["dec_cache"], dout
            )
            dangles = dangles + dangles_recon
        else:
            l_mse = 0.0
            grad_ae = np.zeros(self.segment_lengths["autoencoder"])
        grad_ae = grad_ae + self.autoencoder.encode_backward(
            store.segments["autoencoder"], out["enc_cache"], dangles
        )
        grads = {"autoencoder": grad_ae, "quantum": grad_quantum, "classifier": grad_classifier}
        return l_ce, l_mse, correct, grads


def cross_entropy(probabilities: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log likelihood over the batch, probabilities clipped at 1e-12."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels)
    if probabilities.ndim != 2 or probabilities.shape[0] != labels.shape[0]:
        raise ValueError("need one probability row per label")
    if np.any(np.abs(probabilities.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("probability rows must sum to 1")
    if labels.min() < 0 or labels.max() >= probabilities.shape[1]:
        raise ValueError("label out of range")
    picked = probabilities[np.arange(labels.shape[0]), labels]
    return float(-np.mean(np.log(np.maximum(picked, LOG_CLIP))))


def total_loss(l_ce: float, l_mse: float, alpha: float) -> float:
    if not (np.isfinite(l_ce) and np.isfinite(l_mse)) or l_ce < 0 or l_mse < 0:
        raise ValueError("loss terms must be finite and nonnegative")
    return l_ce + alpha * l_mse


def adam_step(store: ParameterStore, grads: dict, lr: float) -> None:
    """Standard bias-corrected Adam update, in place."""
    for name in SEGMENTS:
        if not np.all(np.isfinite(grads[name])):
            raise DivergenceError(f"non-finite gradient in segment {name}")
    store.step += 1
    t = store.step
    for name in SEGMENTS:
        g = grads[name]
        m = store.adam_m[name]
        v = store.adam_v[name]
        m *= ADAM_BETA1
        m += (1 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1 - ADAM_BETA2) * g * g
        m_hat = m / (1 - ADAM_BETA1**t)
        v_hat = v / (1 - ADAM_BETA2**t)
        store.segments[name] -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


# ---------------------------------------------------------------------------
# training protocol
# ---------------------------------------------------------------------------


def _epoch_eval(model: HybridModel, images: np.ndarray, labels: np.ndarray, store: ParameterStore):
    """Forward-only loss/accuracy over a split, in batch-size chunks."""
    cfg = model.config
    n = images.shape[0]
    ce_sum = mse_sum = 0.0
    correct = 0
    for start in range(0, n, cfg.batch_size):
        sl = slice(start, min(start + cfg.batch_size, n))
        out = model.forward_batch(images[sl], store)
        size = sl.stop - sl.start
        ce_sum += cross_entropy(out["probs"], labels[sl]) * size
        if cfg.reconstruction_enabled:
            mse_sum += reconstruction_loss(images[sl], out["reconstruction"]) * size
        correct += int((out["probs"].argmax(axis=1) == labels[sl]).sum())
    l_ce, l_mse = ce_sum / n, mse_sum / n
    return total_loss(l_ce, l_mse, cfg.alpha), l_ce, l_mse, correct / n


def train_single_run(model: HybridModel, train_split, val_split, run_seed: int, run_index: int = 0) -> RunResult:
    """Minibatch Adam with per-epoch seeded shuffling; keeps the checkpoint
    with the lowest validation loss (earliest epoch wins ties)."""
    cfg = model.config
    train_x, train_y = train_split
    val_x, val_y = val_split
    if train_x.shape[0] == 0 or val_x.shape[0] == 0:
        raise DataError("training and validation splits must be non-empty")
    store = model.init_store(run_seed)
    rng = np.random.default_rng(run_seed)
    rows = []
    best_epoch = -1
    best_val = np.inf
    best_store = store.copy()
    n = train_x.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        ce_sum = mse_sum = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            try:
                l_ce, l_mse, batch_correct, grads = model.loss_and_grads(train_x[idx], train_y[idx], store)
                if not (np.isfinite(l_ce) and np.isfinite(l_mse)):
                    raise DivergenceError(f"loss diverged at epoch {epoch} (run {run_index})")
                adam_step(store, grads, cfg.learning_rate)
            except DivergenceError as exc:
                exc.partial_rows = rows  # completed epochs survive the abort
                raise
            ce_sum += l_ce * idx.size
            mse_sum += l_mse * idx.size
            correct += batch_correct
        val_loss, _, _, val_acc = _epoch_eval(model, val_x, val_y, store)
        row = EpochRow(
            epoch=epoch,
            l_ce=ce_sum / n,
            l_mse=mse_sum / n,
            loss=total_loss(ce_sum / n, mse_sum / n, cfg.alpha),
            train_acc=correct / n,
            val_loss=val_loss,
            val_acc=val_acc,
        )
        rows.append(row)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_store = store.copy()
    return RunResult(run_index, run_seed, rows, best_epoch, best_val, best_store)


def train(model: HybridModel, train_split, val_split) -> list:
    """The multi-run protocol: run r uses seed ``config.seed + r``."""
    return [
        train_single_run(model, train_split, val_split, model.config.seed + r, r)
        for r in range(model.config.runs)
    ]


def evaluate(model: HybridModel, store: ParameterStore, images: np.ndarray, labels: np.ndarray) -> EvalMetrics:
    """Accuracy plus per-class precision/recall/F1 (zero denominators give 0)."""
    model.check_store(store)
    cfg = model.config
    predictions = []
    for start in range(0, images.shape[0], cfg.batch_size):
        out = model.forward_batch(images[start : start + cfg.batch_size], store)
        predictions.append(out["probs"].argmax(axis=1))
    predicted = np.concatenate(predictions)
    labels = np.asarray(labels)
    c = cfg.num_classes
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (labels, predicted), 1)
    tp = np.diag(confusion).astype(np.float64)
    predicted_count = confusion.sum(axis=0)
    actual_count = confusion.sum(axis=1)
    precision = np.divide(tp, predicted_count, out=np.zeros(c), where=predicted_count > 0)
    recall = np.divide(tp, actual_count, out=np.zeros(c), where=actual_count > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(c), where=denom > 0)
    return EvalMetrics(float((predicted == labels).mean()), precision, recall, f1)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, store: ParameterStore, config: ModelConfig) -> None:
    """Text manifest plus raw little-endian float64 arrays in declared order."""
    order = (
        [f"segment:{s}" for s in SEGMENTS]
        + [f"adam_m:{s}" for s in SEGMENTS]
        + [f"adam_v:{s}" for s in SEGMENTS]
    )
    manifest = {
        "format_version": 1,
        "segments": [{"name": s, "length": int(store.segments[s].size)} for s in SEGMENTS],
        "adam": {"beta1": ADAM_BETA1, "beta2": ADAM_BETA2, "epsilon": ADAM_EPS, "step": store.step},
        "config": asdict(config),
        "arrays": order,
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {len(blob)}\n".encode("ascii"))
        fh.write(blob)
        for name in order:
            kind, seg = name.split(":")
            source = {"segment": store.segments, "adam_m": store.adam_m, "adam_v": store.adam_v}[kind]
            fh.write(np.ascontiguousarray(source[seg], dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (ParameterStore, ModelConfig)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no checkpoint at {path}")
    raw = path.read_bytes()
    newline = raw.index(b"\n")
    magic, _, length = raw[:newline].decode("ascii").partition(" ")
    if magic != CHECKPOINT_MAGIC:
        raise DataError(f"{path} is not a checkpoint file")
    manifest = json.loads(raw[newline + 1 : newline + 1 + int(length)])
    known = {f.name for f in fields(ModelConfig)}
    config = ModelConfig(**{k: v for k, v in manifest["config"].items() if k in known})
    lengths = {entry["name"]: entry["length"] for entry in manifest["segments"]}
    offset = newline + 1 + int(length)
    store = ParameterStore({}, {}, {}, step=manifest["adam"]["step"])
    for name in manifest["arrays"]:
        kind, seg = name.split(":")
        size = lengths[seg]
        arr = np.frombuffer(raw, dtype="<f8", count=size, offset=offset).copy()
        offset += size * 8
        {"segment": store.segments, "adam_m": store.adam_m, "adam_v": store.adam_v}[kind][seg] = arr
    if offset != len(raw):
        raise DataError(f"checkpoint {path} has trailing or missing bytes")
    return store, config
