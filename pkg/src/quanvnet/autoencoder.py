"""Patch autoencoder for the auxiliary reconstruction task.

One shared encoder/decoder pair is applied independently to every patch
(superpixel) of every image. The encoder halves the spatial size with
conv/ReLU/max-pool blocks until it reaches 2x2, then maps to E features
through a bounded head ``pi * sigmoid`` -- rotation angles are periodic, so
the features must live in [0, pi]. The decoder mirrors this with stride-2
transposed convolutions and a logistic output head in [0, 1].

All forward/backward passes are plain numpy over a leading patch-batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HIDDEN_CHANNELS = 4


def patchify(image: np.ndarray, patch: int) -> np.ndarray:
    """Split (N, N, C) into a (N/P, N/P) grid of (P, P, C) patches.

    Patch (x, y) holds image rows [xP, (x+1)P) and cols [yP, (y+1)P).
    Requires an exact power-of-two tiling.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != image.shape[1]:
        raise ValueError("image must be square with shape (N, N, channels)")
    n = image.shape[0]
    if patch < 1 or n % patch != 0:
        raise ValueError(f"image size {n} is not divisible by patch size {patch}")
    grid = n // patch
    if grid & (grid - 1):
        raise ValueError(f"grid {grid} per side is not a power of 2")
    c = image.shape[2]
    return (
        image.reshape(grid, patch, grid, patch, c)
        .transpose(0, 2, 1, 3, 4)
        .copy()
    )


def unpatchify(grid: np.ndarray) -> np.ndarray:
    """Inverse of patchify; lossless."""
    s, s2, p, p2, c = grid.shape
    if s != s2 or p != p2:
        raise ValueError("patch grid must be (S, S, P, P, C)")
    return grid.transpose(0, 2, 1, 3, 4).reshape(s * p, s * p, c)


def reconstruction_loss(original: np.ndarray, reconstructed: np.ndarray) -> float:
    """Squared reconstruction error, elementwise mean per image, mean over batch."""
    original = np.asarray(original, dtype=np.float64)
    reconstructed = np.asarray(reconstructed, dtype=np.float64)
    if original.shape != reconstructed.shape:
        raise ValueError("original and reconstruction shapes differ")
    diff = original - reconstructed
    if diff.ndim == 3:
        return float(np.mean(diff**2))
    per_image = np.mean(diff.reshape(diff.shape[0], -1) ** 2, axis=1)
    return float(np.mean(per_image))


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _conv2d(x, w, b):
    # x (B,H,W,Ci), w (3,3,Ci,Co); same padding
    bsz, h, wd, _ = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.broadcast_to(b, (bsz, h, wd, w.shape[3])).copy()
    for di in range(3):
        for dj in range(3):
            out += xp[:, di : di + h, dj : dj + wd, :] @ w[di, dj]
    return out


def _conv2d_backward(x, w, grad):
    bsz, h, wd, _ = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for di in range(3):
        for dj in range(3):
            window = xp[:, di : di + h, dj : dj + wd, :]
            dw[di, dj] = np.tensordot(window, grad, axes=([0, 1, 2], [0, 1, 2]))
            dxp[:, di : di + h, dj : dj + wd, :] += grad @ w[di, dj].T
    db = grad.sum(axis=(0, 1, 2))
    return dxp[:, 1:-1, 1:-1, :], dw, db


def _maxpool(x):
    bsz, h, wd, c = x.shape
    r = x.reshape(bsz, h // 2, 2, wd // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(bsz, h // 2, wd // 2, c, 4)
    idx = r.argmax(axis=4)  # first maximum wins on ties, keeps backward deterministic
    out = np.take_along_axis(r, idx[..., None], axis=4)[..., 0]
    return out, idx


def _maxpool_backward(idx, grad, in_shape):
    bsz, h, wd, c = in_shape
    r = np.zeros((bsz, h // 2, wd // 2, c, 4))
    np.put_along_axis(r, idx[..., None], grad[..., None], axis=4)
    return r.reshape(bsz, h // 2, wd // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(in_shape)


def _tconv2d(x, w, b):
    # x (B,h,w,Ci), w (2,2,Ci,Co); stride 2 == kernel size, so blocks never overlap
    bsz, h, wd, _ = x.shape
    co = w.shape[3]
    y = np.einsum("bijc,deco->bidjeo", x, w).reshape(bsz, 2 * h, 2 * wd, co)
    return y + b


def _tconv2d_backward(x, w, grad):
    bsz, h, wd, _ = x.shape
    g6 = grad.reshape(bsz, h, 2, wd, 2, w.shape[3])
    dx = np.einsum("bidjeo,deco->bijc", g6, w)
    dw = np.einsum("bijc,bidjeo->deco", x, g6)
    db = grad.sum(axis=(0, 1, 2))
    return dx, dw, db


@dataclass(frozen=True)
class _LayerSpec:
    name: str
    shape: tuple
    fan: tuple  # (fan_in, fan_out) for the init scale; None for biases


class PatchAutoencoder:
    """Shapes, initialization, and forward/backward for one patch geometry."""

    def __init__(self, patch: int, channels: int, num_features: int):
        if patch < 1 or patch & (patch - 1):
            raise ValueError("patch size must be a power of 2")
        self.patch = patch
        self.channels = channels
        self.num_features = num_features
        self.blocks = max(0, patch.bit_length() - 2)  # pool until 2x2
        self.base = patch >> self.blocks
        enc_flat = self.base**2 * (HIDDEN_CHANNELS if self.blocks else channels)
        dec_flat = self.base**2 * HIDDEN_CHANNELS

        layers = []
        for i in range(self.blocks):
            cin = channels if i == 0 else HIDDEN_CHANNELS
            layers.append(_LayerSpec(f"enc_conv{i}_w", (3, 3, cin, HIDDEN_CHANNELS), (9 * cin, 9 * HIDDEN_CHANNELS)))
            layers.append(_LayerSpec(f"enc_conv{i}_b", (HIDDEN_CHANNELS,), None))
        layers.append(_LayerSpec("enc_dense_w", (enc_flat, num_features), (enc_flat, num_features)))
        layers.append(_LayerSpec("enc_dense_b", (num_features,), None))
        self._encoder_end = sum(int(np.prod(l.shape)) for l in layers)

        layers.append(_LayerSpec("dec_dense_w", (num_features, dec_flat), (num_features, dec_flat)))
        layers.append(_LayerSpec("dec_dense_b", (dec_flat,), None))
        for i in range(self.blocks):
            layers.append(_LayerSpec(f"dec_tconv{i}_w", (2, 2, HIDDEN_CHANNELS, HIDDEN_CHANNELS),
                                     (4 * HIDDEN_CHANNELS, 4 * HIDDEN_CHANNELS)))
            layers.append(_LayerSpec(f"dec_tconv{i}_b", (HIDDEN_CHANNELS,), None))
        layers.append(_LayerSpec("dec_out_w", (3, 3, HIDDEN_CHANNELS, channels), (9 * HIDDEN_CHANNELS, 9 * channels)))
        layers.append(_LayerSpec("dec_out_b", (channels,), None))
        self.layers = layers
        self.num_params = sum(int(np.prod(l.shape)) for l in layers)

    @property
    def encoder_slice(self) -> slice:
        return slice(0, self._encoder_end)

    @property
    def decoder_slice(self) -> slice:
        return slice(self._encoder_end, self.num_params)

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        flat = np.zeros(self.num_params)
        for name, view in self._views(flat).items():
            spec = next(l for l in self.layers if l.name == name)
            if spec.fan is not None:
                bound = np.sqrt(6.0 / (spec.fan[0] + spec.fan[1]))
                view[...] = rng.uniform(-bound, bound, spec.shape)
        return flat

    def _views(self, flat: np.ndarray) -> dict:
        if flat.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} autoencoder parameters, got {flat.shape}")
        views = {}
        offset = 0
        for spec in self.layers:
            size = int(np.prod(spec.shape))
            views[spec.name] = flat[offset : offset + size].reshape(spec.shape)
            offset += size
        return views

    # -- encoder ------------------------------------------------------------

    def encode(self, params: np.ndarray, patches: np.ndarray):
        """patches (B, P, P, C) -> features (B, E) in [0, pi], plus cache."""
        v = self._views(params)
        if patches.shape[1:] != (self.patch, self.patch, self.channels):
            raise ValueError("patch shape does not match the configured geometry")
        cache = {"patches": patches, "conv": []}
        x = patches
        for i in range(self.blocks):
            pre = _conv2d(x, v[f"enc_conv{i}_w"], v[f"enc_conv{i}_b"])
            act = np.maximum(pre, 0.0)
            pooled, idx = _maxpool(act)
            cache["conv"].append((x, pre, act.shape, idx))
            x = pooled
        flat = x.reshape(x.shape[0], -1)
        z = flat @ v["enc_dense_w"] + v["enc_dense_b"]
        sig = _sigmoid(z)
        cache["flat"] = flat
        cache["x_shape"] = x.shape
        cache["sig"] = sig
        return np.pi * sig, cache

    def encode_backward(self, params: np.ndarray, cache: dict, dfeatures: np.ndarray) -> np.ndarray:
        """Gradient of the encoder parameters given d(loss)/d(features)."""
        v = self._views(params)
        grads = np.zeros(self.num_params)
        gv = self._views(grads)
        sig = cache["sig"]
        dz = dfeatures * np.pi * sig * (1.0 - sig)
        gv["enc_dense_w"][...] = cache["flat"].T @ dz
        gv["enc_dense_b"][...] = dz.sum(axis=0)
        dx = (dz @ v["enc_dense_w"].T).reshape(cache["x_shape"])
        for i in reversed(range(self.blocks)):
            x_in, pre, act_shape, idx = cache["conv"][i]
            dact = _maxpool_backward(idx, dx, act_shape)
            dpre = dact * (pre > 0)
            dx, dw, db = _conv2d_backward(x_in, v[f"enc_conv{i}_w"], dpre)
            gv[f"enc_conv{i}_w"][...] = dw
            gv[f"enc_conv{i}_b"][...] = db
        return grads

    # -- decoder ------------------------------------------------------------

    def decode(self, params: np.ndarray, features: np.ndarray):
        """features (B, E) -> patches (B, P, P, C) in [0, 1], plus cache."""
        v = self._views(params)
        if features.shape[1:] != (self.num_features,):
            raise ValueError("feature length does not match the configured geometry")
        cache = {"features": features, "tconv": []}
        z = features @ v["dec_dense_w"] + v["dec_dense_b"]
        x = z.reshape(features.shape[0], self.base, self.base, HIDDEN_CHANNELS)
        for i in range(self.blocks):
            pre = _tconv2d(x, v[f"dec_tconv{i}_w"], v[f"dec_tconv{i}_b"])
            cache["tconv"].append((x, pre))
            x = np.maximum(pre, 0.0)
        pre_out = _conv2d(x, v["dec_out_w"], v["dec_out_b"])
        sig = _sigmoid(pre_out)
        cache["last_act"] = x
        cache["sig"] = sig
        return sig, cache

    def decode_backward(self, params: np.ndarray, cache: dict, dout: np.ndarray):
        """Returns (decoder parameter gradients, d(loss)/d(features))."""
        v = self._views(params)
        grads = np.zeros(self.num_params)
        gv = self._views(grads)
        sig = cache["sig"]
        dpre_out = dout * sig * (1.0 - sig)
        dx, dw, db = _conv2d_backward(cache["last_act"], v["dec_out_w"], dpre_out)
        gv["dec_out_w"][...] = dw
        gv["dec_out_b"][...] = db
        for i in reversed(range(self.blocks)):
            x_in, pre = cache["tconv"][i]
            dpre = dx * (pre > 0)
            dx, dw, db = _tconv2d_backward(x_in, v[f"dec_tconv{i}_w"], dpre)
            gv[f"dec_tconv{i}_w"][...] = dw
            gv[f"dec_tconv{i}_b"][...] = db
        dz = dx.reshape(dx.shape[0], -1)
        gv["dec_dense_w"][...] = cache["features"].T @ dz
        gv["dec_dense_b"][...] = dz.sum(axis=0)
        dfeatures = dz @ v["dec_dense_w"].T
        return grads, dfeatures

    # -- single-patch conveniences -------------------------------------------

    def encode_patch(self, params: np.ndarray, patch: np.ndarray) -> np.ndarray:
        features, _ = self.encode(params, np.asarray(patch)[None])
        return features[0]

    def decode_patch(self, params: np.ndarray, features: np.ndarray) -> np.ndarray:
        patches, _ = self.decode(params, np.asarray(features, dtype=np.float64)[None])
        return patches[0]
