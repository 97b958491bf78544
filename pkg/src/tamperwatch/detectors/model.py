"""ConvLSTM encoder-decoder shared by all four detectors.

The encoder is a stack of ConvLSTM cells fed the input frames in time
order. Its top hidden map (for the VAE: a latent sample drawn from 1x1
mean/log-variance heads on that map) is fed as the input of every
decoder step. The decoder mirrors the encoder's channel stack, starts
from a zero state and emits one frame per step through a 1x1
convolution: one step for the predictor and interpolator, J+1 steps for
the autoencoders.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InvalidArgument, InvalidConfig, NumericFailure
from ..nn import checkpoint
from ..nn.cell import CellState, ConvLstmCellParams, cell_backward, cell_forward
from ..nn.conv import conv2d_same_backward, conv2d_same_cols
from ..seeding import derive_seed, make_rng
from .windows import DetectorKind


@dataclass
class DetectorConfig:
    kind: DetectorKind = DetectorKind.INTERPOLATOR
    context: int = 4
    hidden: tuple[int, ...] = (8, 16)
    kernel: int = 3
    latent_channels: int = 8
    kl_weight: float = 0.01
    epochs: int = 15
    lr: float = 1e-3
    grad_clip: float = 5.0
    seed: int = 0

    def __post_init__(self):
        self.kind = DetectorKind(self.kind)
        self.hidden = tuple(int(h) for h in self.hidden)

    def validate(self) -> None:
        if not self.hidden or min(self.hidden) < 1:
            raise InvalidConfig(f"hidden channels must be positive, got {self.hidden}")
        if self.kernel % 2 == 0 or self.kernel < 1:
            raise InvalidConfig(f"kernel must be odd, got {self.kernel}")
        min_j = 2 if self.kind is DetectorKind.INTERPOLATOR else 1
        if self.context < min_j:
            raise InvalidConfig(f"context J={self.context} too small for {self.kind.value}")
        if self.epochs < 0 or self.lr <= 0 or self.grad_clip <= 0:
            raise InvalidConfig("epochs must be >= 0; lr and grad_clip positive")

    @property
    def n_outputs(self) -> int:
        return self.context + 1 if self.kind.reconstructs_window else 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidConfig(f"unknown detector fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ForwardCache:
    enc: list            # [time][layer] CellCache
    dec: list            # [step][layer] CellCache
    out_cols: list       # [step] patch matrices of the 1x1 output conv
    top: np.ndarray
    mu: np.ndarray | None = None
    logvar: np.ndarray | None = None
    eps: np.ndarray | None = None


@dataclass
class ForwardResult:
    output: np.ndarray           # (n_out, H, W), unclamped
    cache: ForwardCache = field(repr=False)

    @property
    def mu(self):
        return self.cache.mu

    @property
    def logvar(self):
        return self.cache.logvar


class DetectorModel:
    def __init__(self, config: DetectorConfig, height: int, width: int):
        config.validate()
        self.config = config
        self.height = height
        self.width = width
        rng = make_rng(derive_seed(config.seed, "init"))
        k = config.kernel
        self.enc = []
        cin = 1
        for hid in config.hidden:
            self.enc.append(ConvLstmCellParams.init(cin, hid, k, height, width, rng))
            cin = hid
        dec_hidden = tuple(reversed(config.hidden))
        cin = config.latent_channels if self.is_vae else config.hidden[-1]
        self.dec = []
        for hid in dec_hidden:
            self.dec.append(ConvLstmCellParams.init(cin, hid, k, height, width, rng))
            cin = hid
        bound = 1.0 / np.sqrt(cin)
        self.out_w = rng.uniform(-bound, bound, (1, cin, 1, 1))
        self.out_b = np.full(1, 0.5)
        if self.is_vae:
            top = config.hidden[-1]
            lat = config.latent_channels
            bound = 1.0 / np.sqrt(top)
            self.mu_w = rng.uniform(-bound, bound, (lat, top, 1, 1))
            self.mu_b = np.zeros(lat)
            self.lv_w = rng.uniform(-bound, bound, (lat, top, 1, 1)) * 0.1
            self.lv_b = np.zeros(lat)
        self._pack()

    def _pack(self) -> None:
        # every parameter becomes a view into one flat buffer so the
        # optimizer can update them with a handful of vector operations
        arrays = self.params()
        self.flat = np.concatenate([a.ravel() for a in arrays.values()])
        views, pos = {}, 0
        for name, a in arrays.items():
            views[name] = self.flat[pos:pos + a.size].reshape(a.shape)
            pos += a.size
        for i, cell in enumerate(self.enc):
            for f in cell.named():
                setattr(cell, f, views[f"enc{i}.{f}"])
        for i, cell in enumerate(self.dec):
            for f in cell.named():
                setattr(cell, f, views[f"dec{i}.{f}"])
        self.out_w, self.out_b = views["out.w"], views["out.b"]
        if self.is_vae:
            self.mu_w, self.mu_b = views["mu.w"], views["mu.b"]
            self.lv_w, self.lv_b = views["logvar.w"], views["logvar.b"]

    def flatten(self, grads: dict[str, np.ndarray]) -> np.ndarray:
        """Concatenate a gradient dict in the same layout as ``self.flat``."""
        return np.concatenate([grads[name].ravel() for name in self.params()])

    @property
    def kind(self) -> DetectorKind:
        return self.config.kind

    @property
    def is_vae(self) -> bool:
        return self.config.kind is DetectorKind.VAE

    def params(self) -> dict[str, np.ndarray]:
        """Named views of every trainable array, in checkpoint order."""
        out = {}
        for prefix, cells in (("enc", self.enc), ("dec", self.dec)):
            for i, cell in enumerate(cells):
                for name, arr in cell.named().items():
                    out[f"{prefix}{i}.{name}"] = arr
        out["out.w"] = self.out_w
        out["out.b"] = self.out_b
        if self.is_vae:
            out.update({"mu.w": self.mu_w, "mu.b": self.mu_b,
                        "logvar.w": self.lv_w, "logvar.b": self.lv_b})
        return out

    def load_params(self, arrays: dict[str, np.ndarray]) -> None:
        own = self.params()
        if own.keys() != arrays.keys():
            raise InvalidArgument(
                f"checkpoint arrays {sorted(arrays)} do not match model {sorted(own)}")
        for name, arr in arrays.items():
            if arr.shape != own[name].shape:
                raise InvalidArgument(f"{name}: checkpoint {arr.shape} vs model {own[name].shape}")
            own[name][...] = arr

    # -- forward / backward -------------------------------------------------

    def forward(self, inputs: np.ndarray, rng: np.random.Generator | None = None) -> ForwardResult:
        """Run encoder then decoder on ``inputs`` of shape (n_in, H, W).

        For the VAE, ``rng`` draws the latent sample; without it the latent
        mean is decoded.
        """
        if inputs.ndim != 3 or inputs.shape[1:] != (self.height, self.width):
            raise InvalidArgument(
                f"input window {inputs.shape} does not match model frames "
                f"({self.height}, {self.width})")
        h, w = self.height, self.width
        states = [CellState.zeros(c.hidden_channels, h, w) for c in self.enc]
        enc_caches = []
        for frame in inputs:
            x = frame[None]
            layer = []
            for li, cell in enumerate(self.enc):
                states[li], cache = cell_forward(x, states[li], cell)
                layer.append(cache)
                x = states[li].h
            enc_caches.append(layer)
        top = states[-1].h

        cache = ForwardCache(enc_caches, [], [], top)
        if self.is_vae:
            mu, _ = conv2d_same_cols(top, self.mu_w, self.mu_b)
            logvar, _ = conv2d_same_cols(top, self.lv_w, self.lv_b)
            cache.mu, cache.logvar = mu, logvar
            if rng is not None:
                cache.eps = rng.standard_normal(mu.shape)
                drive = mu + np.exp(0.5 * logvar) * cache.eps
            else:
                drive = mu
        else:
            drive = top

        states = [CellState.zeros(c.hidden_channels, h, w) for c in self.dec]
        outputs = np.empty((self.config.n_outputs, h, w))
        for s in range(self.config.n_outputs):
            x = drive
            layer = []
            for li, cell in enumerate(self.dec):
                states[li], c = cell_forward(x, states[li], cell)
                layer.append(c)
                x = states[li].h
            y, cols = conv2d_same_cols(x, self.out_w, self.out_b)
            outputs[s] = y[0]
            cache.dec.append(layer)
            cache.out_cols.append(cols)
        return ForwardResult(outputs, cache)

    def backward(self, result: ForwardResult, d_output: np.ndarray,
                 d_mu: np.ndarray | None = None, d_logvar: np.ndarray | None = None):
        """Gradients of a scalar loss given its derivative w.r.t. the outputs
        (and, for the VAE, the direct derivatives w.r.t. the latent stats)."""
        cache = result.cache
        params = self.params()
        grads = {name: np.zeros_like(a) for name, a in params.items()}

        def acc(prefix, g):
            for name, v in g.items():
                grads[f"{prefix}.{name}"] += v

        carry = [CellState(np.zeros_like(c.wci), np.zeros_like(c.wci)) for c in self.dec]
        d_drive = None
        for s in reversed(range(len(cache.dec))):
            dw, db, up = conv2d_same_backward(d_output[s][None], self.out_w, cache.out_cols[s])
            grads["out.w"] += dw
            grads["out.b"] += db
            for li in reversed(range(len(self.dec))):
                g, dx, prev = cell_backward(carry[li].h + up, carry[li].c,
                                            cache.dec[s][li], self.dec[li])
                acc(f"dec{li}", g)
                carry[li] = prev
                up = dx
            d_drive = up if d_drive is None else d_drive + up

        if self.is_vae:
            d_mu_total = d_drive.copy()
            d_lv_total = np.zeros_like(d_drive)
            if cache.eps is not None:
                d_lv_total += d_drive * cache.eps * 0.5 * np.exp(0.5 * cache.logvar)
            if d_mu is not None:
                d_mu_total += d_mu
            if d_logvar is not None:
                d_lv_total += d_logvar
            top_cols = cache.top.reshape(cache.top.shape[0], -1)
            dw, db, d_top = conv2d_same_backward(d_mu_total, self.mu_w, top_cols)
            grads["mu.w"] += dw
            grads["mu.b"] += db
            dw, db, d_top2 = conv2d_same_backward(d_lv_total, self.lv_w, top_cols)
            grads["logvar.w"] += dw
            grads["logvar.b"] += db
            d_top = d_top + d_top2
        else:
            d_top = d_drive

        carry = [CellState(np.zeros_like(c.wci), np.zeros_like(c.wci)) for c in self.enc]
        last = len(cache.enc) - 1
        for t in reversed(range(len(cache.enc))):
            up = d_top if t == last else None
            for li in reversed(range(len(self.enc))):
                dh = carry[li].h if up is None else carry[li].h + up
                g, dx, prev = cell_backward(dh, carry[li].c, cache.enc[t][li], self.enc[li])
                acc(f"enc{li}", g)
                carry[li] = prev
                up = dx
        return grads

    # -- persistence ----------------------------------------------------------

    def sidecar(self) -> dict:
        return {
            "kind": self.kind.value,
            "window": {"context": self.config.context, "target": target_role(self.kind)},
            "architecture": {"height": self.height, "width": self.width,
                             "hidden": list(self.config.hidden), "kernel": self.config.kernel,
                             "latent_channels": self.config.latent_channels},
            "config": self.config.to_dict(),
            "training_seed": self.config.seed,
        }

    def save(self, path) -> None:
        path = Path(path)
        checkpoint.save(path, self.params())
        path.with_suffix(".json").write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "DetectorModel":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        arch = meta["architecture"]
        model = cls(DetectorConfig.from_dict(meta["config"]), arch["height"], arch["width"])
        model.load_params(checkpoint.load(path))
        return model


def target_role(kind: DetectorKind) -> str:
    return {DetectorKind.PREDICTOR: "next-frame",
            DetectorKind.INTERPOLATOR: "missing-frame"}.get(kind, "whole-window")


def forward_model(model: DetectorModel, inputs: np.ndarray,
                  rng: np.random.Generator | None = None) -> ForwardResult:
    return model.forward(inputs, rng)


def mse(output: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error over every pixel."""
    if output.shape != target.shape:
        raise InvalidArgument(f"output {output.shape} and target {target.shape} differ")
    d = output - target
    return float(np.mean(d * d))


def kl_to_unit_normal(mu: np.ndarray, logvar: np.ndarray) -> float:
    """Closed-form KL(N(mu, exp(logvar)) || N(0, 1)), averaged per latent element."""
    return float(np.mean(0.5 * (mu * mu + np.exp(logvar) - logvar - 1.0)))


def loss(model: DetectorModel, output: np.ndarray, target: np.ndarray,
         mu: np.ndarray | None = None, logvar: np.ndarray | None = None) -> float:
    value = mse(output, target)
    if model.is_vae:
        if mu is None or logvar is None:
            raise InvalidArgument("VAE loss needs latent mean and log-variance")
        value += model.config.kl_weight * kl_to_unit_normal(mu, logvar)
    if not np.isfinite(value):
        raise NumericFailure(f"loss is not finite: {value}")
    return value


def loss_and_grads(model: DetectorModel, inputs: np.ndarray, targets: np.ndarray,
                   rng: np.random.Generator | None = None):
    res = model.forward(inputs, rng)
    value = loss(model, res.output, targets, res.mu, res.logvar)
    d_out = 2.0 * (res.output - targets) / res.output.size
    d_mu = d_lv = None
    if model.is_vae:
        beta = model.config.kl_weight / res.mu.size
        d_mu = beta * res.mu
        d_lv = beta * 0.5 * (np.exp(res.logvar) - 1.0)
    return value, model.backward(res, d_out, d_mu, d_lv)
