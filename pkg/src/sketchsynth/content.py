"""Feed-forward content network and its training loop.

A small fully convolutional network predicts the sketch's tonal layout
from a 4-channel input: the gray photo, x and y coordinate ramps, and a
difference-of-Gaussians band-pass of the photo.  Two inception blocks
(parallel 1x1/3x3/5x5 conv groups, channel-concatenated) feed three 1x1
integration convs and two 3x3 reconstruction convs.  Every conv except the
final one is followed by batch norm and ReLU; the output is linear and
clamped to [0, 1].  Spatial size is preserved end to end: non-1x1 convs
use mirror padding.

Training minimizes the batch-mean L1 distance to ground-truth sketches
with the Adadelta rule, holding out a tenth of the pairs for validation
and keeping the parameters that scored best there.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from sketchsynth.ops import (
    ConvLayerParams,
    RunningStats,
    batchnorm_backward,
    batchnorm_forward,
    conv2d_backward,
    conv2d_forward,
    relu,
    relu_backward,
)
from sketchsynth.tensorfile import read_tensorfile, write_tensorfile


@dataclass(frozen=True)
class ContentNetConfig:
    """Architecture knobs; widths are free, the wiring is fixed."""

    in_channels: int = 4
    branch_channels: int = 32
    integrate_channels: Tuple[int, ...] = (64, 64, 32)
    recon_channels: int = 32
    dog_sigma1: float = 1.0
    dog_sigma2: float = 2.0


@dataclass(frozen=True)
class _ConvSpec:
    name: str
    k: int
    cin: int
    cout: int
    bn: bool
    relu: bool

    @property
    def pad(self) -> str:
        return "none" if self.k == 1 else "mirror"


def _layer_plan(cfg: ContentNetConfig):
    """The fixed wiring: inception x2, 1x1 integration, 3x3 reconstruction."""
    plan = []
    c = cfg.in_channels
    for i in (1, 2):
        branches = [
            _ConvSpec(f"inc{i}.b{k}", k, c, cfg.branch_channels, bn=True, relu=True)
            for k in (1, 3, 5)
        ]
        plan.append(("inception", branches))
        c = 3 * cfg.branch_channels
    for j, width in enumerate(cfg.integrate_channels, start=1):
        plan.append(("conv", _ConvSpec(f"int{j}", 1, c, width, bn=True, relu=True)))
        c = width
    plan.append(("conv", _ConvSpec("rec1", 3, c, cfg.recon_channels, bn=True, relu=True)))
    plan.append(("conv", _ConvSpec("out", 3, cfg.recon_channels, 1, bn=False, relu=False)))
    return plan


def build_input(photo: np.ndarray, sigma1: float = 1.0, sigma2: float = 2.0) -> np.ndarray:
    """Stack the 4 input channels: photo, x ramp, y ramp, DoG band-pass.

    The coordinate ramps run linearly from 0 to 1 across each axis; the
    band-pass is Gauss(sigma1) - Gauss(sigma2) of the photo (kernels
    truncated at 4 sigma), which stays within [-1, 1] for a [0, 1] photo.
    """
    photo = np.asarray(photo, dtype=np.float64)
    if photo.ndim != 2 or min(photo.shape) < 2:
        raise ValueError(f"photo must be 2-D with sides >= 2, got shape {photo.shape}")
    if photo.min() < 0.0 or photo.max() > 1.0:
        raise ValueError("photo values must lie in [0, 1]")
    if not 0 < sigma1 < sigma2:
        raise ValueError("blur widths must satisfy 0 < sigma1 < sigma2")
    h, w = photo.shape
    xmap = np.broadcast_to(np.linspace(0.0, 1.0, w)[None, :], (h, w))
    ymap = np.broadcast_to(np.linspace(0.0, 1.0, h)[:, None], (h, w))
    g1 = gaussian_filter(photo, sigma1, mode="mirror", truncate=4.0)
    g2 = gaussian_filter(photo, sigma2, mode="mirror", truncate=4.0)
    return np.stack([photo, xmap, ymap, g1 - g2])[None]


class ContentNet:
    """Parameter container plus forward/backward over the fixed wiring."""

    def __init__(self, config: ContentNetConfig, params: Dict[str, np.ndarray], running: Dict[str, RunningStats]):
        self.config = config
        self.plan = _layer_plan(config)
        self.params = params
        self.running = running
        self._validate()

    def _validate(self):
        for spec in self._all_specs():
            w = self.params.get(f"{spec.name}.weight")
            if w is None:
                raise ValueError(f"missing parameters for layer {spec.name}")
            if w.shape != (spec.cout, spec.cin, spec.k, spec.k):
                raise ValueError(f"layer {spec.name} has inconsistent parameter shapes")
            if not spec.bn:
                b = self.params.get(f"{spec.name}.bias")
                if b is None or b.shape != (spec.cout,):
                    raise ValueError(f"layer {spec.name} has a missing or misshaped bias")
            if spec.bn:
                g = self.params.get(f"{spec.name}.gamma")
                bt = self.params.get(f"{spec.name}.beta")
                stats = self.running.get(spec.name)
                if g is None or bt is None or stats is None:
                    raise ValueError(f"missing batch-norm state for layer {spec.name}")
                if g.shape != (spec.cout,) or bt.shape != (spec.cout,) or stats.mean.shape != (spec.cout,):
                    raise ValueError(f"layer {spec.name} has inconsistent batch-norm shapes")

    def _all_specs(self) -> List[_ConvSpec]:
        specs = []
        for kind, item in self.plan:
            specs.extend(item if kind == "inception" else [item])
        return specs

    @classmethod
    def initialize(cls, config: ContentNetConfig, seed: int = 0) -> "ContentNet":
        """Fan-in-scaled random weights; the output bias starts at mid-range
        so the clamp does not silence gradients on the first steps.

        Convs followed by batch norm carry no bias: the mean subtraction
        would cancel it exactly, so the learned shift lives in beta.
        """
        rng = np.random.default_rng(seed)
        params: Dict[str, np.ndarray] = {}
        running: Dict[str, RunningStats] = {}
        plan = _layer_plan(config)
        for kind, item in plan:
            for spec in item if kind == "inception" else [item]:
                std = np.sqrt(2.0 / (spec.cin * spec.k * spec.k))
                params[f"{spec.name}.weight"] = rng.normal(0.0, std, (spec.cout, spec.cin, spec.k, spec.k))
                if spec.bn:
                    params[f"{spec.name}.gamma"] = np.ones(spec.cout)
                    params[f"{spec.name}.beta"] = np.zeros(spec.cout)
                    running[spec.name] = RunningStats.initial(spec.cout)
                else:
                    params[f"{spec.name}.bias"] = np.zeros(spec.cout)
        params["out.bias"] = np.full(1, 0.5)
        return cls(config, params, running)

    def _cbr_forward(self, spec: _ConvSpec, x, train: bool, new_running):
        weight = self.params[f"{spec.name}.weight"]
        bias = self.params[f"{spec.name}.bias"] if not spec.bn else np.zeros(spec.cout)
        lp = ConvLayerParams(weight, bias, 1, spec.pad)
        out, conv_cache = conv2d_forward(x, lp, want_cache=True)
        cache = {"spec": spec, "conv": conv_cache}
        if spec.bn:
            out, bn_cache, updated = batchnorm_forward(
                out,
                self.params[f"{spec.name}.gamma"],
                self.params[f"{spec.name}.beta"],
                self.running[spec.name],
                train=train,
            )
            cache["bn"] = bn_cache
            if train:
                new_running[spec.name] = updated
        if spec.relu:
            cache["pre_relu"] = out
            out = relu(out)
        return out, cache

    def _forward(self, x: np.ndarray, train: bool):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ValueError(
                f"input must be (N, {self.config.in_channels}, H, W), got {x.shape}"
            )
        new_running: Dict[str, RunningStats] = {}
        caches = []
        cur = x
        for kind, item in self.plan:
            if kind == "conv":
                cur, cache = self._cbr_forward(item, cur, train, new_running)
                caches.append(("conv", cache))
            else:
                outs, branch_caches = [], []
                for spec in item:
                    out, cache = self._cbr_forward(spec, cur, train, new_running)
                    outs.append(out)
                    branch_caches.append(cache)
                cur = np.concatenate(outs, axis=1)
                caches.append(("inception", branch_caches, [o.shape[1] for o in outs]))
        caches.append(("clamp", cur))
        return np.clip(cur, 0.0, 1.0), caches, new_running

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Inference-mode forward pass using the running statistics."""
        y, _, _ = self._forward(x, train=False)
        return y

    def forward_train(self, x: np.ndarray):
        """Training-mode forward; returns (output, caches, updated running stats)."""
        return self._forward(x, train=True)

    @staticmethod
    def _cbr_backward(cache, dy, grads):
        spec: _ConvSpec = cache["spec"]
        if spec.relu:
            dy = relu_backward(cache["pre_relu"], dy)
        if spec.bn:
            dy, dgamma, dbeta = batchnorm_backward(cache["bn"], dy)
            grads[f"{spec.name}.gamma"] = dgamma
            grads[f"{spec.name}.beta"] = dbeta
        dx, dw, db = conv2d_backward(cache["conv"], dy)
        grads[f"{spec.name}.weight"] = dw
        if not spec.bn:
            grads[f"{spec.name}.bias"] = db
        return dx

    def backward(self, caches, grad_out: np.ndarray):
        """Gradients of every parameter (and the input) for a cached forward."""
        grads: Dict[str, np.ndarray] = {}
        dy = np.asarray(grad_out, dtype=np.float64)
        for entry in reversed(caches):
            if entry[0] == "clamp":
                pre = entry[1]
                dy = dy * ((pre > 0.0) & (pre < 1.0))
            elif entry[0] == "conv":
                dy = self._cbr_backward(entry[1], dy, grads)
            else:
                _, branch_caches, widths = entry
                edges = np.cumsum([0] + widths)
                dx = None
                for cache, lo, hi in zip(branch_caches, edges[:-1], edges[1:]):
                    part = self._cbr_backward(cache, dy[:, lo:hi], grads)
                    dx = part if dx is None else dx + part
                dy = dx
        return grads, dy

    def predict(self, photo: np.ndarray) -> np.ndarray:
        """Content image for one gray photo, same shape, values in [0, 1]."""
        x = build_input(photo, self.config.dog_sigma1, self.config.dog_sigma2)
        return self.forward(x)[0, 0]

    def save(self, path) -> None:
        """Checkpoint to the binary tensor format, architecture included."""
        cfg = self.config
        arch = [
            float(cfg.in_channels),
            float(cfg.branch_channels),
            float(len(cfg.integrate_channels)),
            *[float(c) for c in cfg.integrate_channels],
            float(cfg.recon_channels),
            cfg.dog_sigma1,
            cfg.dog_sigma2,
        ]
        records = {"arch": np.asarray(arch)}
        records.update(self.params)
        for name, stats in self.running.items():
            records[f"{name}.running_mean"] = stats.mean
            records[f"{name}.running_var"] = stats.var
        write_tensorfile(path, records)

    @classmethod
    def load(cls, path) -> "ContentNet":
        data = read_tensorfile(path)
        if "arch" not in data.records:
            raise ValueError("checkpoint is missing the architecture record")
        arch = data.records["arch"]
        n_int = int(arch[2])
        if arch.shape != (5 + n_int + 1,):
            raise ValueError("architecture record has the wrong length")
        config = ContentNetConfig(
            in_channels=int(arch[0]),
            branch_channels=int(arch[1]),
            integrate_channels=tuple(int(v) for v in arch[3 : 3 + n_int]),
            recon_channels=int(arch[3 + n_int]),
            dog_sigma1=float(arch[4 + n_int]),
            dog_sigma2=float(arch[5 + n_int]),
        )
        params: Dict[str, np.ndarray] = {}
        running: Dict[str, RunningStats] = {}
        mean_keys = {k for k in data.records if k.endswith(".running_mean")}
        for key, value in data.records.items():
            if key == "arch" or key.endswith(".running_mean") or key.endswith(".running_var"):
                continue
            params[key] = value
        for key in mean_keys:
            name = key[: -len(".running_mean")]
            var_key = f"{name}.running_var"
            if var_key not in data.records:
                raise ValueError(f"checkpoint is missing {var_key}")
            running[name] = RunningStats(data.records[key], data.records[var_key])
        return cls(config, params, running)


def l1_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """Batch-mean L1: (1/N) sum of absolute differences, N the batch size.

    The subgradient sign(pred - target)/N is 0 at exact equality.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    n = pred.shape[0]
    diff = pred - target
    return float(np.sum(np.abs(diff)) / n), np.sign(diff) / n


@dataclass
class AdadeltaState:
    """Decayed accumulators of squared gradients and squared updates."""

    sq_grad: Dict[str, np.ndarray]
    sq_delta: Dict[str, np.ndarray]

    @classmethod
    def for_params(cls, params: Dict[str, np.ndarray]) -> "AdadeltaState":
        return cls(
            {k: np.zeros_like(v) for k, v in params.items()},
            {k: np.zeros_like(v) for k, v in params.items()},
        )


def adadelta_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdadeltaState,
    rho: float = 0.95,
    eps: float = 1e-6,
):
    """One in-place Adadelta update; returns (params, state) for chaining.

    delta = sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g, with both
    accumulators decayed by rho.  Keys without a gradient entry still decay.
    """
    for key, g in grads.items():
        if key not in params:
            raise ValueError(f"gradient for unknown parameter {key!r}")
        if g.shape != params[key].shape:
            raise ValueError(f"gradient shape mismatch for {key!r}")
    for key in params:
        g = grads.get(key)
        eg = state.sq_grad[key]
        ed = state.sq_delta[key]
        if g is None:
            eg *= rho
            ed *= rho
            continue
        eg *= rho
        eg += (1.0 - rho) * g * g
        delta = np.sqrt(ed + eps) / np.sqrt(eg + eps) * g
        ed *= rho
        ed += (1.0 - rho) * delta * delta
        params[key] -= delta
    return params, state


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float


def _mean_l1(net: ContentNet, inputs, targets, indices) -> float:
    total = 0.0
    for i in indices:
        y = net.forward(inputs[i])
        total += float(np.sum(np.abs(y - targets[i])))
    return total / len(indices)


def train(
    photos: Sequence[np.ndarray],
    sketches: Sequence[np.ndarray],
    config: ContentNetConfig = ContentNetConfig(),
    epochs: int = 100,
    batch_size: int = 2,
    seed: int = 0,
    val_fraction: float = 0.1,
) -> Tuple[ContentNet, List[EpochStats]]:
    """Train a content network; deterministic for a fixed seed.

    A tenth of the pairs (at least one, when there are two or more) is held
    out for validation; the returned network carries the parameters of the
    best validation epoch.  With a single pair the validation set aliases
    the training pair.  Losses reported per epoch are sums of absolute
    error per image, averaged over the respective split.
    """
    if len(photos) == 0:
        raise ValueError("training needs at least one photo/sketch pair")
    if len(photos) != len(sketches):
        raise ValueError("photo and sketch counts differ")
    for p, s in zip(photos, sketches):
        if np.shape(p) != np.shape(s):
            raise ValueError("each photo and its sketch must share a shape")
    rng = np.random.default_rng(seed)
    net = ContentNet.initialize(config, seed=seed)
    inputs = [build_input(p, config.dog_sigma1, config.dog_sigma2) for p in photos]
    targets = [np.asarray(s, dtype=np.float64)[None, None] for s in sketches]

    n = len(photos)
    perm = rng.permutation(n)
    n_val = max(1, int(round(val_fraction * n))) if (n >= 2 and val_fraction > 0) else 0
    val_idx = list(perm[:n_val]) if n_val else list(range(n))
    train_idx = list(perm[n_val:]) if n_val else list(range(n))

    state = AdadeltaState.for_params(net.params)
    best_val = np.inf
    best = (copy.deepcopy(net.params), copy.deepcopy(net.running))
    history: List[EpochStats] = []
    for epoch in range(epochs):
        order = [train_idx[i] for i in rng.permutation(len(train_idx))]
        running_sum = 0.0
        for start in range(0, len(order), batch_size):
            batch = order[start : start + batch_size]
            x = np.concatenate([inputs[i] for i in batch])
            t = np.concatenate([targets[i] for i in batch])
            y, caches, new_running = net.forward_train(x)
            loss, dy = l1_loss(y, t)
            grads, _ = net.backward(caches, dy)
            adadelta_step(net.params, grads, state)
            net.running.update(new_running)
            running_sum += loss * len(batch)
        train_loss = running_sum / len(order)
        val_loss = _mean_l1(net, inputs, targets, val_idx)
        history.append(EpochStats(epoch, train_loss, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best = (copy.deepcopy(net.params), copy.deepcopy(net.running))
    net.params, net.running = best
    return net, history
