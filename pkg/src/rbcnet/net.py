"""Policy-value network: shared convolutional trunk, sense/move/value heads.

The trunk is a 1x1 input convolution into pre-activation residual 3x3
blocks. Three heads read the trunk: an 8x8 sense policy (64 logits), a
73x64+pass move policy (4673 logits), and a tanh-squashed scalar value.
Head output layers start at zero so the initial policies are uniform and
the initial value is 0.

Training runs in float32; a float64 mode exists for finite-difference
verification. Everything is CPU and deterministic for a fixed seed.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np
import torch
from torch import nn

from .observe import MOVE_INDEX_COUNT, SENSE_INDEX_COUNT, STACK_CHANNELS

CHECKPOINT_MAGIC = b"RBCN"
CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    trunk_channels: int = 64
    trunk_blocks: int = 6
    sense_head_channels: int = 2
    move_head_channels: int = 8
    value_hidden: int = 32
    seed: int = 0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if name != "seed" and value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")

    @staticmethod
    def desk_scale(seed: int = 0) -> "NetworkConfig":
        return NetworkConfig(trunk_channels=32, trunk_blocks=3, seed=seed)

    @staticmethod
    def tiny(seed: int = 0) -> "NetworkConfig":
        return NetworkConfig(trunk_channels=4, trunk_blocks=1, value_hidden=8, seed=seed)


class NetOutput(NamedTuple):
    sense_logits: torch.Tensor  # (B, 64)
    move_logits: torch.Tensor   # (B, 4673)
    value: torch.Tensor         # (B,)


class ResidualBlock(nn.Module):
    """Pre-activation residual block: x + conv(relu(conv(relu(x)))).

    With the second convolution zeroed the block is an exact identity,
    which the init tests rely on.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.relu1 = nn.ReLU()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.relu2 = nn.ReLU()
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        y = self.conv1(self.relu1(x))
        y = self.conv2(self.relu2(y))
        return x + y


class PolicyValueNet(nn.Module):
    def __init__(self, config: NetworkConfig, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.config = config
        c = config.trunk_channels
        self.input_conv = nn.Conv2d(STACK_CHANNELS, c, 1)
        self.blocks = nn.ModuleList(ResidualBlock(c) for _ in range(config.trunk_blocks))
        self.trunk_relu = nn.ReLU()
        self.sense_conv = nn.Conv2d(c, config.sense_head_channels, 1)
        self.sense_fc = nn.Linear(config.sense_head_channels * 64, SENSE_INDEX_COUNT)
        self.move_conv = nn.Conv2d(c, config.move_head_channels, 1)
        self.move_fc = nn.Linear(config.move_head_channels * 64, MOVE_INDEX_COUNT)
        self.value_conv = nn.Conv2d(c, 1, 1)
        self.value_fc1 = nn.Linear(64, config.value_hidden)
        self.value_relu = nn.ReLU()
        self.value_fc2 = nn.Linear(config.value_hidden, 1)
        self._init_weights(config.seed)
        self.to(dtype)

    def _init_weights(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        for module in self.modules():
            if isinstance(module, (nn.Conv2d, nn.Linear)):
                fan_in = module.weight.numel() // module.weight.shape[0]
                with torch.no_grad():
                    module.weight.normal_(0.0, (2.0 / fan_in) ** 0.5, generator=gen)
                    module.bias.zero_()
        # Uniform initial policies and zero initial value.
        for final in (self.sense_fc, self.move_fc, self.value_fc2):
            with torch.no_grad():
                final.weight.zero_()
                final.bias.zero_()

    def forward(self, x: torch.Tensor) -> NetOutput:
        if x.dim() != 4 or x.shape[1] != STACK_CHANNELS or x.shape[2:] != (8, 8):
            raise ValueError(f"expected (B, {STACK_CHANNELS}, 8, 8) input, got {tuple(x.shape)}")
        h = self.input_conv(x)
        for block in self.blocks:
            h = block(h)
        h = self.trunk_relu(h)
        sense = self.sense_fc(self.sense_conv(h).flatten(1))
        move = self.move_fc(self.move_conv(h).flatten(1))
        v = self.value_relu(self.value_fc1(self.value_conv(h).flatten(1)))
        value = torch.tanh(self.value_fc2(v)).squeeze(1)
        return NetOutput(sense, move, value)

    @torch.no_grad()
    def evaluate_np(self, stacks: np.ndarray) -> tuple:
        """Inference helper: (B, 1800, 8, 8) float32 -> numpy logits/values."""
        was_training = self.training
        self.eval()
        out = self.forward(torch.from_numpy(stacks).to(next(self.parameters()).dtype))
        if was_training:
            self.train()
        return (out.sense_logits.numpy(), out.move_logits.numpy(), out.value.numpy())


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def cross_entropy(logits: torch.Tensor, target) -> torch.Tensor:
    """-log softmax(logits)[target]; works on (K,) or batched (B, K)."""
    if logits.dim() == 1:
        return torch.logsumexp(logits, 0) - logits[target]
    target = torch.as_tensor(target, dtype=torch.long)
    picked = logits.gather(1, target.unsqueeze(1)).squeeze(1)
    return torch.logsumexp(logits, 1) - picked


def cross_entropy_grad(logits: torch.Tensor, target: int) -> torch.Tensor:
    """Closed-form gradient: softmax(logits) - one_hot(target)."""
    grad = torch.softmax(logits, -1).clone()
    grad[..., target] -= 1.0
    return grad


def value_loss(pred: torch.Tensor, target) -> torch.Tensor:
    target = torch.as_tensor(target, dtype=pred.dtype)
    return (pred - target) ** 2


def value_loss_grad(pred, target) -> float:
    return 2.0 * (float(pred) - float(target))


# ---------------------------------------------------------------------------
# Action selection
# ---------------------------------------------------------------------------

def softmax_np(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sample_action(logits: np.ndarray, temperature: float, rng: np.random.Generator) -> int:
    probs = softmax_np(logits, temperature)
    return int(rng.choice(len(probs), p=probs))


def argmax_action(logits: np.ndarray) -> int:
    # np.argmax returns the first maximum: ties break to the lowest index.
    return int(np.argmax(logits))


# ---------------------------------------------------------------------------
# Optimizer: standard adaptive-moment update with bias correction
# ---------------------------------------------------------------------------

class AdamState:
    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.step_count = 0
        self.m = [torch.zeros_like(p) for p in params]
        self.v = [torch.zeros_like(p) for p in params]


@torch.no_grad()
def adam_step(params, grads, state: AdamState) -> None:
    """One update over parallel lists of parameters and gradients, in place."""
    state.step_count += 1
    b1, b2 = state.betas
    bc1 = 1.0 - b1 ** state.step_count
    bc2 = 1.0 - b2 ** state.step_count
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {tuple(g.shape)} != param shape {tuple(p.shape)}")
        m.mul_(b1).add_(g, alpha=1.0 - b1)
        v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
        p.addcdiv_(m / bc1, (v / bc2).sqrt().add_(state.eps), value=-state.lr)


def adam_step_module(net: nn.Module, state: AdamState) -> None:
    params = [p for p in net.parameters()]
    grads = [p.grad if p.grad is not None else torch.zeros_like(p) for p in params]
    adam_step(params, grads, state)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_DTYPE_TAGS = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("int64"): 2}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}


@dataclass
class Checkpoint:
    config: NetworkConfig
    params: dict  # name -> np.ndarray
    opt_state: Optional[dict] = None  # name -> np.ndarray, plus "step"
    meta: Optional[dict] = None


def net_to_checkpoint(net: PolicyValueNet, adam: Optional[AdamState] = None,
                      meta: Optional[dict] = None) -> Checkpoint:
    params = {name: tensor.detach().numpy().copy() for name, tensor in net.state_dict().items()}
    opt_state = None
    if adam is not None:
        opt_state = {"step": np.array([adam.step_count], dtype=np.int64),
                     "lr": np.array([adam.lr], dtype=np.float64)}
        for i, (m, v) in enumerate(zip(adam.m, adam.v)):
            opt_state[f"m.{i}"] = m.numpy().copy()
            opt_state[f"v.{i}"] = v.numpy().copy()
    return Checkpoint(config=net.config, params=params, opt_state=opt_state, meta=meta or {})


def net_from_checkpoint(ckpt: Checkpoint, dtype: torch.dtype = torch.float32) -> PolicyValueNet:
    net = PolicyValueNet(ckpt.config, dtype=dtype)
    state = {name: torch.from_numpy(array.copy()).to(dtype) for name, array in ckpt.params.items()}
    net.load_state_dict(state)
    return net


def _write_array(buf, name: str, array: np.ndarray) -> None:
    encoded = name.encode()
    buf.write(struct.pack("<H", len(encoded)))
    buf.write(encoded)
    buf.write(struct.pack("<BB", array.ndim, _DTYPE_TAGS[array.dtype]))
    for dim in array.shape:
        buf.write(struct.pack("<I", dim))
    raw = np.ascontiguousarray(array).astype(array.dtype.newbyteorder("<")).tobytes()
    buf.write(struct.pack("<Q", len(raw)))
    buf.write(raw)


def _read_exact(buf, n: int) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise CheckpointCorruptError("unexpected end of file")
    return data


def _read_array(buf):
    (name_len,) = struct.unpack("<H", _read_exact(buf, 2))
    name = _read_exact(buf, name_len).decode()
    ndim, tag = struct.unpack("<BB", _read_exact(buf, 2))
    if tag not in _TAG_DTYPES:
        raise CheckpointCorruptError(f"unknown dtype tag {tag}")
    shape = tuple(struct.unpack("<I", _read_exact(buf, 4))[0] for _ in range(ndim))
    (nbytes,) = struct.unpack("<Q", _read_exact(buf, 8))
    dtype = _TAG_DTYPES[tag].newbyteorder("<")
    array = np.frombuffer(_read_exact(buf, nbytes), dtype=dtype).reshape(shape)
    return name, array.astype(_TAG_DTYPES[tag])


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    header = {
        "config": asdict(ckpt.config),
        "meta": ckpt.meta or {},
        "has_opt_state": ckpt.opt_state is not None,
        "param_count": len(ckpt.params),
        "opt_count": 0 if ckpt.opt_state is None else len(ckpt.opt_state),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    for name in sorted(ckpt.params):
        _write_array(buf, name, ckpt.params[name])
    if ckpt.opt_state is not None:
        for name in sorted(ckpt.opt_state):
            _write_array(buf, name, ckpt.opt_state[name])
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointCorruptError(f"bad magic bytes {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != CHECKPOINT_VERSION:
            raise CheckpointVersionError(
                f"checkpoint version {version}, this build reads {CHECKPOINT_VERSION}")
        (blob_len,) = struct.unpack("<I", _read_exact(fh, 4))
        try:
            header = json.loads(_read_exact(fh, blob_len).decode())
            config = NetworkConfig(**header["config"])
        except (ValueError, TypeError, KeyError) as exc:
            raise CheckpointCorruptError(f"bad header: {exc}") from exc
        params = dict(_read_array(fh) for _ in range(header["param_count"]))
        opt_state = None
        if header["has_opt_state"]:
            opt_state = dict(_read_array(fh) for _ in range(header["opt_count"]))
    return Checkpoint(config=config, params=params, opt_state=opt_state, meta=header["meta"])


# ---------------------------------------------------------------------------
# Finite-difference gradient verification
# ---------------------------------------------------------------------------

def _scalar_loss(net: PolicyValueNet, x: torch.Tensor, sense_t, move_t, value_t) -> torch.Tensor:
    out = net(x)
    return (cross_entropy(out.sense_logits, sense_t).sum()
            + cross_entropy(out.move_logits, move_t).sum()
            + value_loss(out.value, value_t).sum())


def gradient_check(config: Optional[NetworkConfig] = None, batch: int = 2,
                   step: float = 1e-4, seed: int = 0,
                   samples_per_param: int = 120) -> dict:
    """Compare analytic gradients to central finite differences in float64.

    Checks every parameter tensor at up to ``samples_per_param`` randomly
    chosen coordinates (small tensors are checked exhaustively). Returns
    {"max_rel_error": float, "worst_param": str, "per_param": {...},
    "checked": int}. The finite-difference side touches the network only
    through forward evaluations, keeping it independent of the gradient
    implementation.
    """
    config = config or NetworkConfig.tiny(seed=seed)
    net = PolicyValueNet(config, dtype=torch.float64)
    rng = np.random.default_rng(seed)
    # Head outputs start at zero; nudge them so their gradients are nontrivial.
    with torch.no_grad():
        for final in (net.sense_fc, net.move_fc, net.value_fc2):
            final.weight.add_(torch.from_numpy(
                rng.normal(0, 0.05, final.weight.shape)).to(torch.float64))
            final.bias.add_(torch.from_numpy(
                rng.normal(0, 0.05, final.bias.shape)).to(torch.float64))

    # Central differences are only valid away from rectifier kinks: a
    # preactivation within ~step of zero would bias every coordinate that
    # feeds it. Redraw the input until the evaluation point is clean.
    kink_gap = [float("inf")]
    hooks = [m.register_forward_pre_hook(
        lambda mod, args: kink_gap.__setitem__(0, min(kink_gap[0], args[0].abs().min().item())))
        for m in net.modules() if isinstance(m, nn.ReLU)]
    for _ in range(200):
        x = torch.from_numpy(rng.random((batch, STACK_CHANNELS, 8, 8))).to(torch.float64)
        kink_gap[0] = float("inf")
        with torch.no_grad():
            net(x)
        if kink_gap[0] > 20 * step:
            break
    for hook in hooks:
        hook.remove()
    sense_t = torch.from_numpy(rng.integers(SENSE_INDEX_COUNT, size=batch))
    move_t = torch.from_numpy(rng.integers(MOVE_INDEX_COUNT, size=batch))
    value_t = torch.from_numpy(rng.choice([-1.0, 0.0, 1.0], size=batch))

    net.zero_grad()
    loss = _scalar_loss(net, x, sense_t, move_t, value_t)
    loss.backward()

    report = {}
    worst = ("", 0.0)
    checked = 0
    for name, param in net.named_parameters():
        analytic = param.grad.detach().reshape(-1)
        flat = param.data.reshape(-1)
        n = flat.numel()
        if n <= samples_per_param:
            indices = range(n)
        else:
            indices = rng.choice(n, size=samples_per_param, replace=False)
        rel = 0.0
        for i in indices:
            orig = flat[i].item()
            flat[i] = orig + step
            with torch.no_grad():
                up = _scalar_loss(net, x, sense_t, move_t, value_t).item()
            flat[i] = orig - step
            with torch.no_grad():
                down = _scalar_loss(net, x, sense_t, move_t, value_t).item()
            flat[i] = orig
            numeric = (up - down) / (2 * step)
            a = analytic[i].item()
            denom = max(abs(a), abs(numeric), 1e-6)
            rel = max(rel, abs(a - numeric) / denom)
            checked += 1
        report[name] = rel
        if rel > worst[1]:
            worst = (name, rel)
    return {"max_rel_error": worst[1], "worst_param": worst[0],
            "per_param": report, "checked": checked}
