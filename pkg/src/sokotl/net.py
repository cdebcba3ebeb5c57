"""The agent network and its training math, written directly on numpy arrays.

Architecture: three valid-padded conv layers (8x8/4, 4x4/2, 3x3/1 with 32,
64, 64 channels), a 512-unit FC layer, then task heads -- policy logits and
state value for the actor-critic, or a 100-way cell classifier for the
locator pretext task. On 84x84x3 input the feature maps are 20x20x32 ->
9x9x64 -> 7x7x64 -> 3136 -> 512 and the actor-critic parameter count is
exactly 1,684,645.

Forward, reverse-mode gradients and the RMSProp-style update are implemented
here (convolutions as im2col + GEMM); parameters are plain named arrays so
freezing, transplanting and checkpoint round-trips stay byte-exact. All
routines are dtype-generic: float32 for training, float64 for the
finite-difference shadow mode.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

# (name, in_channels, out_channels, kernel, stride)
CONV_LAYERS = (
    ("conv1", 3, 32, 8, 4),
    ("conv2", 32, 64, 4, 2),
    ("conv3", 64, 64, 3, 1),
)
FC_IN = 7 * 7 * 64
FC_UNITS = 512
HEAD_LAYERS = {
    "actor_critic": (("policy", 4), ("value", 1)),
    "locator": (("locator", 100),),
}
INPUT_HW = 84
INPUT_CHANNELS = 3
PARAM_COUNT = 1_684_645  # actor-critic head set; audited by tests

CHECKPOINT_MAGIC = b"SOKOTL1"
CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    pass


class NonFiniteLossError(FloatingPointError):
    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats or {}


def layer_names(head: str = "actor_critic") -> tuple:
    return tuple(name for name, *_ in CONV_LAYERS) + ("fc",) + tuple(
        name for name, _ in HEAD_LAYERS[head]
    )


def layer_shapes(head: str = "actor_critic") -> dict:
    """Ordered mapping name -> {"w": shape, "b": shape}. Conv weights are
    (out_c, k, k, in_c); dense weights are (in, out)."""
    shapes = {}
    for name, cin, cout, k, _ in CONV_LAYERS:
        shapes[name] = {"w": (cout, k, k, cin), "b": (cout,)}
    shapes["fc"] = {"w": (FC_IN, FC_UNITS), "b": (FC_UNITS,)}
    for name, units in HEAD_LAYERS[head]:
        shapes[name] = {"w": (FC_UNITS, units), "b": (units,)}
    return shapes


class NetworkParams:
    """Named weight/bias arrays plus the per-layer freeze mask."""

    def __init__(self, arrays, freeze_mask=None, seed=None,
                 head="actor_critic", source_task=None, env_steps=0):
        self.arrays = arrays
        self.freeze_mask = {name: False for name in arrays}
        if freeze_mask:
            self.freeze_mask.update(freeze_mask)
        self.seed = seed
        self.head = head
        self.source_task = source_task
        self.env_steps = env_steps

    def frozen(self, name) -> bool:
        return bool(self.freeze_mask.get(name, False))

    def trainable_names(self) -> tuple:
        return tuple(n for n in self.arrays if not self.frozen(n))

    def param_count(self) -> int:
        return sum(a.size for layer in self.arrays.values() for a in layer.values())

    def layer_bytes(self, name) -> bytes:
        layer = self.arrays[name]
        return layer["w"].tobytes() + layer["b"].tobytes()

    def copy(self) -> "NetworkParams":
        arrays = {n: {k: a.copy() for k, a in layer.items()}
                  for n, layer in self.arrays.items()}
        return NetworkParams(arrays, dict(self.freeze_mask), self.seed,
                             self.head, self.source_task, self.env_steps)

    def astype(self, dtype) -> "NetworkParams":
        arrays = {n: {k: a.astype(dtype) for k, a in layer.items()}
                  for n, layer in self.arrays.items()}
        return NetworkParams(arrays, dict(self.freeze_mask), self.seed,
                             self.head, self.source_task, self.env_steps)


def init(seed: int, head: str = "actor_critic",
         dtype=np.float32) -> NetworkParams:
    """Fan-in-scaled uniform initialization, deterministic in the seed."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shapes in layer_shapes(head).items():
        w_shape = shapes["w"]
        fan_in = int(np.prod(w_shape[1:])) if len(w_shape) == 4 else w_shape[0]
        bound = 1.0 / np.sqrt(fan_in)
        arrays[name] = {
            "w": rng.uniform(-bound, bound, w_shape).astype(dtype),
            "b": rng.uniform(-bound, bound, shapes["b"]).astype(dtype),
        }
    return NetworkParams(arrays, seed=seed, head=head)


# ---------------------------------------------------------------------------
# forward / backward


def _im2col(x, k, stride):
    b, h, w, c = x.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    sb, sh, sw, sc = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x, (b, oh, ow, k, k, c), (sb, stride * sh, stride * sw, sh, sw, sc)
    )
    return windows.reshape(b * oh * ow, k * k * c), oh, ow


def _col2im(dcols, x_shape, k, stride, oh, ow):
    b, h, w, c = x_shape
    dx = np.zeros(x_shape, dtype=dcols.dtype)
    d6 = dcols.reshape(b, oh, ow, k, k, c)
    for i in range(k):
        for j in range(k):
            dx[:, i:i + stride * (oh - 1) + 1:stride,
               j:j + stride * (ow - 1) + 1:stride, :] += d6[:, :, :, i, j, :]
    return dx


def _check_obs(obs):
    if obs.ndim != 4 or obs.shape[1:] != (INPUT_HW, INPUT_HW, INPUT_CHANNELS):
        raise ShapeError(
            f"expected (B, {INPUT_HW}, {INPUT_HW}, {INPUT_CHANNELS}) "
            f"observations, got {obs.shape}"
        )
    if obs.shape[0] == 0:
        raise ShapeError("empty observation batch")


def _trunk_forward(params, x, keep_cache):
    """Conv stack + FC; returns 512-dim features and (optionally) the cache."""
    cache = {"x_shape": x.shape, "conv": []} if keep_cache else None
    h = x
    for name, _, cout, k, stride in CONV_LAYERS:
        w = params.arrays[name]["w"]
        b = params.arrays[name]["b"]
        cols, oh, ow = _im2col(h, k, stride)
        z = cols @ w.reshape(cout, -1).T
        z += b
        a = np.maximum(z, 0.0)
        if keep_cache:
            cache["conv"].append(
                {"cols": cols, "mask": z > 0, "in_shape": h.shape,
                 "oh": oh, "ow": ow, "k": k, "stride": stride}
            )
        h = a.reshape(x.shape[0], oh, ow, cout)
    flat = h.reshape(x.shape[0], FC_IN)
    zfc = flat @ params.arrays["fc"]["w"] + params.arrays["fc"]["b"]
    afc = np.maximum(zfc, 0.0)
    if keep_cache:
        cache["flat"] = flat
        cache["fc_mask"] = zfc > 0
        cache["afc"] = afc
    return afc, cache


def forward(params: NetworkParams, obs):
    """(policy_logits, value) for the actor-critic head, (logits, None) for
    the locator head. Deterministic; rejects shape mismatches."""
    obs = np.asarray(obs)
    _check_obs(obs)
    afc, _ = _trunk_forward(params, obs, keep_cache=False)
    if params.head == "actor_critic":
        logits = afc @ params.arrays["policy"]["w"] + params.arrays["policy"]["b"]
        value = afc @ params.arrays["value"]["w"] + params.arrays["value"]["b"]
        return logits, value
    logits = afc @ params.arrays["locator"]["w"] + params.arrays["locator"]["b"]
    return logits, None


def conv_activations(params: NetworkParams, obs) -> list:
    """Post-ReLU activations of the three conv layers; used for feature-map
    dumps and the agent-detector probe."""
    obs = np.asarray(obs)
    _check_obs(obs)
    out = []
    h = obs
    for name, _, cout, k, stride in CONV_LAYERS:
        w = params.arrays[name]["w"]
        b = params.arrays[name]["b"]
        cols, oh, ow = _im2col(h, k, stride)
        z = cols @ w.reshape(cout, -1).T
        z += b
        h = np.maximum(z, 0.0).reshape(obs.shape[0], oh, ow, cout)
        out.append(h)
    return out


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _trunk_backward(params, cache, d_afc, grads):
    """Backpropagate from the FC activations down through the trunk, skipping
    weight gradients of frozen layers and stopping once no earlier layer
    needs them."""
    dzfc = d_afc * cache["fc_mask"]
    if not params.frozen("fc"):
        grads["fc"] = {"w": cache["flat"].T @ dzfc, "b": dzfc.sum(axis=0)}
    conv_names = [name for name, *_ in CONV_LAYERS]
    trainable_below = [any(not params.frozen(n) for n in conv_names[:i + 1])
                       for i in range(len(conv_names))]
    if not trainable_below[-1]:
        return
    dh = (dzfc @ params.arrays["fc"]["w"].T).reshape(-1, 7, 7, 64)
    for i in reversed(range(len(CONV_LAYERS))):
        name, _, cout, k, stride = CONV_LAYERS[i]
        c = cache["conv"][i]
        dz = dh.reshape(-1, cout) * c["mask"]
        if not params.frozen(name):
            grads[name] = {
                "w": (dz.T @ c["cols"]).reshape(params.arrays[name]["w"].shape),
                "b": dz.sum(axis=0),
            }
        if i == 0 or not trainable_below[i - 1]:
            break
        dcols = dz @ params.arrays[name]["w"].reshape(cout, -1)
        dh = _col2im(dcols, c["in_shape"], k, stride, c["oh"], c["ow"])


def a2c_loss(params, obs, actions, returns,
             entropy_coef=0.1, value_coef=0.5, advantages=None):
    """Loss and stats only (no gradients); shared by the FD check.

    `advantages` pins the policy-term advantage to fixed values; by default
    it is recomputed as returns - value. The FD check must pin it, because
    the analytic gradient treats the advantage as a constant.
    """
    obs = np.asarray(obs)
    _check_obs(obs)
    afc, _ = _trunk_forward(params, obs, keep_cache=False)
    logits = afc @ params.arrays["policy"]["w"] + params.arrays["policy"]["b"]
    value = (afc @ params.arrays["value"]["w"] + params.arrays["value"]["b"])[:, 0]
    logp = log_softmax(logits)
    probs = np.exp(logp)
    adv = returns - value if advantages is None else advantages
    policy_loss = -np.mean(logp[np.arange(len(actions)), actions] * adv)
    value_loss = np.mean((returns - value) ** 2)
    entropy = -np.sum(probs * logp, axis=1)
    loss = policy_loss + value_coef * value_loss - entropy_coef * entropy.mean()
    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy.mean()),
    }
    return loss, stats


def loss_and_grads(params, obs, actions, returns,
                   entropy_coef=0.1, value_coef=0.5):
    """Actor-critic loss with analytic gradients for the trainable layers.

    loss = -mean(log pi(a|s) * A) + value_coef * mean((R - V)^2)
           - entropy_coef * mean(entropy(pi)), with A = R - V held constant.
    """
    obs = np.asarray(obs)
    _check_obs(obs)
    dtype = params.arrays["fc"]["w"].dtype
    actions = np.asarray(actions)
    returns = np.asarray(returns, dtype=dtype)
    n = obs.shape[0]

    afc, cache = _trunk_forward(params, obs.astype(dtype, copy=False), True)
    logits = afc @ params.arrays["policy"]["w"] + params.arrays["policy"]["b"]
    value = (afc @ params.arrays["value"]["w"] + params.arrays["value"]["b"])[:, 0]
    logp = log_softmax(logits)
    probs = np.exp(logp)
    adv = returns - value
    chosen = logp[np.arange(n), actions]
    entropy = -np.sum(probs * logp, axis=1)
    policy_loss = -np.mean(chosen * adv)
    value_loss = np.mean((returns - value) ** 2)
    loss = float(policy_loss + value_coef * value_loss
                 - entropy_coef * entropy.mean())
    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy.mean()),
    }
    if not np.isfinite(loss):
        raise NonFiniteLossError(f"non-finite loss {loss}", stats)

    onehot = np.zeros_like(probs)
    onehot[np.arange(n), actions] = 1.0
    dlogits = (probs - onehot) * adv[:, None] / n
    dlogits += entropy_coef * probs * (logp + entropy[:, None]) / n
    dvalue = (2.0 * value_coef * (value - returns) / n)[:, None]

    grads = {}
    if not params.frozen("policy"):
        grads["policy"] = {"w": afc.T @ dlogits, "b": dlogits.sum(axis=0)}
    if not params.frozen("value"):
        grads["value"] = {"w": afc.T @ dvalue, "b": dvalue.sum(axis=0)}
    d_afc = dlogits @ params.arrays["policy"]["w"].T
    d_afc += dvalue @ params.arrays["value"]["w"].T
    _trunk_backward(params, cache, d_afc, grads)
    return loss, grads, stats


def cross_entropy_loss(params, obs, labels):
    obs = np.asarray(obs)
    _check_obs(obs)
    afc, _ = _trunk_forward(params, obs, keep_cache=False)
    logits = afc @ params.arrays["locator"]["w"] + params.arrays["locator"]["b"]
    logp = log_softmax(logits)
    return -np.mean(logp[np.arange(len(labels)), labels])


def cross_entropy_loss_and_grads(params, obs, labels):
    """Softmax cross-entropy on the locator head, gradients as above."""
    obs = np.asarray(obs)
    _check_obs(obs)
    dtype = params.arrays["fc"]["w"].dtype
    n = obs.shape[0]
    afc, cache = _trunk_forward(params, obs.astype(dtype, copy=False), True)
    logits = afc @ params.arrays["locator"]["w"] + params.arrays["locator"]["b"]
    logp = log_softmax(logits)
    probs = np.exp(logp)
    loss = float(-np.mean(logp[np.arange(n), labels]))
    if not np.isfinite(loss):
        raise NonFiniteLossError(f"non-finite loss {loss}")
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    grads = {}
    if not params.frozen("locator"):
        grads["locator"] = {"w": afc.T @ dlogits, "b": dlogits.sum(axis=0)}
    d_afc = dlogits @ params.arrays["locator"]["w"].T
    _trunk_backward(params, cache, d_afc, grads)
    return loss, grads


# ---------------------------------------------------------------------------
# optimizer


class OptimizerState:
    """Squared-gradient accumulator: acc <- alpha*acc + (1-alpha)*g^2,
    theta <- theta - lr * g / (sqrt(acc) + eps)."""

    def __init__(self, lr=7e-4, alpha=0.99, eps=1e-5):
        self.lr = lr
        self.alpha = alpha
        self.eps = eps
        self.acc = {}


def optimizer_step(params: NetworkParams, grads: dict,
                   opt: OptimizerState) -> NetworkParams:
    """Apply one update in place; frozen layers are untouched by contract
    (their gradient slots are absent)."""
    for name, layer_grads in grads.items():
        if params.frozen(name):
            continue
        acc_layer = opt.acc.setdefault(name, {})
        for key, g in layer_grads.items():
            acc = acc_layer.get(key)
            if acc is None:
                acc = acc_layer[key] = np.zeros_like(params.arrays[name][key])
            acc *= opt.alpha
            acc += (1.0 - opt.alpha) * g * g
            params.arrays[name][key] -= opt.lr * g / (np.sqrt(acc) + opt.eps)
    return params


def global_grad_norm(grads: dict) -> float:
    """L2 norm over every array in a gradient tree."""
    total = 0.0
    for layer_grads in grads.values():
        for g in layer_grads.values():
            flat = g.ravel()
            total += float(flat @ flat)
    return float(np.sqrt(total))


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    """Rescale the gradient tree in place so its global L2 norm is at most
    max_norm. Returns the pre-clip norm. Off by default everywhere; exists
    because unclipped RMSProp can burn out conv1 early in training."""
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    norm = global_grad_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for layer_grads in grads.values():
            for g in layer_grads.values():
                g *= scale
    return norm


# ---------------------------------------------------------------------------
# checkpoint container


def save_checkpoint(params: NetworkParams, path, source_task=None,
                    env_steps=None) -> Path:
    """Magic, little-endian u32 header length, JSON header, then raw
    little-endian float32 payloads per layer in header order (w then b)."""
    path = Path(path)
    names = [n for n in layer_names(params.head) if n in params.arrays]
    header = {
        "format_version": CHECKPOINT_VERSION,
        "head": params.head,
        "layers": [
            {"name": n,
             "w": list(params.arrays[n]["w"].shape),
             "b": list(params.arrays[n]["b"].shape)}
            for n in names
        ],
        "freeze_mask": {n: params.frozen(n) for n in names},
        "seed": params.seed,
        "source_task": params.source_task if source_task is None else source_task,
        "env_steps": params.env_steps if env_steps is None else env_steps,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    payload = b"".join(
        np.ascontiguousarray(params.arrays[n][k], dtype="<f4").tobytes()
        for n in names for k in ("w", "b")
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(payload)
    return path


def load_checkpoint(path) -> NetworkParams:
    data = Path(path).read_bytes()
    if data[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    off = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack_from("<I", data, off)
    off += 4
    header = json.loads(data[off:off + hlen])
    off += hlen
    arrays = {}
    for layer in header["layers"]:
        name = layer["name"]
        arrays[name] = {}
        for key in ("w", "b"):
            shape = tuple(layer[key])
            count = int(np.prod(shape))
            arr = np.frombuffer(data, dtype="<f4", count=count, offset=off)
            arrays[name][key] = arr.reshape(shape).copy()
            off += 4 * count
    if off != len(data):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return NetworkParams(
        arrays,
        freeze_mask=header["freeze_mask"],
        seed=header["seed"],
        head=header["head"],
        source_task=header["source_task"],
        env_steps=header["env_steps"],
    )


# ---------------------------------------------------------------------------
# finite-difference shadow check


def gradient_check(seed: int = 0, batch_size: int = 6,
                   samples_per_array: int = 32, h: float = 1e-6,
                   entropy_coef: float = 0.1, value_coef: float = 0.5) -> dict:
    """Compare analytic gradients against central finite differences in
    float64, sampling indices from every parameter array.

    Per-array error is max |analytic - fd| normalized by the array's largest
    gradient magnitude (so formula errors surface as O(1) ratios while exact
    zeros from inactive ReLU paths do not divide by noise).

    A +-h probe that straddles a ReLU kink makes the central difference
    meaningless (the loss is not differentiable there), so each index is
    estimated at h and h/2: smooth points agree to O(h^2) and kink points
    disagree at slope scale. Inconsistent indices are resampled; their count
    is reported. Bias probes are the sensitive case since they shift a whole
    channel.
    """
    rng = np.random.default_rng(seed)
    params = init(seed, dtype=np.float32).astype(np.float64)
    obs = rng.random((batch_size, INPUT_HW, INPUT_HW, INPUT_CHANNELS))
    actions = rng.integers(0, 4, size=batch_size)
    returns = rng.uniform(-2.0, 2.0, size=batch_size)

    _, grads, _ = loss_and_grads(params, obs, actions, returns,
                                 entropy_coef, value_coef)
    _, base_value = forward(params, obs)
    advantages = returns - base_value[:, 0]

    def probe(flat, i, step):
        orig = flat[i]
        flat[i] = orig + step
        up, _ = a2c_loss(params, obs, actions, returns,
                         entropy_coef, value_coef, advantages)
        flat[i] = orig - step
        down, _ = a2c_loss(params, obs, actions, returns,
                           entropy_coef, value_coef, advantages)
        flat[i] = orig
        return (up - down) / (2.0 * step)

    report = {}
    worst = 0.0
    kinks = 0
    for name in params.arrays:
        for key in ("w", "b"):
            arr = params.arrays[name][key]
            ana = grads[name][key].ravel()
            flat = arr.ravel()
            n_idx = min(samples_per_array, flat.size)
            pool = rng.permutation(flat.size)
            scale = max(np.abs(ana).max(), 1e-8)
            err = 0.0
            taken = 0
            for i in pool:
                if taken == n_idx:
                    break
                fd = probe(flat, i, h)
                fd_half = probe(flat, i, h / 2.0)
                if abs(fd - fd_half) / max(scale, abs(fd)) > 3e-6:
                    kinks += 1
                    continue
                err = max(err, abs(ana[i] - fd) / max(scale, abs(fd)))
                taken += 1
            report[f"{name}.{key}"] = err
            worst = max(worst, err)
    report["kinks_skipped"] = kinks
    report["max_rel_err"] = worst
    return report
