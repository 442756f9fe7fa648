"""From-scratch 1-D convolutional regression network.

The default stack is three valid (no-padding) convolution layers of 64
filters with kernel size 7, max pooling of size 5 after the first two,
then dense layers of 64 and 32 relu units joined by the point-count input,
and a linear output layer.  Training uses minibatch Adam on the mean
squared error; everything is plain numpy in double precision so gradients
can be checked against finite differences.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

FORMAT_VERSION = 1

ADAM_LR = 0.001
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-7


class ArchitectureError(ValueError):
    pass


class ModelFileError(RuntimeError):
    pass


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@dataclass(frozen=True)
class NetworkArch:
    """Layer stack description; the defaults follow the reference stack."""

    out_dim: int
    input_len: int = 513
    conv: tuple[tuple[int, int], ...] = ((64, 7), (64, 7), (64, 7))
    pool_after: tuple[bool, ...] = (True, True, False)
    pool_size: int = 5
    dense: tuple[int, ...] = (64, 32)

    def __post_init__(self):
        if len(self.pool_after) != len(self.conv):
            raise ArchitectureError("pool_after must match the conv stack")
        self.shape_trace()  # validates sequence lengths

    def shape_trace(self) -> list[tuple[int, int]]:
        """(channels, length) after each conv/pool stage; raises if any
        convolution would see a sequence shorter than its kernel."""
        trace = [(1, self.input_len)]
        ch, length = 1, self.input_len
        for (p, q), pool in zip(self.conv, self.pool_after):
            if length < q:
                raise ArchitectureError(
                    f"sequence length {length} shorter than kernel {q}"
                )
            ch, length = p, length - (q - 1)
            if pool:
                length //= self.pool_size
                if length == 0:
                    raise ArchitectureError("pooling emptied the sequence")
            trace.append((ch, length))
        return trace

    def flat_size(self) -> int:
        ch, length = self.shape_trace()[-1]
        return ch * length

    def to_json(self) -> str:
        return json.dumps(
            {
                "out_dim": self.out_dim,
                "input_len": self.input_len,
                "conv": [list(c) for c in self.conv],
                "pool_after": list(self.pool_after),
                "pool_size": self.pool_size,
                "dense": list(self.dense),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "NetworkArch":
        d = json.loads(text)
        return cls(
            out_dim=d["out_dim"],
            input_len=d["input_len"],
            conv=tuple(tuple(c) for c in d["conv"]),
            pool_after=tuple(bool(b) for b in d["pool_after"]),
            pool_size=d["pool_size"],
            dense=tuple(d["dense"]),
        )


def _glorot(rng: np.random.Generator, shape, fan_in, fan_out) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


def init_weights(arch: NetworkArch, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Glorot-uniform kernels/matrices, zero biases, in a flat dict."""
    w: dict[str, np.ndarray] = {}
    in_ch = 1
    for i, (p, q) in enumerate(arch.conv):
        w[f"conv{i}_k"] = _glorot(rng, (p, in_ch, q), in_ch * q, p * q)
        w[f"conv{i}_b"] = np.zeros(p)
        in_ch = p
    n_in = arch.flat_size() + 1  # + the point-count input
    for i, h in enumerate(arch.dense):
        w[f"dense{i}_W"] = _glorot(rng, (h, n_in), n_in, h)
        w[f"dense{i}_b"] = np.zeros(h)
        n_in = h
    w["out_W"] = _glorot(rng, (arch.out_dim, n_in), n_in, arch.out_dim)
    w["out_b"] = np.zeros(arch.out_dim)
    return w


# ---------------------------------------------------------------------------
# layer primitives


def conv1d_forward(
    inputs: np.ndarray, kernels: np.ndarray, bias: np.ndarray
) -> np.ndarray:
    """Valid 1-D convolution with relu.

    ``inputs`` is (batch, channels, length); ``kernels`` is
    (out_channels, channels, q).  Output length is length - (q - 1).
    """
    pre = _conv1d_pre(inputs, kernels, bias)
    return relu(pre)


def _conv1d_pre(inputs, kernels, bias):
    q = kernels.shape[2]
    if inputs.shape[2] < q:
        raise ArchitectureError(
            f"sequence length {inputs.shape[2]} shorter than kernel {q}"
        )
    win = np.lib.stride_tricks.sliding_window_view(inputs, q, axis=2)
    return np.einsum("bclq,ocq->bol", win, kernels) + bias[None, :, None]


def maxpool1d(seq: np.ndarray, size: int = 5) -> np.ndarray:
    """Non-overlapping max pooling over the last axis; remainder dropped."""
    length = seq.shape[-1]
    if length < size:
        raise ArchitectureError(f"sequence length {length} shorter than pool {size}")
    keep = (length // size) * size
    trunc = seq[..., :keep].reshape(*seq.shape[:-1], length // size, size)
    return trunc.max(axis=-1)


def dense_forward(
    inputs: np.ndarray, W: np.ndarray, b: np.ndarray, activation: str = "relu"
) -> np.ndarray:
    """Fully connected layer: relu(b + W @ inputs) rowwise over the batch."""
    if inputs.shape[-1] != W.shape[1]:
        raise ArchitectureError(
            f"dense input size {inputs.shape[-1]} != weight columns {W.shape[1]}"
        )
    pre = inputs @ W.T + b
    return relu(pre) if activation == "relu" else pre


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over batch rows and output components of the squared error."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ArchitectureError("prediction/target shape mismatch")
    return float(np.mean((pred - target) ** 2))


# ---------------------------------------------------------------------------
# the network


class Network:
    """Architecture plus weights; forward, backward, and prediction."""

    def __init__(self, arch: NetworkArch, weights: dict[str, np.ndarray]):
        self.arch = arch
        self.weights = weights

    @classmethod
    def initialize(cls, arch: NetworkArch, rng: np.random.Generator) -> "Network":
        return cls(arch, init_weights(arch, rng))

    def forward(self, curves: np.ndarray, counts: np.ndarray) -> np.ndarray:
        """Predictions (standardized scale) for a batch of inputs.

        ``curves`` is (batch, input_len), ``counts`` is (batch,).
        """
        return self._forward(curves, counts, cache=None)

    def _forward(self, curves, counts, cache):
        arch = self.arch
        curves = np.atleast_2d(np.asarray(curves, dtype=float))
        counts = np.atleast_1d(np.asarray(counts, dtype=float))
        if curves.shape[1] != arch.input_len:
            raise ArchitectureError(
                f"curve length {curves.shape[1]} != expected {arch.input_len}"
            )
        h = curves[:, None, :]
        for i in range(len(arch.conv)):
            pre = _conv1d_pre(h, self.weights[f"conv{i}_k"], self.weights[f"conv{i}_b"])
            act = relu(pre)
            if cache is not None:
                cache[f"conv{i}_in"] = h
                cache[f"conv{i}_pre"] = pre
            h = act
            if arch.pool_after[i]:
                keep = (h.shape[2] // arch.pool_size) * arch.pool_size
                trunc = h[:, :, :keep].reshape(
                    h.shape[0], h.shape[1], -1, arch.pool_size
                )
                if cache is not None:
                    cache[f"pool{i}_len"] = h.shape[2]
                    cache[f"pool{i}_arg"] = trunc.argmax(axis=-1)
                h = trunc.max(axis=-1)
        flat = h.reshape(h.shape[0], -1)
        x = np.concatenate([flat, counts[:, None]], axis=1)
        for i in range(len(arch.dense)):
            pre = x @ self.weights[f"dense{i}_W"].T + self.weights[f"dense{i}_b"]
            if cache is not None:
                cache[f"dense{i}_in"] = x
                cache[f"dense{i}_pre"] = pre
            x = relu(pre)
        if cache is not None:
            cache["out_in"] = x
        return x @ self.weights["out_W"].T + self.weights["out_b"]

    def loss_and_gradients(
        self, curves, counts, targets
    ) -> tuple[float, dict[str, np.ndarray]]:
        """MSE loss and its gradient w.r.t. every weight array."""
        arch = self.arch
        cache: dict[str, np.ndarray] = {}
        pred = self._forward(curves, counts, cache)
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        loss = mse_loss(pred, targets)
        grads: dict[str, np.ndarray] = {}
        delta = 2.0 * (pred - targets) / pred.size

        grads["out_W"] = delta.T @ cache["out_in"]
        grads["out_b"] = delta.sum(axis=0)
        dx = delta @ self.weights["out_W"]
        for i in reversed(range(len(arch.dense))):
            dpre = dx * (cache[f"dense{i}_pre"] > 0)
            grads[f"dense{i}_W"] = dpre.T @ cache[f"dense{i}_in"]
            grads[f"dense{i}_b"] = dpre.sum(axis=0)
            dx = dpre @ self.weights[f"dense{i}_W"]

        dflat = dx[:, :-1]  # last column is the count input
        ch, length = arch.shape_trace()[-1]
        dh = dflat.reshape(-1, ch, length)
        for i in reversed(range(len(arch.conv))):
            if arch.pool_after[i]:
                full_len = cache[f"pool{i}_len"]
                arg = cache[f"pool{i}_arg"]
                B, C, nwin = arg.shape
                dtrunc = np.zeros((B, C, nwin, arch.pool_size))
                np.put_along_axis(dtrunc, arg[..., None], dh[..., None], axis=-1)
                dfull = np.zeros((B, C, full_len))
                dfull[:, :, : nwin * arch.pool_size] = dtrunc.reshape(B, C, -1)
                dh = dfull
            pre = cache[f"conv{i}_pre"]
            h_in = cache[f"conv{i}_in"]
            dpre = dh * (pre > 0)
            K = self.weights[f"conv{i}_k"]
            q = K.shape[2]
            win = np.lib.stride_tricks.sliding_window_view(h_in, q, axis=2)
            grads[f"conv{i}_k"] = np.einsum("bclq,bol->ocq", win, dpre)
            grads[f"conv{i}_b"] = dpre.sum(axis=(0, 2))
            if i > 0:
                dh_in = np.zeros_like(h_in)
                lout = dpre.shape[2]
                for l in range(q):
                    dh_in[:, :, l : l + lout] += np.einsum(
                        "bol,oc->bcl", dpre, K[:, :, l]
                    )
                dh = dh_in
        return loss, grads


# ---------------------------------------------------------------------------
# Adam optimizer


@dataclass
class AdamState:
    """First/second moment accumulators plus step count."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    lr: float = ADAM_LR
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_weights(cls, weights: dict[str, np.ndarray], **hyper) -> "AdamState":
        return cls(
            m={k: np.zeros_like(v) for k, v in weights.items()},
            v={k: np.zeros_like(v) for k, v in weights.items()},
            **hyper,
        )


def adam_update(
    weights: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState
) -> None:
    """One in-place bias-corrected Adam step on every weight array."""
    state.t += 1
    lr_t = state.lr * np.sqrt(1.0 - state.beta2**state.t) / (
        1.0 - state.beta1**state.t
    )
    for key, g in grads.items():
        m = state.m[key]
        v = state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        weights[key] -= lr_t * m / (np.sqrt(v) + state.eps)


# ---------------------------------------------------------------------------
# standardization


@dataclass(frozen=True)
class Standardizer:
    """Input/target scaling fitted on the training set.

    Curve values share one pooled mean/sd over all rows and grid positions;
    the count and each parameter get their own.
    """

    curve_mean: float
    curve_sd: float
    count_mean: float
    count_sd: float
    theta_mean: np.ndarray
    theta_sd: np.ndarray


def fit_standardizer(
    curves: np.ndarray, counts: np.ndarray, thetas: np.ndarray
) -> Standardizer:
    curves = np.asarray(curves, dtype=float)
    counts = np.asarray(counts, dtype=float)
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if curves.shape[0] < 2:
        raise ValueError("standardizer needs at least 2 rows")
    theta_sd = thetas.std(axis=0)
    if np.any(theta_sd < 1e-12):
        raise ValueError(
            "a parameter component has (near) zero spread; check the sampling ranges"
        )
    count_sd = counts.std()
    if count_sd < 1e-12:
        warnings.warn("point counts have zero spread; count channel left unscaled")
        count_sd = 1.0
    curve_sd = curves.std()
    if curve_sd < 1e-12:
        warnings.warn("curves have zero spread; curve channel left unscaled")
        curve_sd = 1.0
    return Standardizer(
        curve_mean=float(curves.mean()),
        curve_sd=float(curve_sd),
        count_mean=float(counts.mean()),
        count_sd=float(count_sd),
        theta_mean=thetas.mean(axis=0),
        theta_sd=theta_sd,
    )


def standardize(curves, counts, thetas, st: Standardizer):
    """Apply the fitted scaling; ``thetas`` may be None (estimation time)."""
    sc = (np.asarray(curves, dtype=float) - st.curve_mean) / st.curve_sd
    sn = (np.asarray(counts, dtype=float) - st.count_mean) / st.count_sd
    if thetas is None:
        return sc, sn, None
    sth = (np.atleast_2d(np.asarray(thetas, dtype=float)) - st.theta_mean) / st.theta_sd
    return sc, sn, sth


def destandardize_theta(pred: np.ndarray, st: Standardizer) -> np.ndarray:
    """Map standardized network output back to natural parameter scale."""
    return np.asarray(pred, dtype=float) * st.theta_sd + st.theta_mean


# ---------------------------------------------------------------------------
# training


def train(
    net: Network,
    curves: np.ndarray,
    counts: np.ndarray,
    targets: np.ndarray,
    epochs: int = 20,
    batch_size: int = 100,
    rng: np.random.Generator | None = None,
    test: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
    lr: float = ADAM_LR,
) -> dict[str, list[float]]:
    """Minibatch Adam training on standardized data.

    Each epoch draws a fresh shuffle from ``rng``; the last short batch is
    kept.  Returns per-epoch train (and optionally test) MSE history.
    """
    rng = np.random.default_rng() if rng is None else rng
    curves = np.asarray(curves, dtype=float)
    counts = np.asarray(counts, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    n = curves.shape[0]
    state = AdamState.for_weights(net.weights, lr=lr)
    history: dict[str, list[float]] = {"train_mse": []}
    if test is not None:
        history["test_mse"] = []
    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            _, grads = net.loss_and_gradients(curves[idx], counts[idx], targets[idx])
            adam_update(net.weights, grads, state)
        history["train_mse"].append(mse_loss(net.forward(curves, counts), targets))
        if test is not None:
            tc, tn, tt = test
            history["test_mse"].append(mse_loss(net.forward(tc, tn), np.atleast_2d(tt)))
    return history


# ---------------------------------------------------------------------------
# persistence


def save_network(path, net: Network, st: Standardizer, extra: dict | None = None):
    """Write arch + weights + standardizer (+ metadata) to an .npz file."""
    payload = {
        "format_version": np.array(FORMAT_VERSION),
        "arch_json": np.array(net.arch.to_json()),
        "std_scalars": np.array(
            [st.curve_mean, st.curve_sd, st.count_mean, st.count_sd]
        ),
        "std_theta_mean": st.theta_mean,
        "std_theta_sd": st.theta_sd,
        "extra_json": np.array(json.dumps(extra or {})),
    }
    for key, arr in net.weights.items():
        payload[f"w_{key}"] = arr
    np.savez(path, **payload)


def load_network(path) -> tuple[Network, Standardizer, dict]:
    """Inverse of :func:`save_network`; bitwise-identical weights."""
    try:
        data = np.load(path, allow_pickle=False)
    except Exception as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}") from exc
    try:
        version = int(data["format_version"])
        if version != FORMAT_VERSION:
            raise ModelFileError(
                f"model file version {version} != supported {FORMAT_VERSION}"
            )
        arch = NetworkArch.from_json(str(data["arch_json"]))
        weights = {
            key[2:]: data[key] for key in data.files if key.startswith("w_")
        }
        expected = set(init_weights(arch, np.random.default_rng(0)))
        if set(weights) != expected:
            raise ModelFileError("model file weight set does not match architecture")
        scalars = data["std_scalars"]
        st = Standardizer(
            curve_mean=float(scalars[0]),
            curve_sd=float(scalars[1]),
            count_mean=float(scalars[2]),
            count_sd=float(scalars[3]),
            theta_mean=data["std_theta_mean"],
            theta_sd=data["std_theta_sd"],
        )
        extra = json.loads(str(data["extra_json"]))
    except ModelFileError:
        raise
    except Exception as exc:
        raise ModelFileError(f"corrupt model file {path}: {exc}") from exc
    return Network(arch, weights), st, extra
