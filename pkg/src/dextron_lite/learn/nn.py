"""Small fully-connected networks with hand-written reverse-mode gradients.

Inputs are row batches ``(n, in_dim)``; a 1-d input is treated as a batch of
one and the output is squeezed back. Hidden layers use ReLU, the output layer
is affine.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatch


class Mlp:
    def __init__(self, sizes, rng: np.random.Generator | None = None, zero=False, dtype=np.float64):
        self.sizes = tuple(int(s) for s in sizes)
        self.dtype = np.dtype(dtype)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        self._allocate()
        rng = rng if rng is not None else np.random.default_rng(0)
        n_layers = len(self.weights)
        for i, w in enumerate(self.weights):
            if zero:
                w[...] = 0.0
            else:
                # He-uniform on hidden layers, small uniform on the output layer
                bound = 3e-3 if i == n_layers - 1 else np.sqrt(6.0 / w.shape[0])
                w[...] = rng.uniform(-bound, bound, size=w.shape)
            self.biases[i][...] = 0.0

    def _allocate(self):
        # parameters and gradients live in flat buffers; per-layer arrays are views
        self.flat = np.empty(self.n_params, dtype=self.dtype)
        self.grad_flat = np.zeros(self.n_params, dtype=self.dtype)
        self.weights, self.biases, self._gw, self._gb = [], [], [], []
        off = 0
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            for store, gstore, shape in ((self.weights, self._gw, (fan_in, fan_out)), (self.biases, self._gb, (fan_out,))):
                size = int(np.prod(shape))
                store.append(self.flat[off:off + size].reshape(shape))
                gstore.append(self.grad_flat[off:off + size].reshape(shape))
                off += size

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_params(self) -> int:
        return sum(i * o + o for i, o in zip(self.sizes[:-1], self.sizes[1:]))

    def forward(self, x, cache=False):
        x = np.asarray(x, dtype=self.dtype)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[-1] != self.sizes[0]:
            raise DimensionMismatch(f"expected input dim {self.sizes[0]}, got {x.shape[-1]}")
        acts = [x]
        pre = []
        n_layers = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = x @ w + b
            if i < n_layers - 1:
                pre.append(z)
                x = np.maximum(z, 0.0)
                acts.append(x)
            else:
                x = z
        y = x[0] if squeeze else x
        if cache:
            return y, (acts, pre, squeeze)
        return y

    __call__ = forward

    def backward(self, cache, grad_out, param_grads=True):
        """Gradients of a scalar loss given ``dL/dy``.

        Returns ``(param_grads, grad_input)``; ``param_grads`` is ordered like
        ``params`` and consists of views into ``grad_flat``, which the next
        backward call on this network overwrites. With ``param_grads=False``
        only the input gradient is computed and ``None`` is returned for them.
        """
        acts, pre, squeeze = cache
        g = np.asarray(grad_out, dtype=self.dtype)
        if squeeze:
            g = g[None, :]
        for i in range(len(self.weights) - 1, -1, -1):
            if param_grads:
                np.matmul(acts[i].T, g, out=self._gw[i])
                np.sum(g, axis=0, out=self._gb[i])
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (pre[i - 1] > 0.0)
        gx = g[0] if squeeze else g
        if not param_grads:
            return None, gx
        grads = []
        for gw, gb in zip(self._gw, self._gb):
            grads += [gw, gb]
        return grads, gx

    def copy(self) -> "Mlp":
        new = Mlp.__new__(Mlp)
        new.sizes, new.dtype = self.sizes, self.dtype
        new._allocate()
        new.flat[...] = self.flat
        return new

    def set_params(self, params) -> None:
        for mine, p in zip(self.params, params):
            mine[...] = p

    def polyak_from(self, source: "Mlp", tau: float) -> None:
        """``self <- tau * source + (1 - tau) * self``, in place."""
        self.flat *= 1.0 - tau
        self.flat += tau * source.flat

    def state_arrays(self, prefix: str) -> dict:
        return {f"{prefix}/{i}": p for i, p in enumerate(self.params)}

    @classmethod
    def from_arrays(cls, sizes, arrays: dict, prefix: str) -> "Mlp":
        net = cls(sizes, zero=True, dtype=arrays[f"{prefix}/0"].dtype)
        net.set_params([arrays[f"{prefix}/{i}"] for i in range(2 * (len(sizes) - 1))])
        return net


def forward(net: Mlp, x):
    return net.forward(x)


def backward(net: Mlp, cache, grad_out):
    return net.backward(cache, grad_out)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place on ``params``.

    ``state`` holds ``t`` and per-parameter ``m``/``v`` moments; create it
    with ``adam_state(params)``.
    """
    state["t"] += 1
    t = state["t"]
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    scratch = state.setdefault("scratch", [np.empty_like(p) for p in params])
    for p, g, m, v, tmp in zip(params, grads, state["m"], state["v"], scratch):
        m *= beta1
        np.multiply(g, 1.0 - beta1, out=tmp)
        m += tmp
        v *= beta2
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - beta2
        v += tmp
        # p -= lr * (m / c1) / (sqrt(v / c2) + eps)
        np.divide(v, c2, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += eps
        np.divide(m, tmp, out=tmp)
        tmp *= lr / c1
        p -= tmp
    return params


def adam_state(params) -> dict:
    return {"t": 0, "m": [np.zeros_like(p) for p in params], "v": [np.zeros_like(p) for p in params]}


class Adam:
    """Adam over a list of arrays updated in place (pass ``[net.flat]`` for one fused update)."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = adam_state(params)

    def step(self, grads) -> None:
        adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)

    def state_arrays(self, prefix: str) -> dict:
        out = {f"{prefix}/t": np.array(self.state["t"])}
        for i, (m, v) in enumerate(zip(self.state["m"], self.state["v"])):
            out[f"{prefix}/m{i}"] = m
            out[f"{prefix}/v{i}"] = v
        return out

    def load_arrays(self, arrays: dict, prefix: str) -> None:
        self.state["t"] = int(arrays[f"{prefix}/t"])
        for i in range(len(self.params)):
            self.state["m"][i][...] = arrays[f"{prefix}/m{i}"]
            self.state["v"][i][...] = arrays[f"{prefix}/v{i}"]


class Normalizer:
    """Fixed affine input standardization; identity until fitted.

    With ``clip`` the standardized values are clipped to ``[-clip, clip]``.
    """

    def __init__(self, dim: int, clip: float | None = None):
        self.mean = np.zeros(dim)
        self.std = np.ones(dim)
        self.clip = clip

    def fit(self, x, min_std=1e-3) -> "Normalizer":
        x = np.asarray(x, dtype=float)
        self.mean = x.mean(axis=0)
        self.std = np.maximum(x.std(axis=0), min_std)
        return self

    def __call__(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.std
        if self.clip:
            np.clip(z, -self.clip, self.clip, out=z)
        return z


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    labels = np.asarray(labels, dtype=int)
    z = logits - logits.max(axis=-1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    n = len(labels)
    loss = -log_p[np.arange(n), labels].mean()
    grad = np.exp(log_p)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n
