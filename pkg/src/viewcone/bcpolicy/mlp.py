"""Plain float64 MLP with SiLU hidden activations, and Adam.

Kept free of framework dependencies so training is bit-deterministic given a
seed and the parameter vector maps directly onto the binary model artifact.
"""

import numpy as np

__all__ = ["Mlp", "Adam", "numeric_gradient"]


def _silu(z: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-z))
    return z * s


def _dsilu(z: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-z))
    return s * (1.0 + z * (1.0 - s))


class Mlp:
    """Fully connected net; parameters live in ``params`` as [W0, b0, W1, b1, ...].

    Hidden layers use SiLU; the output layer is linear and zero-initialized
    by default so the untrained net predicts zeros.
    """

    def __init__(self, sizes, rng: np.random.Generator | None = None, zero_final: bool = True):
        self.sizes = list(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.params: list[np.ndarray] = []
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            last = i == len(self.sizes) - 2
            if last and zero_final:
                w = np.zeros((fan_in, fan_out))
            else:
                if rng is None:
                    raise ValueError("rng required for non-zero initialization")
                a = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-a, a, size=(fan_in, fan_out))
            self.params.append(w)
            self.params.append(np.zeros(fan_out))

    @classmethod
    def from_params(cls, sizes, params) -> "Mlp":
        net = cls.__new__(cls)
        net.sizes = list(int(s) for s in sizes)
        net.params = [np.asarray(p, dtype=float) for p in params]
        return net

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = x
        for i in range(self.n_layers):
            w, b = self.params[2 * i], self.params[2 * i + 1]
            z = h @ w + b
            h = z if i == self.n_layers - 1 else _silu(z)
        return h

    def forward_cache(self, x: np.ndarray):
        """Forward pass keeping pre-activations for backprop."""
        acts = [x]
        zs = []
        h = x
        for i in range(self.n_layers):
            w, b = self.params[2 * i], self.params[2 * i + 1]
            z = h @ w + b
            zs.append(z)
            h = z if i == self.n_layers - 1 else _silu(z)
            acts.append(h)
        return h, (acts, zs)

    def backward(self, cache, grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients of a scalar loss w.r.t. params, given dLoss/dOutput."""
        acts, zs = cache
        grads = [np.zeros_like(p) for p in self.params]
        delta = grad_out
        for i in reversed(range(self.n_layers)):
            w = self.params[2 * i]
            grads[2 * i] = acts[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ w.T) * _dsilu(zs[i - 1])
        return grads


class Adam:
    """Adaptive-moment gradient descent with bias correction."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def numeric_gradient(loss_fn, params: list[np.ndarray], eps: float = 1e-6) -> list[np.ndarray]:
    """Central finite differences of a scalar function of the parameter list."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat_p = p.ravel()
        flat_g = g.ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + eps
            hi = loss_fn()
            flat_p[i] = orig - eps
            lo = loss_fn()
            flat_p[i] = orig
            flat_g[i] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads
