"""Test objectives with exact derivatives and controllable gradient noise.

All optimizers and PDE solvers in this package consume the :class:`Objective`
interface: a scalar loss with an exact gradient, an optional dense Hessian
(small dimensions only), and a stochastic gradient whose noise is either
synthetic (additive Gaussian, variance ``noise_scale`` per component) or real
minibatch noise (:class:`TinyMLP`).

Objectives are pure and reentrant; stochastic gradients draw from a
``numpy.random.Generator`` passed in by the caller, so concurrent callers own
independent streams.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray

# Dense Hessians are only supplied up to this dimension; use hvp() beyond it.
DENSE_HESSIAN_LIMIT = 64


class Objective:
    """Scalar loss f: R^n -> R with exact gradient."""

    dim: int
    noise_scale: float = 0.0

    def value(self, x: Array) -> float:
        raise NotImplementedError

    def grad(self, x: Array) -> Array:
        raise NotImplementedError

    def hessian(self, x: Array) -> Array:
        raise NotImplementedError(f"{type(self).__name__} has no dense Hessian")

    @property
    def has_hessian(self) -> bool:
        try:
            self.hessian(np.zeros(self.dim))
        except NotImplementedError:
            return False
        return True

    def stochastic_grad(self, x: Array, rng: np.random.Generator) -> Array:
        """Unbiased noisy gradient; equals grad(x) when noise_scale == 0."""
        g = self.grad(x)
        if self.noise_scale > 0.0:
            g = g + np.sqrt(self.noise_scale) * rng.standard_normal(self.dim)
        return g

    def hvp(self, x: Array, v: Array, eps: float = 1e-6) -> Array:
        """Hessian-vector product by central differences of the gradient."""
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return np.zeros_like(v)
        u = v / nv
        return (self.grad(x + eps * u) - self.grad(x - eps * u)) / (2.0 * eps) * nv

    # Vectorized evaluation over rows of X, shape (N, dim).  The defaults
    # loop; analytic subclasses override with array arithmetic because the
    # grid solvers call these on many thousands of points.
    def value_batch(self, X: Array) -> Array:
        X = np.atleast_2d(X)
        return np.array([self.value(row) for row in X])

    def grad_batch(self, X: Array) -> Array:
        X = np.atleast_2d(X)
        return np.stack([self.grad(row) for row in X])


def _as_vec(x, dim: int) -> Array:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape != (dim,):
        raise ValueError(f"expected point of shape ({dim},), got {x.shape}")
    return x


class Quadratic(Objective):
    """f(x) = x'Qx/2 + p'x, exact gradient Qx + p and constant Hessian Q."""

    def __init__(self, Q: Array, p: Array):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        p = np.atleast_1d(np.asarray(p, dtype=float))
        if Q.shape[0] != Q.shape[1] or Q.shape[0] != p.shape[0]:
            raise ValueError("Q must be square and match p")
        if not np.allclose(Q, Q.T):
            raise ValueError("Q must be symmetric")
        self.Q = Q
        self.p = p
        self.dim = p.shape[0]

    def value(self, x):
        x = _as_vec(x, self.dim)
        return float(0.5 * x @ self.Q @ x + self.p @ x)

    def grad(self, x):
        x = _as_vec(x, self.dim)
        return self.Q @ x + self.p

    def hessian(self, x):
        return self.Q.copy()

    def value_batch(self, X):
        X = np.atleast_2d(X)
        return 0.5 * np.einsum("ni,ij,nj->n", X, self.Q, X) + X @ self.p

    def grad_batch(self, X):
        X = np.atleast_2d(X)
        return X @ self.Q.T + self.p

    def minimizer(self) -> Array:
        return np.linalg.solve(self.Q, -self.p)


class DoubleWell(Objective):
    """f(x) = (x^2 - a^2)^2 in 1D: minima at +-a, barrier a^4 at the origin."""

    dim = 1

    def __init__(self, a: float):
        if a <= 0:
            raise ValueError("a must be positive")
        self.a = float(a)

    def value(self, x):
        x = _as_vec(x, 1)[0]
        return float((x * x - self.a**2) ** 2)

    def grad(self, x):
        x = _as_vec(x, 1)[0]
        return np.array([4.0 * x * (x * x - self.a**2)])

    def hessian(self, x):
        x = _as_vec(x, 1)[0]
        return np.array([[12.0 * x * x - 4.0 * self.a**2]])

    def value_batch(self, X):
        x = np.atleast_2d(X)[:, 0]
        return (x * x - self.a**2) ** 2

    def grad_batch(self, X):
        x = np.atleast_2d(X)[:, 0]
        return (4.0 * x * (x * x - self.a**2))[:, None]


class Rugged1D(Objective):
    """Coercive 1D landscape with many seeded local minima.

    A quadratic envelope keeps the function coercive; a dominant sinusoid sets
    the number of wells and weaker seeded harmonics make their depths
    irregular, so there is a unique global minimum at a seed-dependent
    location.
    """

    dim = 1

    def __init__(self, seed: int, n_modes: int, box: tuple[float, float] = (-3.0, 3.0)):
        if n_modes < 2:
            raise ValueError("n_modes must be >= 2")
        self.seed = int(seed)
        self.n_modes = int(n_modes)
        self.box = (float(box[0]), float(box[1]))
        rng = np.random.default_rng(np.random.SeedSequence([0x5EED, self.seed, self.n_modes]))
        width = self.box[1] - self.box[0]
        self.k_env = 1.0
        self.center = rng.uniform(-0.08, 0.08) * width
        omega0 = 2.0 * np.pi * (n_modes + 1) / width
        # amplitude large enough that the dominant wave overpowers the
        # envelope slope everywhere in the box, guaranteeing >= n_modes wells
        env_slope = self.k_env * (0.5 * width + abs(self.center))
        amp0 = 1.7 * env_slope / omega0 * rng.uniform(0.95, 1.15)
        amps = [amp0, 0.18 * amp0 * rng.uniform(0.6, 1.4), 0.08 * amp0 * rng.uniform(0.6, 1.4)]
        omegas = [omega0, omega0 * rng.uniform(1.7, 2.3), omega0 * rng.uniform(2.8, 3.4)]
        phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
        self._amps = np.array(amps)
        self._omegas = np.array(omegas)
        self._phases = phases

    def _waves(self, x):
        return self._amps * np.sin(np.multiply.outer(x, self._omegas) + self._phases)

    def value(self, x):
        x = _as_vec(x, 1)[0]
        return float(0.5 * self.k_env * (x - self.center) ** 2 + self._waves(x).sum())

    def grad(self, x):
        x = _as_vec(x, 1)[0]
        dw = (self._amps * self._omegas * np.cos(x * self._omegas + self._phases)).sum()
        return np.array([self.k_env * (x - self.center) + dw])

    def hessian(self, x):
        x = _as_vec(x, 1)[0]
        d2 = -(self._amps * self._omegas**2 * np.sin(x * self._omegas + self._phases)).sum()
        return np.array([[self.k_env + d2]])

    def value_batch(self, X):
        x = np.atleast_2d(X)[:, 0]
        waves = self._amps * np.sin(x[:, None] * self._omegas + self._phases)
        return 0.5 * self.k_env * (x - self.center) ** 2 + waves.sum(axis=1)

    def grad_batch(self, X):
        x = np.atleast_2d(X)[:, 0]
        dw = (self._amps * self._omegas * np.cos(x[:, None] * self._omegas + self._phases)).sum(axis=1)
        return (self.k_env * (x - self.center) + dw)[:, None]


def _relu(z):
    return np.maximum(z, 0.0)


class TinyMLP(Objective):
    """Two-layer ReLU classifier on a synthetic 2D two-cluster dataset.

    Cross-entropy loss over ``n_samples`` points drawn from two Gaussian
    blobs.  The minibatch gradient samples indices with replacement; a batch
    equal to the dataset size uses every point once and therefore coincides
    with the exact gradient.
    """

    def __init__(self, seed: int, hidden: int, n_samples: int, batch_size: int | None = 32):
        if hidden < 2:
            raise ValueError("hidden must be >= 2")
        if n_samples < 20:
            raise ValueError("n_samples must be >= 20")
        self.seed = int(seed)
        self.hidden = int(hidden)
        self.n_samples = int(n_samples)
        rng = np.random.default_rng(np.random.SeedSequence([0x11A9, self.seed, hidden, n_samples]))
        half = n_samples // 2
        c0 = rng.normal(loc=(-1.0, -1.0), scale=0.75, size=(half, 2))
        c1 = rng.normal(loc=(1.0, 1.0), scale=0.75, size=(n_samples - half, 2))
        self.X = np.vstack([c0, c1])
        self.y = np.concatenate([np.zeros(half, dtype=int), np.ones(n_samples - half, dtype=int)])
        self.dim = hidden * 2 + hidden + 2 * hidden + 2
        self._x0 = 0.5 * rng.standard_normal(self.dim)
        if batch_size is not None and batch_size > n_samples:
            raise ValueError("batch_size cannot exceed n_samples")
        self.batch_size = batch_size

    @property
    def n_params(self) -> int:
        return self.dim

    def initial_point(self) -> Array:
        return self._x0.copy()

    def steps_per_epoch(self, batch_size: int | None = None) -> int:
        b = batch_size or self.batch_size or self.n_samples
        return max(1, int(np.ceil(self.n_samples / b)))

    def _unpack(self, x):
        h = self.hidden
        i = 0
        W1 = x[i : i + 2 * h].reshape(h, 2); i += 2 * h
        b1 = x[i : i + h]; i += h
        W2 = x[i : i + 2 * h].reshape(2, h); i += 2 * h
        b2 = x[i : i + 2]
        return W1, b1, W2, b2

    def _loss_grad(self, x, idx):
        W1, b1, W2, b2 = self._unpack(np.asarray(x, dtype=float))
        X, y = self.X[idx], self.y[idx]
        n = len(idx)
        z1 = X @ W1.T + b1
        a1 = _relu(z1)
        logits = a1 @ W2.T + b2
        logits -= logits.max(axis=1, keepdims=True)
        ez = np.exp(logits)
        probs = ez / ez.sum(axis=1, keepdims=True)
        loss = -np.log(probs[np.arange(n), y] + 1e-300).mean()
        dlogits = probs.copy()
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n
        dW2 = dlogits.T @ a1
        db2 = dlogits.sum(axis=0)
        da1 = dlogits @ W2
        dz1 = da1 * (z1 > 0)
        dW1 = dz1.T @ X
        db1 = dz1.sum(axis=0)
        g = np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])
        return loss, g

    def value(self, x):
        loss, _ = self._loss_grad(x, np.arange(self.n_samples))
        return float(loss)

    def grad(self, x):
        _, g = self._loss_grad(x, np.arange(self.n_samples))
        return g

    def hessian(self, x):
        if self.dim > DENSE_HESSIAN_LIMIT:
            raise NotImplementedError("dense Hessian limited to small parameter counts")
        eps = 1e-5
        H = np.empty((self.dim, self.dim))
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = eps
            H[:, j] = (self.grad(x + e) - self.grad(x - e)) / (2 * eps)
        return 0.5 * (H + H.T)

    def minibatch_grad(self, x, rng: np.random.Generator, batch_size: int | None = None) -> Array:
        b = batch_size if batch_size is not None else (self.batch_size or self.n_samples)
        if b > self.n_samples:
            raise ValueError("batch_size cannot exceed n_samples")
        if b == self.n_samples:
            idx = np.arange(self.n_samples)
        else:
            idx = rng.integers(0, self.n_samples, size=b)
        _, g = self._loss_grad(x, idx)
        return g

    def stochastic_grad(self, x, rng):
        return self.minibatch_grad(x, rng)


class CustomObjective(Objective):
    """Wrap plain callables as an objective (used for ad-hoc test functions)."""

    def __init__(self, dim, value_fn, grad_fn, hessian_fn=None, value_batch_fn=None, noise_scale=0.0):
        self.dim = dim
        self._value = value_fn
        self._grad = grad_fn
        self._hessian = hessian_fn
        self._value_batch = value_batch_fn
        self.noise_scale = noise_scale

    def value(self, x):
        return float(self._value(_as_vec(x, self.dim)))

    def grad(self, x):
        return np.atleast_1d(np.asarray(self._grad(_as_vec(x, self.dim)), dtype=float))

    def hessian(self, x):
        if self._hessian is None:
            raise NotImplementedError("no Hessian supplied")
        return np.atleast_2d(np.asarray(self._hessian(_as_vec(x, self.dim)), dtype=float))

    def value_batch(self, X):
        if self._value_batch is not None:
            return np.asarray(self._value_batch(np.atleast_2d(X)), dtype=float)
        return super().value_batch(X)


# ---------------------------------------------------------------------------
# factories


def make_quadratic(c: float, p, n: int) -> Quadratic:
    """Isotropic quadratic f(x) = c|x|^2/2 + p.x."""
    if c <= 0:
        raise ValueError("c must be positive")
    p = np.broadcast_to(np.atleast_1d(np.asarray(p, dtype=float)), (n,)).copy()
    return Quadratic(c * np.eye(n), p)


def make_quadratic_form(Q, p=None) -> Quadratic:
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if p is None:
        p = np.zeros(Q.shape[0])
    return Quadratic(Q, p)


def make_double_well(a: float) -> DoubleWell:
    return DoubleWell(a)


def make_rugged_1d(seed: int, n_modes: int) -> Rugged1D:
    return Rugged1D(seed, n_modes)


def make_tiny_mlp(seed: int, hidden: int, n_samples: int, batch_size: int | None = 32) -> TinyMLP:
    return TinyMLP(seed, hidden, n_samples, batch_size=batch_size)


# ---------------------------------------------------------------------------
# corpus


@dataclass
class TestCorpusEntry:
    name: str
    objective: Objective
    domain_box: tuple[Array, Array]
    known_minima: list[tuple[Array, float]] = field(default_factory=list)


def _polish_minimum(obj: Objective, x0: Array) -> Array:
    from scipy.optimize import minimize

    res = minimize(lambda z: obj.value(z), x0, jac=lambda z: obj.grad(z), method="BFGS",
                   options={"gtol": 1e-12, "maxiter": 500})
    return np.atleast_1d(res.x)


def _scan_minima_1d(obj: Objective, lo: float, hi: float, n: int = 4001) -> list[Array]:
    xs = np.linspace(lo, hi, n)
    fv = obj.value_batch(xs[:, None])
    idx = np.where((fv[1:-1] < fv[:-2]) & (fv[1:-1] <= fv[2:]))[0] + 1
    return [_polish_minimum(obj, np.array([xs[i]])) for i in idx]


_NAME_PATTERNS = [
    (re.compile(r"^quadratic_c(?P<c>[0-9.]+)_n(?P<n>\d+)$"), "quadratic"),
    (re.compile(r"^double_well_a(?P<a>[0-9.]+)$"), "double_well"),
    (re.compile(r"^rugged_s(?P<s>\d+)_m(?P<m>\d+)$"), "rugged"),
    (re.compile(r"^mlp_h(?P<h>\d+)_n(?P<n>\d+)$"), "mlp"),
]


def get_entry(name: str) -> TestCorpusEntry:
    """Resolve a corpus entry from its CLI name, e.g. ``double_well_a1``.

    Recognized families: ``quadratic_c<c>_n<n>``, ``double_well_a<a>``,
    ``rugged_s<seed>_m<modes>``, ``mlp_h<hidden>_n<samples>``.
    """
    for pat, kind in _NAME_PATTERNS:
        m = pat.match(name)
        if not m:
            continue
        if kind == "quadratic":
            c, n = float(m["c"]), int(m["n"])
            obj = make_quadratic(c, np.zeros(n), n)
            box = (np.full(n, -2.0), np.full(n, 2.0))
            return TestCorpusEntry(name, obj, box, [(np.zeros(n), 0.0)])
        if kind == "double_well":
            a = float(m["a"])
            obj = make_double_well(a)
            w = max(2.0, 2.0 * a)
            minima = [(np.array([-a]), 0.0), (np.array([a]), 0.0)]
            return TestCorpusEntry(name, obj, (np.array([-w]), np.array([w])), minima)
        if kind == "rugged":
            obj = make_rugged_1d(int(m["s"]), int(m["m"]))
            lo, hi = obj.box
            minima = [(x, obj.value(x)) for x in _scan_minima_1d(obj, lo, hi)]
            minima.sort(key=lambda t: t[1])
            return TestCorpusEntry(name, obj, (np.array([lo]), np.array([hi])), minima)
        if kind == "mlp":
            obj = make_tiny_mlp(0, int(m["h"]), int(m["n"]))
            box = (np.full(obj.dim, -3.0), np.full(obj.dim, 3.0))
            return TestCorpusEntry(name, obj, box)
    raise KeyError(f"unknown objective name: {name!r}")


def global_minimum(entry: TestCorpusEntry) -> Array:
    """Location of the best known minimum of a corpus entry."""
    if not entry.known_minima:
        raise ValueError(f"{entry.name} has no catalogued minima")
    return min(entry.known_minima, key=lambda t: t[1])[0]
