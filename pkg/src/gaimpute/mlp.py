"""Two-layer perceptron with tanh hidden units and linear outputs.

    y_k = sum_j w2[k, j] * tanh(sum_i w1[j, i] * x_i + b1[j]) + b2[k]

Trained full-batch with Møller's scaled conjugate gradient on the
sum-of-squares error, keeping the weights with the lowest validation loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import serialization
from .errors import DataError, NumericalError

SCG_LAMBDA = 1e-6
SCG_SIGMA = 1e-4
_LAMBDA_MIN = 1e-15
_LAMBDA_MAX = 1e100


@dataclass(frozen=True)
class MlpModel:
    w1: np.ndarray  # (M, d)
    b1: np.ndarray  # (M,)
    w2: np.ndarray  # (K, M)
    b2: np.ndarray  # (K,)

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        M, d = self.w1.shape
        if M < 1 or self.b1.shape != (M,) or self.w2.shape[1] != M or self.b2.shape != (self.w2.shape[0],):
            raise DataError("inconsistent MLP weight shapes")

    @property
    def input_count(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_count(self) -> int:
        return self.w1.shape[0]

    @property
    def output_count(self) -> int:
        return self.w2.shape[0]

    @property
    def n_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    def with_flat(self, theta: np.ndarray) -> "MlpModel":
        return unflatten(theta, self.input_count, self.hidden_count, self.output_count)

    def to_payload(self) -> dict:
        return {
            "input_count": self.input_count,
            "hidden_count": self.hidden_count,
            "output_count": self.output_count,
            "inner_activation": "tanh",
            "outer_activation": "linear",
            "w1": serialization.pack_array(self.w1),
            "b1": serialization.pack_array(self.b1),
            "w2": serialization.pack_array(self.w2),
            "b2": serialization.pack_array(self.b2),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "MlpModel":
        if payload.get("inner_activation") != "tanh" or payload.get("outer_activation") != "linear":
            raise serialization.ModelFormatError("unsupported activation tags")
        model = cls(*(serialization.unpack_array(payload[k]) for k in ("w1", "b1", "w2", "b2")))
        dims = (model.input_count, model.hidden_count, model.output_count)
        if dims != (payload["input_count"], payload["hidden_count"], payload["output_count"]):
            raise serialization.ModelFormatError("recorded dimensions disagree with weight arrays")
        return model


def unflatten(theta: np.ndarray, d: int, M: int, K: int) -> MlpModel:
    theta = np.asarray(theta, dtype=float)
    i = 0
    parts = []
    for shape in ((M, d), (M,), (K, M), (K,)):
        size = math.prod(shape)
        parts.append(theta[i : i + size].reshape(shape))
        i += size
    if i != theta.size:
        raise DataError(f"expected {i} parameters, got {theta.size}")
    return MlpModel(*parts)


def init_model(d: int, M: int, K: int, seed: int, scale: float | None = None) -> MlpModel:
    """Uniform weights in [-s, s], s = 1/sqrt(fan-in) unless ``scale`` is given."""
    rng = np.random.default_rng(seed)
    s1 = scale if scale is not None else 1.0 / math.sqrt(d)
    s2 = scale if scale is not None else 1.0 / math.sqrt(M)
    return MlpModel(
        rng.uniform(-s1, s1, (M, d)),
        rng.uniform(-s1, s1, M),
        rng.uniform(-s2, s2, (K, M)),
        rng.uniform(-s2, s2, K),
    )


def _batch(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.input_count:
        raise DataError(f"input has {x.shape[-1]} features, network expects {model.input_count}")
    return x


def hidden(model: MlpModel, x) -> np.ndarray:
    x = _batch(model, x)
    return np.tanh(x @ model.w1.T + model.b1)


def forward(model: MlpModel, x) -> np.ndarray:
    """Network output for one vector (shape (d,)) or a batch (shape (n, d))."""
    return hidden(model, x) @ model.w2.T + model.b2


def _pair(model: MlpModel, inputs, targets) -> tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(_batch(model, inputs))
    T = np.atleast_2d(np.asarray(targets, dtype=float))
    if T.shape != (X.shape[0], model.output_count):
        raise DataError(f"targets shape {T.shape} does not match ({X.shape[0]}, {model.output_count})")
    return X, T


def loss(model: MlpModel, inputs, targets) -> float:
    """Half the summed squared error over rows and outputs."""
    X, T = _pair(model, inputs, targets)
    r = forward(model, X) - T
    return 0.5 * float(np.sum(r * r))


def gradient(model: MlpModel, inputs, targets) -> MlpModel:
    """Backpropagated gradient of :func:`loss`, returned in weight shape."""
    X, T = _pair(model, inputs, targets)
    H = hidden(model, X)
    R = H @ model.w2.T + model.b2 - T
    dH = (R @ model.w2) * (1.0 - H * H)
    return MlpModel(dH.T @ X, dH.sum(axis=0), R.T @ H, R.sum(axis=0))


@dataclass(frozen=True)
class TrainConfig:
    max_cycles: int = 1000
    patience: int = 50
    seed: int = 0
    weight_init_scale: float | None = None

    def __post_init__(self):
        if self.max_cycles < 1 or self.patience < 1:
            raise DataError("max_cycles and patience must be at least 1")


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    validation_loss: list[float] = field(default_factory=list)
    best_cycle: int = 0
    stopped_early: bool = False

    def __len__(self):
        return len(self.train_loss)


def train_scg(model: MlpModel, train, validation, config: TrainConfig) -> tuple[MlpModel, History]:
    """Scaled conjugate gradient with validation early stopping.

    ``train`` and ``validation`` are ``(inputs, targets)`` pairs.  Cycle 0 is
    the starting model, so the returned validation loss never exceeds it.
    """
    X, T = _pair(model, *train)
    Xv, Tv = _pair(model, *validation)
    if X.shape[0] == 0 or Xv.shape[0] == 0:
        raise DataError("training and validation batches must be nonempty")
    d, M, K = model.input_count, model.hidden_count, model.output_count

    def f(theta):
        return loss(unflatten(theta, d, M, K), X, T)

    def g(theta):
        return gradient(unflatten(theta, d, M, K), X, T).flat()

    def val(theta):
        return loss(unflatten(theta, d, M, K), Xv, Tv)

    x = model.flat()
    n = x.size
    fold = fnow = f(x)
    if not math.isfinite(fold):
        raise NumericalError("initial training loss is not finite", cycle=0)
    grad_new = g(x)
    grad_old = grad_new
    direction = -grad_new
    lam = SCG_LAMBDA
    success = True
    n_success = 0
    mu = kappa = gamma = 0.0

    history = History()
    best_theta, best_val = x.copy(), val(x)
    stale = 0
    for cycle in range(1, config.max_cycles + 1):
        if success:
            mu = direction @ grad_new
            if mu >= 0:
                direction = -grad_new
                mu = direction @ grad_new
            kappa = direction @ direction
            if kappa < np.finfo(float).eps:
                break
            sigma = SCG_SIGMA / math.sqrt(kappa)
            gamma = direction @ (g(x + sigma * direction) - grad_new) / sigma

        delta = gamma + lam * kappa
        if delta <= 0:
            delta = lam * kappa
            lam = lam - gamma / kappa
        alpha = -mu / delta
        x_new = x + alpha * direction
        f_new = f(x_new)
        if not math.isfinite(f_new):
            raise NumericalError(f"training loss became non-finite at cycle {cycle}", cycle=cycle)
        comparison = 2.0 * (f_new - fold) / (alpha * mu)
        if comparison >= 0:
            success = True
            n_success += 1
            x = x_new
            fnow = f_new
        else:
            success = False
            fnow = fold

        if success:
            fold = f_new
            grad_old = grad_new
            grad_new = g(x)

        v = val(x)
        history.train_loss.append(fnow)
        history.validation_loss.append(v)
        if v < best_val:
            best_val, best_theta, history.best_cycle = v, x.copy(), cycle
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                history.stopped_early = True
                break

        if success and grad_new @ grad_new == 0.0:
            break
        if comparison < 0.25:
            lam = min(4.0 * lam, _LAMBDA_MAX)
        if comparison > 0.75:
            lam = max(0.5 * lam, _LAMBDA_MIN)
        if n_success == n:
            direction = -grad_new
            n_success = 0
        elif success:
            beta = (grad_old - grad_new) @ grad_new / mu
            direction = beta * direction - grad_new

    return unflatten(best_theta, d, M, K), history


def mean_squared_error(model: MlpModel, inputs, targets) -> float:
    X, T = _pair(model, inputs, targets)
    r = forward(model, X) - T
    return float(np.mean(r * r))


def _argmin_prefer_small(table: dict[int, float], tol: float = 1e-12) -> int:
    best = None
    for m in sorted(table):
        if best is None or table[m] < table[best] - tol:
            best = m
    return best


def select_hidden_count(candidates, train, validation, config: TrainConfig, repeats: int = 1, output_count=None):
    """Average validation MSE over ``repeats`` trainings per hidden count.

    Returns ``(best_M, {M: mean validation MSE})``; near-ties (1e-12) go to
    the smaller network.
    """
    candidates = [int(c) for c in candidates]
    if not candidates or any(c < 1 for c in candidates):
        raise DataError("hidden-count candidates must be positive integers")
    if len(candidates) == 1:
        return candidates[0], {}
    X, T = np.atleast_2d(train[0]), np.atleast_2d(train[1])
    d, K = X.shape[1], output_count or T.shape[1]
    seeds = np.random.SeedSequence(config.seed)
    table = {}
    for M in candidates:
        errors = []
        for r in range(repeats):
            seed = int(np.random.SeedSequence(seeds.entropy, spawn_key=(M, r)).generate_state(1)[0])
            start = init_model(d, M, K, seed, config.weight_init_scale)
            trained, _ = train_scg(start, train, validation, config)
            errors.append(mean_squared_error(trained, *validation))
        table[M] = float(np.mean(errors))
    return _argmin_prefer_small(table), table


def save_model(path, model: MlpModel) -> None:
    serialization.save(path, "mlp", model.to_payload())


def load_model(path) -> MlpModel:
    _, payload = serialization.load(path, "mlp")
    return MlpModel.from_payload(payload)
