"""Impact-cost surrogate: a small fully-connected network trained in numpy.

The network maps a touchdown descriptor — impact features followed by the
four cable group lengths — to the scalar force metric of the resulting
landing.  Inputs and targets are normalized with statistics frozen at
training time, training uses minibatch Adam on mean-squared error, and the
model exposes an analytic gradient with respect to the cable lengths so a
planner can descend it directly.

The weight dump is a plain text format (`save_surrogate` / `load_surrogate`)
so that repeated runs with the same seed produce byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from softgrasp.errors import ConfigError, DivergenceError

__all__ = [
    "SurrogateModel",
    "TrainingReport",
    "train_surrogate",
    "surrogate_input_gradient",
    "save_surrogate",
    "load_surrogate",
]

#: Number of trailing inputs that hold the cable group lengths.
N_LENGTH_INPUTS = 4

#: Default hidden layer widths.
DEFAULT_HIDDEN = (64, 64, 64)

#: Floor applied to normalization scales so constant columns stay finite.
SCALE_FLOOR = 1e-8

_ACTIVATIONS = ("tanh", "identity")

_FORMAT_TAG = "softgrasp-surrogate"
_FORMAT_VERSION = 1


@dataclass
class TrainingReport:
    """Summary of one training run."""

    first_epoch_loss: float
    final_epoch_loss: float
    holdout_mse: float
    holdout_rmse: float
    relative_rmse: float
    n_train: int
    n_holdout: int
    epochs: int


@dataclass
class SurrogateModel:
    """Fully-connected regressor with frozen input/target normalization.

    ``weights[i]`` has shape ``(fan_in, fan_out)``; every hidden layer uses
    the configured activation and the output layer is linear.  ``predict``
    works on a single input vector or a batch of rows.  The trailing
    :data:`N_LENGTH_INPUTS` inputs are the cable group lengths.
    """

    weights: list
    biases: list
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_scale: float
    activation: str = "tanh"
    report: TrainingReport | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(
                f"activation must be one of {_ACTIVATIONS}, "
                f"got {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ConfigError("weights and biases must pair up per layer")
        self.x_mean = np.asarray(self.x_mean, dtype=float)
        self.x_scale = np.asarray(self.x_scale, dtype=float)
        if np.any(self.x_scale <= 0.0) or self.y_scale <= 0.0:
            raise ConfigError("normalization scales must be positive")

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    def _act(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "tanh":
            return np.tanh(z)
        return z

    def _act_deriv(self, a: np.ndarray) -> np.ndarray:
        """Derivative of the activation, expressed via its output ``a``."""
        if self.activation == "tanh":
            return 1.0 - a * a
        return np.ones_like(a)

    def _forward(self, x: np.ndarray):
        """Run the network; returns (normalized activations, raw output)."""
        acts = [(x - self.x_mean) / self.x_scale]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            acts.append(self._act(acts[-1] @ w + b))
        out = acts[-1] @ self.weights[-1] + self.biases[-1]
        return acts, out

    def predict(self, x):
        """Predicted force metric for one input vector or a batch of rows."""
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        if arr.shape[1] != self.n_inputs:
            raise ConfigError(
                f"expected {self.n_inputs} inputs, got {arr.shape[1]}")
        _, out = self._forward(arr)
        y = self.y_mean + self.y_scale * out[:, 0]
        return float(y[0]) if single else y


def surrogate_input_gradient(model: SurrogateModel, x) -> np.ndarray:
    """Analytic gradient of the prediction w.r.t. the cable lengths.

    Backpropagates through the network and both normalizations and returns
    the gradient restricted to the trailing :data:`N_LENGTH_INPUTS` inputs —
    the components a length planner can actually move.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != model.n_inputs:
        raise ConfigError(
            f"expected a single input vector of length {model.n_inputs}")
    acts, _ = model._forward(arr[None, :])
    # d(raw output)/d(last hidden activation)
    grad = model.weights[-1][:, 0].copy()
    for w, a in zip(reversed(model.weights[:-1]), reversed(acts[1:])):
        grad = w @ (model._act_deriv(a[0]) * grad)
    full = model.y_scale * grad / model.x_scale
    return full[-N_LENGTH_INPUTS:]


def _init_layers(rng: np.random.Generator, sizes):
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def train_surrogate(features, targets, seed: int = 0,
                    hidden=DEFAULT_HIDDEN, epochs: int = 500,
                    batch_size: int = 32, learning_rate: float = 1e-3,
                    holdout_fraction: float = 0.2,
                    activation: str = "tanh") -> SurrogateModel:
    """Fit the surrogate to (features, targets) rows with minibatch Adam.

    A seeded fraction of the rows is held out and never trained on; its
    mean-squared error lands in ``model.report`` together with the first and
    final epoch losses.  Raises :class:`ConfigError` on fewer than 50 rows
    or malformed shapes, and :class:`DivergenceError` if the training loss
    stops being finite.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if x.ndim != 2:
        raise ConfigError("features must be a 2-D array of rows")
    if x.shape[0] != y.shape[0]:
        raise ConfigError(
            f"features has {x.shape[0]} rows but targets has {y.shape[0]}")
    if x.shape[0] < 50:
        raise ConfigError(
            f"need at least 50 samples to train, got {x.shape[0]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ConfigError("features and targets must be finite")
    if not 0.0 < holdout_fraction < 1.0:
        raise ConfigError("holdout_fraction must lie in (0, 1)")

    rng = np.random.default_rng(seed)
    n = x.shape[0]
    perm = rng.permutation(n)
    n_holdout = max(1, int(round(holdout_fraction * n)))
    hold_idx, train_idx = perm[:n_holdout], perm[n_holdout:]
    x_train, y_train = x[train_idx], y[train_idx]
    x_hold, y_hold = x[hold_idx], y[hold_idx]

    x_mean = x_train.mean(axis=0)
    x_scale = np.maximum(x_train.std(axis=0), SCALE_FLOOR)
    y_mean = float(y_train.mean())
    y_scale = float(max(y_train.std(), SCALE_FLOOR))

    sizes = (x.shape[1], *hidden, 1)
    weights, biases = _init_layers(rng, sizes)
    model = SurrogateModel(weights, biases, x_mean, x_scale, y_mean, y_scale,
                           activation=activation)

    xn = (x_train - x_mean) / x_scale
    yn = (y_train - y_mean) / y_scale

    params = weights + biases
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    n_train = xn.shape[0]
    first_loss = None
    last_loss = None
    for _ in range(epochs):
        order = rng.permutation(n_train)
        epoch_loss = 0.0
        for start in range(0, n_train, batch_size):
            batch = order[start:start + batch_size]
            xb, yb = xn[batch], yn[batch]

            # forward on the already-normalized batch
            acts = [xb]
            for w, b in zip(weights[:-1], biases[:-1]):
                acts.append(model._act(acts[-1] @ w + b))
            out = acts[-1] @ weights[-1] + biases[-1]
            err = out[:, 0] - yb
            epoch_loss += float(err @ err)

            # backward: mean-squared-error gradient
            delta = (2.0 / xb.shape[0]) * err[:, None]
            grads_w = [None] * len(weights)
            grads_b = [None] * len(biases)
            for li in range(len(weights) - 1, -1, -1):
                grads_w[li] = acts[li].T @ delta
                grads_b[li] = delta.sum(axis=0)
                if li > 0:
                    delta = (delta @ weights[li].T) * model._act_deriv(acts[li])

            step += 1
            corr1 = 1.0 - beta1 ** step
            corr2 = 1.0 - beta2 ** step
            for p, m, v, g in zip(params, m_state, v_state,
                                  grads_w + grads_b):
                m *= beta1
                m += (1.0 - beta1) * g
                v *= beta2
                v += (1.0 - beta2) * g * g
                p -= learning_rate * (m / corr1) / (np.sqrt(v / corr2) + eps)

        epoch_loss /= n_train
        if not np.isfinite(epoch_loss):
            raise DivergenceError(
                f"training loss became non-finite ({epoch_loss})")
        if first_loss is None:
            first_loss = epoch_loss
        last_loss = epoch_loss

    pred_hold = model.predict(x_hold)
    residuals = pred_hold - y_hold
    mse = float(residuals @ residuals / y_hold.shape[0])
    rmse = float(np.sqrt(mse))
    denom = max(float(np.mean(np.abs(y_hold))), SCALE_FLOOR)
    model.report = TrainingReport(
        first_epoch_loss=float(first_loss),
        final_epoch_loss=float(last_loss),
        holdout_mse=mse,
        holdout_rmse=rmse,
        relative_rmse=rmse / denom,
        n_train=int(n_train),
        n_holdout=int(n_holdout),
        epochs=int(epochs),
    )
    return model


def _write_array(fh, name: str, arr: np.ndarray) -> None:
    flat = np.asarray(arr, dtype=float).reshape(-1)
    dims = " ".join(str(d) for d in np.asarray(arr).shape)
    fh.write(f"{name} {dims}\n")
    fh.write(" ".join(repr(float(v)) for v in flat) + "\n")


def save_surrogate(model: SurrogateModel, path) -> None:
    """Write the model as a deterministic plain-text weight dump."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_FORMAT_TAG} v{_FORMAT_VERSION}\n")
        fh.write(f"activation {model.activation}\n")
        fh.write(f"layers {len(model.weights)}\n")
        for i, (w, b) in enumerate(zip(model.weights, model.biases)):
            _write_array(fh, f"W{i}", w)
            _write_array(fh, f"b{i}", b)
        _write_array(fh, "x_mean", model.x_mean)
        _write_array(fh, "x_scale", model.x_scale)
        _write_array(fh, "y_mean", np.array([model.y_mean]))
        _write_array(fh, "y_scale", np.array([model.y_scale]))


def _read_array(lines, idx: int, name: str):
    header = lines[idx].split()
    if header[0] != name:
        raise ConfigError(f"model file: expected array {name!r}, "
                          f"found {header[0]!r}")
    shape = tuple(int(d) for d in header[1:])
    values = np.array([float(v) for v in lines[idx + 1].split()])
    return values.reshape(shape), idx + 2


def load_surrogate(path) -> SurrogateModel:
    """Read a model written by :func:`save_surrogate`."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != f"{_FORMAT_TAG} v{_FORMAT_VERSION}":
        raise ConfigError(f"not a recognized surrogate model file: {path}")
    activation = lines[1].split()[1]
    n_layers = int(lines[2].split()[1])
    idx = 3
    weights, biases = [], []
    for i in range(n_layers):
        w, idx = _read_array(lines, idx, f"W{i}")
        b, idx = _read_array(lines, idx, f"b{i}")
        weights.append(w)
        biases.append(b)
    x_mean, idx = _read_array(lines, idx, "x_mean")
    x_scale, idx = _read_array(lines, idx, "x_scale")
    y_mean, idx = _read_array(lines, idx, "y_mean")
    y_scale, idx = _read_array(lines, idx, "y_scale")
    return SurrogateModel(weights, biases, x_mean, x_scale,
                          float(y_mean[0]), float(y_scale[0]),
                          activation=activation)
