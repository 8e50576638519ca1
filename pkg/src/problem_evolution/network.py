"""Feed-forward tanh network that learns a binary image as a coordinate->color map.

The training set is every pixel of the image: the input is the pixel's
normalised (x, y) coordinate and the target is +1 for color 1 and -1 for
color 0. Training is full-batch backpropagation with iRprop+ updates and
stops as soon as every pixel is classified correctly, or when the
convergence parameter has stalled.

All parameters live in one flat float64 vector; per-layer weight matrices
(fan_in x fan_out) and bias vectors are views into it. The inner loops are
compiled with numba, which is what makes the evolutionary search tractable.
"""

import csv
import enum
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_image, check_layer_sizes

ACT_A = 1.7159
ACT_B = 2.0 / 3.0

ETA_PLUS = 1.2
ETA_MINUS = 0.5
DELTA_0 = 0.1
DELTA_MIN = 1e-6
DELTA_MAX = 50.0

CONVERGENCE_MODES = ("recognized", "misrecognized")


def weight_count(layer_sizes):
    """Number of free parameters: connection weights plus one bias per
    non-input neuron.

    >>> weight_count((2, 8, 1))
    33
    """
    sizes = check_layer_sizes(layer_sizes)
    return sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))


def activation(x):
    """Scaled hyperbolic tangent ``1.7159 * tanh(2/3 * x)``."""
    return ACT_A * np.tanh(ACT_B * np.asarray(x, dtype=float))


def _layer_slices(sizes):
    slices = []
    offset = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = slice(offset, offset + fan_in * fan_out)
        offset += fan_in * fan_out
        b = slice(offset, offset + fan_out)
        offset += fan_out
        slices.append((fan_in, fan_out, w, b))
    return slices


@dataclass
class Network:
    """Layer sizes plus a flat parameter vector.

    Layout per layer: the ``fan_in x fan_out`` weight matrix in row-major
    order, then the ``fan_out`` biases.
    """

    layer_sizes: tuple
    params: np.ndarray

    def __post_init__(self):
        self.layer_sizes = check_layer_sizes(self.layer_sizes)
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.shape != (weight_count(self.layer_sizes),):
            raise ValueError(
                f"expected {weight_count(self.layer_sizes)} parameters for "
                f"{self.layer_sizes}, got shape {self.params.shape}"
            )

    @classmethod
    def zeros(cls, layer_sizes):
        return cls(layer_sizes, np.zeros(weight_count(layer_sizes)))

    @classmethod
    def random(cls, layer_sizes, rng, scale=0.5):
        """Fresh network with parameters uniform on ``[-scale, scale]``."""
        n = weight_count(layer_sizes)
        return cls(layer_sizes, rng.uniform(-scale, scale, size=n))

    @classmethod
    def from_layers(cls, weights, biases):
        sizes = [np.shape(weights[0])[0]] + [np.shape(w)[1] for w in weights]
        parts = []
        for w, b in zip(weights, biases):
            parts.append(np.asarray(w, dtype=float).ravel())
            parts.append(np.asarray(b, dtype=float).ravel())
        return cls(tuple(sizes), np.concatenate(parts))

    @property
    def weights(self):
        return [self.params[w].reshape(i, o) for i, o, w, _ in _layer_slices(self.layer_sizes)]

    @property
    def biases(self):
        return [self.params[b] for _, _, _, b in _layer_slices(self.layer_sizes)]

    def copy(self):
        return Network(self.layer_sizes, self.params.copy())

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return self.layer_sizes == other.layer_sizes and np.array_equal(self.params, other.params)


# ---------------------------------------------------------------------------
# training set


def pixel_coordinates(shape):
    """``(H*W, 2)`` array of normalised ``(x, y)`` pixel coordinates in row-major order.

    Column ``c`` maps to ``x = 2c/(W-1) - 1`` and row ``r`` to ``y = 2r/(H-1) - 1``;
    a single row or column maps to 0.
    """
    height, width = shape
    xs = np.linspace(-1.0, 1.0, width) if width > 1 else np.zeros(1)
    ys = np.linspace(-1.0, 1.0, height) if height > 1 else np.zeros(1)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def pixel_targets(img):
    return np.where(check_image(img).ravel() == 1, 1.0, -1.0)


# ---------------------------------------------------------------------------
# compiled kernels


@numba.njit(cache=True)
def _tanh(z):
    # expm1 form is ~4x faster than libm tanh here and accurate to a few ulp
    if z > 19.0:
        return 1.0
    if z < -19.0:
        return -1.0
    e = math.expm1(2.0 * z)
    return e / (e + 2.0)


@numba.njit(cache=True)
def _forward_all(params, sizes, X, acts):
    """Forward pass over all inputs, layer by layer.

    ``acts`` has one row per neuron (input neurons first) and one column per
    input; returns the row index of the output neuron.
    """
    n = X.shape[0]
    for p in range(n):
        acts[0, p] = X[p, 0]
        acts[1, p] = X[p, 1]
    offset = 0
    row_in = 0
    for l in range(sizes.shape[0] - 1):
        fan_in = sizes[l]
        fan_out = sizes[l + 1]
        row_out = row_in + fan_in
        boff = offset + fan_in * fan_out
        for j in range(fan_out):
            z = acts[row_out + j]
            bj = params[boff + j]
            for p in range(n):
                z[p] = bj
            for i in range(fan_in):
                w = params[offset + i * fan_out + j]
                src = acts[row_in + i]
                for p in range(n):
                    z[p] += w * src[p]
            for p in range(n):
                z[p] = ACT_A * _tanh(ACT_B * z[p])
        offset = boff + fan_out
        row_in = row_out
    return row_in


@numba.njit(cache=True)
def _outputs(params, sizes, X):
    acts = np.empty((sizes.sum(), X.shape[0]))
    return acts[_forward_all(params, sizes, X, acts)].copy()


def _work_buffers(sizes, n):
    rows = int(np.sum(sizes))
    return np.empty((rows, n)), np.empty((rows, n))


@numba.njit(cache=True)
def _loss_and_grad(params, sizes, X, T, grad, acts, deltas):
    """Full-batch mse, fraction recognised, and d(mse)/d(params) written into ``grad``.

    ``acts`` and ``deltas`` are ``(total_neurons, n_inputs)`` scratch buffers.
    """
    n = X.shape[0]
    row = _forward_all(params, sizes, X, acts)
    out = acts[row]
    d = deltas[row]
    sq = 0.0
    hits = 0
    # d(a tanh(b s))/ds = b/a * (a^2 - y^2)
    k = ACT_B / ACT_A
    a2 = ACT_A * ACT_A
    for p in range(n):
        err = out[p] - T[p]
        sq += err * err
        if out[p] * T[p] > 0.0:
            hits += 1
        d[p] = 2.0 * err / n * k * (a2 - out[p] * out[p])
    offset = params.shape[0]
    row_out = row
    for l in range(sizes.shape[0] - 2, -1, -1):
        fan_in = sizes[l]
        fan_out = sizes[l + 1]
        row_in = row_out - fan_in
        boff = offset - fan_out
        woff = boff - fan_in * fan_out
        for j in range(fan_out):
            dj = deltas[row_out + j]
            s = 0.0
            for p in range(n):
                s += dj[p]
            grad[boff + j] = s
        for i in range(fan_in):
            src = acts[row_in + i]
            for j in range(fan_out):
                dj = deltas[row_out + j]
                s = 0.0
                for p in range(n):
                    s += src[p] * dj[p]
                grad[woff + i * fan_out + j] = s
            if l > 0:
                back = deltas[row_in + i]
                for p in range(n):
                    back[p] = 0.0
                for j in range(fan_out):
                    w = params[woff + i * fan_out + j]
                    dj = deltas[row_out + j]
                    for p in range(n):
                        back[p] += w * dj[p]
                for p in range(n):
                    back[p] *= k * (a2 - src[p] * src[p])
        offset = woff
        row_out = row_in
    return sq / n, hits / n


@numba.njit(cache=True)
def _irprop_update(params, grad, step, prev_grad, prev_update, error, prev_error,
                   eta_plus, eta_minus, delta_min, delta_max):
    worse = error > prev_error
    for k in range(params.shape[0]):
        g = grad[k]
        s = prev_grad[k] * g
        if s > 0.0:
            step[k] = min(step[k] * eta_plus, delta_max)
            upd = -step[k] if g > 0.0 else step[k]
            params[k] += upd
            prev_update[k] = upd
            prev_grad[k] = g
        elif s < 0.0:
            step[k] = max(step[k] * eta_minus, delta_min)
            if worse:
                params[k] -= prev_update[k]
                prev_update[k] = -prev_update[k]
            else:
                prev_update[k] = 0.0
            prev_grad[k] = 0.0
        else:
            if g > 0.0:
                upd = -step[k]
            elif g < 0.0:
                upd = step[k]
            else:
                upd = 0.0
            params[k] += upd
            prev_update[k] = upd
            prev_grad[k] = g


# reason codes returned by the compiled training loop
_RECOGNIZED, _STALLED, _MAX_EPOCHS, _NON_FINITE = 0, 1, 2, 3


@numba.njit(cache=True)
def _train_loop(params, sizes, X, T, n_c, epsilon, max_epochs, misrecognized,
                eta_plus, eta_minus, delta_0, delta_min, delta_max):
    m = params.shape[0]
    grad = np.zeros(m)
    step = np.full(m, delta_0)
    prev_grad = np.zeros(m)
    prev_update = np.zeros(m)
    acts = np.empty((sizes.sum(), X.shape[0]))
    deltas = np.empty((sizes.sum(), X.shape[0]))
    prev_error = np.inf
    ref = np.inf
    ref_epoch = 0
    epoch = 0
    while True:
        mse, frac = _loss_and_grad(params, sizes, X, T, grad, acts, deltas)
        if not np.isfinite(mse):
            return _NON_FINITE, epoch, mse, frac
        if frac == 1.0:
            return _RECOGNIZED, epoch, mse, frac
        if misrecognized:
            c = mse * (1.0 - frac)
        elif frac == 0.0:
            c = mse
        else:
            c = mse * frac
        if c <= (1.0 - epsilon) * ref:
            ref = c
            ref_epoch = epoch
        elif epoch - ref_epoch >= n_c:
            return _STALLED, epoch, mse, frac
        if epoch >= max_epochs:
            return _MAX_EPOCHS, epoch, mse, frac
        _irprop_update(params, grad, step, prev_grad, prev_update, mse, prev_error,
                       eta_plus, eta_minus, delta_min, delta_max)
        prev_error = mse
        epoch += 1


def _sizes_array(net):
    return np.asarray(net.layer_sizes, dtype=np.int64)


# ---------------------------------------------------------------------------
# public API


def forward(net, coord):
    """Network output for one normalised ``(x, y)`` coordinate, or for an
    ``(n, 2)`` array of them."""
    X = np.asarray(coord, dtype=np.float64)
    single = X.ndim == 1
    X = np.ascontiguousarray(X.reshape(-1, 2))
    out = _outputs(net.params, _sizes_array(net), X)
    return float(out[0]) if single else out


def evaluate(net, img):
    """Return ``(mse, fraction_recognized)`` of ``net`` on every pixel of ``img``.

    A pixel counts as recognised when the output has the sign of its +/-1
    target; an output of exactly 0 is not recognised.
    """
    img = check_image(img)
    out = forward(net, pixel_coordinates(img.shape))
    t = pixel_targets(img)
    return float(np.mean((out - t) ** 2)), float(np.mean(out * t > 0))


def gradient(net, img):
    """Exact full-batch gradient of the mse with respect to the flat parameters."""
    img = check_image(img)
    grad = np.zeros_like(net.params)
    sizes = _sizes_array(net)
    _loss_and_grad(net.params, sizes, pixel_coordinates(img.shape), pixel_targets(img),
                   grad, *_work_buffers(sizes, img.size))
    return grad


@dataclass
class IRpropState:
    """Per-parameter iRprop+ bookkeeping.

    ``step`` is the current step size, ``prev_grad`` the last gradient used
    (zeroed after a sign change), ``prev_update`` the last parameter change.
    """

    step: np.ndarray
    prev_grad: np.ndarray
    prev_update: np.ndarray
    prev_error: float = math.inf
    eta_plus: float = ETA_PLUS
    eta_minus: float = ETA_MINUS
    delta_min: float = DELTA_MIN
    delta_max: float = DELTA_MAX

    @classmethod
    def for_network(cls, net, delta_0=DELTA_0, **constants):
        m = net.params.shape[0]
        return cls(np.full(m, float(delta_0)), np.zeros(m), np.zeros(m), **constants)


def irprop_plus_step(net, grad, state, current_error):
    """Apply one iRprop+ update in place to ``net`` and ``state``; returns both.

    Weight backtracking on a gradient sign change happens only when
    ``current_error`` is larger than the error passed on the previous call.
    """
    grad = np.ascontiguousarray(grad, dtype=np.float64)
    m = net.params.shape[0]
    for name, arr in (("grad", grad), ("step", state.step),
                      ("prev_grad", state.prev_grad), ("prev_update", state.prev_update)):
        if arr.shape != (m,):
            raise ValueError(f"{name} has shape {arr.shape}, network has {m} parameters")
    _irprop_update(net.params, grad, state.step, state.prev_grad, state.prev_update,
                   float(current_error), float(state.prev_error),
                   state.eta_plus, state.eta_minus, state.delta_min, state.delta_max)
    state.prev_error = float(current_error)
    return net, state


class Status(enum.Enum):
    FULLY_RECOGNIZED = "fully_recognized"
    STALLED = "stalled"


@dataclass
class TrainingOutcome:
    status: Status
    network: Network
    epochs_run: int
    mse: float
    fraction_recognized: float
    reason: str = field(default="")

    @property
    def recognized(self):
        return self.status is Status.FULLY_RECOGNIZED

    @property
    def non_finite(self):
        return self.reason == "non_finite"


_REASONS = {_RECOGNIZED: "recognized", _STALLED: "stalled",
            _MAX_EPOCHS: "max_epochs", _NON_FINITE: "non_finite"}


def train_to_recognition(net, img, n_c=1000, epsilon=0.01, max_epochs=20000,
                         convergence="recognized"):
    """Train a copy of ``net`` on ``img`` until full recognition or a stall.

    Each epoch is one full-batch gradient plus one iRprop+ update. The
    convergence parameter ``C = mse * fraction_recognized`` (or ``mse * (1 -
    fraction_recognized)`` with ``convergence="misrecognized"``) must drop by
    the relative fraction ``epsilon`` at least once every ``n_c`` epochs,
    otherwise training is declared stalled. While no pixel is recognised,
    ``C`` is 0 and the mse alone is monitored instead.

    Parameters
    ----------
    net : Network
        Initial weights; not modified.
    img : array-like of shape (H, W)
        Binary training image.
    n_c : int
        Stall window in epochs.
    epsilon : float
        Required relative decrease, in (0, 1).
    max_epochs : int
        Hard cap on the number of updates.
    convergence : {"recognized", "misrecognized"}

    Returns
    -------
    TrainingOutcome
    """
    if n_c < 1:
        raise ValueError(f"n_c must be >= 1, got {n_c}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    if max_epochs < 1:
        raise ValueError(f"max_epochs must be >= 1, got {max_epochs}")
    if convergence not in CONVERGENCE_MODES:
        raise ValueError(f"convergence must be one of {CONVERGENCE_MODES}")
    img = check_image(img)
    trained = net.copy()
    code, epochs, mse, frac = _train_loop(
        trained.params, _sizes_array(trained), pixel_coordinates(img.shape),
        pixel_targets(img), int(n_c), float(epsilon), int(max_epochs),
        convergence == "misrecognized",
        ETA_PLUS, ETA_MINUS, DELTA_0, DELTA_MIN, DELTA_MAX,
    )
    status = Status.FULLY_RECOGNIZED if code == _RECOGNIZED else Status.STALLED
    return TrainingOutcome(status, trained, int(epochs), float(mse), float(frac), _REASONS[code])


# ---------------------------------------------------------------------------
# persistence


def save_weights_csv(net, path):
    """Write parameters as ``layer,from,to,value`` rows; biases use ``from=-1``.

    Values are written with ``repr`` so a reload reproduces them bit for bit.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["layer", "from", "to", "value"])
        for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
            for i in range(w.shape[0]):
                for j in range(w.shape[1]):
                    writer.writerow([layer, i, j, repr(float(w[i, j]))])
            for j in range(b.shape[0]):
                writer.writerow([layer, -1, j, repr(float(b[j]))])


def load_weights_csv(path):
    rows = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(int(row["layer"]), []).append(
                (int(row["from"]), int(row["to"]), float(row["value"]))
            )
    if not rows or sorted(rows) != list(range(len(rows))):
        raise ValueError(f"{path}: layers missing or not numbered from 0")
    weights, biases = [], []
    for layer in range(len(rows)):
        entries = rows[layer]
        fan_in = 1 + max(f for f, _, _ in entries)
        fan_out = 1 + max(t for _, t, _ in entries)
        w = np.zeros((fan_in, fan_out))
        b = np.zeros(fan_out)
        for f, t, v in entries:
            if f < 0:
                b[t] = v
            else:
                w[f, t] = v
        weights.append(w)
        biases.append(b)
    return Network.from_layers(weights, biases)


# ---------------------------------------------------------------------------
# estimator


class ImageRecognizer(BaseEstimator):
    """Estimator that fits a network to one binary image.

    Parameters
    ----------
    layer_sizes : str or sequence of int, default="2-4-1"
    n_c : int, default=1000
    epsilon : float, default=0.01
    max_epochs : int, default=20000
    convergence : {"recognized", "misrecognized"}, default="recognized"
    init_scale : float, default=0.5
        Half-width of the uniform weight initialisation.
    random_state : int, Generator or None
    warm_start : Network or None
        Initial weights used instead of a random draw.

    Attributes
    ----------
    network_ : Network
    outcome_ : TrainingOutcome
    """

    def __init__(self, layer_sizes="2-4-1", n_c=1000, epsilon=0.01, max_epochs=20000,
                 convergence="recognized", init_scale=0.5, random_state=None,
                 warm_start=None):
        self.layer_sizes = layer_sizes
        self.n_c = n_c
        self.epsilon = epsilon
        self.max_epochs = max_epochs
        self.convergence = convergence
        self.init_scale = init_scale
        self.random_state = random_state
        self.warm_start = warm_start

    def fit(self, X, y=None):
        img = check_image(X, "X")
        sizes = check_layer_sizes(self.layer_sizes)
        if self.warm_start is not None:
            if self.warm_start.layer_sizes != sizes:
                raise ValueError("warm_start network has different layer sizes")
            init = self.warm_start
        else:
            init = Network.random(sizes, np.random.default_rng(self.random_state), self.init_scale)
        self.outcome_ = train_to_recognition(init, img, self.n_c, self.epsilon,
                                             self.max_epochs, self.convergence)
        self.network_ = self.outcome_.network
        self.image_shape_ = img.shape
        return self

    def decision_function(self, X):
        """Raw network output for an ``(n, 2)`` array of normalised coordinates."""
        return forward(self.network_, np.asarray(X, dtype=float).reshape(-1, 2))

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(np.uint8)

    def predict_image(self, shape=None):
        shape = self.image_shape_ if shape is None else shape
        return self.predict(pixel_coordinates(shape)).reshape(shape)

    def score(self, X, y=None):
        """Fraction of pixels of image ``X`` recognised."""
        return evaluate(self.network_, X)[1]
