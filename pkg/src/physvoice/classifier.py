"""Dropout MLP head with Monte-Carlo uncertainty estimates.

The network is a two-hidden-layer ReLU MLP (input -> 64 -> 32 -> 2) with
inverted dropout after each hidden activation. Training keeps dropout on;
deterministic prediction turns it off; Monte-Carlo prediction keeps it on
for N stochastic passes and averages the per-pass class probabilities.

Uncertainty decomposition is in bits:

* total: entropy of the averaged probabilities,
* aleatoric: average of the per-pass entropies,
* epistemic: their difference (the mutual information between the
  prediction and the dropout mask). With dropout disabled every pass is
  identical and the epistemic term is exactly zero.

All forward math is float64 numpy; training is plain minibatch SGD on a
class-weighted cross-entropy, so every gradient here is written out by
hand and can be checked against finite differences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import DegenerateLabels, EmptyClass, FormatError, ShapeError
from .rngutil import substream
from .validation import as_float_matrix, as_float_vector, as_label_vector, check_n_features

_MAGIC = b"MLP1"
N_CLASSES = 2


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings shared by local and centralized training."""

    epochs: int = 150
    learning_rate: float = 0.05
    batch_size: int = 32
    seed: int = 0
    dropout_rate: float = 0.2
    class_weighting: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")


def entropy_bits(p: np.ndarray) -> float:
    """Shannon entropy in bits with the 0 log 0 = 0 convention."""
    p = np.asarray(p, dtype=np.float64)
    terms = np.where(p > 0.0, p * np.log2(np.where(p > 0.0, p, 1.0)), 0.0)
    return float(-np.sum(terms))


@dataclass(frozen=True, eq=False)
class McPredictive:
    """Monte-Carlo predictive distribution for one input.

    ``samples`` holds one (p_genuine, p_fake) row per stochastic pass;
    ``mean_p`` is their average in the same order.
    """

    samples: np.ndarray
    mean_p: np.ndarray
    total_u: float
    aleatoric_u: float
    epistemic_u: float

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "McPredictive":
        arr = as_float_matrix(samples, "samples")
        if arr.shape[0] < 1 or arr.shape[1] != N_CLASSES:
            raise ShapeError(f"samples must be (N, {N_CLASSES}), got {arr.shape}")
        if np.any(arr < -1e-9) or np.max(np.abs(arr.sum(axis=1) - 1.0)) > 1e-6:
            raise ShapeError("each sample must be a probability pair summing to 1")
        mean_p = arr.mean(axis=0)
        total = entropy_bits(mean_p)
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(arr > 0.0, np.log2(np.where(arr > 0.0, arr, 1.0)), 0.0)
        per_pass = -np.sum(arr * logs, axis=1)
        aleatoric = float(np.mean(per_pass))
        return cls(arr, mean_p, total, aleatoric, total - aleatoric)

    @classmethod
    def deterministic(cls, p: np.ndarray, n_samples: int) -> "McPredictive":
        """Degenerate predictive for dropout 0: every pass equals ``p``.

        Built without averaging so total and aleatoric entropy are the
        same float and the epistemic term is exactly zero.
        """
        p = as_float_vector(p, "p")
        h = entropy_bits(p)
        return cls(np.tile(p, (n_samples, 1)), p.copy(), h, h, 0.0)

    @property
    def p_genuine(self) -> float:
        return float(self.mean_p[0])


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


def loss_and_gradients(
    params: list[np.ndarray],
    x: np.ndarray,
    y: np.ndarray,
    sample_weight: np.ndarray,
    masks: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[float, list[np.ndarray]]:
    """Weighted cross-entropy and its exact gradients for fixed dropout masks.

    ``masks`` are the inverted-dropout multipliers (0 or 1/(1-p)) for the
    two hidden layers; None means no dropout. The loss is the weighted
    mean, so gradients stay on a comparable scale for any batch size.
    """
    w1, b1, w2, b2, w3, b3 = params
    m1 = masks[0] if masks is not None else 1.0
    m2 = masks[1] if masks is not None else 1.0

    l1 = x @ w1 + b1
    a1 = _relu(l1) * m1
    l2 = a1 @ w2 + b2
    a2 = _relu(l2) * m2
    logits = a2 @ w3 + b3

    logp = _log_softmax(logits)
    n = x.shape[0]
    weight_sum = float(np.sum(sample_weight))
    loss = float(-np.sum(sample_weight * logp[np.arange(n), y]) / weight_sum)

    p = np.exp(logp)
    one_hot = np.zeros_like(p)
    one_hot[np.arange(n), y] = 1.0
    d_logits = (p - one_hot) * (sample_weight / weight_sum)[:, None]

    g_w3 = a2.T @ d_logits
    g_b3 = d_logits.sum(axis=0)
    d_a2 = (d_logits @ w3.T) * m2
    d_l2 = d_a2 * (l2 > 0.0)
    g_w2 = a1.T @ d_l2
    g_b2 = d_l2.sum(axis=0)
    d_a1 = (d_l2 @ w2.T) * m1
    d_l1 = d_a1 * (l1 > 0.0)
    g_w1 = x.T @ d_l1
    g_b1 = d_l1.sum(axis=0)
    return loss, [g_w1, g_b1, g_w2, g_b2, g_w3, g_b3]


def init_params(
    n_features: int, hidden1: int, hidden2: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """He-initialized weights, zero biases."""
    sizes = [(n_features, hidden1), (hidden1, hidden2), (hidden2, N_CLASSES)]
    params: list[np.ndarray] = []
    for fan_in, fan_out in sizes:
        params.append(rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
        params.append(np.zeros(fan_out))
    return params


class DropoutMlpClassifier(BaseEstimator, ClassifierMixin):
    """MC-dropout MLP over fused feature rows; labels are 0 = deepfake, 1 = genuine.

    Inputs are divided by their per-column training std (floored at 1e-8)
    before entering the network; the learned scale travels with the model
    and is folded into the first layer on save, so files stay plain MLPs.
    """

    def __init__(
        self,
        hidden1: int = 64,
        hidden2: int = 32,
        dropout_rate: float = 0.2,
        epochs: int = 150,
        learning_rate: float = 0.05,
        batch_size: int = 32,
        seed: int = 0,
        class_weighting: bool = True,
    ):
        self.hidden1 = hidden1
        self.hidden2 = hidden2
        self.dropout_rate = dropout_rate
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.seed = seed
        self.class_weighting = class_weighting

    @classmethod
    def from_config(cls, config: TrainConfig, hidden1: int = 64, hidden2: int = 32):
        return cls(
            hidden1=hidden1,
            hidden2=hidden2,
            dropout_rate=config.dropout_rate,
            epochs=config.epochs,
            learning_rate=config.learning_rate,
            batch_size=config.batch_size,
            seed=config.seed,
            class_weighting=config.class_weighting,
        )

    # -- training ---------------------------------------------------------

    def _class_sample_weights(self, y: np.ndarray) -> np.ndarray:
        if not self.class_weighting:
            return np.ones(y.shape[0])
        counts = np.bincount(y, minlength=N_CLASSES)
        per_class = y.shape[0] / (N_CLASSES * np.maximum(counts, 1))
        return per_class[y]

    def _check_hyperparams(self) -> None:
        TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            seed=self.seed,
            dropout_rate=self.dropout_rate,
            class_weighting=self.class_weighting,
        )
        if self.hidden1 < 1 or self.hidden2 < 1:
            raise ValueError("hidden layer widths must be at least 1")

    def fit(self, X, y):
        self._check_hyperparams()
        x = as_float_matrix(X, "X")
        labels = as_label_vector(y, x.shape[0])
        if np.unique(labels).shape[0] < N_CLASSES:
            raise DegenerateLabels("training data must contain both classes")
        scale = np.std(x, axis=0)
        self.input_scale_ = np.where(scale < 1e-8, 1.0, scale)
        self.classes_ = np.arange(N_CLASSES)
        self.n_features_in_ = x.shape[1]
        self._params = init_params(
            x.shape[1], self.hidden1, self.hidden2, substream(self.seed, "init")
        )
        self.loss_curve_ = self.run_epochs(
            x, labels, self.epochs, substream(self.seed, "train")
        )
        return self

    def run_epochs(
        self, X, y, epochs: int, rng: np.random.Generator
    ) -> list[float]:
        """SGD epochs starting from the current weights; returns per-epoch losses.

        Exposed so a federated client can continue optimization from global
        weights with its own generator.
        """
        x = np.asarray(X, dtype=np.float64) / self.input_scale_
        labels = as_label_vector(y, x.shape[0])
        sample_weight = self._class_sample_weights(labels)
        n = x.shape[0]
        batch = min(self.batch_size, n)
        curve: list[float] = []
        for _ in range(epochs):
            order = rng.permutation(n)
            losses: list[float] = []
            sizes: list[int] = []
            for start in range(0, n, batch):
                idx = order[start : start + batch]
                masks = self._sample_masks(idx.shape[0], rng)
                loss, grads = loss_and_gradients(
                    self._params, x[idx], labels[idx], sample_weight[idx], masks
                )
                for p, g in zip(self._params, grads):
                    p -= self.learning_rate * g
                losses.append(loss)
                sizes.append(idx.shape[0])
            curve.append(float(np.average(losses, weights=sizes)))
        return curve

    def _sample_masks(
        self, n_rows: int, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray] | None:
        p = self.dropout_rate
        if p == 0.0:
            return None
        keep = 1.0 - p
        m1 = (rng.random((n_rows, self.hidden1)) >= p) / keep
        m2 = (rng.random((n_rows, self.hidden2)) >= p) / keep
        return m1, m2

    # -- deterministic inference ------------------------------------------

    def _require_fitted(self) -> None:
        if not hasattr(self, "_params"):
            raise ShapeError("classifier must be fitted before prediction")

    def _forward(self, x_scaled: np.ndarray) -> np.ndarray:
        w1, b1, w2, b2, w3, b3 = self._params
        a1 = _relu(x_scaled @ w1 + b1)
        a2 = _relu(a1 @ w2 + b2)
        return a2 @ w3 + b3

    def predict_proba(self, X) -> np.ndarray:
        self._require_fitted()
        x = as_float_matrix(X, "X")
        check_n_features(x, self.n_features_in_, "X")
        logits = self._forward(x / self.input_scale_)
        return np.exp(_log_softmax(logits))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def decision_scores(self, X) -> np.ndarray:
        """Deterministic genuine-class probability; higher means more genuine."""
        return self.predict_proba(X)[:, 1]

    # -- Monte-Carlo inference ---------------------------------------------

    def mc_predict(
        self,
        x,
        n_samples: int = 50,
        seed: int = 0,
        stream: int | tuple = 0,
        dropout_rate: float | None = None,
    ) -> McPredictive:
        """N stochastic passes over one input.

        ``stream`` isolates the randomness of each input (callers use the
        input index, or a tuple path for nested loops), so batch order and
        parallel scheduling cannot change any result. ``dropout_rate``
        overrides the trained rate for sensitivity studies.
        """
        self._require_fitted()
        if n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        vec = as_float_vector(x, "x")
        check_n_features(vec, self.n_features_in_, "x")
        rate = self.dropout_rate if dropout_rate is None else float(dropout_rate)
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        z = vec / self.input_scale_
        w1, b1, w2, b2, w3, b3 = self._params
        a1 = _relu(z @ w1 + b1)
        if rate == 0.0:
            a2 = _relu(a1 @ w2 + b2)
            p = np.exp(_log_softmax((a2 @ w3 + b3)[None, :]))[0]
            return McPredictive.deterministic(p[::-1], n_samples)
        keep = 1.0 - rate
        path = stream if isinstance(stream, tuple) else (stream,)
        rng = substream(seed, "mc", *path)
        m1 = (rng.random((n_samples, self.hidden1)) >= rate) / keep
        m2 = (rng.random((n_samples, self.hidden2)) >= rate) / keep
        h1 = a1[None, :] * m1
        a2 = _relu(h1 @ w2 + b2) * m2
        logits = a2 @ w3 + b3
        probs = np.exp(_log_softmax(logits))
        # Rows flip to the (p_genuine, p_fake) order of McPredictive.
        return McPredictive.from_samples(probs[:, ::-1])

    def mc_predict_batch(
        self,
        X,
        n_samples: int = 50,
        seed: int = 0,
        dropout_rate: float | None = None,
    ) -> list[McPredictive]:
        x = as_float_matrix(X, "X")
        return [
            self.mc_predict(row, n_samples, seed, stream=i, dropout_rate=dropout_rate)
            for i, row in enumerate(x)
        ]

    # -- weight plumbing ----------------------------------------------------

    def get_weights(self) -> list[np.ndarray]:
        self._require_fitted()
        return [p.copy() for p in self._params]

    def set_weights(self, weights: list[np.ndarray]) -> None:
        self._require_fitted()
        if len(weights) != len(self._params):
            raise ShapeError(f"expected {len(self._params)} arrays, got {len(weights)}")
        for current, new in zip(self._params, weights):
            if current.shape != np.shape(new):
                raise ShapeError(f"weight shape {np.shape(new)} != {current.shape}")
        self._params = [np.array(w, dtype=np.float64) for w in weights]

    def init_untrained(self, n_features: int, seed_path: tuple = ()) -> "DropoutMlpClassifier":
        """Prepare seeded initial weights without any training pass."""
        self._check_hyperparams()
        self.classes_ = np.arange(N_CLASSES)
        self.n_features_in_ = n_features
        if not hasattr(self, "input_scale_"):
            self.input_scale_ = np.ones(n_features)
        self._params = init_params(
            n_features, self.hidden1, self.hidden2, substream(self.seed, "init", *seed_path)
        )
        return self


# -- calibration and summaries ---------------------------------------------

N_ECE_BINS = 10


def expected_calibration_error(preds: list[McPredictive], labels) -> float:
    """Equal-width 10-bin calibration error over max-probability confidence."""
    y = as_label_vector(np.asarray(labels), len(preds))
    if len(preds) == 0:
        raise EmptyClass("cannot compute calibration on an empty prediction set")
    conf = np.array([float(np.max(p.mean_p)) for p in preds])
    predicted = np.array([1 if p.mean_p[0] >= p.mean_p[1] else 0 for p in preds])
    correct = (predicted == y).astype(np.float64)
    bins = np.clip((conf * N_ECE_BINS).astype(int), 0, N_ECE_BINS - 1)
    n = conf.shape[0]
    ece = 0.0
    for b in range(N_ECE_BINS):
        in_bin = bins == b
        count = int(np.sum(in_bin))
        if count == 0:
            continue
        ece += (count / n) * abs(float(np.mean(correct[in_bin])) - float(np.mean(conf[in_bin])))
    return float(ece)


@dataclass(frozen=True)
class UncertaintySummary:
    genuine_mean_total_u: float
    fake_mean_total_u: float
    relative_gap: float


def uncertainty_summary(preds: list[McPredictive], labels) -> UncertaintySummary:
    """Class-conditional mean total uncertainty and the fake-vs-genuine gap."""
    y = as_label_vector(np.asarray(labels), len(preds))
    totals = np.array([p.total_u for p in preds])
    genuine = totals[y == 1]
    fake = totals[y == 0]
    if genuine.size == 0 or fake.size == 0:
        raise EmptyClass("uncertainty summary needs both classes present")
    g_mean = float(np.mean(genuine))
    f_mean = float(np.mean(fake))
    if g_mean == 0.0:
        gap = 0.0 if f_mean == 0.0 else float("inf")
    else:
        gap = (f_mean - g_mean) / g_mean
    return UncertaintySummary(g_mean, f_mean, gap)


# -- persistence -------------------------------------------------------------


def save_model(path, model: DropoutMlpClassifier) -> None:
    """Binary layout: magic, u32 layer count, u32 widths, f32 dropout rate,
    then per layer the weight matrix (fan_in x fan_out, row-major) and bias,
    all little-endian f32. The input scale is folded into the first layer.
    """
    model._require_fitted()
    params = model.get_weights()
    params[0] = params[0] / model.input_scale_[:, None]
    widths = [model.n_features_in_, model.hidden1, model.hidden2, N_CLASSES]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(widths) - 1))
        fh.write(struct.pack(f"<{len(widths)}I", *widths))
        fh.write(struct.pack("<f", model.dropout_rate))
        for arr in params:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_model(path) -> DropoutMlpClassifier:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:4] != _MAGIC:
        raise FormatError(f"{path}: not a model file")
    (n_layers,) = struct.unpack_from("<I", blob, 4)
    offset = 8
    if n_layers != 3:
        raise FormatError(f"{path}: expected 3 layers, found {n_layers}")
    widths = struct.unpack_from(f"<{n_layers + 1}I", blob, offset)
    offset += 4 * (n_layers + 1)
    (dropout_rate,) = struct.unpack_from("<f", blob, offset)
    offset += 4
    expected = offset + sum(
        4 * (fan_in * fan_out + fan_out) for fan_in, fan_out in zip(widths[:-1], widths[1:])
    )
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    params: list[np.ndarray] = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        need = fan_in * fan_out
        w = np.frombuffer(blob, dtype="<f4", count=need, offset=offset)
        offset += 4 * need
        b = np.frombuffer(blob, dtype="<f4", count=fan_out, offset=offset)
        offset += 4 * fan_out
        params.append(w.astype(np.float64).reshape(fan_in, fan_out))
        params.append(b.astype(np.float64))
    model = DropoutMlpClassifier(
        hidden1=widths[1], hidden2=widths[2], dropout_rate=float(dropout_rate)
    )
    model.classes_ = np.arange(N_CLASSES)
    model.n_features_in_ = widths[0]
    model.input_scale_ = np.ones(widths[0])
    model._params = params
    return model
