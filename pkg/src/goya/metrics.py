"""Evaluation: distance correlation, linear probes, and retrieval.

Distance correlation here is the classical biased sample statistic: pairwise
Euclidean distance matrices are double-centered, dCov is the square root of
the mean elementwise product (clamped at zero if round-off drives it
negative), and the correlation normalizes by the geometric mean of the two
dVar terms. A value near 0 means the two representation spaces carry
unrelated geometry; identical spaces give exactly 1.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DegenerateInputError, ShapeError
from .losses import _softmax_ce_sum_with_grad
from .nn import FLOAT
from .optim import MomentumSgd, cosine_lr

_ZERO_NORM = 1e-12


# ---- distance correlation ----------------------------------------------------


def pairwise_euclidean(x: np.ndarray) -> np.ndarray:
    """Exact symmetric matrix of Euclidean distances between rows.

    Uses the Gram-matrix expansion, clamps tiny negative squared distances
    from cancellation, and symmetrizes so D[i, j] == D[j, i] bitwise.
    """
    x = np.asarray(x, dtype=FLOAT)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {x.shape}")
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    d = np.sqrt(d2, out=d2)
    d += d.T
    d *= 0.5
    np.fill_diagonal(d, 0.0)
    return d


def double_center(p: np.ndarray) -> np.ndarray:
    """Subtract row means, column means, and add back the grand mean.

    Output rows and columns each sum to (numerically) zero.
    """
    p = np.asarray(p, dtype=FLOAT)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {p.shape}")
    row = p.mean(axis=1, keepdims=True)
    col = p.mean(axis=0, keepdims=True)
    return p - row - col + p.mean()


def _dcov_sq(qa: np.ndarray, qb: np.ndarray, n: int) -> float:
    """Mean elementwise product of two centered distance matrices, i.e.
    squared dCov times n. Negative round-off is clamped to zero with a
    warning."""
    total = float(np.einsum("ij,ij->", qa, qb))
    if total < 0.0:
        warnings.warn(
            f"negative centered-product sum {total:.3e} clamped to 0", RuntimeWarning
        )
        total = 0.0
    return total


def distance_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Distance correlation between two row-aligned representation matrices.

    Raises DegenerateInputError when either side has zero distance variance
    (all rows identical), where the statistic is undefined.
    """
    a = np.asarray(a, dtype=FLOAT)
    b = np.asarray(b, dtype=FLOAT)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"expected 2-d matrices, got shapes {a.shape} and {b.shape}")
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"row counts differ: {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[0]
    if n < 2:
        raise ShapeError(f"need at least 2 rows, got {n}")
    qa = double_center(pairwise_euclidean(a))
    qb = double_center(pairwise_euclidean(b))
    var_a = _dcov_sq(qa, qa, n)
    var_b = _dcov_sq(qb, qb, n)
    if var_a <= 0.0 or var_b <= 0.0:
        raise DegenerateInputError(
            "distance correlation is undefined: a side has zero distance variance"
        )
    cov = _dcov_sq(qa, qb, n)
    # dCov = sqrt(sum)/n on each piece; the 1/n factors cancel in the ratio
    return float(np.sqrt(cov) / np.sqrt(np.sqrt(var_a * var_b)))


def distance_correlation_subsampled(a: np.ndarray, b: np.ndarray,
                                    max_n: int = 20000, rng_seed: int = 0) -> tuple[float, int]:
    """Distance correlation on at most ``max_n`` rows.

    Larger inputs are subsampled without replacement using ``rng_seed``;
    returns (value, rows actually used).
    """
    if max_n < 2:
        raise ConfigError(f"max_n must be >= 2, got {max_n}")
    a = np.asarray(a, dtype=FLOAT)
    b = np.asarray(b, dtype=FLOAT)
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"row counts differ: {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[0]
    if n > max_n:
        idx = np.random.default_rng(rng_seed).choice(n, size=max_n, replace=False)
        idx.sort()
        a = a[idx]
        b = b[idx]
        n = max_n
    return distance_correlation(a, b), n


# ---- linear probes ----------------------------------------------------------


@dataclass(frozen=True)
class ProbeConfig:
    """Hyperparameters for the linear probe: momentum SGD under a cosine
    schedule, batch size capped at the training set size."""

    lr: float = 0.02
    momentum: float = 0.9
    epochs: int = 90
    batch_size: int = 4096
    schedule: str = "cosine"

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ConfigError(f"probe lr must be positive, got {self.lr}")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError(f"probe momentum must lie in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            raise ConfigError(f"probe epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"probe batch_size must be >= 1, got {self.batch_size}")
        if self.schedule != "cosine":
            raise ConfigError(f"only the 'cosine' schedule is supported, got '{self.schedule}'")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ProbeConfig":
        if not isinstance(data, dict):
            raise ConfigError("probe config must be a JSON object")
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ConfigError(f"unknown probe config key '{unknown[0]}'")
        return cls(**data)


@dataclass
class LinearProbe:
    """Multinomial logistic regression weights: logits = x @ weight.T + bias."""

    weight: np.ndarray
    bias: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.weight.shape[0]

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=FLOAT)
        if x.ndim != 2 or x.shape[1] != self.weight.shape[1]:
            raise ShapeError(
                f"expected input shape (*, {self.weight.shape[1]}), got {x.shape}"
            )
        return x @ self.weight.T + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.logits(x).argmax(axis=1)


def _check_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be 1-d, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DataError(
            f"labels out of range [0, {n_classes}): {int(labels.min())}..{int(labels.max())}"
        )
    return labels.astype(np.int64)


def train_probe(x: np.ndarray, labels: np.ndarray, n_classes: int,
                cfg: ProbeConfig = ProbeConfig(), rng_seed: int = 0) -> LinearProbe:
    """Fit a linear probe from a frozen representation matrix.

    Weights start at zero; minibatch order reshuffles per epoch from
    ``rng_seed``. The input matrix is copied, never mutated.
    """
    x = np.array(x, dtype=FLOAT, copy=True)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeError(f"training matrix must be non-empty 2-d, got shape {x.shape}")
    labels = _check_labels(labels, n_classes)
    if labels.shape[0] != x.shape[0]:
        raise ShapeError(f"{labels.shape[0]} labels for {x.shape[0]} rows")
    if np.unique(labels).size < 2:
        raise DegenerateInputError("probe training labels contain a single class")
    n, d = x.shape
    probe = LinearProbe(weight=np.zeros((n_classes, d), dtype=FLOAT),
                        bias=np.zeros(n_classes, dtype=FLOAT))
    opt = MomentumSgd({"weight": probe.weight, "bias": probe.bias},
                      lr=cfg.lr, momentum=cfg.momentum)
    rng = np.random.default_rng(rng_seed)
    batch = min(cfg.batch_size, n)
    for epoch in range(cfg.epochs):
        opt.lr = cosine_lr(cfg.lr, epoch, cfg.epochs)
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            xb = x[idx]
            ce_sum, d_logits = _softmax_ce_sum_with_grad(probe.logits(xb), labels[idx])
            m = idx.shape[0]
            opt.step({"weight": d_logits.T @ xb / m, "bias": d_logits.sum(axis=0) / m})
    return probe


@dataclass
class ConfusionMatrix:
    """Integer count matrix, rows = true class, columns = predicted class."""

    counts: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    def normalized(self) -> np.ndarray:
        """Row-normalized rates; rows with no examples stay all zero."""
        totals = self.counts.sum(axis=1, keepdims=True).astype(FLOAT)
        safe = np.where(totals > 0, totals, 1.0)
        return self.counts / safe

    def per_class_accuracy(self) -> np.ndarray:
        """Diagonal of the normalized matrix; NaN for absent classes."""
        totals = self.counts.sum(axis=1).astype(FLOAT)
        diag = np.diagonal(self.counts).astype(FLOAT)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(totals > 0, diag / totals, np.nan)

    def write_csv(self, path, class_names: list[str] | None = None) -> None:
        k = self.n_classes
        if class_names is not None and len(class_names) != k:
            raise ShapeError(f"{len(class_names)} names for {k} classes")
        names = class_names or [str(i) for i in range(k)]
        lines = ["true\\pred," + ",".join(names)]
        for i in range(k):
            lines.append(names[i] + "," + ",".join(str(int(c)) for c in self.counts[i]))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class ProbeEvaluation:
    accuracy: float
    confusion: ConfusionMatrix


def evaluate_probe(probe: LinearProbe, x: np.ndarray, labels: np.ndarray) -> ProbeEvaluation:
    """Accuracy and confusion counts of a trained probe on held-out rows."""
    labels = _check_labels(labels, probe.n_classes)
    if labels.shape[0] == 0:
        raise ShapeError("cannot evaluate a probe on an empty set")
    preds = probe.predict(x)
    if preds.shape[0] != labels.shape[0]:
        raise ShapeError(f"{labels.shape[0]} labels for {preds.shape[0]} rows")
    k = probe.n_classes
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    accuracy = float(np.mean(preds == labels))
    return ProbeEvaluation(accuracy=accuracy, confusion=ConfusionMatrix(counts))


# ---- retrieval ---------------------------------------------------------------


def retrieve_topk(query: np.ndarray, db: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and similarities of the k rows of ``db`` most cosine-similar
    to ``query``, sorted by descending similarity, ties by ascending index."""
    db = np.asarray(db, dtype=FLOAT)
    if db.ndim != 2:
        raise ShapeError(f"database must be 2-d, got shape {db.shape}")
    if not (1 <= k <= db.shape[0]):
        raise ConfigError(f"k={k} outside [1, {db.shape[0]}]")
    q = np.asarray(query, dtype=FLOAT).ravel()
    if q.shape[0] != db.shape[1]:
        raise ShapeError(f"query dim {q.shape[0]} does not match database dim {db.shape[1]}")
    qn = np.linalg.norm(q)
    dn = np.linalg.norm(db, axis=1)
    if qn <= _ZERO_NORM or dn.min() <= _ZERO_NORM:
        raise DegenerateInputError("zero-norm vector in retrieval")
    sims = (db @ q) / (dn * qn)
    order = np.argsort(-sims, kind="stable")[:k]
    return order.astype(np.int64), sims[order]


def rank_neighbors(db: np.ndarray, k: int) -> np.ndarray:
    """Per-row top-k neighbor indices by cosine similarity, self excluded.

    Same ordering rule as ``retrieve_topk``. Returns an (n, k) index matrix.
    """
    db = np.asarray(db, dtype=FLOAT)
    n = db.shape[0]
    if not (1 <= k <= n - 1):
        raise ConfigError(f"k={k} outside [1, {n - 1}]")
    norms = np.linalg.norm(db, axis=1)
    if n and norms.min() <= _ZERO_NORM:
        raise DegenerateInputError("zero-norm row in retrieval database")
    unit = db / norms[:, None]
    sims = unit @ unit.T
    np.fill_diagonal(sims, -np.inf)
    return np.argsort(-sims, axis=1, kind="stable")[:, :k].astype(np.int64)


def precision_at_k(rankings: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Mean fraction of the first k ranked neighbors sharing the query label.

    ``rankings`` is an (n, >= k) neighbor index matrix with self already
    excluded, as produced by ``rank_neighbors``.
    """
    rankings = np.asarray(rankings)
    labels = np.asarray(labels)
    if rankings.ndim != 2 or rankings.shape[0] != labels.shape[0]:
        raise ShapeError(
            f"rankings shape {rankings.shape} does not match {labels.shape[0]} labels"
        )
    if not (1 <= k <= rankings.shape[1]):
        raise ConfigError(f"k={k} outside [1, {rankings.shape[1]}]")
    hits = labels[rankings[:, :k]] == labels[:, None]
    return float(hits.mean())
