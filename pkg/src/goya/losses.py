"""Pair selection and training objectives.

All pairwise objectives act on cosine similarity of row-normalized projector
outputs. Two conventions to keep straight:

* Pair selection for the content loss uses cosine *distance* of the text
  embeddings: a pair is content-positive iff 1 - cos(t_i, t_j) <= eps_t,
  boundary inclusive. Style positives are pairs with equal style ids.
* The contrastive terms themselves read cosine *similarity* s of the
  projected vectors: a positive pair contributes 1 - s, a negative pair
  contributes max(0, s - eps). Sums run over unordered pairs i < j.

The classifier term is plain softmax cross-entropy on the style logits. The
combined objective is

    total = lambda_c * L_content + lambda_s * L_style + lambda_sc * sum_i CE_i

where the contrastive sums are over unordered pairs and the cross-entropy
sum is over rows. The standalone ``style_ce_loss`` helper returns the batch
*mean*; the total applies the sum, i.e. batch_size times that mean.

Two drop-in replacements for the pair terms are provided for ablations,
using the same positive/negative selection: a hardest-in-batch triplet loss
and NT-Xent. Gradients are hand-derived; for any loss L(S) on the cosine
similarity matrix S = U U^T of normalized rows U, the chain rule used is

    dL/dU = (W + W^T) U   with W_ij = dL/dS_ij as literally written,
    dL/du_i = (dL/duhat_i - (dL/duhat_i . uhat_i) uhat_i) / ||u_i||.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DegenerateInputError, ShapeError
from .model import GoyaModel
from .nn import FLOAT, ForwardCache

_ZERO_NORM = 1e-12

ABLATIONS = ("goya-contrastive", "triplet", "ntxent")


@dataclass(frozen=True)
class LossConfig:
    """Thresholds, weights, and the ablation switch for the total objective.

    ``ablation`` picks the pair term: "goya-contrastive" (default),
    "triplet", or "ntxent". ``use_classifier`` gates the cross-entropy term
    independently of ``lambda_sc``.
    """

    eps_t: float = 0.25
    eps_c: float = 0.5
    eps_s: float = 0.5
    lambda_c: float = 1.0
    lambda_s: float = 1.0
    lambda_sc: float = 1.0
    ablation: str = "goya-contrastive"
    use_classifier: bool = True
    ntxent_temperature: float = 0.5
    triplet_margin: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.eps_t <= 2.0):
            raise ConfigError(f"eps_t must lie in [0, 2], got {self.eps_t}")
        for name in ("eps_c", "eps_s", "triplet_margin"):
            value = getattr(self, name)
            if not (0.0 < value < 2.0):
                raise ConfigError(f"{name} must lie in (0, 2), got {value}")
        for name in ("lambda_c", "lambda_s", "lambda_sc"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation '{self.ablation}', expected one of {ABLATIONS}")
        if self.ntxent_temperature <= 0.0:
            raise ConfigError(f"ntxent_temperature must be positive, got {self.ntxent_temperature}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "LossConfig":
        if not isinstance(data, dict):
            raise ConfigError("loss config must be a JSON object")
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ConfigError(f"unknown loss config key '{unknown[0]}'")
        return cls(**data)


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar pieces of one batch objective.

    ``style_ce`` is the batch-mean cross-entropy; the total includes it as a
    sum over rows, so total = lambda_c * content + lambda_s * style +
    lambda_sc * batch_size * style_ce (for enabled terms).
    """

    total: float
    content: float
    style: float
    style_ce: float
    batch_size: int


# ---- similarity primitives -----------------------------------------------------


def _normalized_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=FLOAT)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {x.shape}")
    norms = np.linalg.norm(x, axis=1)
    if x.shape[0] and norms.min() <= _ZERO_NORM:
        row = int(norms.argmin())
        raise DegenerateInputError(f"zero-norm row {row} cannot be normalized")
    return x / norms[:, None], norms


def _grad_through_normalization(d_unit: np.ndarray, unit: np.ndarray, norms: np.ndarray) -> np.ndarray:
    # d/du of uhat = u/||u||: project out the radial component, then rescale.
    radial = np.sum(d_unit * unit, axis=1, keepdims=True)
    return (d_unit - radial * unit) / norms[:, None]


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between two vectors; zero-norm input is an error."""
    u = np.asarray(u, dtype=FLOAT).ravel()
    v = np.asarray(v, dtype=FLOAT).ravel()
    if u.shape != v.shape:
        raise ShapeError(f"vector shapes differ: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu <= _ZERO_NORM or nv <= _ZERO_NORM:
        raise DegenerateInputError("cosine similarity of a zero-norm vector is undefined")
    return float(u @ v / (nu * nv))


def cosine_similarity_matrix(x: np.ndarray) -> np.ndarray:
    """Symmetric matrix of pairwise cosine similarities between rows."""
    unit, _ = _normalized_rows(x)
    s = unit @ unit.T
    return 0.5 * (s + s.T)


def select_content_pairs(text_embs: np.ndarray, eps_t: float) -> np.ndarray:
    """Boolean positive mask from text embeddings.

    A pair is positive iff the cosine distance of its text embeddings is at
    most ``eps_t`` (boundary inclusive). The diagonal is always True and the
    mask is symmetric.
    """
    sims = cosine_similarity_matrix(text_embs)
    mask = (1.0 - sims) <= eps_t
    np.fill_diagonal(mask, True)
    return mask


def style_positive_mask(style_ids: np.ndarray) -> np.ndarray:
    """Boolean mask, True where two rows share a style id."""
    ids = np.asarray(style_ids)
    if ids.ndim != 1:
        raise ShapeError(f"style ids must be 1-d, got shape {ids.shape}")
    return ids[:, None] == ids[None, :]


# ---- pair objectives -------------------------------------------------------------


def _pair_contrastive_with_grad(p: np.ndarray, positive: np.ndarray, eps: float):
    unit, norms = _normalized_rows(p)
    sims = unit @ unit.T
    n = sims.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    s = sims[iu, ju]
    pos = positive[iu, ju]
    hinge = s - eps
    active = ~pos & (hinge > 0.0)
    loss = float(np.sum(1.0 - s[pos]) + np.sum(hinge[active]))
    w = np.zeros_like(sims)
    w[iu[pos], ju[pos]] = -1.0
    w[iu[active], ju[active]] = 1.0
    d_unit = (w + w.T) @ unit
    return loss, _grad_through_normalization(d_unit, unit, norms)


def _triplet_with_grad(p: np.ndarray, positive: np.ndarray, margin: float):
    unit, norms = _normalized_rows(p)
    sims = unit @ unit.T
    n = sims.shape[0]
    eye = np.eye(n, dtype=bool)
    pos = positive & ~eye
    neg = ~positive & ~eye
    dist = 1.0 - sims
    valid = pos.any(axis=1) & neg.any(axis=1)
    if not valid.any():
        return 0.0, np.zeros_like(p, dtype=FLOAT)
    # hardest positive = largest distance, hardest negative = smallest
    hard_pos = np.where(pos, dist, -np.inf).argmax(axis=1)
    hard_neg = np.where(neg, dist, np.inf).argmin(axis=1)
    anchors = np.flatnonzero(valid)
    t = dist[anchors, hard_pos[anchors]] - dist[anchors, hard_neg[anchors]] + margin
    active = anchors[t > 0.0]
    loss = float(np.sum(t[t > 0.0]))
    w = np.zeros_like(sims)
    # dL/dD[a, p] = +1 and D = 1 - S, so dL/dS flips sign
    np.add.at(w, (active, hard_pos[active]), -1.0)
    np.add.at(w, (active, hard_neg[active]), 1.0)
    d_unit = (w + w.T) @ unit
    return loss, _grad_through_normalization(d_unit, unit, norms)


def _ntxent_with_grad(p: np.ndarray, positive: np.ndarray, temperature: float):
    unit, norms = _normalized_rows(p)
    sims = unit @ unit.T
    n = sims.shape[0]
    eye = np.eye(n, dtype=bool)
    pos = positive & ~eye
    counts = pos.sum(axis=1)
    n_pairs = int(counts.sum())
    if n_pairs == 0:
        return 0.0, np.zeros_like(p, dtype=FLOAT)
    logits = sims / temperature
    logits[eye] = -np.inf  # the anchor itself never appears in the denominator
    row_max = logits.max(axis=1, keepdims=True)
    z = np.exp(logits - row_max)
    denom = z.sum(axis=1, keepdims=True)
    log_denom = np.log(denom) + row_max
    picked = np.where(pos, logits, 0.0).sum(axis=1)
    loss = float(np.sum(counts * log_denom[:, 0] - picked)) / n_pairs
    softmax = z / denom
    w = (counts[:, None] * softmax - pos) / (temperature * n_pairs)
    d_unit = (w + w.T) @ unit
    return loss, _grad_through_normalization(d_unit, unit, norms)


def _check_pair_args(p: np.ndarray, positive: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=FLOAT)
    positive = np.asarray(positive, dtype=bool)
    if positive.shape != (p.shape[0], p.shape[0]):
        raise ShapeError(
            f"positive mask shape {positive.shape} does not match batch of {p.shape[0]} rows"
        )
    return positive


def content_loss(projections: np.ndarray, positive: np.ndarray, eps_c: float = 0.5) -> float:
    """Contrastive loss over unordered pairs: positives pay 1 - s, negatives
    pay max(0, s - eps_c)."""
    positive = _check_pair_args(projections, positive)
    return _pair_contrastive_with_grad(projections, positive, eps_c)[0]


def style_loss(projections: np.ndarray, positive: np.ndarray, eps_s: float = 0.5) -> float:
    """Same functional form as ``content_loss``; positives come from style ids."""
    positive = _check_pair_args(projections, positive)
    return _pair_contrastive_with_grad(projections, positive, eps_s)[0]


def triplet_loss(projections: np.ndarray, positive: np.ndarray, margin: float = 0.5) -> float:
    """Hardest-in-batch triplet loss on cosine distances.

    Per anchor, the farthest positive and the closest negative form the
    triplet; anchors lacking either are skipped. Terms are summed.
    """
    positive = _check_pair_args(projections, positive)
    return _triplet_with_grad(projections, positive, margin)[0]


def ntxent_loss(projections: np.ndarray, positive: np.ndarray, temperature: float = 0.5) -> float:
    """NT-Xent: mean over ordered positive pairs (i, j) of
    -log(exp(s_ij / t) / sum_{k != i} exp(s_ik / t)).

    The denominator runs over every non-anchor row, positives included.
    Anchors without positives contribute nothing.
    """
    if temperature <= 0.0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    positive = _check_pair_args(projections, positive)
    return _ntxent_with_grad(projections, positive, temperature)[0]


def _softmax_ce_sum_with_grad(logits: np.ndarray, labels: np.ndarray):
    """Summed cross-entropy and its logit gradient, computed stably."""
    logits = np.asarray(logits, dtype=FLOAT)
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match {n} rows of logits")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise DataError(f"label out of range [0, {k}): {int(labels.min())}..{int(labels.max())}")
    rows = np.arange(n)
    m = logits.max(axis=1, keepdims=True)
    z = np.exp(logits - m)
    denom = z.sum(axis=1, keepdims=True)
    log_p = (logits - m) - np.log(denom)
    loss = float(-log_p[rows, labels].sum())
    grad = z / denom
    grad[rows, labels] -= 1.0
    return loss, grad


def style_ce_loss(logits: np.ndarray, style_ids: np.ndarray) -> float:
    """Batch-mean softmax cross-entropy of style logits."""
    logits = np.asarray(logits, dtype=FLOAT)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise ShapeError(f"logits must be a non-empty 2-d matrix, got shape {logits.shape}")
    loss_sum, _ = _softmax_ce_sum_with_grad(logits, style_ids)
    return loss_sum / logits.shape[0]


# ---- combined objective -------------------------------------------------------------


def _pair_term(p: np.ndarray, positive: np.ndarray, cfg: LossConfig, eps: float):
    if cfg.ablation == "goya-contrastive":
        return _pair_contrastive_with_grad(p, positive, eps)
    if cfg.ablation == "triplet":
        return _triplet_with_grad(p, positive, cfg.triplet_margin)
    return _ntxent_with_grad(p, positive, cfg.ntxent_temperature)


def _total(model: GoyaModel, g: np.ndarray, text_embs, style_ids, cfg: LossConfig,
           with_grad: bool) -> LossBreakdown:
    g = np.asarray(g, dtype=FLOAT)
    if g.ndim != 2:
        raise ShapeError(f"batch must be a 2-d matrix, got shape {g.shape}")
    n = g.shape[0]
    lam_sc = cfg.lambda_sc if cfg.use_classifier else 0.0
    content_val = 0.0
    style_val = 0.0
    ce_mean = 0.0
    total = 0.0
    if with_grad:
        model.zero_grad()

    if cfg.lambda_c > 0.0:
        if text_embs is None:
            raise ConfigError("content loss is enabled but the batch has no text embeddings")
        mask_c = select_content_pairs(text_embs, cfg.eps_t)
        enc_cache = ForwardCache() if with_grad else None
        proj_cache = ForwardCache() if with_grad else None
        e_c = model.content_forward(g, enc_cache)
        p_c = model.project("content", e_c, proj_cache)
        content_val, d_pc = _pair_term(p_c, mask_c, cfg, cfg.eps_c)
        total += cfg.lambda_c * content_val
        if with_grad:
            d_ec = model.project_backward("content", cfg.lambda_c * d_pc, proj_cache)
            model.content_backward(d_ec, enc_cache)

    if cfg.lambda_s > 0.0 or lam_sc > 0.0:
        if style_ids is None:
            raise ConfigError("style losses are enabled but the batch has no style ids")
        style_ids = np.asarray(style_ids)
        enc_cache = ForwardCache() if with_grad else None
        e_s = model.style_forward(g, enc_cache)
        d_es = np.zeros_like(e_s) if with_grad else None
        if cfg.lambda_s > 0.0:
            mask_s = style_positive_mask(style_ids)
            proj_cache = ForwardCache() if with_grad else None
            p_s = model.project("style", e_s, proj_cache)
            style_val, d_ps = _pair_term(p_s, mask_s, cfg, cfg.eps_s)
            total += cfg.lambda_s * style_val
            if with_grad:
                d_es += model.project_backward("style", cfg.lambda_s * d_ps, proj_cache)
        if lam_sc > 0.0 and n > 0:
            cls_cache = ForwardCache() if with_grad else None
            logits = model.classify_style(e_s, cls_cache)
            ce_sum, d_logits = _softmax_ce_sum_with_grad(logits, style_ids)
            ce_mean = ce_sum / n
            total += lam_sc * ce_sum
            if with_grad:
                d_es += model.classifier.backward(lam_sc * d_logits, cls_cache)
        if with_grad:
            model.style_backward(d_es, enc_cache)

    return LossBreakdown(total=total, content=content_val, style=style_val,
                         style_ce=ce_mean, batch_size=n)


def total_loss_and_grad(model: GoyaModel, g: np.ndarray, text_embs, style_ids,
                        cfg: LossConfig) -> LossBreakdown:
    """Evaluate the combined objective and accumulate parameter gradients.

    Existing gradients on the model are zeroed first. Terms with zero weight
    (or a disabled classifier) are skipped entirely, so they neither cost
    compute nor touch gradients.
    """
    return _total(model, g, text_embs, style_ids, cfg, with_grad=True)


def evaluate_total_loss(model: GoyaModel, g: np.ndarray, text_embs, style_ids,
                        cfg: LossConfig) -> LossBreakdown:
    """Same value as ``total_loss_and_grad`` without touching gradients."""
    return _total(model, g, text_embs, style_ids, cfg, with_grad=False)
