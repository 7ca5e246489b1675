"""Tag cross-entropy, symmetric InfoNCE, margin KGE loss and their weighted sum.

Each loss has a scalar form matching its definition and a batched `*_and_grad` form
returning the batch mean together with analytic gradients.
"""

from dataclasses import dataclass

import numpy as np

from src.encoders.projection import sigmoid
from src.errors import ConfigError, DimensionError, check_dims
from src.objectives.models import ClipParams, JointLossWeights, KgeConfig, TagClassifier

EPS = 1e-12
SIMILARITIES = ("dot", "cosine")


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


# --- tag classification ---------------------------------------------------------


def tag_scores(z_v: np.ndarray, clf: TagClassifier) -> np.ndarray:
    """s = softmax(z_V W2ᵀ) for one embedding or a batch."""
    return softmax(clf.logits(np.asarray(z_v, dtype=np.float64)))


def loss_tag(s: np.ndarray, target: int) -> float:
    return float(-np.log(max(float(s[target]), EPS)))


def tag_loss_and_grad(
    z: np.ndarray, targets: np.ndarray, clf: TagClassifier
) -> tuple[float, np.ndarray, dict[str, np.ndarray]]:
    """Mean L_TAG over the batch; returns (loss, dL/dz, {classifier.w2: dL/dW2})."""
    batch = len(z)
    s = tag_scores(z, clf)
    rows = np.arange(batch)
    loss = float(np.mean(-np.log(np.maximum(s[rows, targets], EPS))))
    dlogits = s.copy()
    dlogits[rows, targets] -= 1.0
    dlogits /= batch
    return loss, dlogits @ clf.w2, {f"{clf.prefix}.w2": dlogits.T @ z}


# --- contrastive alignment ------------------------------------------------------


@dataclass
class ClipGrad:
    loss: float
    d_video: np.ndarray
    d_tag: np.ndarray
    d_log_tau: float


def _normalize(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.maximum(np.linalg.norm(z, axis=1, keepdims=True), EPS)
    return z / norms, norms


def _normalize_backward(z_hat: np.ndarray, norms: np.ndarray, dz_hat: np.ndarray) -> np.ndarray:
    return (dz_hat - z_hat * np.sum(z_hat * dz_hat, axis=1, keepdims=True)) / norms


def clip_loss_and_grad(
    zv: np.ndarray, zt: np.ndarray, params: ClipParams, similarity: str = "dot"
) -> ClipGrad:
    """Row-direction plus column-direction InfoNCE over S = sim(Zv, Zt) / τ."""
    if similarity not in SIMILARITIES:
        raise ConfigError(f"unknown similarity '{similarity}'")
    if len(zv) == 0:
        raise DimensionError("contrastive loss needs a batch of at least one pair")
    check_dims("paired batch", len(zt), len(zv))
    check_dims("embedding", zt.shape[1], zv.shape[1])

    batch = len(zv)
    if similarity == "cosine":
        av, nv = _normalize(zv)
        at, nt = _normalize(zt)
    else:
        av, at = zv, zt
    tau = params.tau
    s = (av @ at.T) / tau

    diag = np.arange(batch)
    loss_rows = -np.mean(log_softmax(s, axis=1)[diag, diag])
    loss_cols = -np.mean(log_softmax(s, axis=0)[diag, diag])

    eye = np.eye(batch)
    ds = (softmax(s, axis=1) - eye) / batch + (softmax(s, axis=0) - eye) / batch
    d_log_tau = float(-np.sum(ds * s))
    da = ds / tau
    d_av = da @ at
    d_at = da.T @ av
    if similarity == "cosine":
        d_av = _normalize_backward(av, nv, d_av)
        d_at = _normalize_backward(at, nt, d_at)
    return ClipGrad(float(loss_rows + loss_cols), d_av, d_at, d_log_tau)


def loss_clip(
    zv: np.ndarray, zt: np.ndarray, params: ClipParams, similarity: str = "dot"
) -> float:
    return clip_loss_and_grad(
        np.asarray(zv, dtype=np.float64), np.asarray(zt, dtype=np.float64), params, similarity
    ).loss


# --- translational KGE ----------------------------------------------------------


def transe_distance(h: np.ndarray, r: np.ndarray, t: np.ndarray) -> float:
    check_dims("relation", len(r), len(h))
    check_dims("tail", len(t), len(h))
    return float(np.linalg.norm(np.asarray(h) + np.asarray(r) - np.asarray(t)))


def translation_distances(h: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Row-wise ‖h + r - t‖₂ with broadcasting over leading axes."""
    return np.linalg.norm(h + r - t, axis=-1)


def residual_gradient(v: np.ndarray, dd: np.ndarray) -> np.ndarray:
    """dL/dv of d = ‖v‖₂ given dL/dd; the gradient at v = 0 is taken as 0."""
    d = np.linalg.norm(v, axis=-1, keepdims=True)
    unit = np.divide(v, d, out=np.zeros_like(v), where=d > 0)
    return dd[..., None] * unit


def translation_backward(
    h: np.ndarray, r: np.ndarray, t: np.ndarray, dd: np.ndarray
) -> np.ndarray:
    """dL/d(h + r - t) given dL/dd."""
    return residual_gradient(h + r - t, dd)


def negative_weights(d_neg: np.ndarray, cfg: KgeConfig) -> np.ndarray:
    n = d_neg.shape[-1]
    if cfg.adversarial_temperature is None:
        return np.full_like(d_neg, 1.0 / n)
    # self-adversarial weights are constants w.r.t. the gradient
    return softmax(-cfg.adversarial_temperature * d_neg, axis=-1)


def kg_loss_from_distances(
    d_pos: np.ndarray, d_neg: np.ndarray, cfg: KgeConfig
) -> tuple[float, np.ndarray, np.ndarray]:
    """Batch-mean KGE loss from positive (B,) and negative (B, n) distances.

    Returns the loss and its gradients w.r.t. both distance arrays.
    """
    gamma = cfg.margin
    weights = negative_weights(d_neg, cfg)
    per_sample = softplus(d_pos - gamma) + np.sum(weights * softplus(gamma - d_neg), axis=-1)
    batch = len(d_pos)
    dd_pos = sigmoid(d_pos - gamma) / batch
    dd_neg = -weights * sigmoid(gamma - d_neg) / batch
    return float(np.mean(per_sample)), dd_pos, dd_neg


def loss_kg(
    h: np.ndarray, r: np.ndarray, t: np.ndarray, negs: np.ndarray, cfg: KgeConfig
) -> float:
    """-log σ(γ - d(h+r, t)) - Σ w_i log σ(d(h+r, t'_i) - γ) for one positive."""
    negs = np.atleast_2d(np.asarray(negs, dtype=np.float64))
    if len(negs) == 0:
        raise DimensionError("at least one negative tail is required")
    d_pos = np.array([transe_distance(h, r, t)])
    d_neg = translation_distances(np.asarray(h) + np.asarray(r), 0.0, negs)[None, :]
    return kg_loss_from_distances(d_pos, d_neg, cfg)[0]


# --- multi-task combination -----------------------------------------------------


def loss_joint(l_kg: float, l_clip: float, l_tag: float, w: JointLossWeights) -> float:
    return w.kg * l_kg + w.clip * l_clip + w.tag * l_tag
