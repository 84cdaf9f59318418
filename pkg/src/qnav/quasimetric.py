"""Learnable quasimetric over state-action pairs.

Distances are asymmetric norms of embedding differences:
``d(p, q) = ||e(p) - e(q)||_w`` with ``||v||_w = sum_i w_i max(v_i, 0)
+ (1 - w_i) max(-v_i, 0)`` and per-axis weights ``w = sigmoid(w_raw)``.
All quasimetric axioms (non-negativity, zero self-distance, triangle
inequality) hold by construction for any embedding; symmetry intentionally
does not unless ``w = 0.5`` everywhere.

Training pulls temporally adjacent pairs together against a margin on random
pairs. The pure margin objective drives all adjacent distances toward zero,
which erases any cost signal, so the calibration and training paths anchor
the positive term to the observed step cost instead; the plain contrastive
form stays available via ``targets=None``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .autodiff import (
    Mlp,
    ParamTensor,
    load_checkpoint,
    mlp_from_arrays,
    mlp_to_arrays,
    save_checkpoint,
)
from .errors import ConfigError, InputError
from .io_utils import read_csv, write_csv

EMBED_DIM_DEFAULT = 16
MARGIN_DEFAULT = 1.0


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def asym_norm(v: np.ndarray, w: np.ndarray) -> np.ndarray | float:
    """Weighted positive/negative-part norm; asymmetric whenever w != 0.5.

    Accepts a single vector or a batch of rows; w entries must lie in [0, 1].
    """
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < 0.0) or np.any(w > 1.0):
        raise ConfigError("asym_norm weights must lie in [0, 1]")
    pos = np.maximum(v, 0.0)
    neg = np.maximum(-v, 0.0)
    out = pos @ w + neg @ (1.0 - w)
    return float(out) if v.ndim == 1 else out


def asym_norm_grad_v(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """d||v||/dv; the kink at 0 takes the w-weighted positive branch."""
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    return np.where(v >= 0.0, w, -(1.0 - w))


class QuasimetricModel:
    """Embedding network plus asymmetric-norm weights and a cost scale."""

    def __init__(self, net: Mlp, w_raw: ParamTensor, scale: float = 1.0):
        if w_raw.values.ndim != 1 or w_raw.values.shape[0] != net.out_dim:
            raise InputError("w_raw length must match the embedding dimension")
        self.net = net
        self.w_raw = w_raw
        self.scale = float(scale)

    @classmethod
    def create(
        cls,
        in_dim: int,
        rng: np.random.Generator,
        embed_dim: int = EMBED_DIM_DEFAULT,
        hidden: tuple[int, ...] = (64, 64),
    ) -> "QuasimetricModel":
        sizes = [in_dim, *hidden, embed_dim]
        acts = ["tanh"] * len(hidden) + ["identity"]
        net = Mlp.create(sizes, acts, rng)
        # w_raw = 0 -> w = 0.5: start symmetric, let the data break the tie
        return cls(net, ParamTensor(np.zeros(embed_dim)))

    @property
    def w(self) -> np.ndarray:
        return _sigmoid(self.w_raw.values)

    def params(self) -> list[ParamTensor]:
        return self.net.params() + [self.w_raw]

    def zero_grads(self) -> None:
        for p in self.params():
            p.zero_grad()

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.values.ravel() for p in self.params()])

    def set_flat_params(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        i = 0
        for p in self.params():
            p.values[...] = vec[i : i + p.size].reshape(p.shape)
            i += p.size

    def flat_grads(self) -> np.ndarray:
        return np.concatenate([p.grad.ravel() for p in self.params()])

    def embed(self, x: np.ndarray) -> np.ndarray:
        return self.net.forward(x)

    def distance(self, px: np.ndarray, qx: np.ndarray) -> np.ndarray | float:
        """Quasimetric between encoded pairs (rows or single vectors)."""
        return asym_norm(self.embed(px) - self.embed(qx), self.w)


def quasi_dist(model: QuasimetricModel, px: np.ndarray, qx: np.ndarray) -> np.ndarray | float:
    return model.distance(px, qx)


# ---------------------------------------------------------------------------
# contrastive objective


@dataclass
class ContrastiveBatch:
    """Anchor/positive/negative encoded pairs; targets switch on cost anchoring."""

    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray
    margin: float = MARGIN_DEFAULT
    targets: np.ndarray | None = None  # desired anchor->positive distances

    def __post_init__(self) -> None:
        a, p, n = (np.asarray(m, dtype=np.float64) for m in (self.anchors, self.positives, self.negatives))
        if not (a.shape == p.shape == n.shape) or a.ndim != 2 or a.shape[0] == 0:
            raise InputError("anchors, positives, negatives must be equal non-empty 2-D arrays")
        if self.margin <= 0.0:
            raise ConfigError("margin must be positive")
        if self.targets is not None:
            self.targets = np.asarray(self.targets, dtype=np.float64)
            if self.targets.shape != (a.shape[0],):
                raise InputError("targets must be one scalar per anchor")
            if np.any(self.targets < 0.0):
                raise InputError("targets must be non-negative")
        self.anchors, self.positives, self.negatives = a, p, n


def contrastive_loss(batch: ContrastiveBatch, model: QuasimetricModel) -> float:
    """Mean of squared positive distance (to its target, default 0) plus a
    squared hinge pushing negatives past the margin.

    Accumulates gradients into the model parameters and returns the loss.
    """
    n = batch.anchors.shape[0]
    w = model.w
    stacked = np.concatenate([batch.anchors, batch.positives, batch.negatives], axis=0)
    emb = model.net.forward(stacked)
    e_a, e_p, e_n = emb[:n], emb[n : 2 * n], emb[2 * n :]

    u = e_a - e_p
    s = e_a - e_n
    d_pos = np.maximum(u, 0.0) @ w + np.maximum(-u, 0.0) @ (1.0 - w)
    d_neg = np.maximum(s, 0.0) @ w + np.maximum(-s, 0.0) @ (1.0 - w)

    target = batch.targets if batch.targets is not None else np.zeros(n)
    hinge = np.maximum(0.0, batch.margin - d_neg)
    loss = float(np.mean((d_pos - target) ** 2 + hinge**2))

    # d loss / d distances
    gd_pos = 2.0 * (d_pos - target) / n
    gd_neg = -2.0 * hinge / n
    # distance gradients w.r.t. the difference vectors
    gu = gd_pos[:, None] * asym_norm_grad_v(u, w)
    gs = gd_neg[:, None] * asym_norm_grad_v(s, w)
    grad_emb = np.concatenate([gu + gs, -gu, -gs], axis=0)
    model.net.backward(grad_emb)
    # d||v||/dw_i = v_i, chained through the sigmoid
    gw = gd_pos @ u + gd_neg @ s
    model.w_raw.grad += gw * w * (1.0 - w)
    return loss


# ---------------------------------------------------------------------------
# datasets and calibration


@dataclass
class TransitionDataset:
    """Encoded (pair, successor pair, cost) rows for embedding training."""

    x: np.ndarray  # (N, D) anchor (state, action)
    y: np.ndarray  # (N, D) successor (state', action')
    cost: np.ndarray  # (N,) traversal cost of the step
    dz: np.ndarray = field(default=None)  # type: ignore[assignment]
    succ_idx: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.cost = np.asarray(self.cost, dtype=np.float64)
        if self.x.ndim != 2 or self.x.shape != self.y.shape or len(self.cost) != len(self.x):
            raise InputError("inconsistent dataset shapes")
        if len(self.x) == 0:
            raise InputError("empty transition dataset")
        if np.any(self.cost < 0.0) or not np.all(np.isfinite(self.cost)):
            raise InputError("costs must be finite and non-negative")
        if self.dz is None:
            self.dz = np.zeros(len(self.x))
        else:
            self.dz = np.asarray(self.dz, dtype=np.float64)
        if self.succ_idx is None:
            self.succ_idx = np.full(len(self.x), -1, dtype=np.int64)
        else:
            self.succ_idx = np.asarray(self.succ_idx, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.x)


def sample_negatives(ds: TransitionDataset, idx: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform negative index per anchor, never the anchor's own successor row."""
    n = len(ds)
    neg = rng.integers(0, n, size=len(idx))
    own = ds.succ_idx[idx]
    for _ in range(100):
        clash = neg == own
        if not clash.any():
            break
        neg[clash] = rng.integers(0, n, size=int(clash.sum()))
    return neg


@dataclass
class CalibrationResult:
    model: QuasimetricModel
    scale: float
    spearman: float
    final_loss: float
    mean_d_uphill: float
    mean_d_downhill: float
    skipped: bool = False


def fit_scale(distances: np.ndarray, costs: np.ndarray) -> float:
    """Least-squares scalar c minimizing sum (c*d - cost)^2."""
    denom = float(distances @ distances)
    if denom <= 1e-300:
        return 1.0
    return float((distances @ costs) / denom)


def train_embedding(
    model: QuasimetricModel,
    ds: TransitionDataset,
    epochs: int,
    rng: np.random.Generator,
    lr: float = 3e-3,
    batch_size: int = 256,
    margin: float = MARGIN_DEFAULT,
    cost_anchored: bool = True,
    adam: "object | None" = None,
) -> float:
    """Epochs of Adam on the (optionally cost-anchored) contrastive objective.

    Returns the mean loss over the final epoch.
    """
    from .autodiff import AdamState, adam_step

    if epochs < 1:
        raise ConfigError("epochs must be at least 1")
    if adam is None:
        adam = AdamState.for_params(model.params())
    mean_cost = float(ds.cost.mean())
    # map costs into norm units so targets sit around half the margin
    rho = 0.5 * margin / mean_cost if (cost_anchored and mean_cost > 1e-12) else 0.0
    n = len(ds)
    bs = min(batch_size, n)
    last = 0.0
    for _ in range(epochs):
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, bs):
            idx = order[lo : lo + bs]
            neg = sample_negatives(ds, idx, rng)
            if cost_anchored and rho > 0.0:
                # cap so a heavy-tailed cost batch cannot blow up the targets
                targets = np.minimum(rho * ds.cost[idx], 2.0 * margin)
            else:
                targets = None
            batch = ContrastiveBatch(ds.x[idx], ds.y[idx], ds.x[neg], margin, targets)
            model.zero_grads()
            losses.append(contrastive_loss(batch, model))
            adam_step(model.params(), adam, lr)
        last = float(np.mean(losses))
    return last


def calibrate_to_cost(
    ds: TransitionDataset,
    model: QuasimetricModel,
    epochs: int = 120,
    rng: np.random.Generator | None = None,
    lr: float = 3e-3,
    batch_size: int = 256,
    margin: float = MARGIN_DEFAULT,
) -> CalibrationResult:
    """Train the embedding on a transition dataset and fit the cost scale.

    Reports the Spearman rank correlation between quasimetric distances and
    true traversal costs, plus mean distances split by climb direction. A
    dataset whose costs are all identical cannot be rank-calibrated and is
    skipped with a warning.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    spread = float(ds.cost.max() - ds.cost.min())
    if spread < 1e-12:
        warnings.warn("calibration skipped: all traversal costs are identical", stacklevel=2)
        d = np.asarray(model.distance(ds.x, ds.y))
        return CalibrationResult(
            model=model, scale=fit_scale(d, ds.cost), spearman=float("nan"),
            final_loss=float("nan"), mean_d_uphill=float("nan"),
            mean_d_downhill=float("nan"), skipped=True,
        )
    final_loss = train_embedding(
        model, ds, epochs, rng, lr=lr, batch_size=batch_size, margin=margin, cost_anchored=True
    )
    d = np.asarray(model.distance(ds.x, ds.y))
    scale = fit_scale(d, ds.cost)
    model.scale = scale
    rho = stats.spearmanr(d, ds.cost).statistic
    up, down = ds.dz > 1e-9, ds.dz < -1e-9
    return CalibrationResult(
        model=model,
        scale=scale,
        spearman=float(rho),
        final_loss=final_loss,
        mean_d_uphill=float(d[up].mean()) if up.any() else float("nan"),
        mean_d_downhill=float(d[down].mean()) if down.any() else float("nan"),
    )


# ---------------------------------------------------------------------------
# shaped advantage


def quasimetric_advantage(rewards: np.ndarray, dists: np.ndarray, gamma: float) -> np.ndarray:
    """Discounted backward sum of (reward - step distance) over one episode.

    The terminal step passes distance 0 by convention, which the caller
    encodes directly in `dists`.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    dists = np.asarray(dists, dtype=np.float64)
    if rewards.shape != dists.shape or rewards.ndim != 1:
        raise InputError("rewards and dists must be equal-length 1-D arrays")
    if not (0.0 < gamma <= 1.0):
        raise ConfigError("gamma must lie in (0, 1]")
    out = np.empty_like(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = (rewards[t] - dists[t]) + gamma * acc
        out[t] = acc
    return out


# ---------------------------------------------------------------------------
# persistence


def save_embedding(path: str, model: QuasimetricModel, meta: dict | None = None) -> None:
    arrays = mlp_to_arrays(model.net, "embed")
    arrays["w_raw"] = model.w_raw.values
    full_meta = {
        "kind": "embedding",
        "activations": model.net.activations,
        "scale": model.scale,
    }
    if meta:
        full_meta.update(meta)
    save_checkpoint(path, arrays, full_meta)


def load_embedding(path: str) -> QuasimetricModel:
    arrays, meta = load_checkpoint(path)
    if meta.get("kind") != "embedding":
        raise InputError(f"checkpoint at {path} is not an embedding (kind={meta.get('kind')!r})")
    net = mlp_from_arrays(arrays, "embed", meta["activations"])
    return QuasimetricModel(net, ParamTensor(arrays["w_raw"].copy()), scale=float(meta.get("scale", 1.0)))


def write_replay_csv(path: str, ds: TransitionDataset, meta: dict | None = None) -> None:
    d = ds.x.shape[1]
    cols = [f"x{i}" for i in range(d)] + [f"y{i}" for i in range(d)] + ["cost", "dz", "succ_idx"]
    rows = [
        list(ds.x[i]) + list(ds.y[i]) + [ds.cost[i], ds.dz[i], int(ds.succ_idx[i])]
        for i in range(len(ds))
    ]
    write_csv(path, cols, rows, meta)


def read_replay_csv(path: str) -> TransitionDataset:
    cols, mat, _ = read_csv(path)
    if len(mat) == 0:
        raise InputError(f"replay file {path} has no rows")
    d = sum(1 for c in cols if c.startswith("x"))
    if cols[:d] != [f"x{i}" for i in range(d)] or cols[d : 2 * d] != [f"y{i}" for i in range(d)]:
        raise InputError("replay columns malformed")
    return TransitionDataset(
        x=mat[:, :d],
        y=mat[:, d : 2 * d],
        cost=mat[:, 2 * d],
        dz=mat[:, 2 * d + 1],
        succ_idx=mat[:, 2 * d + 2].astype(np.int64),
    )
