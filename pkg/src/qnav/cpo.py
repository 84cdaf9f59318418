"""Constrained trust-region policy optimization with a quasimetric shaping path.

The policy is a squashed-mean diagonal Gaussian. Updates follow the natural
gradient: a conjugate-gradient solve against exact Fisher-vector products
(the Hessian of the analytic Gaussian KL at the current parameters), then a
backtracking line search that must improve the surrogate, respect the KL
radius, and keep the projected violation rate under the current bound. When
the batch itself is infeasible the update becomes a pure constraint-reduction
step. An optional tightening rule shrinks the bound while unsafe states sit
far from safe ones in the learned embedding.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from . import envs as envmod
from .autodiff import (
    AdamState,
    Mlp,
    ParamTensor,
    adam_step,
    load_checkpoint,
    mlp_from_arrays,
    mlp_to_arrays,
    save_checkpoint,
)
from .errors import ConfigError, InputError, NumericError, StateError
from .io_utils import write_csv
from .quasimetric import (
    QuasimetricModel,
    TransitionDataset,
    asym_norm,
    fit_scale,
    train_embedding,
)
from .rng import substream

LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0
LOG2PI = math.log(2.0 * math.pi)

ALGOS = ("qcpo", "cpo", "lagrangian")
ADVANTAGE_MODES = ("gae", "quasimetric", "blend")

LEARNING_COLUMNS = [
    "iteration", "steps", "mean_return", "success_rate", "violation_rate",
    "delta", "kl", "embed_loss", "energy_per_m",
]


@dataclass
class TrainConfig:
    """Optimizer-side knobs; scenario physics live in ScenarioConfig."""

    algo: str = "qcpo"
    advantage_mode: str = "quasimetric"
    qe_enabled: bool = True
    act_enabled: bool = True
    total_steps: int = 100_000
    steps_per_batch: int = 2048
    gamma: float = 0.99
    lam: float = 0.95
    epsilon_kl: float = 0.01
    delta_init: float = 0.05
    delta_floor: float = 0.01
    act_alpha: float = 0.1
    cg_iters: int = 10
    cg_damping: float = 0.1
    backtracks: int = 10
    policy_hidden: tuple[int, ...] = (64, 64)
    value_hidden: tuple[int, ...] = (64, 64)
    log_std_init: tuple[float, float] = (-0.7, -1.2)
    value_lr: float = 1e-3
    value_epochs: int = 5
    value_batch: int = 256
    embed_dim: int = 16
    embed_hidden: tuple[int, ...] = (64, 64)
    embed_lr: float = 3e-3
    embed_epochs: int = 2
    embed_batch: int = 256
    margin: float = 1.0
    replay_cap: int = 20_000
    # Shaping weight on the calibrated step distance; small enough that the
    # shaped per-step penalty stays well under c_time-scale and cannot bury
    # the sparse goal reward.
    qe_coef: float = 0.1
    blend_lambda: float = 0.5
    lambda_lr: float = 0.05
    clip_ratio: float = 0.2
    pi_lr: float = 3e-4
    pi_epochs: int = 5
    safe_subsample: int = 512

    def __post_init__(self) -> None:
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algo {self.algo!r}; expected one of {ALGOS}")
        if self.advantage_mode not in ADVANTAGE_MODES:
            raise ConfigError(
                f"unknown advantage_mode {self.advantage_mode!r}; expected one of {ADVANTAGE_MODES}"
            )
        if not (0.0 < self.gamma <= 1.0) or not (0.0 <= self.lam <= 1.0):
            raise ConfigError("gamma must be in (0,1] and lam in [0,1]")
        if self.epsilon_kl <= 0.0:
            raise ConfigError("epsilon_kl must be positive")
        if not (0.0 < self.delta_floor <= self.delta_init):
            raise ConfigError("need 0 < delta_floor <= delta_init")
        if self.act_alpha < 0.0 or self.act_alpha > 1.0:
            raise ConfigError("act_alpha must lie in [0, 1]")
        if self.total_steps < self.steps_per_batch:
            raise ConfigError("total_steps must cover at least one batch")


def variant_config(base: TrainConfig, variant: str) -> TrainConfig:
    """Ablation variants: full, no_qe (frozen embedding, plain advantages),
    no_act (tightening off)."""
    import dataclasses

    if variant == "full":
        return dataclasses.replace(base, algo="qcpo", advantage_mode="quasimetric",
                                   qe_enabled=True, act_enabled=True)
    if variant == "no_qe":
        return dataclasses.replace(base, algo="qcpo", advantage_mode="gae",
                                   qe_enabled=False, act_enabled=True)
    if variant == "no_act":
        return dataclasses.replace(base, algo="qcpo", advantage_mode="quasimetric",
                                   qe_enabled=True, act_enabled=False)
    raise ConfigError(f"unknown ablation variant {variant!r}")


def config_for_algo(base: TrainConfig, algo: str) -> TrainConfig:
    import dataclasses

    if algo == "qcpo":
        return dataclasses.replace(base, algo="qcpo")
    if algo == "cpo":
        return dataclasses.replace(base, algo="cpo", advantage_mode="gae",
                                   qe_enabled=False, act_enabled=False)
    if algo == "lagrangian":
        return dataclasses.replace(base, algo="lagrangian", advantage_mode="gae",
                                   qe_enabled=False, act_enabled=False)
    raise ConfigError(f"unknown algo {algo!r}; expected one of {ALGOS}")


# ---------------------------------------------------------------------------
# networks


class GaussianPolicy:
    """Diagonal Gaussian with a tanh-squashed mean inside the actuator box.

    The density is the plain Gaussian over raw samples; execution clamps the
    sample into the box, and evaluation uses the (always in-box) mean.
    """

    def __init__(self, mean_net: Mlp, log_std: ParamTensor, low: np.ndarray, high: np.ndarray):
        self.mean_net = mean_net
        self.log_std = log_std
        self.low = np.asarray(low, dtype=np.float64)
        self.high = np.asarray(high, dtype=np.float64)
        self.center = (self.low + self.high) / 2.0
        self.half = (self.high - self.low) / 2.0
        if mean_net.out_dim != len(self.low):
            raise InputError("mean net output does not match action dimension")

    @classmethod
    def create(cls, obs_dim: int, cfg: envmod.ScenarioConfig, tcfg: TrainConfig,
               rng: np.random.Generator) -> "GaussianPolicy":
        sizes = [obs_dim, *tcfg.policy_hidden, 2]
        acts = ["tanh"] * len(tcfg.policy_hidden) + ["tanh"]
        net = Mlp.create(sizes, acts, rng, final_zero=True)
        log_std = ParamTensor(np.asarray(tcfg.log_std_init, dtype=np.float64))
        low = np.array([0.0, -cfg.omega_max])
        high = np.array([cfg.v_max, cfg.omega_max])
        return cls(net, log_std, low, high)

    # -- parameter plumbing ---------------------------------------------------

    def params(self) -> list[ParamTensor]:
        return self.mean_net.params() + [self.log_std]

    @property
    def n_params(self) -> int:
        return self.mean_net.n_params + self.log_std.size

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.mean_net.flat_params(), self.log_std.values])

    def set_flat_params(self, vec: np.ndarray) -> None:
        n = self.mean_net.n_params
        self.mean_net.set_flat_params(vec[:n])
        self.log_std.values[...] = vec[n:]

    # -- distribution ----------------------------------------------------------

    def std(self) -> np.ndarray:
        return np.exp(np.clip(self.log_std.values, LOG_STD_MIN, LOG_STD_MAX))

    def _std_mask(self) -> np.ndarray:
        v = self.log_std.values
        return ((v > LOG_STD_MIN) & (v < LOG_STD_MAX)).astype(np.float64)

    def mean(self, obs: np.ndarray) -> np.ndarray:
        y = self.mean_net.forward(obs)
        return self.center + self.half * y

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, float]:
        """Sample one action; returns (raw, executed-in-box, log prob of raw)."""
        mu = self.mean(obs)
        sd = self.std()
        raw = mu + sd * rng.standard_normal(len(sd))
        executed = np.clip(raw, self.low, self.high)
        logp = float(
            -0.5 * np.sum(((raw - mu) / sd) ** 2) - np.sum(np.log(sd)) - 0.5 * len(sd) * LOG2PI
        )
        return raw, executed, logp

    def log_prob(self, obs: np.ndarray, raw: np.ndarray) -> np.ndarray:
        mu = self.mean(obs)
        sd = self.std()
        z = (raw - mu) / sd
        return -0.5 * np.sum(z * z, axis=1) - np.sum(np.log(sd)) - 0.5 * len(sd) * LOG2PI

    def kl_mean(self, obs: np.ndarray, mu_old: np.ndarray, std_old: np.ndarray) -> float:
        """Mean over states of KL(new || old) for diagonal Gaussians."""
        mu = self.mean(obs)
        sd = self.std()
        term = np.log(std_old / sd) + (sd**2 + (mu - mu_old) ** 2) / (2.0 * std_old**2) - 0.5
        return float(np.mean(np.sum(term, axis=1)))

    # -- gradients --------------------------------------------------------------

    def score_weighted_grad(self, obs: np.ndarray, raw: np.ndarray, coeff: np.ndarray) -> np.ndarray:
        """Flat gradient of mean_n [coeff_n * log pi(raw_n | obs_n)]."""
        n = len(obs)
        y = self.mean_net.forward(obs)
        mu = self.center + self.half * y
        sd = self.std()
        gmu = coeff[:, None] * (raw - mu) / sd**2 / n
        gnet = self.mean_net.grad_wrt_params(gmu * self.half)
        glogstd = (coeff[:, None] * (((raw - mu) / sd) ** 2 - 1.0)).mean(axis=0)
        return np.concatenate([gnet, glogstd * self._std_mask()])

    def fisher_vector_product(
        self, obs: np.ndarray, std_old: np.ndarray, v: np.ndarray, damping: float
    ) -> np.ndarray:
        """Exact (Gauss-Newton) Hessian of the mean analytic KL at the current
        parameters, applied to v, plus damping * v.

        Requires a prior mean_net.forward(obs) to populate the caches.
        """
        n_net = self.mean_net.n_params
        v_net, v_ls = v[:n_net], v[n_net:]
        dy = self.mean_net.jvp(v_net)
        dmu = self.half * dy
        n = len(obs)
        gmu = dmu / std_old**2 / n
        gnet = self.mean_net.grad_wrt_params(gmu * self.half)
        gls = 2.0 * v_ls * self._std_mask()
        return np.concatenate([gnet, gls]) + damping * v


class ValueNet:
    """Plain MLP regressor for state values."""

    def __init__(self, net: Mlp):
        self.net = net

    @classmethod
    def create(cls, obs_dim: int, hidden: tuple[int, ...], rng: np.random.Generator) -> "ValueNet":
        sizes = [obs_dim, *hidden, 1]
        acts = ["tanh"] * len(hidden) + ["identity"]
        return cls(Mlp.create(sizes, acts, rng))

    def predict(self, obs: np.ndarray) -> np.ndarray:
        out = self.net.forward(obs)
        return out[..., 0] if out.ndim == 2 else out[0]

    def fit(
        self,
        obs: np.ndarray,
        targets: np.ndarray,
        adam: AdamState,
        lr: float,
        epochs: int,
        batch_size: int,
        rng: np.random.Generator,
    ) -> float:
        n = len(obs)
        bs = min(batch_size, n)
        loss = 0.0
        for _ in range(epochs):
            order = rng.permutation(n)
            losses = []
            for lo in range(0, n, bs):
                idx = order[lo : lo + bs]
                pred = self.net.forward(obs[idx])[:, 0]
                err = pred - targets[idx]
                losses.append(float(np.mean(err**2)))
                self.net.zero_grads()
                self.net.backward((2.0 * err / len(idx))[:, None])
                adam_step(self.net.params(), adam, lr)
            loss = float(np.mean(losses))
        return loss


# ---------------------------------------------------------------------------
# rollouts


@dataclass
class EpisodeSlice:
    lo: int
    hi: int
    bootstrap: float  # value at the state after hi-1 (0 for true terminals)
    finished: bool  # episode ended inside the batch (any reason)
    reached_goal: bool


@dataclass
class RolloutBatch:
    obs: np.ndarray
    raw_actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    traversal_costs: np.ndarray
    constraint_costs: np.ndarray
    violated: np.ndarray
    energy: np.ndarray
    meters: np.ndarray
    pair_enc: np.ndarray
    next_pair_enc: np.ndarray
    terminal_step: np.ndarray  # bool: true env terminal at this step
    succ_idx: np.ndarray
    episodes: list[EpisodeSlice]
    mu_old: np.ndarray
    std_old: np.ndarray
    dz: np.ndarray

    def __len__(self) -> int:
        return len(self.obs)

    @property
    def violation_rate(self) -> float:
        return float(np.mean(self.violated))

    def dataset(self) -> TransitionDataset:
        return TransitionDataset(
            x=self.pair_enc, y=self.next_pair_enc, cost=self.traversal_costs,
            dz=self.dz, succ_idx=self.succ_idx,
        )


def collect_rollouts(
    env: envmod.NavEnv,
    policy: GaussianPolicy,
    value_net: ValueNet,
    n_steps: int,
    rng: np.random.Generator,
) -> RolloutBatch:
    """Gather n_steps of on-policy experience, restarting episodes as needed."""
    cfg = env.cfg
    null_action = envmod.null_action()
    obs_l, raw_l, logp_l, rew_l, cost_l, ccost_l, viol_l = [], [], [], [], [], [], []
    energy_l, meters_l, pair_l, term_l, dz_l = [], [], [], [], []
    last_pair_l: list[tuple[int, np.ndarray]] = []  # (step index, successor encoding)
    episodes: list[EpisodeSlice] = []

    t = 0
    while t < n_steps:
        state = env.reset(rng)
        feats = env.features_at(state)
        lo = t
        reached = False
        finished = False
        bootstrap = 0.0
        while t < n_steps:
            obs = envmod.encode_state(cfg, state, feats)
            raw, executed, logp = policy.act(obs, rng)
            action = envmod.ActionCmd.clamped(executed[0], executed[1], cfg)
            tr = env.step(action)
            obs_l.append(obs)
            raw_l.append(raw)
            logp_l.append(logp)
            rew_l.append(tr.reward)
            cost_l.append(tr.traversal_cost)
            ccost_l.append(tr.constraint_cost)
            viol_l.append(tr.violated)
            energy_l.append(tr.energy_j)
            meters_l.append(math.hypot(tr.next_state.x - tr.state.x, tr.next_state.y - tr.state.y))
            pair_l.append(envmod.encode_pair(cfg, tr.features, action, tr.state.heading))
            dz_l.append(tr.next_features.elevation - tr.features.elevation)
            term_l.append(tr.terminal and tr.reason in ("goal", "unsafe"))
            t += 1
            state = tr.next_state
            feats = tr.next_features
            if tr.terminal:
                finished = True
                reached = tr.reason == "goal"
                if tr.reason == "step_limit":
                    bootstrap = float(value_net.predict(envmod.encode_state(cfg, state, feats)))
                break
        # the final step's successor pairs the arrival state with the rest command
        last_pair_l.append((t - 1, envmod.encode_pair(cfg, feats, null_action, state.heading)))
        if not finished:  # batch boundary cut the episode
            bootstrap = float(value_net.predict(envmod.encode_state(cfg, state, feats)))
        episodes.append(EpisodeSlice(lo, t, bootstrap, finished, reached))

    n = len(obs_l)
    pair = np.asarray(pair_l)
    succ = np.full(n, -1, dtype=np.int64)
    next_pair = np.empty_like(pair)
    for ep in episodes:
        for i in range(ep.lo, ep.hi - 1):
            succ[i] = i + 1
            next_pair[i] = pair[i + 1]
    for idx, enc in last_pair_l:
        next_pair[idx] = enc

    obs = np.asarray(obs_l)
    mu_old = policy.mean(obs)
    std_old = policy.std().copy()
    return RolloutBatch(
        obs=obs,
        raw_actions=np.asarray(raw_l),
        logp=np.asarray(logp_l),
        rewards=np.asarray(rew_l),
        traversal_costs=np.asarray(cost_l),
        constraint_costs=np.asarray(ccost_l),
        violated=np.asarray(viol_l, dtype=bool),
        energy=np.asarray(energy_l),
        meters=np.asarray(meters_l),
        pair_enc=pair,
        next_pair_enc=next_pair,
        terminal_step=np.asarray(term_l, dtype=bool),
        succ_idx=succ,
        episodes=episodes,
        mu_old=mu_old,
        std_old=std_old,
        dz=np.asarray(dz_l),
    )


# ---------------------------------------------------------------------------
# advantage estimation


def estimate_advantages(
    batch: RolloutBatch,
    values: np.ndarray,
    gamma: float,
    lam: float,
    rewards: np.ndarray | None = None,
    normalize: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """GAE over per-episode slices; returns (advantages, regression returns).

    Returns are raw advantages plus values regardless of normalization, so the
    value-fit target never sees the normalized copy.
    """
    r = batch.rewards if rewards is None else rewards
    adv = np.zeros(len(batch))
    for ep in batch.episodes:
        last = 0.0
        next_v = ep.bootstrap
        for t in range(ep.hi - 1, ep.lo - 1, -1):
            delta = r[t] + gamma * next_v - values[t]
            last = delta + gamma * lam * last
            adv[t] = last
            next_v = values[t]
    returns = adv + values
    if normalize:
        sd = adv.std()
        adv = (adv - adv.mean()) / (sd + 1e-8)
    return adv, returns


def discounted_sums(costs: np.ndarray, episodes: list[EpisodeSlice], gamma: float) -> np.ndarray:
    out = np.zeros(len(costs))
    for ep in episodes:
        acc = 0.0
        for t in range(ep.hi - 1, ep.lo - 1, -1):
            acc = costs[t] + gamma * acc
            out[t] = acc
    return out


def policy_gradient(policy: GaussianPolicy, batch: RolloutBatch, advantages: np.ndarray) -> np.ndarray:
    """Flat natural-gradient numerator: mean_t [adv_t * grad log pi(a_t|s_t)]."""
    return policy.score_weighted_grad(batch.obs, batch.raw_actions, np.asarray(advantages))


# ---------------------------------------------------------------------------
# conjugate gradient


def conjugate_gradient(matvec, b: np.ndarray, iters: int = 10, tol: float = 1e-10) -> np.ndarray:
    """Solve A x = b for symmetric positive definite A given only matvec."""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    if math.sqrt(rs) < tol:
        return x
    for _ in range(iters):
        ap = matvec(p)
        alpha = rs / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        if math.sqrt(rs_new) < tol:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


# ---------------------------------------------------------------------------
# the constrained update


@dataclass
class UpdateInfo:
    accepted: bool
    kl: float
    surrogate: float
    step_frac: float
    recovery: bool
    predicted_violation: float
    violation_rate: float


def cpo_update(
    policy: GaussianPolicy,
    batch: RolloutBatch,
    advantages: np.ndarray,
    constraint_advantages: np.ndarray,
    delta: float,
    cfg: TrainConfig,
) -> UpdateInfo:
    """One trust-region step; see the module docstring for the acceptance rules."""
    obs = batch.obs
    rate = batch.violation_rate
    feasible = rate <= delta
    coeff = advantages if feasible else constraint_advantages
    g = policy.score_weighted_grad(obs, batch.raw_actions, np.asarray(coeff))
    gnorm = float(np.linalg.norm(g))
    if gnorm < 1e-12:
        return UpdateInfo(False, 0.0, 0.0, 0.0, not feasible, rate, rate)

    std_old = batch.std_old
    policy.mean_net.forward(obs)  # populate caches for jvp/grad_wrt_params
    mv = lambda v: policy.fisher_vector_product(obs, std_old, v, cfg.cg_damping)
    x = conjugate_gradient(mv, g, cfg.cg_iters)
    xhx = float(x @ mv(x))
    if xhx <= 0.0 or not np.isfinite(xhx):
        return UpdateInfo(False, 0.0, 0.0, 0.0, not feasible, rate, rate)
    full_step = math.sqrt(2.0 * cfg.epsilon_kl / xhx) * x
    if not feasible:
        full_step = -full_step  # descend the constraint surrogate

    theta_old = policy.flat_params()
    logp_old = batch.logp
    mu_old = batch.mu_old
    c_raw = np.asarray(constraint_advantages)
    surr_old = float(np.mean(advantages))
    scale = 1.0 - cfg.gamma

    accepted = False
    info = UpdateInfo(False, 0.0, 0.0, 0.0, not feasible, rate, rate)
    frac = 1.0
    for _ in range(cfg.backtracks):
        policy.set_flat_params(theta_old + frac * full_step)
        logp_new = policy.log_prob(obs, batch.raw_actions)
        ratio = np.exp(logp_new - logp_old)
        surr = float(np.mean(ratio * advantages))
        kl = policy.kl_mean(obs, mu_old, std_old)
        c_pred = rate + scale * float(np.mean((ratio - 1.0) * c_raw))
        if kl <= cfg.epsilon_kl and np.isfinite(surr):
            if feasible and surr > surr_old and c_pred <= delta:
                accepted = True
            if not feasible and c_pred < rate:
                accepted = True
        if accepted:
            info = UpdateInfo(True, kl, surr, frac, not feasible, c_pred, rate)
            break
        frac *= 0.5
    if not accepted:
        policy.set_flat_params(theta_old)
    return info


def adapt_constraint(
    delta: float,
    model: QuasimetricModel,
    batch: RolloutBatch,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Shrink the violation bound by how far batch states sit from safe ones.

    delta_new = delta * (1 - act_alpha * E[min dist to safe] / E[mean dist to
    safe]), clamped to [delta_floor, delta]; the ratio lies in [0, 1] because
    the minimum never exceeds the mean. Returns (new delta, ratio).
    """
    safe_rows = np.where(~batch.violated)[0]
    if len(safe_rows) == 0:
        warnings.warn("no safe steps in batch; constraint bound left unchanged", stacklevel=2)
        return delta, 0.0
    if len(safe_rows) > cfg.safe_subsample:
        safe_rows = safe_rows[rng.permutation(len(safe_rows))[: cfg.safe_subsample]]
        safe_rows.sort()
    emb_all = model.embed(batch.pair_enc)
    emb_safe = emb_all[safe_rows]
    w = model.w
    mins = np.empty(len(emb_all))
    means = np.empty(len(emb_all))
    chunk = 256
    for lo in range(0, len(emb_all), chunk):
        diff = emb_all[lo : lo + chunk, None, :] - emb_safe[None, :, :]
        d = np.maximum(diff, 0.0) @ w + np.maximum(-diff, 0.0) @ (1.0 - w)
        mins[lo : lo + chunk] = d.min(axis=1)
        means[lo : lo + chunk] = d.mean(axis=1)
    den = float(means.mean())
    ratio = float(mins.mean()) / den if den > 1e-12 else 0.0
    new_delta = float(np.clip(delta * (1.0 - cfg.act_alpha * ratio), cfg.delta_floor, delta))
    return new_delta, ratio


def lagrangian_update(
    policy: GaussianPolicy,
    batch: RolloutBatch,
    advantages: np.ndarray,
    constraint_advantages: np.ndarray,
    lam_mult: float,
    delta: float,
    cfg: TrainConfig,
    adam: AdamState,
) -> tuple[float, UpdateInfo]:
    """Clipped-surrogate ascent on (adv - lam * constraint adv) plus dual ascent.

    Returns the updated multiplier and step diagnostics.
    """
    combined = np.asarray(advantages) - lam_mult * np.asarray(constraint_advantages)
    obs, raw, logp_old = batch.obs, batch.raw_actions, batch.logp
    mu_old, std_old = batch.mu_old, batch.std_old
    clip = cfg.clip_ratio
    for _ in range(cfg.pi_epochs):
        logp_new = policy.log_prob(obs, raw)
        ratio = np.exp(logp_new - logp_old)
        # active set of the clipped objective
        unclipped = np.where(
            combined >= 0.0, ratio <= 1.0 + clip, ratio >= 1.0 - clip
        )
        coeff = np.where(unclipped, ratio * combined, 0.0)
        grad = policy.score_weighted_grad(obs, raw, coeff)
        for p, piece in zip(policy.params(), _split_like(grad, policy.params())):
            p.grad[...] = -piece  # maximize
        adam_step(policy.params(), adam, cfg.pi_lr)
    logp_new = policy.log_prob(obs, raw)
    ratio = np.exp(logp_new - logp_old)
    kl = policy.kl_mean(obs, mu_old, std_old)
    surr = float(np.mean(ratio * advantages))
    rate = batch.violation_rate
    new_lam = max(0.0, lam_mult + cfg.lambda_lr * (rate - delta))
    return new_lam, UpdateInfo(True, kl, surr, 1.0, False, rate, rate)


def _split_like(flat: np.ndarray, params: list[ParamTensor]) -> list[np.ndarray]:
    out, i = [], 0
    for p in params:
        out.append(flat[i : i + p.size].reshape(p.shape))
        i += p.size
    return out


# ---------------------------------------------------------------------------
# training orchestration


@dataclass
class TrainResult:
    policy: GaussianPolicy
    value_net: ValueNet
    embed_model: QuasimetricModel
    rows: list[list]
    delta_final: float
    total_steps: int
    checkpoint_path: str
    learning_csv: str


class _Replay:
    """Bounded FIFO of encoded transition chunks for embedding training."""

    def __init__(self, cap: int):
        self.cap = cap
        self.chunks: list[TransitionDataset] = []

    def add(self, ds: TransitionDataset) -> None:
        self.chunks.append(ds)
        while sum(len(c) for c in self.chunks) > self.cap and len(self.chunks) > 1:
            self.chunks.pop(0)

    def dataset(self) -> TransitionDataset:
        if len(self.chunks) == 1:
            return self.chunks[0]
        xs, ys, costs, dzs, succ = [], [], [], [], []
        offset = 0
        for c in self.chunks:
            xs.append(c.x)
            ys.append(c.y)
            costs.append(c.cost)
            dzs.append(c.dz)
            s = c.succ_idx.copy()
            s[s >= 0] += offset
            succ.append(s)
            offset += len(c)
        return TransitionDataset(
            x=np.concatenate(xs), y=np.concatenate(ys), cost=np.concatenate(costs),
            dz=np.concatenate(dzs), succ_idx=np.concatenate(succ),
        )


def train(
    scenario_cfg: envmod.ScenarioConfig,
    train_cfg: TrainConfig,
    seed: int,
    out_dir: str,
    tag: str = "run",
    write_replay: bool = False,
) -> TrainResult:
    """Full training loop; writes the learning curve CSV and checkpoints.

    Aborts with NumericError on divergence, leaving the last finite
    checkpoint on disk.
    """
    os.makedirs(out_dir, exist_ok=True)
    env = envmod.NavEnv.from_seed(scenario_cfg, seed)
    rollout_rng = substream(seed, "rollout")
    neg_rng = substream(seed, "negatives")
    act_rng = substream(seed, "act")
    policy = GaussianPolicy.create(envmod.OBS_DIM, scenario_cfg, train_cfg, substream(seed, "policy-init"))
    value_net = ValueNet.create(envmod.OBS_DIM, train_cfg.value_hidden, substream(seed, "value-init"))
    embed_model = QuasimetricModel.create(
        envmod.EMBED_IN_DIM, substream(seed, "embed-init"),
        embed_dim=train_cfg.embed_dim, hidden=train_cfg.embed_hidden,
    )
    value_adam = AdamState.for_params(value_net.net.params())
    embed_adam = AdamState.for_params(embed_model.params())
    pi_adam = AdamState.for_params(policy.params())
    replay = _Replay(train_cfg.replay_cap)

    delta = train_cfg.delta_init
    lam_mult = 0.0
    rows: list[list] = []
    steps_done = 0
    iteration = 0
    meta = {"scenario": asdict(scenario_cfg), "train": asdict(train_cfg), "seed": seed, "tag": tag}
    ckpt_path = os.path.join(out_dir, f"{tag}_policy.ckpt")
    curve_path = os.path.join(out_dir, f"{tag}_learning.csv")

    while steps_done < train_cfg.total_steps:
        iteration += 1
        batch = collect_rollouts(env, policy, value_net, train_cfg.steps_per_batch, rollout_rng)
        steps_done += len(batch)
        replay.add(batch.dataset())

        embed_loss = float("nan")
        if train_cfg.qe_enabled:
            ds = replay.dataset()
            embed_loss = train_embedding(
                embed_model, ds, train_cfg.embed_epochs, neg_rng,
                lr=train_cfg.embed_lr, batch_size=train_cfg.embed_batch,
                margin=train_cfg.margin, cost_anchored=True, adam=embed_adam,
            )
            d_fit = np.asarray(embed_model.distance(ds.x, ds.y))
            embed_model.scale = fit_scale(d_fit, ds.cost)

        shaped = batch.rewards
        if train_cfg.advantage_mode in ("quasimetric", "blend"):
            d_step = np.asarray(embed_model.distance(batch.pair_enc, batch.next_pair_enc))
            d_step = np.where(batch.terminal_step, 0.0, d_step)
            coef = train_cfg.qe_coef * embed_model.scale
            if train_cfg.advantage_mode == "blend":
                coef *= train_cfg.blend_lambda
            shaped = batch.rewards - coef * d_step

        values = value_net.predict(batch.obs)
        adv, returns = estimate_advantages(
            batch, values, train_cfg.gamma, train_cfg.lam, rewards=shaped, normalize=True
        )
        c_sums = discounted_sums(batch.constraint_costs, batch.episodes, train_cfg.gamma)
        c_adv = c_sums - c_sums.mean()

        if train_cfg.algo == "lagrangian":
            lam_mult, info = lagrangian_update(
                policy, batch, adv, c_adv, lam_mult, delta, train_cfg, pi_adam
            )
        else:
            info = cpo_update(policy, batch, adv, c_adv, delta, train_cfg)

        value_net.fit(
            batch.obs, returns, value_adam, train_cfg.value_lr,
            train_cfg.value_epochs, train_cfg.value_batch, rollout_rng,
        )

        if train_cfg.act_enabled:
            delta, _ratio = adapt_constraint(delta, embed_model, batch, train_cfg, act_rng)

        finished = [ep for ep in batch.episodes if ep.finished]
        ep_returns = [float(batch.rewards[ep.lo : ep.hi].sum()) for ep in finished]
        mean_return = float(np.mean(ep_returns)) if ep_returns else float("nan")
        success = float(np.mean([ep.reached_goal for ep in finished])) if finished else 0.0
        meters = float(batch.meters.sum())
        epm = float(batch.energy.sum() / meters) if meters > 1e-9 else float("nan")
        rows.append([
            iteration, steps_done, mean_return, success, batch.violation_rate,
            delta, info.kl, embed_loss, epm,
        ])

        if not np.all(np.isfinite(policy.flat_params())):
            save_policy(ckpt_path + ".aborted", policy, value_net, meta)
            raise NumericError("policy parameters diverged; last checkpoint saved")

    save_policy(ckpt_path, policy, value_net, meta)
    from .quasimetric import save_embedding

    save_embedding(os.path.join(out_dir, f"{tag}_embed.ckpt"), embed_model, {"seed": seed})
    write_csv(curve_path, LEARNING_COLUMNS, rows, meta)
    if write_replay:
        from .quasimetric import write_replay_csv

        write_replay_csv(os.path.join(out_dir, f"{tag}_replay.csv"), replay.dataset(), meta)
    return TrainResult(
        policy=policy, value_net=value_net, embed_model=embed_model, rows=rows,
        delta_final=delta, total_steps=steps_done, checkpoint_path=ckpt_path,
        learning_csv=curve_path,
    )


# ---------------------------------------------------------------------------
# checkpoints


def save_policy(path: str, policy: GaussianPolicy, value_net: ValueNet, meta: dict) -> None:
    arrays = mlp_to_arrays(policy.mean_net, "pi")
    arrays["log_std"] = policy.log_std.values
    arrays["box_low"] = policy.low
    arrays["box_high"] = policy.high
    arrays.update(mlp_to_arrays(value_net.net, "vf"))
    full_meta = {
        "kind": "policy",
        "pi_activations": policy.mean_net.activations,
        "vf_activations": value_net.net.activations,
        "meta": meta,
    }
    save_checkpoint(path, arrays, full_meta)


def load_policy(path: str) -> tuple[GaussianPolicy, ValueNet, dict]:
    arrays, meta = load_checkpoint(path)
    if meta.get("kind") != "policy":
        raise InputError(f"checkpoint at {path} is not a policy (kind={meta.get('kind')!r})")
    net = mlp_from_arrays(arrays, "pi", meta["pi_activations"])
    vf = mlp_from_arrays(arrays, "vf", meta["vf_activations"])
    policy = GaussianPolicy(net, ParamTensor(arrays["log_std"].copy()),
                            arrays["box_low"], arrays["box_high"])
    return policy, ValueNet(vf), meta.get("meta", {})
