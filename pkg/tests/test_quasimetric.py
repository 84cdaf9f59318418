"""Asymmetric norm, embedding distances, contrastive training, calibration,
and the shaped advantage signal."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from qnav.autodiff import finite_diff_check
from qnav.errors import ConfigError, InputError
from qnav.quasimetric import (
    CalibrationResult,
    ContrastiveBatch,
    QuasimetricModel,
    TransitionDataset,
    asym_norm,
    asym_norm_grad_v,
    calibrate_to_cost,
    contrastive_loss,
    fit_scale,
    load_embedding,
    quasi_dist,
    quasimetric_advantage,
    read_replay_csv,
    sample_negatives,
    save_embedding,
    train_embedding,
    write_replay_csv,
)

_VECS = hnp.arrays(
    np.float64, st.integers(1, 8).map(lambda n: (n,)),
    elements=st.floats(-10.0, 10.0, allow_nan=False),
)


def _identity_model(dim=4, w_raw=0.0):
    """Embedding = input; distances are asym_norm of raw differences."""
    rng = np.random.default_rng(0)
    m = QuasimetricModel.create(dim, rng, embed_dim=dim, hidden=())
    m.net.weights[0].values[...] = np.eye(dim)
    m.net.biases[0].values[...] = 0.0
    m.w_raw.values[...] = w_raw
    return m


def _random_model(in_dim=6, embed_dim=5, seed=0):
    rng = np.random.default_rng(seed)
    m = QuasimetricModel.create(in_dim, rng, embed_dim=embed_dim, hidden=(16,))
    m.w_raw.values[...] = rng.normal(0.0, 0.7, size=embed_dim)
    return m


# ---------------------------------------------------------------------------
# asymmetric norm


def test_norm_of_zero_is_zero():
    assert asym_norm(np.zeros(5), np.full(5, 0.8)) == 0.0


def test_half_weights_reduce_to_scaled_l1():
    v = np.array([1.5, -2.0, 0.25])
    assert asym_norm(v, np.full(3, 0.5)) == pytest.approx(0.5 * np.abs(v).sum())


def test_heavy_positive_weights_worked_example():
    w = np.array([0.9, 0.9])
    assert asym_norm(np.array([1.0, -1.0]), w) == pytest.approx(1.0)
    assert asym_norm(np.array([1.0, 1.0]), w) == pytest.approx(1.8)
    assert asym_norm(np.array([-1.0, -1.0]), w) == pytest.approx(0.2)


def test_norm_rejects_weights_outside_unit_interval():
    with pytest.raises(ConfigError):
        asym_norm(np.ones(2), np.array([0.5, 1.2]))


def test_norm_batched_rows_match_single_calls():
    rng = np.random.default_rng(3)
    rows = rng.normal(size=(7, 4))
    w = rng.uniform(0.0, 1.0, size=4)
    batched = asym_norm(rows, w)
    assert np.allclose(batched, [asym_norm(r, w) for r in rows], atol=1e-12)


@given(v=_VECS)
@settings(max_examples=80, deadline=None)
def test_norm_nonnegative_and_absolute_split(v):
    w = np.full(v.shape, 0.7)
    n_fwd = asym_norm(v, w)
    n_bwd = asym_norm(-v, w)
    assert n_fwd >= 0.0 and n_bwd >= 0.0
    # forward plus reverse recovers the full L1 mass
    assert n_fwd + n_bwd == pytest.approx(np.abs(v).sum(), abs=1e-9)


@given(v=_VECS, lam=st.floats(0.0, 50.0))
@settings(max_examples=80, deadline=None)
def test_norm_positively_homogeneous(v, lam):
    w = np.linspace(0.1, 0.9, v.shape[0])
    assert asym_norm(lam * v, w) == pytest.approx(lam * asym_norm(v, w), abs=1e-9, rel=1e-9)


@given(
    uv=st.integers(1, 6).flatmap(
        lambda n: st.tuples(
            hnp.arrays(np.float64, (n,), elements=st.floats(-5.0, 5.0)),
            hnp.arrays(np.float64, (n,), elements=st.floats(-5.0, 5.0)),
        )
    )
)
@settings(max_examples=80, deadline=None)
def test_norm_subadditive(uv):
    u, v = uv
    w = np.linspace(0.05, 0.95, u.shape[0])
    assert asym_norm(u + v, w) <= asym_norm(u, w) + asym_norm(v, w) + 1e-9


def test_norm_gradient_branches():
    v = np.array([2.0, -3.0, 0.0])
    w = np.array([0.8, 0.8, 0.8])
    g = asym_norm_grad_v(v, w)
    assert np.allclose(g, [0.8, -0.2, 0.8])  # kink takes the positive branch


def test_norm_gradient_matches_finite_differences_off_kink():
    rng = np.random.default_rng(5)
    w = rng.uniform(0.1, 0.9, size=6)

    def f(v):
        return asym_norm(v, w), asym_norm_grad_v(v, w)

    v = rng.normal(size=6) + np.sign(rng.normal(size=6))  # keep away from 0
    assert finite_diff_check(f, v) < 1e-6


# ---------------------------------------------------------------------------
# model distances


def test_self_distance_is_zero():
    m = _random_model()
    p = np.random.default_rng(1).normal(size=6)
    assert quasi_dist(m, p, p) == pytest.approx(0.0, abs=1e-12)


def test_triangle_inequality_random_triples():
    m = _random_model(seed=2)
    rng = np.random.default_rng(7)
    pts = rng.normal(size=(300, 3, 6))
    for p, q, r in pts:
        d_pq, d_qr, d_pr = m.distance(p, q), m.distance(q, r), m.distance(p, r)
        assert d_pq + d_qr >= d_pr - 1e-9


def test_asymmetry_appears_with_skewed_weights():
    m = _random_model(seed=3)
    m.w_raw.values[...] = 1.5  # w well away from 0.5
    rng = np.random.default_rng(11)
    gaps = [
        abs(m.distance(p, q) - m.distance(q, p))
        for p, q in rng.normal(size=(50, 2, 6))
    ]
    assert max(gaps) > 1e-3


def test_half_weights_make_distance_symmetric():
    m = _random_model(seed=4)
    m.w_raw.values[...] = 0.0  # sigmoid(0) = 0.5 exactly
    rng = np.random.default_rng(13)
    for p, q in rng.normal(size=(40, 2, 6)):
        assert m.distance(p, q) == pytest.approx(m.distance(q, p), abs=1e-9)


def test_weights_start_symmetric_and_stay_inside_unit_interval():
    m = QuasimetricModel.create(5, np.random.default_rng(0))
    assert np.allclose(m.w, 0.5)
    m.w_raw.values[...] = np.array([-30.0] * 8 + [30.0] * 8)
    assert np.all(m.w > 0.0) and np.all(m.w < 1.0)


def test_model_rejects_mismatched_weight_length():
    rng = np.random.default_rng(0)
    m = QuasimetricModel.create(4, rng, embed_dim=8)
    from qnav.autodiff import ParamTensor

    with pytest.raises(InputError):
        QuasimetricModel(m.net, ParamTensor(np.zeros(5)))


def test_flat_params_round_trip():
    m = _random_model(seed=5)
    vec = m.flat_params()
    m2 = _random_model(seed=6)
    m2.set_flat_params(vec)
    assert np.array_equal(m2.flat_params(), vec)
    p = np.ones(6)
    q = np.zeros(6)
    assert m2.distance(p, q) == pytest.approx(m.distance(p, q))


# ---------------------------------------------------------------------------
# contrastive loss


def test_loss_zero_when_positives_coincide_and_negatives_clear_margin():
    m = _identity_model(dim=3)
    a = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
    n = a + 10.0  # symmetric-norm distance 15, far past any small margin
    batch = ContrastiveBatch(a, a.copy(), n, margin=1.0)
    assert contrastive_loss(batch, m) == pytest.approx(0.0, abs=1e-12)


def test_loss_single_pair_worked_example():
    # d(anchor, positive) = 1, d(anchor, negative) = 0, margin 1 -> 1 + 1 = 2
    m = _identity_model(dim=2)
    a = np.array([[2.0, 0.0]])
    p = np.array([[0.0, 0.0]])  # diff (2, 0), w = 0.5 -> distance 1
    batch = ContrastiveBatch(a, p, a.copy(), margin=1.0)
    assert contrastive_loss(batch, m) == pytest.approx(2.0, abs=1e-12)


def test_loss_nonnegative_on_random_batches():
    m = _random_model(seed=8)
    rng = np.random.default_rng(17)
    for _ in range(10):
        a, p, n = rng.normal(size=(3, 16, 6))
        m.zero_grads()
        assert contrastive_loss(ContrastiveBatch(a, p, n), m) >= 0.0


def test_loss_gradient_matches_finite_differences():
    m = _random_model(in_dim=4, embed_dim=3, seed=9)
    rng = np.random.default_rng(19)
    a, p, n = rng.normal(size=(3, 8, 4))
    targets = rng.uniform(0.0, 1.0, size=8)
    batch = ContrastiveBatch(a, p, n, margin=0.8, targets=targets)

    def f(vec):
        m.set_flat_params(vec)
        m.zero_grads()
        loss = contrastive_loss(batch, m)
        return loss, m.flat_grads()

    assert finite_diff_check(f, m.flat_params()) < 1e-4


def test_loss_targets_pull_positive_distance_toward_cost():
    m = _identity_model(dim=2)
    a = np.array([[2.0, 0.0]])
    p = np.array([[0.0, 0.0]])  # distance 1 at w=0.5
    far = np.array([[-10.0, 10.0]])
    hit = ContrastiveBatch(a, p, far, margin=1.0, targets=np.array([1.0]))
    assert contrastive_loss(hit, m) == pytest.approx(0.0, abs=1e-12)
    m.zero_grads()
    miss = ContrastiveBatch(a, p, far, margin=1.0, targets=np.array([0.25]))
    assert contrastive_loss(miss, m) == pytest.approx(0.75**2, abs=1e-12)


def test_batch_validation():
    a = np.zeros((2, 3))
    with pytest.raises(InputError):
        ContrastiveBatch(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3)))
    with pytest.raises(InputError):
        ContrastiveBatch(a, np.zeros((3, 3)), a)
    with pytest.raises(ConfigError):
        ContrastiveBatch(a, a, a, margin=0.0)
    with pytest.raises(InputError):
        ContrastiveBatch(a, a, a, targets=np.zeros(5))
    with pytest.raises(InputError):
        ContrastiveBatch(a, a, a, targets=np.array([0.5, -0.5]))


# ---------------------------------------------------------------------------
# datasets, negatives, calibration


def _ramp_dataset(n=400, seed=0):
    """1-D ramp walk: climbing a step costs 2*dz, descending costs 1*|dz|."""
    rng = np.random.default_rng(seed)
    pos = np.cumsum(rng.uniform(-0.5, 0.5, size=n + 1))
    acts = rng.uniform(-1.0, 1.0, size=n + 1)
    enc = np.stack([pos, np.sin(pos), acts], axis=1)
    dz = pos[1:] - pos[:-1]
    cost = np.where(dz > 0.0, 2.0 * dz, -1.0 * dz)
    succ = np.arange(1, n + 1)
    return TransitionDataset(x=enc[:-1], y=enc[1:], cost=cost, dz=dz, succ_idx=succ)


def test_dataset_validation():
    with pytest.raises(InputError):
        TransitionDataset(x=np.zeros((0, 2)), y=np.zeros((0, 2)), cost=np.zeros(0))
    with pytest.raises(InputError):
        TransitionDataset(x=np.zeros((3, 2)), y=np.zeros((4, 2)), cost=np.zeros(3))
    with pytest.raises(InputError):
        TransitionDataset(x=np.zeros((2, 2)), y=np.zeros((2, 2)), cost=np.array([1.0, -0.5]))


def test_negatives_never_select_own_successor():
    ds = _ramp_dataset(n=50)
    rng = np.random.default_rng(23)
    idx = np.arange(len(ds))
    for _ in range(20):
        neg = sample_negatives(ds, idx, rng)
        assert not np.any(neg == ds.succ_idx[idx])


def test_fit_scale_recovers_exact_ratio():
    d = np.array([1.0, 2.0, 3.0])
    assert fit_scale(d, 2.5 * d) == pytest.approx(2.5)
    assert fit_scale(np.zeros(3), np.ones(3)) == 1.0


def test_training_reduces_loss_on_ramp_walk():
    ds = _ramp_dataset()
    rng = np.random.default_rng(29)
    m = QuasimetricModel.create(3, rng, embed_dim=8, hidden=(32,))
    first = train_embedding(m, ds, epochs=1, rng=rng)
    last = train_embedding(m, ds, epochs=30, rng=rng)
    assert last < first


def test_training_rejects_zero_epochs():
    ds = _ramp_dataset(n=20)
    m = QuasimetricModel.create(3, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        train_embedding(m, ds, epochs=0, rng=np.random.default_rng(0))


def test_calibration_learns_rank_and_climb_asymmetry():
    ds = _ramp_dataset(n=600, seed=1)
    rng = np.random.default_rng(31)
    m = QuasimetricModel.create(3, rng, embed_dim=8, hidden=(32,))
    res = calibrate_to_cost(ds, m, epochs=60, rng=rng)
    assert isinstance(res, CalibrationResult) and not res.skipped
    assert res.spearman >= 0.6
    assert res.mean_d_uphill > res.mean_d_downhill
    # the fitted scale maps norm units back to cost units
    d = np.asarray(m.distance(ds.x, ds.y))
    assert res.scale == pytest.approx(fit_scale(d, ds.cost))


def test_calibration_skips_degenerate_costs_with_warning():
    rng = np.random.default_rng(37)
    x = rng.normal(size=(50, 3))
    ds = TransitionDataset(x=x, y=x + 0.1, cost=np.full(50, 0.7))
    m = QuasimetricModel.create(3, rng)
    with pytest.warns(UserWarning, match="identical"):
        res = calibrate_to_cost(ds, m, epochs=5, rng=rng)
    assert res.skipped and math.isnan(res.spearman)


# ---------------------------------------------------------------------------
# shaped advantage


def test_advantage_with_zero_distances_is_discounted_return():
    r = np.array([1.0, 2.0, 3.0])
    adv = quasimetric_advantage(r, np.zeros(3), gamma=0.9)
    assert adv[0] == pytest.approx(1.0 + 0.9 * 2.0 + 0.81 * 3.0)
    assert adv[2] == pytest.approx(3.0)


def test_advantage_single_step_worked_example():
    adv = quasimetric_advantage(np.array([1.0]), np.array([0.4]), gamma=0.99)
    assert adv[0] == pytest.approx(0.6)


def test_advantage_two_step_hand_recursion():
    adv = quasimetric_advantage(np.array([1.0, 1.0]), np.array([0.5, 0.5]), gamma=0.5)
    assert adv[0] == pytest.approx(0.75)
    assert adv[1] == pytest.approx(0.5)


def test_advantage_validation():
    with pytest.raises(InputError):
        quasimetric_advantage(np.ones(3), np.ones(2), gamma=0.9)
    with pytest.raises(ConfigError):
        quasimetric_advantage(np.ones(3), np.ones(3), gamma=0.0)


# ---------------------------------------------------------------------------
# persistence


def test_embedding_checkpoint_round_trip(tmp_path):
    m = _random_model(seed=41)
    m.scale = 3.25
    path = str(tmp_path / "embed.npz")
    save_embedding(path, m, meta={"note": "test"})
    m2 = load_embedding(path)
    rng = np.random.default_rng(43)
    p, q = rng.normal(size=(2, 6))
    assert m2.scale == pytest.approx(3.25)
    assert m2.distance(p, q) == pytest.approx(m.distance(p, q), abs=1e-12)
    assert np.allclose(m2.w, m.w)


def test_load_rejects_foreign_checkpoint(tmp_path):
    from qnav.autodiff import save_checkpoint

    path = str(tmp_path / "other.npz")
    save_checkpoint(path, {"a": np.ones(2)}, {"kind": "policy"})
    with pytest.raises(InputError):
        load_embedding(path)


def test_replay_csv_round_trip(tmp_path):
    ds = _ramp_dataset(n=30)
    path = str(tmp_path / "replay.csv")
    write_replay_csv(path, ds, meta={"scenario": "ramp"})
    back = read_replay_csv(path)
    assert np.allclose(back.x, ds.x, atol=1e-12)
    assert np.allclose(back.y, ds.y, atol=1e-12)
    assert np.allclose(back.cost, ds.cost, atol=1e-12)
    assert np.array_equal(back.succ_idx, ds.succ_idx)
