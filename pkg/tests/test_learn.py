import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from dextron_lite.env import DextronEnv
from dextron_lite.errors import DimensionMismatch, EmptyBuffer, EmptyDataset, MissingCheckpoint
from dextron_lite.learn import bc, checkpoint, gradcheck, sac
from dextron_lite.learn.buffer import ReplayBuffer, demo_count, sample_mixed_batch
from dextron_lite.learn.nn import Adam, Mlp, Normalizer, adam_state, adam_step, cross_entropy, softmax

# ---- Mlp -------------------------------------------------------------------------


def test_param_count():
    net = Mlp((21, 256, 256, 2))
    assert net.n_params == 21 * 256 + 256 + 256 * 256 + 256 + 256 * 2 + 2
    assert sum(p.size for p in net.params) == net.n_params


def test_zero_net_outputs_zero():
    net = Mlp((4, 8, 3), zero=True)
    np.testing.assert_array_equal(net.forward(np.ones((5, 4))), np.zeros((5, 3)))


def test_identity_single_layer():
    net = Mlp((3, 3), zero=True)
    net.weights[0][...] = np.eye(3)
    x = np.array([0.5, 1.0, 2.0])
    np.testing.assert_array_equal(net.forward(x), x)


def test_forward_matches_matmul_oracle():
    rng = np.random.default_rng(0)
    net = Mlp((5, 7, 6, 2), rng)
    for b in net.biases:
        b[...] = rng.normal(size=b.shape)
    x = rng.normal(size=(9, 5))
    h = x
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h.dot(w) + b
        if i < 2:
            h = np.where(h > 0, h, 0.0)
    np.testing.assert_allclose(net.forward(x), h, atol=1e-10)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        Mlp((4, 2)).forward(np.zeros(3))


def test_backward_finite_differences():
    rng = np.random.default_rng(1)
    net = Mlp((4, 8, 8, 3), rng)
    gradcheck._randomize(net, rng)
    x = rng.normal(size=(6, 4))
    target = rng.normal(size=(6, 3))

    def loss():
        return float(np.mean((net.forward(x) - target) ** 2))

    out, cache = net.forward(x, cache=True)
    grads, _ = net.backward(cache, 2 * (out - target) / out.size)
    assert gradcheck.max_rel_error(loss, net.params, [g.copy() for g in grads]) < 1e-4


def test_constant_loss_zero_gradient():
    net = Mlp((3, 5, 1), np.random.default_rng(2))
    _, cache = net.forward(np.ones((4, 3)), cache=True)
    grads, gx = net.backward(cache, np.zeros((4, 1)))
    assert all(np.all(g == 0) for g in grads) and np.all(gx == 0)


def test_dead_relu_blocks_gradient():
    net = Mlp((1, 2, 1), zero=True)
    net.weights[0][...] = [[1.0, -1.0]]  # second unit is dead for positive input
    net.weights[1][...] = [[1.0], [1.0]]
    _, cache = net.forward(np.array([[2.0]]), cache=True)
    grads, _ = net.backward(cache, np.ones((1, 1)))
    gw0 = grads[0]
    assert gw0[0, 0] == 2.0 and gw0[0, 1] == 0.0


def test_float32_network():
    net = Mlp((3, 4, 1), np.random.default_rng(0), dtype="float32")
    assert net.forward(np.ones(3)).dtype == np.float32
    assert net.copy().dtype == np.float32


# ---- Adam ------------------------------------------------------------------------


def test_adam_first_step():
    p = [np.array([0.0])]
    adam_step(p, [np.array([1.0])], adam_state(p), lr=1e-3)
    assert p[0][0] == pytest.approx(-1e-3 / (1 + 1e-8), abs=1e-15)
    assert p[0][0] == pytest.approx(-9.99999e-4, abs=1e-9)


def test_adam_zero_gradient_no_change():
    p = [np.array([0.3, -0.2])]
    adam_step(p, [np.zeros(2)], adam_state(p), lr=1e-3)
    np.testing.assert_array_equal(p[0], [0.3, -0.2])


def test_adam_symmetry_and_oracle():
    p = [np.array([1.0, 1.0, 5.0])]
    opt = Adam(p, lr=0.01)
    m = v = 0.0
    x = 5.0
    for t in range(1, 6):
        g = np.array([0.5, 0.5, 2.0 * t])
        opt.step([g])
        # scalar textbook oracle for the third coordinate
        m = 0.9 * m + 0.1 * g[2]
        v = 0.999 * v + 0.001 * g[2] ** 2
        x -= 0.01 * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert p[0][0] == p[0][1]
    assert p[0][2] == pytest.approx(x, abs=1e-12)


# ---- normalizer / softmax ----------------------------------------------------------


def test_normalizer_fit_and_clip():
    x = np.array([[0.0, 1.0], [2.0, 1.0]])
    n = Normalizer(2, clip=10.0).fit(x)
    np.testing.assert_allclose(n(x), [[-1.0, 0.0], [1.0, 0.0]])  # constant column uses the std floor
    assert n(np.array([1000.0, 1.0]))[0] == 10.0


def test_cross_entropy_equal_logits():
    loss, grad = cross_entropy(np.zeros((4, 2)), [0, 1, 1, 0])
    assert loss == pytest.approx(math.log(2), abs=1e-12)
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-15)
    np.testing.assert_allclose(softmax(np.array([[0.0, 0.0]])), [[0.5, 0.5]])


def test_classifier_gradient():
    rep = gradcheck.check_classifier(seed=3)
    assert rep.max_rel_error < 1e-4 and rep.n_checked > 100


# ---- replay buffer -----------------------------------------------------------------


def fill(buf, n, start=0):
    for i in range(start, start + n):
        buf.add(np.full(buf.state_dim, i), i, 0.0, np.full(buf.state_dim, i + 1), False)


def test_buffer_evicts_oldest():
    buf = ReplayBuffer(5, 2)
    fill(buf, 8)
    assert len(buf) == 5
    assert sorted(buf.get(np.arange(5))["a"]) == [3, 4, 5, 6, 7]


def test_buffer_grows_past_initial_allocation():
    buf = ReplayBuffer(5000, 1)
    fill(buf, 3000)
    assert len(buf) == 3000 and buf.get(2999)["a"] == 2999


def test_buffer_uniform_sampling():
    buf = ReplayBuffer(100, 1)
    fill(buf, 150)  # wraps: contents are 50..149
    draws = buf.sample(np.random.default_rng(0), 100_000)["a"].astype(int)
    counts = np.bincount(draws - 50, minlength=100)
    assert counts.sum() == 100_000 and draws.min() >= 50
    assert sps.chisquare(counts).pvalue > 0.01


def test_empty_buffer():
    with pytest.raises(EmptyBuffer):
        ReplayBuffer(4, 1).sample(np.random.default_rng(0), 1)


@pytest.mark.parametrize("dur,n_demo", [(0.1, 3), (0.3, 10), (0.0, 0), (1.0, 32)])
def test_mixed_batch_examples(dur, n_demo):
    agent, demo = ReplayBuffer(50, 1), ReplayBuffer(50, 1)
    fill(agent, 20, 0)
    fill(demo, 20, 1000)
    b = sample_mixed_batch(agent, demo, 32, dur, np.random.default_rng(0))
    assert b["n_demo"] == n_demo
    assert np.sum(b["a"] >= 1000) == n_demo and len(b["a"]) == 32


def test_mixed_batch_without_demo_buffer():
    agent = ReplayBuffer(10, 1)
    fill(agent, 5)
    assert sample_mixed_batch(agent, None, 32, 0.0, np.random.default_rng(0))["n_demo"] == 0
    with pytest.raises(EmptyBuffer):
        sample_mixed_batch(agent, ReplayBuffer(10, 1), 32, 0.1, np.random.default_rng(0))


@given(batch=st.integers(1, 512), dur=st.floats(0.0, 1.0))
def test_demo_count_is_rounded_share(batch, dur):
    n = demo_count(batch, dur)
    assert 0 <= n <= batch
    assert abs(n - batch * dur) <= 0.5 + 1e-9


# ---- SAC -------------------------------------------------------------------------


def test_sac_config_validation():
    with pytest.raises(ValueError):
        sac.SacConfig(dur=1.5)
    with pytest.raises(ValueError):
        sac.SacConfig(lr=0.0)


def test_sac_gradients():
    reports = gradcheck.check_sac(seed=4)
    assert set(reports) == {"v", "q1", "q2", "policy", "alpha"}
    for rep in reports.values():
        assert rep.max_rel_error < 1e-4
        assert rep.n_kinks <= 0.02 * (rep.n_checked + rep.n_kinks)


def test_kink_detection():
    # |x| at 0 is not differentiable: the entry is reported as a kink, not as an error
    x = np.array([0.0])
    rep = gradcheck.compare(lambda: float(abs(x[0])), [x], [np.array([1.0])])
    assert rep.n_kinks == 1 and rep.n_checked == 0
    y = np.array([0.3])
    rep = gradcheck.compare(lambda: float(y[0] ** 3), [y], [np.array([3 * 0.09])])
    assert rep.n_checked == 1 and rep.max_rel_error < 1e-8


def _zero_agent():
    agent = sac.SacAgent(sac.SacConfig(hidden=(8, 8), state_dim=3, dtype="float64"), np.random.default_rng(0))
    for net in (agent.q1, agent.q2, agent.v, agent.v_target, agent.policy.net):
        net.flat[...] = 0.0
    return agent


def _batch(n, r, done):
    return {"s": np.ones((n, 3)), "a": np.zeros(n), "r": np.full(n, r), "s2": np.ones((n, 3)), "done": np.full(n, done)}


def test_zero_networks_q_loss_is_one():
    losses, _ = sac.sac_losses(_zero_agent(), _batch(8, 1.0, 0.0), np.zeros(8))
    assert losses["q1"] == 1.0 and losses["q2"] == 1.0


def test_terminal_q_target_is_reward():
    agent = _zero_agent()
    agent.v_target.biases[-1][...] = 7.0  # would add 0.99 * 7 if bootstrapped
    losses, _ = sac.sac_losses(agent, _batch(4, 1.0, 1.0), np.zeros(4))
    assert losses["q1"] == 1.0
    losses, _ = sac.sac_losses(agent, _batch(4, 1.0, 0.0), np.zeros(4))
    assert losses["q1"] == pytest.approx((1 + 0.99 * 7) ** 2)


def test_polyak_identity():
    agent = _zero_agent()
    agent.v.flat[...] = 1.0
    agent.v_target.polyak_from(agent.v, 0.01)
    assert np.all(agent.v_target.flat == 0.01)
    rng = np.random.default_rng(5)
    a, b = Mlp((3, 4, 1), rng), Mlp((3, 4, 1), rng)
    old = b.flat.copy()
    b.polyak_from(a, 0.01)
    np.testing.assert_array_equal(b.flat, old * (1 - 0.01) + 0.01 * a.flat)


def test_update_applies_polyak_to_target():
    agent = sac.SacAgent(sac.SacConfig(hidden=(8, 8), state_dim=3, dtype="float64"), np.random.default_rng(1))
    rng = np.random.default_rng(2)
    b = {"s": rng.normal(size=(8, 3)), "a": rng.uniform(-1, 1, 8), "r": np.ones(8), "s2": rng.normal(size=(8, 3)),
         "done": np.zeros(8)}
    target_old = agent.v_target.flat.copy()
    sac.sac_update(agent, b, rng)
    np.testing.assert_array_equal(agent.v_target.flat, target_old * (1 - 0.01) + 0.01 * agent.v.flat)


def test_squashed_actions_and_log_prob():
    assert np.all(np.isfinite(sac.squash_log_correction(np.arctanh(np.array([-1 + 1e-6, 0.0, 1 - 1e-6])))))
    assert np.isfinite(sac.squash_log_correction(np.array([50.0]))).all()
    pol = sac.GaussianPolicy(3, (8,), np.random.default_rng(0))
    pol.net.biases[-1][...] = [40.0, 0.0]  # saturating mean
    a = pol.act(np.zeros(3), deterministic=True)
    assert -1.0 < a < 1.0
    acts = [pol.act(np.zeros(3), np.random.default_rng(i)) for i in range(20)]
    assert all(-1 < x < 1 for x in acts)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_policy_log_prob_finite(seed):
    rng = np.random.default_rng(seed)
    pol = sac.GaussianPolicy(3, (8,), rng)
    gradcheck._randomize(pol.net, rng, scale=3.0)
    a, logp = pol.sample(rng.normal(size=(16, 3)), rng.normal(size=16))
    assert np.all(np.abs(a) <= 1) and np.all(np.isfinite(logp))


def _tiny_cfg(**kw):
    base = dict(hidden=(16, 16), total_frames=3000, warm_start=1000, epoch=500, eval_every=2, batch=16)
    base.update(kw)
    return sac.SacConfig(**base)


def test_train_rlil_curve_and_determinism(tset, gs_success):
    env = DextronEnv(tset)

    def pick(rng):
        return gs_success[int(rng.integers(len(gs_success)))].settings()

    evals = [r.settings() for r in gs_success[:3]]
    cfg = _tiny_cfg()
    a = sac.train_rlil(env, pick, gs_success[:5], cfg, eval_settings=evals)
    b = sac.train_rlil(env, pick, gs_success[:5], cfg, eval_settings=evals)
    assert len(a.curve) == cfg.total_frames // cfg.epoch
    assert [e for e, *_ in a.eval_curve] == [2, 4, 6]
    assert a.n_demo_transitions > 0
    assert a.curve == b.curve or np.allclose(np.array(a.curve), np.array(b.curve), equal_nan=True)
    np.testing.assert_array_equal(a.agent.policy.net.flat, b.agent.policy.net.flat)


def test_pure_rl_never_touches_demos(tset, gs_success, monkeypatch):
    env = DextronEnv(tset)
    calls = []
    monkeypatch.setattr(sac, "fill_demo_buffer", lambda *a, **k: calls.append(1))
    res = sac.train_rlil(env, lambda rng: gs_success[0].settings(), gs_success, _tiny_cfg(dur=0.0, total_frames=1500))
    assert calls == [] and res.n_demo_transitions == 0


def test_rlil_needs_demos(tset):
    with pytest.raises(ValueError):
        sac.train_rlil(DextronEnv(tset), lambda rng: None, [], _tiny_cfg())


def test_final_eval_fraction():
    res = sac.TrainResult(agent=None, eval_curve=[(10 * i, float(i), 0.0) for i in range(1, 9)])
    assert res.final_eval() == pytest.approx((7 + 8) / 2)


# ---- behavior cloning ----------------------------------------------------------------


def test_lr_schedule():
    cfg = bc.BcConfig()
    assert bc.lr_at(0, cfg) == 1e-3
    assert bc.lr_at(99, cfg) == 1e-3
    assert bc.lr_at(100, cfg) == 5e-4
    assert bc.lr_at(250, cfg) == pytest.approx(2.5e-4, abs=1e-18)


def test_bc_memorizes_repeated_pair():
    s = np.tile(np.linspace(-1, 1, 21), (64, 1))
    a = np.full(64, 0.37)
    res = bc.train_bc(s, a, bc.BcConfig(hidden=(32, 32), epochs=200, batch=64))
    assert res.losses[-1] < 1e-6
    assert bc.evaluate_mse(res.policy, s[:1], a[:1]) < 1e-6
    assert res.lrs[100] == 5e-4


def test_bc_empty_dataset(env):
    with pytest.raises(EmptyDataset):
        bc.train_bc(np.empty((0, 21)), np.empty(0))
    with pytest.raises(EmptyDataset):
        bc.build_bc_dataset([], env)


def test_bc_dataset_from_records(env, gs_success):
    s, a = bc.build_bc_dataset(gs_success, env, max_transitions=300)
    assert s.shape == (300, 21) and a.shape == (300,)
    assert np.all(np.abs(a) <= 1)


def test_bc_loss_gradient():
    rng = np.random.default_rng(0)
    pol = sac.GaussianPolicy(4, (8, 8), rng)
    gradcheck._randomize(pol.net, rng)
    s, a = rng.normal(size=(10, 4)), rng.uniform(-1, 1, 10)
    _, grads = bc.bc_loss(pol, s, a)
    grads = [g.copy() for g in grads]
    assert gradcheck.max_rel_error(lambda: bc.bc_loss(pol, s, a)[0], pol.net.params, grads) < 1e-4


# ---- checkpoints -------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    net = Mlp((3, 4, 2), rng, dtype="float32")
    norm = Normalizer(3, clip=5.0).fit(rng.normal(size=(10, 3)))
    opt = Adam([net.flat], 1e-3)
    opt.step([np.ones_like(net.flat)])
    path = checkpoint.save_checkpoint(tmp_path / "c.npz", "policy", {"pi": net}, norm, {"pi": opt}, {"x": 1})
    ck = checkpoint.load_checkpoint(path)
    assert ck.kind == "policy" and ck.meta == {"x": 1} and ck.version == checkpoint.FORMAT_VERSION
    np.testing.assert_array_equal(ck.nets["pi"].flat, net.flat)
    assert ck.nets["pi"].dtype == np.float32
    n2 = ck.normalizer()
    np.testing.assert_array_equal(n2.mean, norm.mean)
    assert n2.clip == 5.0
    opt2 = Adam([ck.nets["pi"].flat], 1e-3)
    opt2.load_arrays(ck.arrays, "opt/pi")
    assert opt2.state["t"] == 1


def test_missing_checkpoint(tmp_path):
    with pytest.raises(MissingCheckpoint):
        checkpoint.load_checkpoint(tmp_path / "nope.npz")


def test_curve_round_trip(tmp_path):
    rows = [(1, 0.5, 0.1, 3), (2, 1.5, 0.2, 4)]
    checkpoint.write_curve(tmp_path / "c.csv", rows)
    assert checkpoint.read_curve(tmp_path / "c.csv") == rows
