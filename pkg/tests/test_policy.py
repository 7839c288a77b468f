import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from warmsched import policy as P
from warmsched.instance import Agent, GenConfig, Task, generate
from warmsched.motion import build_roadmap, compute_travel_times, travel_times

from conftest import make_instance


def scaled(inst, tt, f):
    """Every time-like quantity multiplied by ``f`` (speeds divided by it)."""
    return inst.replace(
        agents=[Agent(a.id, a.start_position, a.velocity / f) for a in inst.agents],
        tasks=[Task(t.id, t.position, f * t.window_start, f * t.window_end) for t in inst.tasks],
        durations=inst.durations * f, wait=inst.wait * f), tt.scaled(f)


def rand_net(seed, hidden=8, rounds=2, scale=0.3):
    net = P.PolicyNet(hidden=hidden, rounds=rounds, seed=seed)
    rng = np.random.default_rng(seed + 1000)
    for v in net.params.values():
        v += scale * rng.standard_normal(v.shape)
    return net


@pytest.fixture(scope="module")
def g36():
    inst = generate(GenConfig(), 3)
    tt = compute_travel_times(inst)
    return inst, tt, P.encode(inst, tt)


def test_encode_time_scale_invariance(g36):
    inst, tt, g = g36
    assert P.encode(*scaled(inst, tt, 8.0)) == g  # power of two: exact
    g10 = P.encode(*scaled(inst, tt, 10.0))
    for k, v in g.arrays().items():
        np.testing.assert_allclose(g10.arrays()[k], v, rtol=1e-12, atol=1e-15)
    net = P.PolicyNet(seed=1)
    c1 = P.decode(P.forward(net, g), inst)[0]
    c2 = P.decode(P.forward(net, g10), scaled(inst, tt, 10.0)[0])[0]
    assert c1 == c2


def test_encode_one_by_one():
    inst = make_instance([(0, 0)], [1.0], [(3, 4, 0, 10)], [[2]])
    tt = travel_times(inst, build_roadmap(inst, n_samples=0, radius=1e6))
    g = P.encode(inst, tt)
    assert g.n_agents == 1 and g.n_tasks == 1
    assert g.edge_x.shape == (1, 1, P.EDGE_FEATURES)


def test_feature_ranges_over_seeds():
    for seed in range(100):
        inst = generate(GenConfig(), seed)
        g = P.encode(inst, compute_travel_times(inst))
        for v in g.arrays().values():
            assert np.isfinite(v).all() and np.abs(v).max() <= 10.0


def test_zero_readout_uniform(g36):
    net = P.PolicyNet(seed=0)
    net.zero_readout()
    probs = P.forward(net, g36[2])
    np.testing.assert_array_equal(probs, np.full_like(probs, 1.0 / g36[0].n_agents))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_rows_sum_to_one_and_equivariance(seed):
    inst = generate(GenConfig(n_agents=3, n_tasks=5), seed)
    g = P.encode(inst, compute_travel_times(inst))
    net = rand_net(seed, hidden=16)
    probs = P.forward(net, g)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    perm = np.random.default_rng(seed).permutation(3)
    gp = P.GraphInput(g.agent_x[perm], g.task_x, g.edge_x[perm], g.prec, g.prec_w)
    np.testing.assert_allclose(P.forward(net, gp), probs[:, perm], atol=1e-12)


def test_forward_deterministic(g36):
    net = P.PolicyNet(seed=4)
    np.testing.assert_array_equal(P.forward(net, g36[2]), P.forward(net, g36[2]))


def test_dimension_mismatch(g36):
    g = g36[2]
    bad = P.GraphInput(g.agent_x[:, :3], g.task_x, g.edge_x, g.prec, g.prec_w)
    with pytest.raises(P.DimensionMismatch):
        P.forward(P.PolicyNet(hidden=4), bad)
    with pytest.raises(P.DimensionMismatch):
        P.decode(np.ones((2, 2)) / 2, g36[0])


def test_uniform_decode_gives_agent_zero(g36):
    inst = g36[0]
    c, chosen = P.decode(np.full((inst.n_tasks, inst.n_agents), 1.0 / inst.n_agents), inst)
    assert (chosen == 0).all()
    assert sorted(c.orders[0]) == list(range(inst.n_tasks))


def test_one_hot_decode_matches_labels(g36):
    inst = g36[0]
    labels = np.array([2, 0, 1, 1, 0, 2])
    probs = np.eye(inst.n_agents)[labels]
    c, _ = P.decode(probs, inst)
    np.testing.assert_array_equal(c.agent_of(), labels)
    assert c.problems() == []


def test_decode_order_is_topological(g36):
    inst = g36[0]
    order = P.decode_order(inst)
    pos = {k: i for i, k in enumerate(order)}
    for j, k in zip(*np.nonzero(inst.precedence)):
        assert pos[j] < pos[k]


def test_sampled_decode_reproducible(g36):
    inst, _, g = g36
    probs = P.forward(P.PolicyNet(seed=2), g)
    a = P.decode(probs, inst, sample=True, rng=np.random.default_rng(5))[0]
    b = P.decode(probs, inst, sample=True, rng=np.random.default_rng(5))[0]
    assert a == b
    with pytest.raises(ValueError):
        P.decode(probs, inst, sample=True)


def test_gradient_check_small_nets(g36):
    inst, _, g = g36
    for seed in range(3):
        labels = np.random.default_rng(seed).integers(0, inst.n_agents, inst.n_tasks)
        assert P.gradient_check(rand_net(seed), g, labels, seed=seed) <= 1e-4


def test_gradient_check_detects_sign_flip(g36):
    inst, _, g = g36
    net = rand_net(0)
    labels = np.zeros(inst.n_tasks, dtype=int)
    _, _, grads = P.loss_and_grad(net, g, labels)
    for name in ("Wa0", "P1", "w"):
        bad = {k: v.copy() for k, v in grads.items()}
        bad[name] = -bad[name]
        assert P.gradient_check(net, g, labels, grads=bad) > 1e-2


def test_gradient_check_zero_net_zero_input():
    net = P.PolicyNet(hidden=4, rounds=1)
    for v in net.params.values():
        v[:] = 0.0
    g = P.GraphInput(np.zeros((2, 4)), np.zeros((3, 7)), np.zeros((2, 3, 2)),
                     np.zeros((3, 3)), np.zeros((3, 3)))
    assert P.gradient_check(net, g, [0, 1, 0]) == 0.0


def test_bc_memorizes_single_example(g36):
    inst, _, g = g36
    ex = [P.ExpertExample("x", g, np.array([2, 0, 1, 1, 0, 2]))]
    res = P.bc_train(ex, P.BCParams(epochs=200, hidden=32, batch_size=1, lr=1e-2))
    assert P.accuracy(res.net, ex) == 1.0
    assert res.losses[-1] < res.losses[0]


def test_bc_feature_noise_seeded(g36):
    _, _, g = g36
    ex = [P.ExpertExample("x", g, np.array([2, 0, 1, 1, 0, 2]))]
    hp = P.BCParams(epochs=4, hidden=8, feature_noise=0.1)
    a, b = P.bc_train(ex, hp), P.bc_train(ex, hp)
    assert a.losses == b.losses
    clean = P.bc_train(ex, P.BCParams(epochs=4, hidden=8, feature_noise=0.0))
    assert clean.losses != a.losses


def test_bc_zero_lr_is_identity(g36):
    inst, _, g = g36
    ex = [P.ExpertExample("x", g, np.zeros(inst.n_tasks, dtype=int))]
    net = P.PolicyNet(hidden=8, seed=3)
    res = P.bc_train(ex, P.BCParams(lr=0.0, epochs=5, hidden=8, feature_noise=0.0), net=net)
    for k in net.params:
        np.testing.assert_array_equal(res.net.params[k], net.params[k])
    assert len(set(res.losses)) == 1


def test_bc_flags_divergence(g36):
    inst, _, g = g36
    bad = P.GraphInput(g.agent_x * np.nan, g.task_x, g.edge_x, g.prec, g.prec_w)
    with pytest.raises(P.DivergenceDetected):
        P.bc_train([P.ExpertExample("x", bad, np.zeros(inst.n_tasks, dtype=int))],
                   P.BCParams(epochs=2, hidden=4))


def test_bc_rejects_empty():
    with pytest.raises(ValueError):
        P.bc_train([])


def test_checkpoint_round_trip(tmp_path):
    net = rand_net(1, hidden=8)
    P.save_checkpoint(net, tmp_path / "n.npz", extra={"note": 1})
    back = P.load_checkpoint(tmp_path / "n.npz")
    assert (back.hidden, back.rounds) == (8, 2)
    for k in net.params:
        np.testing.assert_array_equal(back.params[k], net.params[k])


def test_dataset_round_trip(tmp_path, g36):
    ex = [P.ExpertExample("a", g36[2], np.array([0, 1, 2, 0, 1, 2]))]
    P.save_dataset(ex, tmp_path / "d.json")
    back = P.load_dataset(tmp_path / "d.json")
    assert back[0].graph == ex[0].graph and back[0].labels.tolist() == [0, 1, 2, 0, 1, 2]


def test_rl_time_only_rejected_is_cold_equivalent():
    # agent 1 sits on the tasks; agent 0 is too far to meet any deadline
    inst = make_instance([(0, 0), (90, 90)], [1.0, 1.0],
                         [(90, 95, 0, 30), (95, 90, 0, 30)], [[5, 5], [5, 5]])
    tt = travel_times(inst, build_roadmap(inst, n_samples=0, radius=1e6))
    net = P.PolicyNet(hidden=8, seed=0)
    res = P.rl_finetune(net, [(inst, tt)], alpha=0.0, beta=1.0,
                        hp=P.RLParams(episodes=12, time_measure="nodes", seed=1))
    assert not all(res.accepted) and any(res.accepted)
    for acc, r in zip(res.accepted, res.rewards):
        if not acc:
            assert r == -1.0
    assert all(np.isfinite(res.rewards))


def test_rl_score_only_constant_reward():
    inst = generate(GenConfig(n_agents=2, n_tasks=3), 4)
    tt = compute_travel_times(inst)
    net = P.PolicyNet(hidden=8, seed=0)
    res = P.rl_finetune(net, [(inst, tt)], alpha=1.0, beta=0.0,
                        hp=P.RLParams(episodes=10, time_measure="nodes"))
    assert len(set(res.rewards)) == 1
    for k in net.params:
        np.testing.assert_array_equal(res.net.params[k], net.params[k])


def test_rl_trend_on_fixed_instance():
    inst = generate(GenConfig(n_agents=2, n_tasks=4), 12)
    tt = compute_travel_times(inst)
    net = P.PolicyNet(hidden=16, seed=0)
    res = P.rl_finetune(net, [(inst, tt)], hp=P.RLParams(episodes=200, lr=3e-3,
                                                         time_measure="nodes"))
    assert np.mean(res.rewards[-50:]) >= np.mean(res.rewards[:50])
