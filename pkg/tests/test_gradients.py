"""Reverse-mode gradients against central finite differences."""
import numpy as np
import pytest

from phydrl.ddpg import Batch, actor_objective_and_grads, critic_loss_and_grads
from phydrl.nn import MLP
from phydrl.phyn import KnowledgeSet, basis_length, build_edit, dense_phyn

H = 1e-6
RTOL = 1e-5


def fd(f, p):
    g = np.zeros_like(p)
    it = np.nditer(p, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = p[i]
        p[i] = old + H
        up = f()
        p[i] = old - H
        down = f()
        p[i] = old
        g[i] = (up - down) / (2 * H)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


def check_net(net, x, rng):
    G = rng.normal(size=net.forward(x)[0].shape)

    def loss():
        return float(np.sum(net.forward(x)[0] * G))

    out, caches = net.forward(x)
    grads, gx = net.backward(caches, G)
    for p, g in zip(net.params, grads):
        assert rel_err(g, fd(loss, p)) < RTOL
    assert rel_err(gx, fd(loss, x)) < RTOL


@pytest.mark.parametrize("seed", range(40))
@pytest.mark.parametrize("act", ["tanh", "relu"])
def test_dense_layers(seed, act):
    rng = np.random.default_rng(seed)
    net = MLP.create([3, 5, 4, 2], [act, act, "tanh"], rng, final_scale=1.0)
    for b in net.biases:
        b[:] = rng.normal(scale=0.1, size=b.shape)
    check_net(net, rng.normal(size=(4, 3)), rng)


@pytest.mark.parametrize("seed", range(40))
def test_phyn_layers(seed):
    rng = np.random.default_rng(seed)
    know = KnowledgeSet(((0, 1, 0.7), (1, 5, -0.3), (2, 0, 1.2)))
    act = ["tanh", "relu"][seed % 2]
    if seed % 3 == 0:
        net = dense_phyn([3, 4, 2], [2, 2], [act, "linear"], rng)
    else:
        net = build_edit(know, [3, 4, 3, 2], [2, 2, 1], 2, [act, act, "tanh"], rng)
    for layer in net.layers:
        layer.W *= 0.5
    check_net(net, rng.uniform(-1, 1, size=(3, 3)), rng)


@pytest.mark.parametrize("seed", range(20))
def test_composed_actor_critic(seed):
    rng = np.random.default_rng(seed)
    obs_dim, act_dim, n = 5, 1, 6
    actor = MLP.create([obs_dim, 8, act_dim], ["tanh", "tanh"], rng, final_scale=1.0)
    if seed % 2:
        critic = MLP.create([obs_dim + act_dim, 8, 1], ["tanh", "linear"], rng, final_scale=1.0)
    else:
        L = basis_length(obs_dim + act_dim, 2)
        know = KnowledgeSet(tuple((i, j, 0.0) for i in range(3) for j in range(1, obs_dim + act_dim + 1)))
        critic = build_edit(know, [obs_dim + act_dim, 3, 1], [2, 1], 1, ["tanh", "linear"], rng)
        assert L == critic.layers[0].W.shape[1]
    obs = rng.normal(size=(n, obs_dim))
    scale = 2.0
    J, grads = actor_objective_and_grads(actor, critic, obs, scale)

    def neg_J():
        return -actor_objective_and_grads(actor, critic, obs, scale)[0]

    for p, g in zip(actor.params, grads):
        assert rel_err(g, fd(neg_J, p)) < RTOL

    batch = Batch(obs, rng.normal(size=(n, act_dim)), rng.normal(size=n), obs, np.zeros(n, bool))
    y = rng.normal(size=n)
    loss, cgrads = critic_loss_and_grads(critic, batch, y)

    def c_loss():
        return critic_loss_and_grads(critic, batch, y)[0]

    for p, g in zip(critic.params, cgrads):
        assert rel_err(g, fd(c_loss, p)) < RTOL
