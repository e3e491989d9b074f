"""Finite-difference gradient audits for every layer and the composed loss.

Each check builds a small deterministic loss touching one component (or the
whole clipped-surrogate objective) and compares the tape's gradients against
central finite differences.  Used by both the test suite and the CLI.
"""

from __future__ import annotations

import numpy as np

from . import nn


def _fresh_rng():
    return np.random.default_rng(7)


def _jitter(store: nn.ParamStore, rng: np.random.Generator, scale: float = 0.05) -> None:
    """Move every block off its init point so no gradient is vacuously zero.

    Zero biases leave relu/tanh units exactly at their kinks, where analytic
    and one-sided numeric derivatives legitimately disagree; a generic point
    avoids that without touching the code under test.
    """
    for param in store.params.values():
        param += scale * rng.standard_normal(param.shape)


def check_mlp(eps: float = 1e-5) -> float:
    rng = _fresh_rng()
    store = nn.ParamStore()
    mlp = nn.Mlp(store, "mlp", in_dim=6, hidden_dim=5, out_dim=3, layers=3, rng=rng, out_gain=1.0)
    _jitter(store, rng)
    x = rng.standard_normal((4, 6))
    target = rng.standard_normal((4, 3))

    def loss_fn():
        return nn.tmean(nn.square(nn.sub(mlp(nn.Tensor(x)), target)))

    return nn.grad_check(loss_fn, store, eps)


def check_gcn(eps: float = 1e-5) -> float:
    rng = _fresh_rng()
    store = nn.ParamStore()
    encoder = nn.GraphEncoder(store, "gcn", layers=2, embed_dim=4, rng=rng)
    _jitter(store, rng)
    mixing = rng.uniform(0.0, 1.0, (5, 5))
    mixing = 0.5 * (mixing + mixing.T)
    target = rng.standard_normal(4)

    def loss_fn():
        return nn.tsum(nn.square(nn.sub(encoder(mixing), target)))

    return nn.grad_check(loss_fn, store, eps)


def check_gaussian_head(eps: float = 1e-5) -> float:
    rng = _fresh_rng()
    store = nn.ParamStore()
    store.create("mean_seed", rng.standard_normal((3, 2)))
    store.create("log_std", 0.3 * rng.standard_normal(2))
    _jitter(store, rng)
    actions = rng.standard_normal((3, 2))

    def loss_fn():
        dist = nn.DiagonalGaussian(store.leaf("mean_seed"), store.leaf("log_std"))
        return nn.sub(nn.tmean(dist.log_prob(actions)), nn.mul(dist.entropy(), 0.1))

    return nn.grad_check(loss_fn, store, eps)


def check_composed_objective(eps: float = 1e-5) -> float:
    """The full clipped-surrogate + value + entropy loss through an actor/critic."""
    rng = _fresh_rng()
    config = nn.NetworkConfig(mode=nn.EncoderMode.FLAT_MLP, mlp_hidden=5, mlp_layers=2, action_dim=2)
    network = nn.ActorCritic(config, input_dim=6, seed=3)
    _jitter(network.store, rng)
    batch = [rng.standard_normal(6) for _ in range(4)]
    actions = rng.standard_normal((4, 2))
    old_log_probs = rng.standard_normal(4) * 0.1 - 2.0
    advantages = rng.standard_normal(4)
    returns = rng.standard_normal(4)

    def loss_fn():
        log_probs, entropy, values = network.evaluate(batch, actions)
        ratio = nn.exp(nn.sub(log_probs, old_log_probs))
        surrogate = nn.minimum(
            nn.mul(ratio, advantages),
            nn.mul(nn.clip(ratio, 0.8, 1.2), advantages),
        )
        policy_loss = nn.mul(nn.tmean(surrogate), -1.0)
        value_loss = nn.tmean(nn.square(nn.sub(values, returns)))
        return nn.add(
            nn.add(policy_loss, nn.mul(value_loss, 0.5)), nn.mul(entropy, -0.01)
        )

    return nn.grad_check(loss_fn, network.store, eps)


def check_graph_actor_critic(eps: float = 1e-5) -> float:
    """The same composed loss but through the graph encoder path."""
    rng = _fresh_rng()
    config = nn.NetworkConfig(
        mode=nn.EncoderMode.GRAPH, gcn_layers=2, node_embed_dim=3,
        mlp_hidden=4, mlp_layers=2, action_dim=2,
    )
    network = nn.ActorCritic(config, seed=5)
    _jitter(network.store, rng)

    def random_pair():
        def sym(n):
            mat = rng.uniform(0.0, 1.0, (n, n))
            return 0.5 * (mat + mat.T)

        return (sym(4), sym(4))

    batch = [random_pair() for _ in range(3)]
    actions = rng.standard_normal((3, 2))
    old_log_probs = rng.standard_normal(3) * 0.1 - 2.0
    advantages = rng.standard_normal(3)
    returns = rng.standard_normal(3)

    def loss_fn():
        log_probs, entropy, values = network.evaluate(batch, actions)
        ratio = nn.exp(nn.sub(log_probs, old_log_probs))
        surrogate = nn.minimum(
            nn.mul(ratio, advantages),
            nn.mul(nn.clip(ratio, 0.8, 1.2), advantages),
        )
        policy_loss = nn.mul(nn.tmean(surrogate), -1.0)
        value_loss = nn.tmean(nn.square(nn.sub(values, returns)))
        return nn.add(
            nn.add(policy_loss, nn.mul(value_loss, 0.5)), nn.mul(entropy, -0.01)
        )

    return nn.grad_check(loss_fn, network.store, eps)


ALL_CHECKS = {
    "mlp": check_mlp,
    "graph_encoder": check_gcn,
    "gaussian_head": check_gaussian_head,
    "composed_objective": check_composed_objective,
    "graph_actor_critic": check_graph_actor_critic,
}


def run_grad_checks(eps: float = 1e-5, verbose: bool = False) -> float:
    worst = 0.0
    for name, check in ALL_CHECKS.items():
        error = check(eps)
        worst = max(worst, error)
        if verbose:
            print(f"{name:20s} max relative error {error:.3e}")
    return worst
