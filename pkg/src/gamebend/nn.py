"""Hand-rolled reverse-mode autodiff and the actor/critic networks.

No external ML framework: a Tensor wraps a numpy array and remembers how to
push gradients to its parents; backward() walks the tape in reverse
topological order.  On top of that sit a tanh MLP, a graph-convolution
encoder over response graphs, and a diagonal Gaussian policy head.  Analytic
gradients are validated against central finite differences by grad_check.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .games import PAYOFF_BOUND, NormalFormGame
from .response_graph import build_response_graph

LOG_2PI = float(np.log(2.0 * np.pi))

# spread (std) of a payoff entry drawn uniformly from the normalized range;
# flat observations are stacks of such entries, so MLP heads init against it
FLAT_FEATURE_SCALE = PAYOFF_BOUND / float(np.sqrt(3.0))

CHECKPOINT_VERSION = 1


class GradientError(RuntimeError):
    """A non-finite value appeared in the backward sweep."""


# ---------------------------------------------------------------------------
# autodiff core
# ---------------------------------------------------------------------------


class Tensor:
    """Array node of a dynamically recorded computation graph."""

    __slots__ = ("value", "grad", "_parents", "_grad_fn", "name")

    def __init__(self, value, _parents=(), _grad_fn=None, name=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self._parents = _parents
        self._grad_fn = _grad_fn
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, name={self.name})"


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=float))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcasted gradient back down to the parent's shape."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)

    def grad_fn(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)

    return Tensor(a.value + b.value, (a, b), grad_fn)


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)

    def grad_fn(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)

    return Tensor(a.value - b.value, (a, b), grad_fn)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)

    def grad_fn(g):
        return (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        )

    return Tensor(a.value * b.value, (a, b), grad_fn)


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ValueError("matmul expects 2-D operands")

    def grad_fn(g):
        return g @ b.value.T, a.value.T @ g

    return Tensor(a.value @ b.value, (a, b), grad_fn)


def relu(a) -> Tensor:
    a = _lift(a)
    mask = a.value > 0

    def grad_fn(g):
        return (g * mask,)

    return Tensor(np.where(mask, a.value, 0.0), (a,), grad_fn)


def tanh(a) -> Tensor:
    a = _lift(a)
    out = np.tanh(a.value)

    def grad_fn(g):
        return (g * (1.0 - out * out),)

    return Tensor(out, (a,), grad_fn)


def exp(a) -> Tensor:
    a = _lift(a)
    out = np.exp(a.value)

    def grad_fn(g):
        return (g * out,)

    return Tensor(out, (a,), grad_fn)


def square(a) -> Tensor:
    a = _lift(a)

    def grad_fn(g):
        return (g * 2.0 * a.value,)

    return Tensor(a.value * a.value, (a,), grad_fn)


def tsum(a, axis=None) -> Tensor:
    a = _lift(a)

    def grad_fn(g):
        if axis is None:
            return (np.full(a.value.shape, g),)
        expanded = np.expand_dims(g, axis)
        return (np.broadcast_to(expanded, a.value.shape).copy(),)

    return Tensor(a.value.sum(axis=axis), (a,), grad_fn)


def tmean(a, axis=None) -> Tensor:
    a = _lift(a)
    count = a.value.size if axis is None else a.value.shape[axis]
    return mul(tsum(a, axis=axis), 1.0 / count)


def minimum(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    take_a = a.value <= b.value

    def grad_fn(g):
        return (
            _unbroadcast(g * take_a, a.value.shape),
            _unbroadcast(g * ~take_a, b.value.shape),
        )

    return Tensor(np.where(take_a, a.value, b.value), (a, b), grad_fn)


def clip(a, lo: float, hi: float) -> Tensor:
    a = _lift(a)
    inside = (a.value >= lo) & (a.value <= hi)

    def grad_fn(g):
        return (g * inside,)

    return Tensor(np.clip(a.value, lo, hi), (a,), grad_fn)


def reshape(a, shape) -> Tensor:
    a = _lift(a)

    def grad_fn(g):
        return (g.reshape(a.value.shape),)

    return Tensor(a.value.reshape(shape), (a,), grad_fn)


def concat(parts: list[Tensor]) -> Tensor:
    parts = [_lift(p) for p in parts]
    sizes = [p.value.size for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(piece.reshape(p.value.shape) for piece, p in zip(np.split(g, splits), parts))

    return Tensor(np.concatenate([p.value.ravel() for p in parts]), tuple(parts), grad_fn)


def stack_rows(rows: list[Tensor]) -> Tensor:
    rows = [_lift(r) for r in rows]

    def grad_fn(g):
        return tuple(g[i] for i in range(len(rows)))

    return Tensor(np.stack([r.value for r in rows]), tuple(rows), grad_fn)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, store: "ParamStore | None" = None) -> None:
    """Reverse sweep from `loss`; named leaves add into the store's gradients."""
    order = _topological_order(loss)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.grad is None or node._grad_fn is None:
            continue
        for parent, grad in zip(node._parents, node._grad_fn(node.grad)):
            parent.grad = grad if parent.grad is None else parent.grad + grad
    if store is not None:
        for node in order:
            if node.name is not None and node.grad is not None:
                if not np.all(np.isfinite(node.grad)):
                    raise GradientError(f"non-finite gradient for parameter {node.name}")
                store.grads[node.name] += node.grad


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


class ParamStore:
    """Named parameter blocks with matching gradient accumulators."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.step_count = 0

    def create(self, name: str, value: np.ndarray) -> None:
        if name in self.params:
            raise ValueError(f"parameter {name} already exists")
        # force C order so flat views of the block stay writable views
        arr = np.array(value, dtype=float, order="C")
        self.params[name] = arr
        self.grads[name] = np.zeros_like(arr)

    def leaf(self, name: str) -> Tensor:
        return Tensor(self.params[name], name=name)

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def global_grad_norm(self) -> float:
        total = 0.0
        for g in self.grads.values():
            total += float(np.sum(g * g))
        return float(np.sqrt(total))

    def clip_grad_norm(self, max_norm: float) -> float:
        """Scale all gradients down so their global norm is at most max_norm."""
        norm = self.global_grad_norm()
        if norm > max_norm:
            scale = max_norm / (norm + 1e-12)
            for g in self.grads.values():
                g *= scale
        return norm


def orthogonal_init(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    """Orthogonal rows/columns scaled by `gain` (QR of a Gaussian draw)."""
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.where(np.diag(r) >= 0, 1.0, -1.0)
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------


class Mlp:
    """Tanh MLP: `layers` linear maps with tanh between them, linear output.

    `in_scale` is the expected spread (std) of the raw input features; the
    first layer's init gain is divided by it so pre-activations start near
    unit scale instead of deep in tanh saturation.
    """

    def __init__(
        self,
        store: ParamStore,
        prefix: str,
        in_dim: int,
        hidden_dim: int,
        out_dim: int,
        layers: int,
        rng: np.random.Generator,
        out_gain: float = 1.0,
        in_scale: float = 1.0,
    ):
        if layers < 1:
            raise ValueError("need at least one layer")
        if in_scale <= 0:
            raise ValueError("in_scale must be positive")
        self.store = store
        self.prefix = prefix
        dims = [in_dim] + [hidden_dim] * (layers - 1) + [out_dim]
        self.layer_names: list[tuple[str, str]] = []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            if i == layers - 1:
                gain = out_gain
            else:
                gain = np.sqrt(2.0) / (in_scale if i == 0 else 1.0)
            w_name, b_name = f"{prefix}.w{i}", f"{prefix}.b{i}"
            store.create(w_name, orthogonal_init(rng, fan_in, fan_out, gain))
            store.create(b_name, np.zeros(fan_out))
            self.layer_names.append((w_name, b_name))

    def __call__(self, x: Tensor) -> Tensor:
        h = x
        last = len(self.layer_names) - 1
        for i, (w_name, b_name) in enumerate(self.layer_names):
            h = add(matmul(h, self.store.leaf(w_name)), self.store.leaf(b_name))
            if i < last:
                h = tanh(h)
        return h


class GraphEncoder:
    """Graph-convolution stack over a symmetrized transition matrix.

    Node features start as the constant 1; each layer computes
    relu(C_hat @ H @ W + b); the node embeddings are mean-pooled into one
    vector, so the output size does not depend on the game's size.
    """

    def __init__(
        self,
        store: ParamStore,
        prefix: str,
        layers: int,
        embed_dim: int,
        rng: np.random.Generator,
    ):
        if layers < 1:
            raise ValueError("need at least one layer")
        self.store = store
        self.layer_names: list[tuple[str, str]] = []
        in_dim = 1
        for i in range(layers):
            w_name, b_name = f"{prefix}.w{i}", f"{prefix}.b{i}"
            store.create(w_name, orthogonal_init(rng, in_dim, embed_dim, np.sqrt(2.0)))
            store.create(b_name, np.zeros(embed_dim))
            self.layer_names.append((w_name, b_name))
            in_dim = embed_dim

    def __call__(self, c_hat: np.ndarray) -> Tensor:
        n = c_hat.shape[0]
        mixer = Tensor(c_hat)
        h: Tensor = Tensor(np.ones((n, 1)))
        for w_name, b_name in self.layer_names:
            h = relu(add(matmul(matmul(mixer, h), self.store.leaf(w_name)), self.store.leaf(b_name)))
        return tmean(h, axis=0)


def symmetrized_transition(game: NormalFormGame, alpha: float, m: float) -> np.ndarray:
    """(C + C^T) / 2 of the game's response graph; the GCN's mixing matrix."""
    graph = build_response_graph(game, alpha, m)
    return 0.5 * (graph.transition + graph.transition.T)


# ---------------------------------------------------------------------------
# policy head
# ---------------------------------------------------------------------------


class DiagonalGaussian:
    """Diagonal Gaussian with a state-independent learned log standard deviation."""

    def __init__(self, mean: Tensor, log_std: Tensor):
        self.mean = mean
        self.log_std = log_std

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        noise = rng.standard_normal(self.mean.value.shape)
        return self.mean.value + np.exp(self.log_std.value) * noise

    def log_prob(self, actions: np.ndarray) -> Tensor:
        """Row-wise log density of `actions` (shape [batch, dim])."""
        z = mul(sub(Tensor(actions), self.mean), exp(-self.log_std))
        quadratic = mul(tsum(square(z), axis=1), -0.5)
        normalizer = add(tsum(self.log_std), 0.5 * self.mean.value.shape[1] * LOG_2PI)
        return sub(quadratic, normalizer)

    def entropy(self) -> Tensor:
        """Entropy of one action draw (identical across rows)."""
        dim = self.log_std.value.size
        return add(tsum(self.log_std), 0.5 * dim * (1.0 + LOG_2PI))


def gaussian_log_prob_value(action: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> float:
    """Plain-number log density used at rollout time (no tape)."""
    z = (action - mean) / np.exp(log_std)
    return float(-0.5 * np.sum(z * z) - np.sum(log_std) - 0.5 * action.size * LOG_2PI)


# ---------------------------------------------------------------------------
# observation encoding and the actor/critic pair
# ---------------------------------------------------------------------------


class EncoderMode(enum.Enum):
    FLAT_MLP = "flat_mlp"
    GRAPH = "graph"


@dataclass(frozen=True)
class NetworkConfig:
    """Encoder choice plus layer sizing for both actor and critic."""

    mode: EncoderMode = EncoderMode.FLAT_MLP
    gcn_layers: int = 2
    node_embed_dim: int = 20
    mlp_hidden: int = 64
    mlp_layers: int = 3
    action_dim: int = 10
    graph_alpha: float = 1.0
    graph_m: float = 5.0

    def __post_init__(self):
        if min(self.gcn_layers, self.node_embed_dim, self.mlp_hidden, self.mlp_layers) < 1:
            raise ValueError("layer sizes must be positive")
        if self.action_dim < 1:
            raise ValueError("action_dim must be positive")


def flat_features(observation) -> np.ndarray:
    """Concatenated flattened payoffs of the (original, current) pair."""
    original, current = observation
    if original.payoffs.shape != current.payoffs.shape:
        raise ValueError("flat encoding requires equally shaped games")
    return np.concatenate([original.payoffs.ravel(), current.payoffs.ravel()])


class ActorCritic:
    """Actor and critic with separate parameters but one architecture.

    FLAT_MLP mode feeds concatenated payoffs straight into the MLPs;
    GRAPH mode first runs each game's response graph through a (per-network)
    shared-weight graph encoder and concatenates the two pooled embeddings.
    """

    def __init__(
        self,
        config: NetworkConfig,
        input_dim: int | None = None,
        seed: int = 0,
        store: ParamStore | None = None,
    ):
        self.config = config
        self.store = store if store is not None else ParamStore()
        rng = np.random.default_rng(seed)
        if config.mode is EncoderMode.FLAT_MLP:
            if input_dim is None:
                raise ValueError("FLAT_MLP mode needs the input dimension")
            head_in = input_dim
            self.actor_encoder = None
            self.critic_encoder = None
        else:
            head_in = 2 * config.node_embed_dim
            self.actor_encoder = GraphEncoder(
                self.store, "actor.gcn", config.gcn_layers, config.node_embed_dim, rng
            )
            self.critic_encoder = GraphEncoder(
                self.store, "critic.gcn", config.gcn_layers, config.node_embed_dim, rng
            )
        self.input_dim = head_in if config.mode is EncoderMode.FLAT_MLP else None
        # raw payoff features are ~3x wider than pooled graph embeddings
        head_scale = FLAT_FEATURE_SCALE if config.mode is EncoderMode.FLAT_MLP else 1.0
        self.actor_head = Mlp(
            self.store, "actor.mlp", head_in, config.mlp_hidden, config.action_dim,
            config.mlp_layers, rng, out_gain=0.01, in_scale=head_scale,
        )
        self.critic_head = Mlp(
            self.store, "critic.mlp", head_in, config.mlp_hidden, 1,
            config.mlp_layers, rng, out_gain=1.0, in_scale=head_scale,
        )
        self.store.create("actor.log_std", np.zeros(config.action_dim))

    # -- observation plumbing -------------------------------------------------

    def prepare(self, observation):
        """Convert a raw observation into what the rollout buffer stores.

        FLAT_MLP: a feature vector (game pairs are flattened; plain vectors
        pass through).  GRAPH: the pair of symmetrized transition matrices.
        """
        if self.config.mode is EncoderMode.FLAT_MLP:
            if isinstance(observation, np.ndarray):
                features = observation
            else:
                features = flat_features(observation)
            if features.size != self.input_dim:
                raise ValueError(
                    f"observation has {features.size} features, networks expect {self.input_dim}"
                )
            return features
        original, current = observation
        return (
            symmetrized_transition(original, self.config.graph_alpha, self.config.graph_m),
            symmetrized_transition(current, self.config.graph_alpha, self.config.graph_m),
        )

    def _embed(self, prepared, encoder) -> Tensor:
        first, second = prepared
        return concat([encoder(first), encoder(second)])

    def _batch_input(self, prepared_batch, encoder) -> Tensor:
        if self.config.mode is EncoderMode.FLAT_MLP:
            return Tensor(np.stack(prepared_batch))
        return stack_rows([self._embed(p, encoder) for p in prepared_batch])

    # -- forward passes --------------------------------------------------------

    def policy_mean(self, prepared_batch) -> Tensor:
        return self.actor_head(self._batch_input(prepared_batch, self.actor_encoder))

    def values(self, prepared_batch) -> Tensor:
        out = self.critic_head(self._batch_input(prepared_batch, self.critic_encoder))
        return reshape(out, (len(prepared_batch),))

    def act(self, prepared, rng: np.random.Generator):
        """Sample an action for one observation: (action, log_prob, value)."""
        mean = self.policy_mean([prepared]).value[0]
        log_std = self.store.params["actor.log_std"]
        action = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
        log_prob = gaussian_log_prob_value(action, mean, log_std)
        value = float(self.values([prepared]).value[0])
        return action, log_prob, value

    def greedy_action(self, prepared) -> np.ndarray:
        """Deterministic action: the Gaussian mean."""
        return self.policy_mean([prepared]).value[0]

    def value_single(self, prepared) -> float:
        return float(self.values([prepared]).value[0])

    def distribution(self, prepared_batch) -> DiagonalGaussian:
        return DiagonalGaussian(self.policy_mean(prepared_batch), self.store.leaf("actor.log_std"))

    def evaluate(self, prepared_batch, actions: np.ndarray):
        """Log-probs, entropy, and values for a minibatch (all on the tape)."""
        dist = self.distribution(prepared_batch)
        return dist.log_prob(actions), dist.entropy(), self.values(prepared_batch)

    # -- persistence ------------------------------------------------------------

    def config_echo(self) -> dict:
        return {
            "mode": self.config.mode.value,
            "gcn_layers": self.config.gcn_layers,
            "node_embed_dim": self.config.node_embed_dim,
            "mlp_hidden": self.config.mlp_hidden,
            "mlp_layers": self.config.mlp_layers,
            "action_dim": self.config.action_dim,
            "graph_alpha": self.config.graph_alpha,
            "graph_m": self.config.graph_m,
            "input_dim": self.input_dim,
        }

    def save(self, path) -> None:
        save_checkpoint(path, self.store, self.config_echo())

    @classmethod
    def load(cls, path) -> "ActorCritic":
        echo, params = load_checkpoint(path)
        config = NetworkConfig(
            mode=EncoderMode(echo["mode"]),
            gcn_layers=echo["gcn_layers"],
            node_embed_dim=echo["node_embed_dim"],
            mlp_hidden=echo["mlp_hidden"],
            mlp_layers=echo["mlp_layers"],
            action_dim=echo["action_dim"],
            graph_alpha=echo["graph_alpha"],
            graph_m=echo["graph_m"],
        )
        network = cls(config, input_dim=echo["input_dim"])
        restore_params(network.store, params)
        return network


def encode_observation(observation, config: NetworkConfig, network: ActorCritic | None = None) -> np.ndarray:
    """Feature vector for an (original, current) observation.

    FLAT_MLP needs no parameters; GRAPH mode runs the actor's graph encoder,
    so a network must be supplied.
    """
    if config.mode is EncoderMode.FLAT_MLP:
        return flat_features(observation)
    if network is None or network.actor_encoder is None:
        raise ValueError("GRAPH encoding needs a network carrying encoder weights")
    prepared = network.prepare(observation)
    return network._embed(prepared, network.actor_encoder).value


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


def grad_check(loss_fn, store: ParamStore, eps: float = 1e-5) -> float:
    """Largest per-block relative error between tape and finite differences.

    `loss_fn` must be a deterministic closure rebuilding the scalar loss from
    the store's current parameters.
    """
    store.zero_grads()
    backward(loss_fn(), store)
    analytic = {name: g.copy() for name, g in store.grads.items()}
    worst = 0.0
    for name, param in store.params.items():
        numeric = np.zeros_like(param)
        # .flat writes through regardless of the block's memory order
        for i in range(param.size):
            saved = param.flat[i]
            param.flat[i] = saved + eps
            up = float(loss_fn().value)
            param.flat[i] = saved - eps
            down = float(loss_fn().value)
            param.flat[i] = saved
            numeric.flat[i] = (up - down) / (2.0 * eps)
        diff = float(np.linalg.norm(analytic[name] - numeric))
        scale = max(float(np.linalg.norm(analytic[name])), float(np.linalg.norm(numeric)), 1e-8)
        worst = max(worst, diff / scale)
    store.zero_grads()
    return worst


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, store: ParamStore, config_echo: dict) -> None:
    """Versioned JSON checkpoint: config echo plus every named block."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": config_echo,
        "params": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in store.params.items()
        },
    }
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    payload = json.loads(Path(path).read_text())
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {payload.get('version')}")
    params = {}
    for name, block in payload["params"].items():
        arr = np.array(block["data"], dtype=float).reshape(block["shape"])
        params[name] = arr
    return payload["config"], params


def restore_params(store: ParamStore, params: dict[str, np.ndarray]) -> None:
    """Copy loaded blocks into the store, validating names and shapes."""
    if set(params) != set(store.params):
        missing = set(store.params) - set(params)
        extra = set(params) - set(store.params)
        raise ValueError(f"checkpoint mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
    for name, arr in params.items():
        if arr.shape != store.params[name].shape:
            raise ValueError(
                f"parameter {name} has shape {arr.shape}, expected {store.params[name].shape}"
            )
        store.params[name][...] = arr
