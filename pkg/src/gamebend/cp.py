"""Rank-r tensor factorization of payoff tensors and the modification step.

The payoff tensor (player mode included) is factored into a sum of r outer
products by alternating least squares.  The factor matrices then act as a
fixed, game-specific basis: re-weighting the components with a vector in
[-1, 1]^r and adding the result back onto the current payoffs is the single
action primitive the learned policy controls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .games import NormalFormGame, normalize_payoffs

_RIDGE = 1e-9
DEFAULT_RANK = 10
DEFAULT_ETA_STEP = 5.0


@dataclass(frozen=True)
class CPFactors:
    """Factor matrices of a rank-r decomposition, one per tensor mode.

    Component norms are absorbed into the first factor so base_weights is
    always the all-ones vector; rel_error is the achieved relative Frobenius
    reconstruction error and error_history tracks it per completed sweep.
    """

    factors: tuple[np.ndarray, ...]
    base_weights: np.ndarray
    rel_error: float
    error_history: tuple[float, ...] = field(default=())

    def __post_init__(self):
        mats = tuple(np.array(f, dtype=float) for f in self.factors)
        if not mats or any(m.ndim != 2 for m in mats):
            raise ValueError("factors must be a nonempty list of matrices")
        rank = mats[0].shape[1]
        if any(m.shape[1] != rank for m in mats):
            raise ValueError("all factors must share one rank")
        for m in mats:
            m.flags.writeable = False
        weights = np.array(self.base_weights, dtype=float)
        if weights.shape != (rank,):
            raise ValueError("base_weights must have one entry per component")
        weights.flags.writeable = False
        object.__setattr__(self, "factors", mats)
        object.__setattr__(self, "base_weights", weights)
        object.__setattr__(self, "error_history", tuple(float(e) for e in self.error_history))

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def tensor_shape(self) -> tuple[int, ...]:
        return tuple(m.shape[0] for m in self.factors)


def _khatri_rao(mats: list[np.ndarray]) -> np.ndarray:
    """Column-wise Kronecker product, first matrix varying slowest (row-major)."""
    out = mats[0]
    for mat in mats[1:]:
        out = (out[:, None, :] * mat[None, :, :]).reshape(-1, out.shape[1])
    return out


def _reconstruct_raw(factors, weights) -> np.ndarray:
    letters = "abcdefgh"
    modes = len(factors)
    subs = ",".join(f"{letters[d]}z" for d in range(modes))
    out = letters[:modes]
    return np.einsum(f"{subs},z->{out}", *factors, weights, optimize=True)


def reconstruct(factors: CPFactors, weights: np.ndarray) -> np.ndarray:
    """Weighted sum of the rank-1 components: linear in the weights."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (factors.rank,):
        raise ValueError(f"weights must have shape ({factors.rank},)")
    return _reconstruct_raw(factors.factors, weights)


def cp_decompose(
    game: NormalFormGame,
    rank: int = DEFAULT_RANK,
    max_iters: int = 200,
    tol: float = 1e-7,
    seed: int = 0,
) -> CPFactors:
    """Alternating least squares factorization of the payoff tensor.

    Random-normal init from `seed`; each mode update solves a ridge-damped
    least-squares problem, so the reconstruction error never increases.  Stops
    when the per-sweep improvement in relative error drops below `tol`.
    """
    if rank < 1:
        raise ValueError("rank must be at least 1")
    tensor = game.payoffs
    modes = tensor.ndim
    rng = np.random.default_rng(seed)
    factors = [rng.standard_normal((tensor.shape[d], rank)) for d in range(modes)]
    norm_tensor = float(np.linalg.norm(tensor))
    scale = max(norm_tensor, 1e-30)

    grams = [f.T @ f for f in factors]
    history: list[float] = []
    previous = np.inf
    for _ in range(max_iters):
        for d in range(modes):
            others = [factors[e] for e in range(modes) if e != d]
            kr = _khatri_rao(others)
            gram = np.ones((rank, rank))
            for e in range(modes):
                if e != d:
                    gram *= grams[e]
            unfolding = np.moveaxis(tensor, d, 0).reshape(tensor.shape[d], -1)
            rhs = unfolding @ kr
            factors[d] = np.linalg.solve(gram + _RIDGE * np.eye(rank), rhs.T).T
            grams[d] = factors[d].T @ factors[d]
        # pull column norms into mode 0 so the scale lives in one place
        for d in range(1, modes):
            norms = np.linalg.norm(factors[d], axis=0)
            safe = np.where(norms > 0, norms, 1.0)
            factors[d] = factors[d] / safe
            factors[0] = factors[0] * safe
            grams[d] = factors[d].T @ factors[d]
        grams[0] = factors[0].T @ factors[0]
        residual = tensor - _reconstruct_raw(factors, np.ones(rank))
        error = float(np.linalg.norm(residual)) / scale
        history.append(error)
        if previous - error < tol:
            break
        previous = error
    return CPFactors(
        factors=tuple(factors),
        base_weights=np.ones(rank),
        rel_error=history[-1],
        error_history=tuple(history),
    )


def apply_modification(
    current: NormalFormGame,
    factors: CPFactors,
    weights: np.ndarray,
    eta_step: float = DEFAULT_ETA_STEP,
) -> NormalFormGame:
    """Add a re-weighted reconstruction onto the payoffs and renormalize.

    Callers are responsible for clipping `weights` into [-1, 1].
    """
    if factors.tensor_shape != current.payoffs.shape:
        raise ValueError(
            f"factor shape {factors.tensor_shape} does not match payoffs "
            f"{current.payoffs.shape}"
        )
    delta = reconstruct(factors, np.asarray(weights, dtype=float))
    return normalize_payoffs(NormalFormGame(current.payoffs + eta_step * delta))
