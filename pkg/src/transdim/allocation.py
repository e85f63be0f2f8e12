"""Sampling allocation vectors from their conditional posterior.

The target p(z | x, model) is known only up to a constant (it is proportional
to the completed density), so an independent Metropolis-Hastings kernel is
used.  The proposal visits the sample's positions in a fresh uniformly random
order and assigns each position a still-unused Gaussian label or the
background label, with weights pi_l * N(theta_j | mu_l, s2_l) and eta
respectively.  The returned log proposal probability is the probability of
the realized sampled path, including the 1/k! factor for the visit order;
the Hastings ratio formed from these path probabilities is exact on the
order-augmented space, whose z-marginal is the target.

Batch variants operate on arrays of same-length samples and back both the
public single-sample operations and the SEM S-step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleModelError
from .model import (
    AllocationVector,
    SummaryModel,
    VariableDimSample,
    enumerate_allocations,
    log_density_completed,
)

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class AllocationChainState:
    """Current allocation of one sample plus cached log densities.

    Both caches refer to the model the state was built for; rebuild the state
    (or recompute the caches) whenever the model changes.
    """

    z: AllocationVector
    log_completed: float
    log_proposal: float


# ---------------------------------------------------------------------------
# Batch primitives (same-k groups)
# ---------------------------------------------------------------------------


def _log_gauss_matrix(thetas: np.ndarray, model: SummaryModel) -> np.ndarray:
    """log N(theta_j | mu_l, s2_l) for every point and component, shape (n, k, L)."""
    n, k = thetas.shape
    L = model.n_components
    if L == 0:
        return np.zeros((n, k, 0))
    mus = np.array([c.mu for c in model.components])
    s2s = np.array([c.s2 for c in model.components])
    return (
        -0.5 * (_LOG_2PI + np.log(s2s))[None, None, :]
        - (thetas[:, :, None] - mus[None, None, :]) ** 2 / (2.0 * s2s)[None, None, :]
    )


def _batch_propose(
    log_w: np.ndarray,
    eta: float,
    rng: np.random.Generator,
    mode: str = "sample",
    follow: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run the sequential proposal for a batch of same-length samples.

    ``log_w`` has shape (n, k, L) and holds log(pi_l * N(theta_j | ...)).
    Modes: "sample" draws labels, "greedy" takes the argmax label at each
    visited position, "follow" scores the labels given in ``follow`` under a
    fresh random visit order (a uniform refresh of the order variable).
    Returns (labels, log_q) where log_q is the exact log path probability.
    """
    n, k, L = log_w.shape
    log_eta = math.log(eta) if eta > 0.0 else -math.inf

    labels = np.zeros((n, k), dtype=np.int64)
    log_q = np.full(n, -math.lgamma(k + 1))
    if k == 0:
        return labels, log_q

    perms = rng.permuted(np.broadcast_to(np.arange(k), (n, k)).copy(), axis=1)
    used = np.zeros((n, L), dtype=bool)
    rows = np.arange(n)
    bg_col = np.full((n, 1), log_eta)

    for t in range(k):
        pos = perms[:, t]
        lw = log_w[rows, pos, :]
        lw = np.where(used, -np.inf, lw)
        lw_full = np.concatenate([bg_col, lw], axis=1)  # column 0 = background
        mx = np.max(lw_full, axis=1)
        if not np.all(np.isfinite(mx)):
            raise InfeasibleModelError(
                "no admissible label available (eta = 0 with more points than components)"
            )
        w = np.exp(lw_full - mx[:, None])
        tot = w.sum(axis=1)
        if mode == "sample":
            u = rng.random(n) * tot
            choice = (u[:, None] < np.cumsum(w, axis=1)).argmax(axis=1)
        elif mode == "greedy":
            choice = lw_full.argmax(axis=1)
        elif mode == "follow":
            choice = follow[rows, pos]
        else:
            raise ValueError(f"unknown mode {mode!r}")
        log_q += lw_full[rows, choice] - (mx + np.log(tot))
        labels[rows, pos] = choice
        picked = choice > 0
        used[rows[picked], choice[picked] - 1] = True

    return labels, log_q


def _batch_log_completed(
    labels: np.ndarray, log_n: np.ndarray, model: SummaryModel
) -> np.ndarray:
    """Completed log density for a batch of allocations, shape (n,)."""
    n, k = labels.shape
    L = model.n_components
    lam0 = model.lam0

    out = np.full(n, -math.lgamma(k + 1) - lam0)
    n0 = (labels == 0).sum(axis=1)
    if lam0 > 0.0:
        out = out + n0 * (math.log(lam0) - math.log(model.theta_volume))
    else:
        out = np.where(n0 > 0, -np.inf, out)

    if k > 0 and L > 0:
        gathered = np.take_along_axis(
            log_n, np.maximum(labels - 1, 0)[:, :, None], axis=2
        )[:, :, 0]
        out = out + np.where(labels > 0, gathered, 0.0).sum(axis=1)

    for l, comp in enumerate(model.components, start=1):
        present = (labels == l).any(axis=1)
        lp = math.log(comp.pi)
        lq = math.log1p(-comp.pi) if comp.pi < 1.0 else -np.inf
        out = out + np.where(present, lp, lq)
    return out


def _batch_imh_step(
    cur_labels: np.ndarray,
    cur_lc: np.ndarray,
    cur_lq: np.ndarray,
    log_w: np.ndarray,
    log_n: np.ndarray,
    model: SummaryModel,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One independent-MH step applied to every chain in the batch."""
    prop_labels, prop_lq = _batch_propose(log_w, model.eta, rng, mode="sample")
    prop_lc = _batch_log_completed(prop_labels, log_n, model)
    with np.errstate(invalid="ignore"):
        log_ratio = (prop_lc - prop_lq) - (cur_lc - cur_lq)
    accept = np.log(rng.random(len(cur_lc))) < log_ratio  # NaN ratio -> stay
    cur_labels = np.where(accept[:, None], prop_labels, cur_labels)
    return (
        cur_labels,
        np.where(accept, prop_lc, cur_lc),
        np.where(accept, prop_lq, cur_lq),
        accept,
    )


def _log_weight_matrix(log_n: np.ndarray, model: SummaryModel) -> np.ndarray:
    """Proposal log weights log(pi_l) + log N(...), shape (n, k, L)."""
    if model.n_components == 0:
        return log_n
    log_pis = np.log([c.pi for c in model.components])
    return log_n + log_pis[None, None, :]


def _check_feasible(k: int, model: SummaryModel) -> None:
    if model.eta == 0.0 and k > model.n_components:
        raise InfeasibleModelError(
            f"sample with k={k} cannot be allocated: eta = 0 and only "
            f"{model.n_components} Gaussian components"
        )


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def propose_allocation(
    x: VariableDimSample, model: SummaryModel, rng: np.random.Generator
) -> tuple[AllocationVector, float]:
    """Draw one allocation from the sequential proposal.

    Returns the allocation and the exact log probability of the sampled path
    (visit order included).  Every admissible allocation has positive
    proposal probability whenever eta > 0.
    """
    _check_feasible(x.k, model)
    thetas = np.asarray(x.theta, dtype=float).reshape(1, x.k)
    log_n = _log_gauss_matrix(thetas, model)
    labels, log_q = _batch_propose(_log_weight_matrix(log_n, model), model.eta, rng)
    return AllocationVector(tuple(int(l) for l in labels[0])), float(log_q[0])


def init_allocation_state(
    x: VariableDimSample, model: SummaryModel, rng: np.random.Generator
) -> AllocationChainState:
    """Greedy initial state: proposal weight rule with argmax instead of sampling."""
    _check_feasible(x.k, model)
    thetas = np.asarray(x.theta, dtype=float).reshape(1, x.k)
    log_n = _log_gauss_matrix(thetas, model)
    labels, log_q = _batch_propose(
        _log_weight_matrix(log_n, model), model.eta, rng, mode="greedy"
    )
    lc = _batch_log_completed(labels, log_n, model)
    z = AllocationVector(tuple(int(l) for l in labels[0]))
    return AllocationChainState(z, float(lc[0]), float(log_q[0]))


def imh_kernel(
    state: AllocationChainState,
    x: VariableDimSample,
    model: SummaryModel,
    n_steps: int,
    rng: np.random.Generator,
) -> AllocationChainState:
    """Apply ``n_steps`` independent-MH accept/reject steps to one chain.

    Acceptance probability is min(1, exp[(log p(x,z'|E) - log q(z')) -
    (log p(x,z|E) - log q(z))]); the invariant distribution is p(z | x, E).
    The proposals do not depend on the current state, so they are generated
    in one batch and scanned sequentially.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    if n_steps == 0:
        return state
    _check_feasible(x.k, model)

    thetas = np.broadcast_to(
        np.asarray(x.theta, dtype=float), (n_steps, x.k)
    ).copy() if x.k else np.zeros((n_steps, 0))
    log_n = _log_gauss_matrix(thetas, model)
    prop_labels, prop_lq = _batch_propose(
        _log_weight_matrix(log_n, model), model.eta, rng, mode="sample"
    )
    prop_lc = _batch_log_completed(prop_labels, log_n, model)
    log_u = np.log(rng.random(n_steps))

    cur_z, cur_lc, cur_lq = state.z, state.log_completed, state.log_proposal
    for t in range(n_steps):
        with np.errstate(invalid="ignore"):
            log_ratio = (prop_lc[t] - prop_lq[t]) - (cur_lc - cur_lq)
        if log_u[t] < log_ratio:  # NaN compares False: stay
            cur_z = AllocationVector(tuple(int(l) for l in prop_labels[t]))
            cur_lc = float(prop_lc[t])
            cur_lq = float(prop_lq[t])
    return AllocationChainState(cur_z, cur_lc, cur_lq)


def exact_allocation_posterior(
    x: VariableDimSample, model: SummaryModel, cap: int = 10**6
) -> dict[tuple[int, ...], float]:
    """Exact allocation posterior by enumeration: the validation oracle.

    Probabilities are proportional to the completed density and sum to one.
    Raises EnumerationCapError when the admissible set is too large and
    InfeasibleModelError when every allocation has zero density.
    """
    vectors = enumerate_allocations(x.k, model.n_components, cap=cap)
    logs = np.array([log_density_completed(x, z, model) for z in vectors])
    top = logs.max()
    if top == -np.inf:
        raise InfeasibleModelError("every admissible allocation has zero density")
    probs = np.exp(logs - top)
    probs /= probs.sum()
    return {v.z: float(p) for v, p in zip(vectors, probs)}
