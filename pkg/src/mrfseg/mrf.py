"""Superpixel MRF: adjacency, color-similarity weights, and smoothing.

Neighboring superpixels pull each other's label beliefs together.  Each
node carries a prior and a posterior over labels; the energy scores a
labeling by classifier log-likelihood minus the KL divergence of both
belief rows from their weighted neighborhood averages.  The minimizer is
a damped synchronous fixed point, cheap and fully deterministic.
"""

import numpy as np
from dataclasses import dataclass

from scipy import sparse

from .errors import LengthMismatchError
from .presegment import SuperpixelPartition

KL_FLOOR = 1e-10
DEFAULT_ALPHA = 0.5
DEFAULT_TOL = 1e-6
DEFAULT_MAX_SWEEPS = 100

# Length scale for the color-affinity gate, in RGB [0, 1] units.  At 1/16
# a color step of 0.3 (the weakest region contrast worth separating)
# attenuates the edge to exp(-23) while pixel-noise differences (< 0.05)
# keep their weight, so beliefs diffuse within regions but not across
# region boundaries.  With unscaled [0, 1] colors the gate barely closes
# (a 0.4 step still passes 85% weight) and a confident region bleeds its
# label into fragmented neighbors.
COLOR_GATE_SCALE = 16.0


@dataclass
class AdjacencyGraph:
    n: int
    neighbors: list  # per node: ascending int array of adjacent node ids
    weights: list = None  # per node: array aligned with neighbors, sums to 1

    def weight_matrix(self):
        """Sparse row-stochastic matrix; isolated nodes have zero rows."""
        rows, cols, vals = [], [], []
        for i, (nbrs, w) in enumerate(zip(self.neighbors, self.weights)):
            rows.extend([i] * len(nbrs))
            cols.extend(nbrs.tolist())
            vals.extend(w.tolist())
        return sparse.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    def isolated(self):
        return np.array([len(nbrs) == 0 for nbrs in self.neighbors])


@dataclass
class BeliefState:
    priors: np.ndarray  # (M, K)
    posteriors: np.ndarray  # (M, K)
    likelihoods: np.ndarray  # (M, K), the calibrated SVM probabilities


def build_adjacency(p: SuperpixelPartition) -> AdjacencyGraph:
    """Topology only: nodes sharing a 4-connected pixel boundary."""
    labels = p.labels
    pairs = set()
    horiz = labels[:, :-1] != labels[:, 1:]
    for a, b in zip(labels[:, :-1][horiz], labels[:, 1:][horiz]):
        pairs.add((int(a), int(b)))
    vert = labels[:-1, :] != labels[1:, :]
    for a, b in zip(labels[:-1, :][vert], labels[1:, :][vert]):
        pairs.add((int(a), int(b)))

    neighbor_sets = [set() for _ in range(p.m)]
    for a, b in pairs:
        neighbor_sets[a].add(b)
        neighbor_sets[b].add(a)
    neighbors = [np.array(sorted(s), dtype=np.int64) for s in neighbor_sets]
    return AdjacencyGraph(n=p.m, neighbors=neighbors)


def edge_weights(
    g: AdjacencyGraph, mean_rgb: np.ndarray, color_scale: float = COLOR_GATE_SCALE
) -> AdjacencyGraph:
    """Row-normalized color affinities exp(-||s*(C_i - C_j)||^2) / Z_i."""
    weights = []
    for i, nbrs in enumerate(g.neighbors):
        if len(nbrs) == 0:
            weights.append(np.empty(0))
            continue
        d2 = ((color_scale * (mean_rgb[i] - mean_rgb[nbrs])) ** 2).sum(axis=1)
        raw = np.exp(-d2)
        weights.append(raw / raw.sum())
    g.weights = weights
    return g


def kl(p, q):
    """KL divergence in nats; q is floored and renormalized first."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise LengthMismatchError(f"shapes {p.shape} and {q.shape} disagree")
    q = np.maximum(q, KL_FLOOR)
    q = q / q.sum()
    return float(np.sum(np.where(p > 0, p * np.log(np.maximum(p, KL_FLOOR) / q), 0.0)))


def _kl_rows(p, q):
    """Row-wise KL with the same floor/renormalize convention as kl()."""
    q = np.maximum(q, KL_FLOOR)
    q = q / q.sum(axis=1, keepdims=True)
    terms = np.where(p > 0, p * np.log(np.maximum(p, KL_FLOOR) / q), 0.0)
    return terms.sum(axis=1)


def energy(state: BeliefState, g: AdjacencyGraph, hard_labels) -> float:
    """Log-likelihood of the labeling minus neighborhood KL penalties.

    Nodes without neighbors contribute only their log-likelihood term.
    """
    hard_labels = np.asarray(hard_labels)
    idx = np.arange(g.n)
    loglik = np.log(np.maximum(state.likelihoods[idx, hard_labels], KL_FLOOR))
    w = g.weight_matrix()
    prior_nbr = w @ state.priors
    post_nbr = w @ state.posteriors
    connected = ~g.isolated()
    penalty = np.zeros(g.n)
    if connected.any():
        penalty[connected] = 0.5 * (
            _kl_rows(state.priors[connected], prior_nbr[connected])
            + _kl_rows(state.posteriors[connected], post_nbr[connected])
        )
    return float(loglik.sum() - penalty.sum())


def regularize(
    likelihoods,
    g: AdjacencyGraph,
    alpha=DEFAULT_ALPHA,
    tol=DEFAULT_TOL,
    max_sweeps=DEFAULT_MAX_SWEEPS,
    trace=None,
):
    """Smooth likelihoods into posteriors by damped synchronous sweeps.

    Priors start uniform; each sweep recomputes posteriors p ~ L * prior
    and moves priors toward the average of the neighborhood prior/posterior
    mixtures.  Isolated nodes keep uniform priors, so their posterior is
    the row-normalized likelihood.

    The damped iteration is not monotone in the labeling energy; run long
    enough, a locally weak consensus can drift the whole field toward one
    label and push the energy down.  Every sweep is therefore scored by
    the energy of its maximum-posterior labeling and the best-scoring
    state is returned.  Returns (BeliefState, sweeps, converged).
    """
    lik = np.asarray(likelihoods, dtype=np.float64)
    m, k = lik.shape
    w = g.weight_matrix()
    connected = ~g.isolated()

    priors = np.full((m, k), 1.0 / k)
    posteriors = lik * priors
    posteriors /= posteriors.sum(axis=1, keepdims=True)

    def labeling_energy(state):
        return energy(state, g, map_labels(state.posteriors))

    best = BeliefState(priors=priors, posteriors=posteriors, likelihoods=lik)
    best_energy = labeling_energy(best)

    sweeps = 0
    converged = m == 0 or not connected.any()
    for sweep in range(1, max_sweeps + 1):
        if converged:
            break
        prior_nbr = w @ priors
        post_nbr = w @ posteriors
        mixed = 0.5 * prior_nbr + 0.5 * post_nbr
        row_sums = mixed.sum(axis=1, keepdims=True)
        new_priors = priors.copy()
        new_priors[connected] = (
            (1.0 - alpha) * priors[connected]
            + alpha * (mixed[connected] / row_sums[connected])
        )
        new_posteriors = lik * new_priors
        new_posteriors /= new_posteriors.sum(axis=1, keepdims=True)

        residual = max(
            float(np.abs(new_priors - priors).max()),
            float(np.abs(new_posteriors - posteriors).max()),
        )
        priors, posteriors = new_priors, new_posteriors
        sweeps = sweep
        state = BeliefState(priors=priors, posteriors=posteriors, likelihoods=lik)
        e = labeling_energy(state)
        if e > best_energy:
            best, best_energy = state, e
        if trace is not None:
            trace.append((sweep, residual, e))
        if residual < tol:
            converged = True
    return best, sweeps, converged


def map_labels(posteriors, tie_tol=1e-12):
    """Per-row argmax with ties (within tie_tol) going to the lowest id."""
    posteriors = np.asarray(posteriors)
    best = posteriors.max(axis=1, keepdims=True)
    return (posteriors >= best - tie_tol).argmax(axis=1)
