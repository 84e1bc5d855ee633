"""Multi-start decomposition pipeline: power runs, clustering, evaluation.

The pipeline runs power iteration from every initialization, then repeatedly
(1) picks the surviving iterate maximizing |T(x, x, x)|, (2) refines it with a
fixed number of extra power steps, (3) emits it sign-normalized so its cubic
form is nonnegative, and (4) removes every survivor within correlation nu/2 of
the emission.  Weights are read off the cubic form at each estimate; an
optional joint least-squares refit is available for Frobenius-metric work.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidArgumentError
from .power import PowerConfig, default_max_iters, power_step, run_power
from .tensors import FactoredTensor3, contract_scalar

# Optimal assignment is cubic; beyond this many columns fall back to greedy.
_ASSIGNMENT_LIMIT = 2000


@dataclass
class ClusterConfig:
    """Dedup parameters: separation threshold nu, refinement length, output cap."""

    nu: float = 0.5
    refine_iters: int | None = None
    max_components: int | None = None

    def __post_init__(self):
        if not (0.0 < self.nu <= 1.0):
            raise InvalidArgumentError("nu must lie in (0, 1]")
        if self.refine_iters is not None and self.refine_iters < 0:
            raise InvalidArgumentError("refine_iters must be >= 0")


@dataclass
class DecompositionResult:
    """Recovered components plus per-estimate bookkeeping.

    ``estimates`` is d x m with unit columns, pairwise |<xi, xj>| < nu/2.
    ``weights`` is the cubic-form readout T(x, x, x) per estimate.
    ``diagnostics`` carries per-estimate scores, refinement score paths,
    iteration counts, and the dropped-duplicate counter.
    """

    estimates: np.ndarray
    weights: np.ndarray
    cluster_sizes: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_components(self):
        return self.estimates.shape[1]


def _cubic_scores(tensor, pool):
    """|T(x,x,x)| for every row of pool; vectorized on factored tensors."""
    if isinstance(tensor, FactoredTensor3) and tensor.is_symmetric:
        return np.abs((pool @ tensor.components) ** 3 @ tensor.weights)
    return np.abs(
        np.array([contract_scalar(tensor, x, x, x) for x in pool])
    )


def decompose(tensor, inits, power_config=None, cluster_config=None):
    """Run the full multi-start + clustering pipeline.

    Parameters
    ----------
    tensor : any contractable tensor (factored, dense, perturbed, implicit)
    inits : sequence of unit vectors, length >= 1
    power_config : PowerConfig for both the initial runs and refinement
    cluster_config : ClusterConfig (nu, refinement length, output cap)
    """
    inits = [np.asarray(x, dtype=np.float64) for x in inits]
    if len(inits) == 0:
        raise InvalidArgumentError("need at least one initialization")
    power_config = power_config or PowerConfig(trace_level="none")
    cluster_config = cluster_config or ClusterConfig()
    run_cfg = PowerConfig(
        max_iters=power_config.max_iters,
        convergence_gamma=power_config.convergence_gamma,
        trace_level="none",
        track_target=None,
    )
    refine_iters = cluster_config.refine_iters
    if refine_iters is None:
        refine_iters = run_cfg.max_iters or default_max_iters(tensor.dim)

    pool = np.empty((len(inits), tensor.dim))
    iter_counts = np.empty(len(inits), dtype=int)
    for i, x0 in enumerate(inits):
        trace = run_power(tensor, x0, run_cfg)
        pool[i] = trace.final_x
        iter_counts[i] = len(trace) - 1

    half_nu = cluster_config.nu / 2.0
    cap = cluster_config.max_components or len(inits)
    alive = np.ones(len(inits), dtype=bool)
    estimates, weights, sizes = [], [], []
    sel_scores, refine_paths = [], []
    duplicates_dropped = 0
    refine_monotone_violations = 0

    scores = _cubic_scores(tensor, pool)
    while alive.any() and len(estimates) < cap:
        idx = int(np.argmax(np.where(alive, scores, -np.inf)))
        x = pool[idx].copy()
        path = [float(contract_scalar(tensor, x, x, x))]
        for _ in range(refine_iters):
            x, _n = power_step(tensor, x)
            path.append(float(contract_scalar(tensor, x, x, x)))
        if abs(path[-1]) < abs(path[0]) - 1e-9:
            refine_monotone_violations += 1
        if path[-1] < 0:
            x = -x
        # emission cluster: everything the refined estimate would collide with
        cluster = alive & (np.abs(pool @ x) > half_nu)
        cluster[idx] = True
        is_dup = any(abs(float(x @ e)) > half_nu for e in estimates)
        if is_dup:
            duplicates_dropped += 1
        else:
            estimates.append(x)
            weights.append(float(contract_scalar(tensor, x, x, x)))
            sizes.append(int(cluster.sum()))
            sel_scores.append(float(scores[idx]))
            refine_paths.append(path)
        alive &= ~cluster

    E = np.array(estimates).T if estimates else np.zeros((tensor.dim, 0))
    if E.shape[1] > 1:
        gram = np.abs(E.T @ E)
        np.fill_diagonal(gram, 0.0)
        if gram.max() >= half_nu:
            raise AssertionError("pairwise separation invariant violated")
    return DecompositionResult(
        estimates=E,
        weights=np.array(weights),
        cluster_sizes=np.array(sizes, dtype=int),
        diagnostics={
            "selection_scores": np.array(sel_scores),
            "refine_score_paths": refine_paths,
            "init_iterations": iter_counts,
            "duplicates_dropped": duplicates_dropped,
            "refine_monotone_violations": refine_monotone_violations,
        },
    )


def estimate_weight(tensor, xhat):
    """Cubic-form weight readout T(x, x, x) at a unit estimate."""
    xhat = np.asarray(xhat, dtype=np.float64)
    return contract_scalar(tensor, xhat, xhat, xhat)


def refit_weights(tensor, estimates):
    """Joint least-squares weights over all estimates.

    Minimizes ||sum_i w_i x_i^(x)3 - T||_F, which reduces to the linear
    system (Gram ** 3) w = scores with Gram_ij = <x_i, x_j> (elementwise
    cube; positive semidefinite by the Schur product theorem).
    """
    E = np.asarray(estimates, dtype=np.float64)
    M = (E.T @ E) ** 3
    t = np.array([contract_scalar(tensor, E[:, i], E[:, i], E[:, i]) for i in range(E.shape[1])])
    w, *_ = np.linalg.lstsq(M, t, rcond=None)
    return w


def learn_multiview(batch, mode, power_config=None, cluster_config=None, model=None,
                    max_inits=None):
    """End-to-end learning from a multiview batch.

    Initializations are the normalized view-1 samples (all of them, or the
    first ``max_inits``).  ``mode`` picks the tensor representation:

    * "exact-tensor" — the population tensor from ``model`` (evaluation runs);
    * "empirical-tensor" — the dense cross-view moment of the batch;
    * "implicit-samples" — contract directly against the samples, O(dn) per
      step, for d beyond the dense budget.

    Labels in the batch are never read here.
    """
    from .models import SampleTensor3, empirical_third_moment, population_third_moment

    if batch.n < 1:
        raise InvalidArgumentError("empty batch")
    if mode == "exact-tensor":
        if model is None:
            raise InvalidArgumentError("exact-tensor mode needs the model")
        tensor = population_third_moment(model)
    elif mode == "empirical-tensor":
        tensor = empirical_third_moment(batch)
    elif mode == "implicit-samples":
        tensor = SampleTensor3(batch)
    else:
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    Z1 = batch.views[0]
    m = batch.n if max_inits is None else min(max_inits, batch.n)
    norms = np.linalg.norm(Z1[:, :m], axis=0)
    if np.any(norms < 1e-300):
        raise InvalidArgumentError("zero sample cannot initialize")
    inits = (Z1[:, :m] / norms).T
    return decompose(tensor, inits, power_config, cluster_config)


@dataclass
class MatchReport:
    """Assignment of estimates to ground-truth components, plus error metrics."""

    frobenius_error: float
    per_component_correlations: np.ndarray
    permutation: np.ndarray  # truth index per estimate, -1 if unmatched
    signs: np.ndarray
    missed: list  # truth indices with no matched estimate
    matched_pairs: int


def _greedy_assign(C):
    m, k = C.shape
    order = np.argsort(-C, axis=None)
    used_r = np.zeros(m, bool)
    used_c = np.zeros(k, bool)
    rows, cols = [], []
    for flat in order:
        r, c = divmod(int(flat), k)
        if not used_r[r] and not used_c[c]:
            rows.append(r)
            cols.append(c)
            used_r[r] = used_c[c] = True
            if len(rows) == min(m, k):
                break
    return np.array(rows), np.array(cols)


def match_and_score(estimates, ground_truth, greedy=None):
    """Match estimate columns to truth columns, maximizing total |correlation|.

    Uses the optimal assignment up to 2000 columns (greedy beyond, or when
    ``greedy=True``).  Signs are resolved per pair; the Frobenius error is
    computed over matched pairs only and unmatched truth columns are listed
    in ``missed``.
    """
    E = np.asarray(estimates, dtype=np.float64)
    if E.ndim != 2 or E.shape[1] == 0:
        raise InvalidArgumentError("estimates must be a nonempty d x m matrix")
    A = ground_truth.components
    C = np.abs(E.T @ A)
    if greedy is None:
        greedy = max(C.shape) > _ASSIGNMENT_LIMIT
    if greedy:
        rows, cols = _greedy_assign(C)
    else:
        rows, cols = linear_sum_assignment(-C)
    signs_matched = np.sign(np.sum(E[:, rows] * A[:, cols], axis=0))
    signs_matched[signs_matched == 0] = 1.0
    diff = E[:, rows] * signs_matched - A[:, cols]
    perm = np.full(E.shape[1], -1, dtype=int)
    perm[rows] = cols
    signs = np.ones(E.shape[1])
    signs[rows] = signs_matched
    return MatchReport(
        frobenius_error=float(np.linalg.norm(diff)),
        per_component_correlations=C[rows, cols],
        permutation=perm,
        signs=signs,
        missed=sorted(set(range(A.shape[1])) - set(cols.tolist())),
        matched_pairs=len(rows),
    )
