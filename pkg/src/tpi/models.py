"""Generative samplers and moment-tensor estimators for mixture models.

Multiview mixture: a hidden state h ~ Categorical(priors) picks a column, and
each of p >= 3 views observes z_l = F_l h + eta_l with independent spherical
Gaussian noise (per-entry std zeta).  The cross-view third moment
E[z_1 (x) z_2 (x) z_3] equals sum_j priors_j a_j^{(x)3}, which is what the
decomposition pipeline consumes.

Spherical Gaussian mixture: z = a_h + sigma * g.  The raw third moment picks
up sigma^2 cross terms; the modified moment subtracts them:

    M3 = E[z (x) z (x) z]
         - sigma^2 * sum_i ( E[z] (x) e_i (x) e_i
                           + e_i (x) E[z] (x) e_i
                           + e_i (x) e_i (x) E[z] )

and its population value is again sum_j priors_j a_j^{(x)3}.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .container import load_matrix, save_matrix
from .errors import InvalidArgumentError, ResourceBudgetError
from .rng import stream
from .tensors import DENSE_DIM_LIMIT, DenseTensor3, FactoredTensor3

_CHUNK = 65536  # fixed accumulation chunk so summation order never varies


def _check_simplex(priors, k):
    p = np.ascontiguousarray(priors, dtype=np.float64)
    if p.shape != (k,):
        raise InvalidArgumentError("priors must have length k")
    if np.any(p <= 0.0) or abs(float(p.sum()) - 1.0) > 1e-12:
        raise InvalidArgumentError("priors must be positive and sum to 1 within 1e-12")
    return p


def _check_factor(F):
    F = np.ascontiguousarray(F, dtype=np.float64)
    if F.ndim != 2:
        raise InvalidArgumentError("factor must be a d x k matrix")
    if not np.all(np.abs(np.linalg.norm(F, axis=0) - 1.0) <= 1e-10):
        raise InvalidArgumentError("factor columns must be unit norm within 1e-10")
    return F


class MixtureModel:
    """Multiview mixture parameters.

    ``factor`` is a single d x k matrix, or a tuple of three matrices for the
    asymmetric variant (one per view; requires views == 3).  ``noise_kind``
    is "spherical-gaussian" (per-entry std ``noise_scale``) or "custom" with
    a ``noise_sampler(rng, d, n) -> (d, n) array`` callable.
    """

    def __init__(self, factor, priors, noise_scale=0.0, noise_kind="spherical-gaussian",
                 views=3, noise_sampler=None):
        if isinstance(factor, (tuple, list)):
            if len(factor) != 3:
                raise InvalidArgumentError("asymmetric variant needs exactly three matrices")
            self.factors = tuple(_check_factor(F) for F in factor)
            if len({F.shape for F in self.factors}) != 1:
                raise InvalidArgumentError("per-view factors must share shape")
            if views != 3:
                raise InvalidArgumentError("asymmetric variant requires views == 3")
        else:
            self.factors = (_check_factor(factor),)
        if views < 3:
            raise InvalidArgumentError("need at least 3 views")
        self.views = int(views)
        d, k = self.factors[0].shape
        self.priors = _check_simplex(priors, k)
        if noise_kind not in ("spherical-gaussian", "custom"):
            raise InvalidArgumentError(f"unknown noise_kind {noise_kind!r}")
        if noise_kind == "custom" and noise_sampler is None:
            raise InvalidArgumentError("custom noise needs a noise_sampler callable")
        if noise_scale < 0:
            raise InvalidArgumentError("noise_scale must be >= 0")
        self.noise_kind = noise_kind
        self.noise_scale = float(noise_scale)
        self.noise_sampler = noise_sampler
        self.dim = d
        self.rank = k

    def factor_for_view(self, l):
        return self.factors[l] if len(self.factors) == 3 else self.factors[0]

    @property
    def is_asymmetric(self):
        return len(self.factors) == 3

    def prior_ratio(self):
        return float(self.priors.max() / self.priors.min())


class SampleBatch:
    """Observations from a multiview draw: one d x n matrix per view.

    ``labels`` holds the true hidden states and exists for evaluation only;
    decomposition code never reads it.
    """

    def __init__(self, views, labels=None):
        self.views = [np.ascontiguousarray(V, dtype=np.float64) for V in views]
        shapes = {V.shape for V in self.views}
        if len(shapes) != 1 or self.views[0].ndim != 2:
            raise InvalidArgumentError("all views must share the same d x n shape")
        self.labels = None if labels is None else np.asarray(labels, dtype=np.int64)
        if self.labels is not None and self.labels.shape != (self.views[0].shape[1],):
            raise InvalidArgumentError("labels must have length n")

    @property
    def d(self):
        return self.views[0].shape[0]

    @property
    def n(self):
        return self.views[0].shape[1]

    @property
    def p(self):
        return len(self.views)

    def save(self, prefix, meta=None):
        base = dict(meta or {})
        base["views"] = self.p
        if self.labels is not None:
            base["labels"] = self.labels.tolist()
        for l, V in enumerate(self.views):
            save_matrix(f"{prefix}.view{l}.tpi3", V, base if l == 0 else None)

    @classmethod
    def load(cls, prefix):
        M0, meta = load_matrix(f"{prefix}.view0.tpi3")
        if meta is None or "views" not in meta:
            raise InvalidArgumentError(f"{prefix}: missing sidecar with view count")
        views = [M0] + [load_matrix(f"{prefix}.view{l}.tpi3")[0] for l in range(1, meta["views"])]
        labels = np.asarray(meta["labels"], dtype=np.int64) if "labels" in meta else None
        return cls(views, labels)


@dataclass
class SphericalGmm:
    """Mixture of spherical Gaussians with known per-coordinate std sigma."""

    means: np.ndarray
    priors: np.ndarray
    sigma: float

    def __post_init__(self):
        self.means = _check_factor(self.means)
        self.priors = _check_simplex(self.priors, self.means.shape[1])
        if self.sigma < 0:
            raise InvalidArgumentError("sigma must be >= 0")


def sample_multiview(model, n, seed):
    """Draw n multiview samples; returns a SampleBatch with labels."""
    if n < 1:
        raise InvalidArgumentError("need n >= 1")
    rng = stream(seed, 301)
    h = rng.choice(model.rank, size=n, p=model.priors)
    views = []
    for l in range(model.views):
        Z = model.factor_for_view(l)[:, h].copy()
        if model.noise_kind == "spherical-gaussian":
            if model.noise_scale > 0:
                Z += model.noise_scale * rng.standard_normal((model.dim, n))
        else:
            Z += model.noise_sampler(rng, model.dim, n)
        views.append(Z)
    return SampleBatch(views, labels=h)


def sample_gmm(gmm, n, seed):
    """Draw n spherical-GMM samples; returns (d x n matrix, labels)."""
    if n < 1:
        raise InvalidArgumentError("need n >= 1")
    rng = stream(seed, 302)
    h = rng.choice(gmm.priors.size, size=n, p=gmm.priors)
    Z = gmm.means[:, h] + gmm.sigma * rng.standard_normal((gmm.means.shape[0], n))
    return Z, h


def population_third_moment(model):
    """The exact cross-view third moment as a FactoredTensor3."""
    if model.is_asymmetric:
        A, B, C = model.factors
        return FactoredTensor3(A, model.priors, B, C)
    return FactoredTensor3(model.factors[0], model.priors)


def _budget_check(d):
    if d > DENSE_DIM_LIMIT:
        raise ResourceBudgetError(f"dense moment at d={d} exceeds limit {DENSE_DIM_LIMIT}")


def empirical_third_moment(batch):
    """Cross-view average (1/n) sum_i z1 (x) z2 (x) z3 as a DenseTensor3."""
    if batch.p < 3:
        raise InvalidArgumentError("need at least three views")
    _budget_check(batch.d)
    Z1, Z2, Z3 = batch.views[0], batch.views[1], batch.views[2]
    acc = np.zeros((batch.d,) * 3)
    for lo in range(0, batch.n, _CHUNK):
        sl = slice(lo, min(lo + _CHUNK, batch.n))
        acc += np.einsum("it,jt,lt->ijl", Z1[:, sl], Z2[:, sl], Z3[:, sl])
    return DenseTensor3(acc / batch.n, symmetric=False, check=False)


class SampleTensor3:
    """Implicit sample-sum tensor: contractions without materializing d**3.

    T(I, v, w) = (1/n) sum_i <z2_i, v> <z3_i, w> z1_i, computed in O(dn).
    Satisfies the same contraction protocol the power engine uses, so the
    overcomplete pipeline can run straight off samples.
    """

    def __init__(self, batch):
        if batch.p < 3:
            raise InvalidArgumentError("need at least three views")
        self._Z1, self._Z2, self._Z3 = batch.views[0], batch.views[1], batch.views[2]
        self._n = batch.n

    @property
    def dim(self):
        return self._Z1.shape[0]

    def contract_1(self, v, w):
        coeff = (self._Z2.T @ v) * (self._Z3.T @ w)
        return self._Z1 @ coeff / self._n


def _sigma_correction(mean_vec, sigma):
    d = mean_vec.size
    eye = np.eye(d)
    corr = (
        np.einsum("i,jl->ijl", mean_vec, eye)
        + np.einsum("j,il->ijl", mean_vec, eye)
        + np.einsum("l,ij->ijl", mean_vec, eye)
    )
    return sigma * sigma * corr


def gmm_modified_moment(gmm, samples):
    """Empirical plug-in of the sigma-corrected third moment M3.

    ``samples`` is a d x n matrix of GMM draws.  Uses the empirical mean in
    the correction term; sigma is taken as known from the model.
    """
    Z = np.asarray(samples, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] != gmm.means.shape[0]:
        raise InvalidArgumentError("samples must be d x n with the model's d")
    _budget_check(Z.shape[0])
    d, n = Z.shape
    acc = np.zeros((d,) * 3)
    for lo in range(0, n, _CHUNK):
        zc = Z[:, lo : min(lo + _CHUNK, n)]
        acc += np.einsum("it,jt,lt->ijl", zc, zc, zc)
    raw = acc / n
    return DenseTensor3(raw - _sigma_correction(Z.mean(axis=1), gmm.sigma),
                        symmetric=True, check=False)


def gmm_population_modified_moment(gmm):
    """Analytic population M3, computed via the Gaussian moment expansion.

    E[z (x) z (x) z] for one component a with noise sigma*g expands to
    a^(x)3 + sigma^2 (a (x) I + I-permutations); mixing over priors and
    subtracting the correction built from the exact mean cancels every
    sigma^2 term, leaving sum_j priors_j a_j^(x)3 (verified entrywise by the
    test suite's independent monomial oracle).
    """
    A, lam, sig = gmm.means, gmm.priors, gmm.sigma
    _budget_check(A.shape[0])
    raw = np.einsum("j,ij,kj,lj->ikl", lam, A, A, A)
    for j in range(lam.size):
        raw = raw + lam[j] * _sigma_correction(A[:, j], sig)
    mean_vec = A @ lam
    return DenseTensor3(raw - _sigma_correction(mean_vec, sig), symmetric=True, check=False)


@dataclass
class SnrReport:
    """Signal-to-noise accounting for a batch (expected ||a|| over expected ||eta||)."""

    empirical: float
    theoretical: float
    noise_scale: float
    expected_noise_norm: float


def snr(batch, model):
    """Measured SNR of view 1: 1 / mean ||z - a_h||, plus the spherical theory value.

    Needs labels (evaluation context).  Returns infinity for a noiseless
    batch, as a distinguished value.
    """
    if batch.labels is None:
        raise InvalidArgumentError("snr needs a labeled batch")
    F = model.factor_for_view(0)
    resid = batch.views[0] - F[:, batch.labels]
    mean_noise = float(np.mean(np.linalg.norm(resid, axis=0)))
    zeta = model.noise_scale
    theo = float("inf") if zeta == 0 else 1.0 / (zeta * np.sqrt(model.dim))
    emp = float("inf") if mean_noise == 0 else 1.0 / mean_noise
    return SnrReport(
        empirical=emp,
        theoretical=theo,
        noise_scale=zeta,
        expected_noise_norm=zeta * np.sqrt(model.dim),
    )


def chi_mean(d):
    """E ||g|| for g ~ N(0, I_d): sqrt(2) * Gamma((d+1)/2) / Gamma(d/2)."""
    return float(np.sqrt(2.0) * np.exp(gammaln((d + 1) / 2.0) - gammaln(d / 2.0)))


@dataclass
class WeakRipReport:
    """Monte Carlo surrogate for the column-subset spectral-norm condition."""

    subset_size: int
    trials: int
    bound: float
    max_restricted_norm: float
    mean_restricted_norm: float
    violations: int
    passed: bool
    restricted_norms: np.ndarray = field(repr=False)


def check_weak_rip(noise_matrix, subset_size, trials, seed, bound=2.0):
    """Sample random column subsets and check each restricted spectral norm.

    A Monte Carlo stand-in for the universal quantifier "every subset of
    ``subset_size`` columns has spectral norm <= bound".
    """
    E = np.asarray(noise_matrix, dtype=np.float64)
    if E.ndim != 2:
        raise InvalidArgumentError("noise_matrix must be 2-d")
    n = E.shape[1]
    if not (1 <= subset_size <= n):
        raise InvalidArgumentError("subset_size must lie in [1, n]")
    rng = stream(seed, 303)
    norms = np.empty(trials)
    for t in range(trials):
        cols = rng.choice(n, size=subset_size, replace=False)
        norms[t] = np.linalg.norm(E[:, cols], 2)
    max_norm = float(norms.max())
    return WeakRipReport(
        subset_size=int(subset_size),
        trials=int(trials),
        bound=float(bound),
        max_restricted_norm=max_norm,
        mean_restricted_norm=float(norms.mean()),
        violations=int(np.sum(norms > bound)),
        passed=bool(max_norm <= bound),
        restricted_norms=norms,
    )
