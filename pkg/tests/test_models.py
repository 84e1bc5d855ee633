import numpy as np
import pytest
from scipy.stats import chi

from tpi.errors import InvalidArgumentError
from tpi.models import (
    MixtureModel,
    SampleBatch,
    SampleTensor3,
    SphericalGmm,
    check_weak_rip,
    chi_mean,
    empirical_third_moment,
    gmm_modified_moment,
    gmm_population_modified_moment,
    population_third_moment,
    sample_gmm,
    sample_multiview,
    snr,
)
from tpi.rng import stream
from tpi.tensors import FactoredTensor3, densify, random_components


def gmm_modified_moment_loops(A, lam, sigma):
    """Entrywise Gaussian-moment oracle for the sigma-corrected third moment.

    E[(a + sg)_i (a + sg)_j (a + sg)_l] expands (odd Gaussian moments vanish)
    to a_i a_j a_l + s^2 (a_i d_jl + a_j d_il + a_l d_ij); subtracting the
    same delta pattern built from the mixture mean leaves sum_h lam_h a^{(x)3}.
    Computed with explicit loops, independent of the library's einsum path.
    """
    d, k = A.shape
    mean = A @ lam
    M = np.zeros((d, d, d))
    s2 = sigma * sigma
    for i in range(d):
        for j in range(d):
            for l in range(d):
                val = 0.0
                for h in range(k):
                    a = A[:, h]
                    val += lam[h] * (
                        a[i] * a[j] * a[l]
                        + s2 * (a[i] * (j == l) + a[j] * (i == l) + a[l] * (i == j))
                    )
                val -= s2 * (mean[i] * (j == l) + mean[j] * (i == l) + mean[l] * (i == j))
                M[i, j, l] = val
    return M


def test_gmm_modified_moment_identity_against_loop_oracle():
    d, k, sigma = 5, 3, 0.45
    A = random_components(d, k, seed=31)
    lam = np.array([0.5, 0.3, 0.2])
    gmm = SphericalGmm(A, lam, sigma)
    oracle = gmm_modified_moment_loops(A, lam, sigma)
    lib = gmm_population_modified_moment(gmm).entries
    assert np.max(np.abs(lib - oracle)) < 1e-13
    # and the sigma terms cancel exactly against the mean correction
    target = densify(FactoredTensor3(A, lam)).entries
    assert np.max(np.abs(lib - target)) < 1e-13


def test_gmm_empirical_moment_converges():
    d, k, sigma = 5, 3, 0.3
    A = random_components(d, k, seed=32)
    lam = np.full(k, 1.0 / k)
    gmm = SphericalGmm(A, lam, sigma)
    target = densify(FactoredTensor3(A, lam)).entries
    Z, labels = sample_gmm(gmm, 200000, seed=32)
    assert Z.shape == (d, 200000) and labels.shape == (200000,)
    emp = gmm_modified_moment(gmm, Z).entries
    assert np.linalg.norm((emp - target).ravel()) < 0.08


def test_multiview_samples_noiseless_are_columns():
    A = random_components(6, 4, seed=33)
    model = MixtureModel(A, np.full(4, 0.25), noise_scale=0.0)
    batch = sample_multiview(model, 50, seed=33)
    assert batch.p == 3 and batch.n == 50 and batch.d == 6
    for V in batch.views:
        assert np.max(np.abs(V - A[:, batch.labels])) == 0.0


def test_multiview_sampling_reproducible():
    A = random_components(5, 3, seed=34)
    model = MixtureModel(A, np.full(3, 1 / 3), noise_scale=0.1)
    b1 = sample_multiview(model, 40, seed=77)
    b2 = sample_multiview(model, 40, seed=77)
    assert np.array_equal(b1.views[2], b2.views[2])
    assert np.array_equal(b1.labels, b2.labels)
    b3 = sample_multiview(model, 40, seed=78)
    assert not np.array_equal(b1.views[0], b3.views[0])


def test_population_third_moment_matches_rank_one_sum():
    A = random_components(5, 8, seed=35)
    priors = np.full(8, 0.125)
    model = MixtureModel(A, priors, noise_scale=0.2)
    T = population_third_moment(model)
    target = densify(FactoredTensor3(A, priors)).entries
    assert np.max(np.abs(densify(T).entries - target)) == 0.0


def test_empirical_third_moment_converges_to_population():
    A = random_components(6, 9, seed=36)
    priors = np.full(9, 1.0 / 9)
    model = MixtureModel(A, priors, noise_scale=0.05)
    exact = densify(population_third_moment(model)).entries
    errs = []
    for n in (500, 8000):
        batch = sample_multiview(model, n, seed=36)
        emp = empirical_third_moment(batch).entries
        errs.append(np.linalg.norm((emp - exact).ravel()))
    # 16x the samples: expect about 4x the accuracy, allow 2.5x-6x
    assert errs[0] / errs[1] > 2.5
    assert errs[0] / errs[1] < 6.0


def test_sample_tensor_contraction_matches_dense():
    A = random_components(7, 5, seed=37)
    model = MixtureModel(A, np.full(5, 0.2), noise_scale=0.1)
    batch = sample_multiview(model, 300, seed=37)
    implicit = SampleTensor3(batch)
    dense = empirical_third_moment(batch)
    rng = stream(37, 60)
    for _ in range(4):
        v = rng.standard_normal(7)
        w = rng.standard_normal(7)
        lhs = implicit.contract_1(v, w)
        rhs = np.einsum("ijl,j,l->i", dense.entries, v, w)
        assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_batch_save_load_round_trip(tmp_path):
    A = random_components(4, 3, seed=38)
    model = MixtureModel(A, np.full(3, 1 / 3), noise_scale=0.2)
    batch = sample_multiview(model, 25, seed=38)
    prefix = str(tmp_path / "batch")
    batch.save(prefix, meta={"origin": "test"})
    back = SampleBatch.load(prefix)
    assert back.p == batch.p
    for V1, V2 in zip(batch.views, back.views):
        assert np.array_equal(V1, V2)
    assert np.array_equal(back.labels, batch.labels)


def test_snr_matches_theory_and_needs_labels():
    d, k, zeta = 40, 10, 0.15
    A = random_components(d, k, seed=39)
    model = MixtureModel(A, np.full(k, 0.1), noise_scale=zeta)
    batch = sample_multiview(model, 4000, seed=39)
    rep = snr(batch, model)
    assert abs(rep.theoretical - 1.0 / (zeta * np.sqrt(d))) < 1e-12
    # ||eta|| concentrates hard at d=40, so empirical ~ theoretical
    assert abs(rep.empirical - rep.theoretical) / rep.theoretical < 0.05
    unlabeled = SampleBatch([V.copy() for V in batch.views])
    with pytest.raises(InvalidArgumentError):
        snr(unlabeled, model)


def test_snr_noiseless_is_infinite():
    A = random_components(5, 4, seed=40)
    model = MixtureModel(A, np.full(4, 0.25), noise_scale=0.0)
    batch = sample_multiview(model, 30, seed=40)
    assert snr(batch, model).empirical == np.inf


def test_chi_mean_against_scipy():
    for d in (1, 2, 5, 40, 400):
        assert abs(chi_mean(d) - chi.mean(df=d)) < 1e-10 * max(1.0, chi.mean(df=d))


def test_asymmetric_mixture_moment():
    d, k = 5, 4
    A = random_components(d, k, seed=41)
    B = random_components(d, k, seed=42)
    C = random_components(d, k, seed=43)
    priors = np.full(k, 0.25)
    model = MixtureModel((A, B, C), priors, noise_scale=0.0)
    assert model.is_asymmetric
    T = population_third_moment(model)
    batch = sample_multiview(model, 100, seed=44)
    emp = empirical_third_moment(batch).entries
    # noiseless: empirical moment is an average of rank-one terms from T's factors
    ref = np.einsum("ih,jh,lh->ijl", A[:, batch.labels], B[:, batch.labels], C[:, batch.labels]) / 100
    assert np.max(np.abs(emp - ref)) < 1e-12
    assert T.components_b is not T.components


def test_priors_validation():
    A = random_components(4, 3, seed=45)
    with pytest.raises(InvalidArgumentError):
        MixtureModel(A, np.array([0.5, 0.5, 0.5]))
    with pytest.raises(InvalidArgumentError):
        MixtureModel(A, np.array([0.7, 0.3, 0.0]))


def test_weak_rip_on_gaussian_noise_matrix():
    rng = stream(46, 61)
    N = rng.standard_normal((50, 200)) / np.sqrt(50)
    rep = check_weak_rip(N, subset_size=5, trials=200, seed=46)
    assert rep.passed
    assert rep.max_restricted_norm <= rep.bound
    assert rep.violations == 0
