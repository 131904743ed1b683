import numpy as np
import pytest

from cgflow.matalg import (
    AdaptationFailed,
    BlockMatrix,
    DegenerateBlock,
    MatAlgError,
    NotPositiveDefinite,
    OrderViolated,
    SkewMatrix,
    SymMatrix,
    adapted_q0,
    assemble_block,
    center,
    eigh_jacobi,
    ellipticity_ratio,
    extract_components,
    inv_spd,
    loewner_min_eig,
    metric_geomean,
    spectral_geomean,
    spectral_norm,
    star_dual,
    two_sided_bound,
    symm_part_gap_check,
)

J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def random_spd(rng, d, scale=1.0):
    m = rng.normal(size=(d, d))
    return SymMatrix(scale * (m @ m.T + 0.25 * np.eye(d)))


def random_block(rng, d=2, skew=1.0):
    # s >= s_star, as for every coarse-grained matrix the solver produces
    s_star = random_spd(rng, d)
    bump = rng.normal(size=(d, d))
    s = SymMatrix(s_star.entries + 0.5 * (bump @ bump.T))
    k = skew * rng.normal(size=(d, d))
    return assemble_block(s, s_star, k), s, s_star, k


def test_jacobi_matches_direct_eigendecomposition():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = rng.integers(1, 7)
        if n == 5:
            n = 6
        m = rng.normal(size=(n, n))
        a = m + m.T
        w, v = eigh_jacobi(a)
        assert np.abs(v @ np.diag(w) @ v.T - a).max() < 1e-12 * max(1, np.abs(a).max())
        assert np.abs(v.T @ v - np.eye(n)).max() < 1e-12


def test_spectral_norm_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = rng.normal(size=(4, 4))
        assert spectral_norm(a) == pytest.approx(np.linalg.norm(a, 2), rel=1e-12)


def test_assemble_identity_case():
    A = assemble_block(SymMatrix(np.eye(2)), SymMatrix(np.eye(2)), np.zeros((2, 2)))
    assert np.abs(A.M - np.eye(4)).max() < 1e-14


def test_assemble_uniform_elliptic_bound():
    # E0 = diag(2 Lambda I, 2/lambda I) from lam=0.5, Lam=2:
    # assemble(2*Lam*I, (2/lam)^{-1} I, 0) has lower-right 2/lam I.
    lam, Lam = 0.5, 2.0
    E0 = assemble_block(
        SymMatrix(2 * Lam * np.eye(2)),
        SymMatrix((lam / 2.0) * np.eye(2)),
        np.zeros((2, 2)),
    )
    assert np.abs(E0.M - np.diag([4.0, 4.0, 4.0, 4.0])).max() < 1e-14


def test_assemble_against_dense_product_oracle():
    s = np.diag([2.0, 1.0])
    s_star = np.eye(2)
    k = J2.copy()
    A = assemble_block(SymMatrix(s), SymMatrix(s_star), k)
    si = np.linalg.inv(s_star)
    direct = np.block([[s + k.T @ si @ k, -k.T @ si], [-si @ k, si]])
    assert np.abs(A.M - direct).max() < 1e-14
    assert np.abs(A.M[:2, :2] - np.diag([3.0, 2.0])).max() < 1e-14


def test_assemble_singular_s_star_raises():
    with pytest.raises(DegenerateBlock):
        assemble_block(
            SymMatrix(np.eye(2)), SymMatrix(np.diag([1.0, 0.0])), np.zeros((2, 2))
        )


def test_extract_identity():
    s_star, k, s, b = extract_components(BlockMatrix(2, np.eye(4)))
    for m, want in ((s_star.entries, np.eye(2)), (k, np.zeros((2, 2))),
                    (s.entries, np.eye(2)), (b.entries, np.eye(2))):
        assert np.abs(m - want).max() < 1e-14


def test_extract_round_trips_assembly():
    A = assemble_block(SymMatrix(np.diag([2.0, 1.0])), SymMatrix(np.eye(2)), J2)
    s_star, k, s, _ = extract_components(A)
    A2 = assemble_block(s, s_star, k)
    assert np.abs(A2.M - A.M).max() < 1e-12


def test_round_trip_property_random_spd():
    rng = np.random.default_rng(2)
    for _ in range(100):
        A, s, s_star, k = random_block(rng)
        es, ek, e_s, _ = extract_components(A)
        A2 = assemble_block(e_s, es, ek)
        assert np.abs(A2.M - A.M).max() < 1e-12 * max(1.0, np.abs(A.M).max())
        assert np.abs(es.entries - s_star.entries).max() < 1e-10
        assert np.abs(ek - k).max() < 1e-10


def test_center_zero_is_identity():
    rng = np.random.default_rng(3)
    A, *_ = random_block(rng)
    Ac = center(A, SkewMatrix(np.zeros((2, 2))))
    assert np.abs(Ac.M - A.M).max() < 1e-14


def test_center_shifts_k_and_fixes_s_blocks():
    rng = np.random.default_rng(4)
    for _ in range(20):
        A, _, _, k = random_block(rng)
        h = 0.5 * (k - k.T)
        Ac = center(A, SkewMatrix.from_entries(h))
        s_star, kc, s, _ = extract_components(Ac)
        s_star0, k0, s0, _ = extract_components(A)
        assert np.abs(kc - (k0 - h)).max() < 1e-10
        assert np.abs(s_star.entries - s_star0.entries).max() < 1e-11
        assert np.abs(s.entries - s0.entries).max() < 1e-11
        # centering by the skew part leaves a symmetric k block
        assert np.abs(kc - kc.T).max() < 1e-10


def test_theta_invariant_under_centering():
    rng = np.random.default_rng(5)
    for _ in range(25):
        A, *_ = random_block(rng)
        theta0 = ellipticity_ratio(A).theta
        h = SkewMatrix(np.triu(rng.normal(size=(2, 2)), k=1))
        theta1 = ellipticity_ratio(center(A, h)).theta
        assert theta1 == pytest.approx(theta0, abs=1e-8, rel=1e-8)


def test_star_dual_identity_and_diag():
    assert np.abs(star_dual(BlockMatrix(2, np.eye(4))).M - np.eye(4)).max() == 0.0
    D = BlockMatrix(2, np.diag([2.0, 2.0, 5.0, 5.0]))
    assert np.abs(star_dual(D).M - np.diag([5.0, 5.0, 2.0, 2.0])).max() == 0.0


def test_star_dual_permutation_oracle_and_involution():
    rng = np.random.default_rng(6)
    A, *_ = random_block(rng)
    perm = [2, 3, 0, 1]
    assert np.abs(star_dual(A).M - A.M[np.ix_(perm, perm)]).max() == 0.0
    assert np.abs(star_dual(star_dual(A)).M - A.M).max() == 0.0


def test_ellipticity_diagonal_case():
    A = assemble_block(SymMatrix(np.diag([1.0, 4.0])), SymMatrix(np.eye(2)), np.zeros((2, 2)))
    rep = ellipticity_ratio(A)
    assert rep.theta == pytest.approx(4.0, abs=1e-8)
    assert rep.pi == pytest.approx(4.0, abs=1e-8)


def test_ellipticity_skew_k_cancels():
    c = 0.8
    A = assemble_block(SymMatrix(np.eye(2)), SymMatrix(np.eye(2)), c * J2)
    rep = ellipticity_ratio(A)
    assert rep.theta == pytest.approx(1.0, abs=1e-8)
    assert rep.h_opt.entries[0, 1] == pytest.approx(c, abs=1e-6)


def test_ellipticity_symmetric_k_grid_oracle():
    k = np.array([[0.0, 0.5], [0.5, 0.0]])
    A = assemble_block(SymMatrix(np.eye(2)), SymMatrix(np.eye(2)), k)
    rep = ellipticity_ratio(A)
    # dense 1-d grid search over the skew coordinate
    cs = np.arange(-2.0, 2.0 + 1e-12, 1e-4)
    best = np.inf
    for c in cs:
        km = k - c * J2
        m = np.eye(2) + km.T @ km
        best = min(best, np.abs(np.linalg.eigvalsh(m)).max())
    assert rep.theta == pytest.approx(best, abs=1e-6)
    assert rep.theta == pytest.approx(1.25, abs=1e-6)


def test_theta_at_most_pi_random():
    rng = np.random.default_rng(7)
    for _ in range(50):
        A, *_ = random_block(rng, skew=2.0)
        rep = ellipticity_ratio(A)
        assert rep.theta <= rep.pi + 1e-9
        assert rep.theta >= 1.0 - 1e-9


def test_metric_geomean_scalars_and_equal_args():
    A = SymMatrix(4.0 * np.eye(2))
    B = SymMatrix(9.0 * np.eye(2))
    assert np.abs(metric_geomean(A, B).entries - 6.0 * np.eye(2)).max() < 1e-12
    C = random_spd(np.random.default_rng(8), 3)
    assert np.abs(metric_geomean(C, C).entries - C.entries).max() < 1e-11


def test_metric_geomean_riccati_residual_and_symmetry():
    A = SymMatrix(np.diag([1.0, 4.0]))
    B = SymMatrix(np.array([[2.0, 1.0], [1.0, 3.0]]))
    X = metric_geomean(A, B)
    resid = X.entries @ inv_spd(A.entries) @ X.entries - B.entries
    assert spectral_norm(resid) < 1e-10 * B.norm()
    Y = metric_geomean(B, A)
    assert np.abs(X.entries - Y.entries).max() < 1e-10


def test_metric_geomean_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        metric_geomean(SymMatrix(np.diag([1.0, -1.0])), SymMatrix(np.eye(2)))


def test_spectral_geomean_commuting_equals_metric():
    A = SymMatrix(np.diag([4.0, 1.0]))
    B = SymMatrix(np.diag([9.0, 16.0]))
    M = metric_geomean(A, B)
    N = spectral_geomean(A, B)
    assert np.abs(M.entries - N.entries).max() < 1e-10
    assert np.abs(N.entries - np.diag([6.0, 4.0])).max() < 1e-10


def test_spectral_geomean_eigenvalue_similarity():
    rng = np.random.default_rng(9)
    for _ in range(25):
        A = random_spd(rng, 3)
        B = random_spd(rng, 3)
        N = spectral_geomean(A, B)
        ev_sq = np.sort(np.linalg.eigvalsh(N.entries)) ** 2
        ev_ab = np.sort(np.real(np.linalg.eigvals(A.entries @ B.entries)))
        assert np.abs(ev_sq - ev_ab).max() < 1e-9 * max(1.0, ev_ab.max())


def test_spectral_mean_dominates_metric_mean_in_norm():
    rng = np.random.default_rng(10)
    for _ in range(25):
        A = random_spd(rng, 2)
        B = random_spd(rng, 2)
        assert metric_geomean(A, B).norm() <= spectral_geomean(A, B).norm() + 1e-12


def test_adapted_q0_identity_and_scalar_m0():
    A = BlockMatrix(2, np.eye(4))
    q0 = adapted_q0(A)
    assert np.abs(q0.entries - np.eye(2)).max() < 1e-12
    # scalar m0: q0 is a (rounded) multiple of I
    A2 = assemble_block(SymMatrix(5.0 * np.eye(2)), SymMatrix(5.0 * np.eye(2)), np.zeros((2, 2)))
    q2 = adapted_q0(A2)
    assert abs(q2.entries[0, 1]) < 1e-12
    assert q2.entries[0, 0] == pytest.approx(q2.entries[1, 1], abs=1e-12)


def test_adapted_q0_anisotropic_sandwich():
    A = assemble_block(SymMatrix(np.diag([1.0, 9.0])), SymMatrix(np.eye(2)), np.zeros((2, 2)))
    q0 = adapted_q0(A)
    # m0 = diag(1,9) # I = diag(1,3), lambda0 = 1, so q0 ~ diag(1, sqrt(3))
    # (ceil rounding moves entries up by at most the lattice step 3^-4)
    assert q0.entries[1, 1] == pytest.approx(np.sqrt(3.0), abs=2e-2)
    target = np.diag([1.0, np.sqrt(3.0)])
    assert loewner_min_eig(0.99 * target, q0.entries) >= -1e-12
    assert loewner_min_eig(q0.entries, 1.01 * target) >= -1e-12


def test_two_sided_bound_equal_matrices():
    rng = np.random.default_rng(11)
    A, *_ = random_block(rng)
    assert two_sided_bound(A, A) < 1e-9


def test_two_sided_bound_order_violation():
    A = BlockMatrix(2, 2.0 * np.eye(4))
    E = BlockMatrix(2, np.eye(4))
    with pytest.raises(OrderViolated):
        two_sided_bound(A, E)


def test_two_sided_bound_random_construction():
    # E with Theta~ = 1.1 dominating a randomly shrunk A: inequality holds.
    rng = np.random.default_rng(12)
    for _ in range(100):
        s_star = random_spd(rng, 2)
        s = SymMatrix(1.1 * s_star.entries)
        # shrink the skew block until the dual lower bound E_* sits below E
        k = 0.05 * spectral_norm(s_star.entries) * rng.normal(size=(2, 2))
        while True:
            E = assemble_block(s, s_star, k)
            E_star = BlockMatrix(2, inv_spd(star_dual(E).M))
            if loewner_min_eig(E_star.M, E.M) >= 0.0:
                break
            k = 0.5 * k
        # A <= E via a random contraction toward the dual lower bound
        t = rng.uniform(0.0, 1.0)
        A = BlockMatrix(2, E_star.M + t * (E.M - E_star.M))
        val = two_sided_bound(A, E)
        theta_t = 1.1
        assert val <= (2.0 + np.sqrt(theta_t)) * (theta_t - 1.0) + 1e-9


def test_symm_part_gap_trivial_cases():
    rng = np.random.default_rng(13)
    s_star = random_spd(rng, 2)
    s = SymMatrix(s_star.entries + 0.5 * np.eye(2))
    A = assemble_block(s, s_star, 0.3 * J2)
    # k antisymmetric: k + k^t = 0, slack is min eig of s - s*
    assert symm_part_gap_check(A) == pytest.approx(0.5, abs=1e-10)


def test_skew_matrix_storage_exact():
    k = SkewMatrix(np.array([[0.0, 1.5], [0.0, 0.0]]))
    assert k.entries[1, 0] == -1.5
    assert k.entries[0, 0] == 0.0
    with pytest.raises(MatAlgError):
        SkewMatrix.from_entries(np.array([[0.0, 1.0], [-0.9, 0.0]]))


def test_sym_matrix_rejects_asymmetric():
    with pytest.raises(MatAlgError):
        SymMatrix(np.array([[1.0, 2.0], [1.0, 1.0]]))


def test_block_matrix_rejects_indefinite():
    with pytest.raises(MatAlgError):
        BlockMatrix(2, np.diag([1.0, 1.0, 1.0, -1.0]))


def test_adapted_q0_failure_surface():
    # unreachable sandwich via a cap-busting request is hard to trigger with
    # valid input; instead check the error type exists and k0 escalation works
    A = assemble_block(
        SymMatrix(np.diag([1.0, 1.0 + 1e-9])), SymMatrix(np.eye(2)), np.zeros((2, 2))
    )
    q0 = adapted_q0(A, k0_digits=1)
    assert q0.entries[0, 0] >= 1.0
    assert isinstance(AdaptationFailed("x"), MatAlgError)


def test_two_sided_bound_degenerate_theta_forces_equality():
    # s~ = s~*: the guarantee degenerates to 0, so only A = E passes
    rng = np.random.default_rng(21)
    s_star = random_spd(rng, 2)
    E = assemble_block(SymMatrix(s_star.entries), s_star, 0.1 * J2)
    assert two_sided_bound(E, E) < 1e-9
    shrunk = BlockMatrix(2, 0.995 * E.M)
    with pytest.raises(MatAlgError):
        two_sided_bound(shrunk, E)
