import numpy as np
import pytest

from cgflow.fields import (
    Box,
    CoefficientField,
    DegenerateField,
    FgfParams,
    FieldError,
    OutOfBox,
    block_sum,
    constant_field,
    dump_field,
    eta_layer,
    expm_field,
    fgf_covariance_constant,
    fgf_kernel_constant,
    fgf_layer,
    fgf_layer_kernel,
    layer_radius,
    load_field,
    sample_checkerboard,
    sample_fgf,
    sample_laminate,
    sample_lognormal,
    sample_poisson_inclusions,
    sample_stream_field,
    sample_white_noise,
    torus_view,
    window_profile,
)
from cgflow.grids import TriadicCube


# ---------------------------------------------------------------------------
# white noise
# ---------------------------------------------------------------------------

def test_white_noise_unit_variance_and_determinism():
    box = Box((0, 0), (40, 40))
    w1 = sample_white_noise(box, 123)
    w2 = sample_white_noise(box, 123)
    assert np.array_equal(w1.values, w2.values)
    assert w1.values.var() == pytest.approx(1.0, abs=0.1)
    w3 = sample_white_noise(box, 124)
    assert not np.array_equal(w1.values, w3.values)


def test_white_noise_disjoint_supports_uncorrelated():
    box = Box((0, 0), (20, 20))
    rng = np.random.default_rng(5)
    psi1 = np.zeros(box.shape); psi1[:10] = rng.normal(size=(10, 20))
    psi2 = np.zeros(box.shape); psi2[10:] = rng.normal(size=(10, 20))
    vals = []
    for s in range(3000):
        w = sample_white_noise(box, (77, s))
        vals.append(((w.values * psi1).sum(), (w.values * psi2).sum()))
    vals = np.array(vals)
    cov = np.cov(vals.T)[0, 1]
    scale = np.sqrt(np.cov(vals.T)[0, 0] * np.cov(vals.T)[1, 1])
    assert abs(cov) < 3 * scale / np.sqrt(3000)


def test_white_noise_block_scaling():
    # sums over 3x3 blocks of fine noise are standard normal (cell volume law)
    box = Box((0, 0), (30, 30))
    fine = sample_white_noise(box, 9, sub=3)
    assert fine.values.var() == pytest.approx(1.0 / 9.0, rel=0.1)
    unit = block_sum(fine, 3)
    assert unit.sub == 1
    assert unit.values.shape == (30, 30)
    assert unit.values.var() == pytest.approx(1.0, rel=0.1)
    assert unit.values[0, 0] == pytest.approx(fine.values[:3, :3].sum())


# ---------------------------------------------------------------------------
# FGF layers
# ---------------------------------------------------------------------------

def test_partition_of_unity_residual():
    rs = np.geomspace(1e-3, 1e3, 1000)
    total = sum(eta_layer(rs, n) for n in range(-10, 10))
    assert np.abs(total - 1.0).max() < 1e-10


def test_window_supports():
    # eta_n vanishes outside ((2/9) 3^n, (4/3) 3^n)
    for n in (0, 1, 2):
        r_in = 2.0 / 9.0 * 3**n
        r_out = 4.0 / 3.0 * 3**n
        assert eta_layer(r_in * 0.999, n) == 0.0
        assert eta_layer(r_out * 1.001, n) == 0.0
        assert eta_layer(0.6 * 3**n, n) == pytest.approx(1.0)


def test_kernel_constant_matches_covariance_constant():
    # d=2, sigma=1/2: C = 1/(2 pi)
    assert fgf_covariance_constant(2, 0.5) == pytest.approx(1.0 / (2 * np.pi), rel=1e-12)
    assert fgf_kernel_constant(2, 0.5) > 0


def test_layer_kernel_support_taint():
    # zero algorithmic dependence beyond the annulus: kernel entries vanish
    rad, kern = fgf_layer_kernel(2, 0.5, 1, sub=1, digits=12, lumped=False)
    n = kern.shape[0]
    c = (n - 1) // 2
    ii, jj = np.meshgrid(np.arange(n) - c, np.arange(n) - c, indexing="ij")
    r = np.hypot(ii, jj)
    outside = r > (4.0 / 3.0) * 3.0 + 1.0
    assert np.all(kern[outside] == 0.0)
    inside = (r > 0.35 * 3) & (r < 1.2 * 3)
    assert np.all(kern[inside] > 0.0)


def test_layers_two_apart_use_disjoint_annuli():
    rad1, k1 = fgf_layer_kernel(2, 0.5, 1, sub=1, digits=12, lumped=False)
    rad3, k3 = fgf_layer_kernel(2, 0.5, 3, sub=1, digits=12, lumped=False)
    # overlap of supports is empty: embed k1 in k3's frame and test products
    pad = rad3 - rad1
    emb = np.zeros_like(k3)
    emb[pad:pad + k1.shape[0], pad:pad + k1.shape[1]] = k1
    assert np.all(emb * k3 == 0.0)


def test_fft_convolution_matches_direct_sum():
    box = Box((0, 0), (14, 14))
    W = sample_white_noise(box, 3)
    params = FgfParams(sigma=0.5, n_max=1, kernel_digits=12)
    layer = fgf_layer(params, 1, W)
    rad, kern = fgf_layer_kernel(2, 0.5, 1, sub=1, digits=12, lumped=False)
    # direct correlation at a few cells
    out_lo = layer.box.lo
    for (x, y) in ((0, 0), (2, 1), (3, 3)):
        acc = 0.0
        for dz0 in range(-rad, rad + 1):
            for dz1 in range(-rad, rad + 1):
                wx = (x + out_lo[0]) + dz0 - box.lo[0]
                wy = (y + out_lo[1]) + dz1 - box.lo[1]
                acc += kern[dz0 + rad, dz1 + rad] * W.values[wx, wy]
        assert layer.values[x, y] == pytest.approx(acc, abs=1e-12)


def test_layer_variance_self_similarity_deterministic():
    # sum k^2 h^d scales like 3^{-2 n sigma} across layers (kernel-level check)
    sigma = 0.5
    v = {}
    for n, sub in ((1, 3), (2, 1), (3, 1)):
        rad, kern = fgf_layer_kernel(2, sigma, n, sub=sub, digits=24, lumped=False)
        v[n] = float((kern**2).sum()) * (1.0 / sub) ** 2 * 3.0 ** (2 * n * sigma)
    vals = np.array([v[1], v[2], v[3]])
    assert vals.max() / vals.min() < 1.05


def test_fgf_zero_layers():
    params = FgfParams(sigma=0.5, n_min=2, n_max=1)
    F = sample_fgf(params, Box((0, 0), (9, 9)), 4)
    assert np.all(F.values == 0.0)


def test_fgf_deterministic_and_layered_independence():
    box = Box((0, 0), (12, 12))
    params = FgfParams(sigma=0.5, n_max=2, kernel_digits=12)
    F1 = sample_fgf(params, box, 11)
    F2 = sample_fgf(params, box, 11)
    assert np.array_equal(F1.values, F2.values)
    # layers 0 and 2 from the same noise are uncorrelated (disjoint reads)
    pad = 10
    nb = box.grow(pad)
    samples = []
    for s in range(400):
        fine = sample_white_noise(nb, (13, s), sub=3)
        unit = block_sum(fine, 3)
        l0 = fgf_layer(params, 0, fine)
        l2 = fgf_layer(params, 2, unit)
        c0 = l0.values[5 - l0.box.lo[0], 5 - l0.box.lo[1]]
        c2 = l2.values[5 - l2.box.lo[0], 5 - l2.box.lo[1]]
        samples.append((c0, c2))
    samples = np.array(samples)
    corr = np.corrcoef(samples.T)[0, 1]
    assert abs(corr) < 3.0 / np.sqrt(400)


def test_fgf_exact_covariance_against_riesz_kernel():
    """Deterministic check: the construction's exact covariance of two bump
    functionals matches C(sigma,d) int int |x-y|^{-2s} psi psi within 8%."""
    sigma = 0.5
    d = 2
    params = FgfParams(sigma=sigma, n_max=4, kernel_digits=24)
    # bump pair separated by 12 cells inside a 40x20 box
    box = Box((0, 0), (40, 20))

    def bump(c):
        xs = np.arange(40) + 0.5
        ys = np.arange(20) + 0.5
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        r2 = ((X - c[0]) / 4.0) ** 2 + ((Y - c[1]) / 4.0) ** 2
        w = np.exp(-1.0 / np.maximum(1e-12, 1.0 - r2)) * (r2 < 1.0)
        return w / w.sum()

    p1 = bump((10.0, 10.0))
    p2 = bump((26.0, 10.0))

    # exact discrete covariance: sum over layers of (psi * K)(shared noise)
    pad = max(layer_radius(n, 1) for n in range(0, 5))
    nshape = tuple(s + 2 * pad for s in box.shape)
    acc = 0.0
    resp1 = np.zeros(nshape)
    resp2 = np.zeros(nshape)
    fine_resp1 = np.zeros(tuple(3 * s for s in nshape))
    fine_resp2 = np.zeros(tuple(3 * s for s in nshape))
    for n in range(0, 5):
        sub = 3 if n <= 1 else 1
        rad, kern = fgf_layer_kernel(2, sigma, n, sub=sub, digits=24, lumped=(n == 0))
        r1 = np.zeros(fine_resp1.shape if sub == 3 else nshape)
        r2 = np.zeros_like(r1)
        for psi, r in ((p1, r1), (p2, r2)):
            idx = np.argwhere(psi > 0)
            for (i, j) in idx:
                wgt = psi[i, j]
                ci = (i + pad) * sub + sub // 2
                cj = (j + pad) * sub + sub // 2
                r[ci - rad:ci + rad + 1, cj - rad:cj + rad + 1] += wgt * kern
        if sub == 3:
            fine_resp1 += r1
            fine_resp2 += r2
        else:
            resp1 += r1
            resp2 += r2
    # unit-layer responses read block sums of the same fine noise: expand to
    # the fine grid before pairing so cross-layer covariance is included
    up1 = np.repeat(np.repeat(resp1, 3, axis=0), 3, axis=1)
    up2 = np.repeat(np.repeat(resp2, 3, axis=0), 3, axis=1)
    tot1 = fine_resp1 + up1
    tot2 = fine_resp2 + up2
    hd = (1.0 / 3.0) ** d
    cov = (tot1 * tot2).sum() * hd
    # continuum target by quadrature over the bump supports
    xs = np.arange(40) + 0.5
    ys = np.arange(20) + 0.5
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    w1 = p1.ravel()
    w2 = p2.ravel()
    nz1 = w1 > 0
    nz2 = w2 > 0
    diff = pts[nz1][:, None, :] - pts[nz2][None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    target = fgf_covariance_constant(d, sigma) * (
        (w1[nz1][:, None] * w2[nz2][None, :]) * dist ** (-2 * sigma)
    ).sum()
    assert cov == pytest.approx(target, rel=0.08)


# ---------------------------------------------------------------------------
# coefficient fields
# ---------------------------------------------------------------------------

def test_poisson_zero_intensity_identity():
    box = Box((0, 0), (12, 12))
    f = sample_poisson_inclusions(0.0, 0.0, 0.5, 2.0, box, 0)
    assert np.abs(f.cells - np.eye(2)).max() == 0.0


def test_poisson_single_forced_point():
    box = Box((-6, -6), (12, 12))
    Lam = 7.0
    f = sample_poisson_inclusions(
        0.0, 0.0, 1.0, Lam, box, 0, points1=[(0.0, 0.0)], points2=np.zeros((0, 2))
    )
    for i in range(12):
        for j in range(12):
            center = np.array([box.lo[0] + i + 0.5, box.lo[1] + j + 0.5])
            want = Lam if (center**2).sum() <= 1.0 else 1.0
            assert f.cells[i, j, 0, 0] == want
            assert f.cells[i, j, 0, 1] == 0.0


def test_poisson_void_probability():
    # P[cell center covered] = 1 - exp(-rho * |B_1|) for the rho-cloud
    rho = 0.01
    box = Box((0, 0), (5, 5))
    hits = 0
    trials = 4000
    for s in range(trials):
        f = sample_poisson_inclusions(rho, 0.0, 1.0, 3.0, box, (21, s))
        hits += int(f.cells[2, 2, 0, 0] > 1.0)
    p_hat = hits / trials
    p = 1.0 - np.exp(-rho * np.pi)
    se = np.sqrt(p * (1 - p) / trials)
    assert abs(p_hat - p) < 3 * se + 1e-12


def test_poisson_rejects_bad_ellipticity():
    with pytest.raises(FieldError):
        sample_poisson_inclusions(0.1, 0.1, 0.0, 2.0, Box((0, 0), (4, 4)), 0)


def test_laminate_structure():
    box = Box((0, 0), (9, 9))
    f = sample_laminate([1.0, 4.0], box, 3)
    vals = f.cells[..., 0, 0]
    # constant along the tangential axis, iid in {1,4} across stripes
    assert np.all(vals == vals[:, :1])
    assert set(np.unique(vals)) <= {1.0, 4.0}


def test_checkerboard_values():
    box = Box((0, 0), (27, 27))
    f = sample_checkerboard(1.0, 4.0, box, 5)
    vals = f.cells[..., 0, 0]
    assert set(np.unique(vals)) == {1.0, 4.0}
    assert abs((vals == 1.0).mean() - 0.5) < 0.1


def test_stream_field_symmetric_part_exact():
    box = Box((0, 0), (9, 9))
    f = sample_stream_field(0.7, FgfParams(sigma=0.5, n_max=1, kernel_digits=8), box, 2)
    s = f.sym()
    assert np.abs(s - 0.7 * np.eye(2)).max() == 0.0
    k = f.skew()
    assert np.abs(k[..., 0, 0]).max() == 0.0
    assert np.abs(k[..., 0, 1] + k[..., 1, 0]).max() == 0.0
    assert k[..., 0, 1].std() > 0.0


def test_lognormal_trivial_and_diagonal():
    box = Box((0, 0), (6, 6))
    f0 = sample_lognormal(0.0, FgfParams(sigma=0.5, n_max=1, kernel_digits=8), box, 1)
    assert np.abs(f0.cells - np.eye(2)).max() < 1e-15
    # diagonal g: exp is entrywise on the diagonal
    g = np.zeros((4, 4, 2, 2))
    g[..., 0, 0] = 0.3
    g[..., 1, 1] = -0.8
    e = expm_field(g)
    assert np.abs(e[..., 0, 0] - np.exp(0.3)).max() < 1e-14
    assert np.abs(e[..., 1, 1] - np.exp(-0.8)).max() < 1e-14
    assert np.abs(e[..., 0, 1]).max() == 0.0


def test_expm_against_eigendecomposition_oracle():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(5, 5, 2, 2))

    def expm_oracle(M):
        # independent route: exp through the (generically complex) eigenbasis
        w, V = np.linalg.eig(M)
        return np.real(V @ np.diag(np.exp(w)) @ np.linalg.inv(V))

    E = expm_field(X)
    for i in range(5):
        for j in range(5):
            assert np.abs(E[i, j] - expm_oracle(X[i, j])).max() < 1e-12


def test_lognormal_field_spd():
    box = Box((0, 0), (9, 9))
    f = sample_lognormal(0.4, FgfParams(sigma=0.5, n_max=1, kernel_digits=8), box, 7)
    s = f.sym()
    evs = np.linalg.eigvalsh(s)
    assert evs.min() > 0.0


def test_degenerate_field_raises():
    cells = np.broadcast_to(np.diag([1.0, -0.5]), (3, 3, 2, 2)).copy()
    with pytest.raises(DegenerateField):
        CoefficientField(2, Box((0, 0), (3, 3)), cells)


def test_torus_view_restriction():
    box = Box((0, 0), (12, 12))
    f = sample_checkerboard(1.0, 4.0, box, 6)
    cube = TriadicCube(1, (3, 6), 2)
    v = torus_view(f, cube)
    assert v.box.lo == (3, 6)
    assert np.array_equal(v.cells, f.cells[3:6, 6:9])
    assert not v.cells.flags.writeable
    with pytest.raises(OutOfBox):
        torus_view(f, TriadicCube(1, (11, 0), 2))
    g = constant_field(np.eye(2), box)
    vg = torus_view(g, cube)
    assert np.abs(vg.cells - np.eye(2)).max() == 0.0


def test_dump_load_round_trip(tmp_path):
    box = Box((-2, 3), (6, 5))
    f = sample_checkerboard(1.0, 4.0, box, 9)
    p = tmp_path / "f.cgf"
    dump_field(f, p)
    g = load_field(p)
    assert g.box == f.box
    assert np.array_equal(g.cells, f.cells)
    assert g.meta["generator"] == "checkerboard"
    assert p.read_bytes()[:4] == b"CGF1"
