import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kerrcat import fockspace as fs
from kerrcat import wigner as wg


def random_density(dims, seed):
    rng = np.random.default_rng(seed)
    d = int(np.prod(dims))
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = m @ m.conj().T
    rho /= np.trace(rho).real
    return fs.QuantumState(dims, rho, kind="density", check=False)


def bell_cat_like(alpha=1.0, n=12):
    even = fs.coherent_cat(alpha, "even", n)
    odd = fs.coherent_cat(alpha, "odd", n)
    return fs.superposition(
        [fs.tensor(even, odd), fs.tensor(odd, even)], [1.0, 1.0]
    )


# --- closed-form values ------------------------------------------------------

def test_vacuum_values():
    v = fs.fock(0, 12)
    assert wg.one_mode_wigner(v, 0.0) == pytest.approx(2 / np.pi, abs=1e-12)
    assert wg.one_mode_wigner(v, 1.0) == pytest.approx(
        (2 / np.pi) * np.exp(-2), abs=1e-12
    )


@settings(max_examples=25, deadline=None)
@given(st.floats(-1.2, 1.2), st.floats(-1.2, 1.2))
def test_coherent_state_gaussian(re, im):
    # W of a coherent state |b> is a Gaussian centred on b
    b = 0.7 - 0.3j
    a = re + 1j * im
    got = wg.one_mode_wigner(fs.coherent(b, 18), a)
    want = (2 / np.pi) * np.exp(-2 * abs(a - b) ** 2)
    assert got == pytest.approx(want, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.floats(-1.6, 1.6), st.floats(-1.6, 1.6), st.integers(0, 2**31 - 1))
def test_displaced_parity_matches_closed_form(re, im, seed):
    # two independent routes to <T(alpha)>: explicit padded D Pi D^dag
    # versus the closed Laguerre form
    rho = random_density((20,), seed)
    a = re + 1j * im
    lhs = rho.expect(fs.displaced_parity(a, 20)).real
    rhs = rho.expect(fs.cahill_glauber_T(a, 20)).real
    assert abs(lhs - rhs) < 1e-8


def test_one_mode_normalization():
    # integral of W over phase space is 1; Riemann sum on [-4,4]^2
    cat = fs.coherent_cat(1.5, "even", 12)
    step = 0.05
    xs = np.arange(-4.0, 4.0 + step / 2, step)
    total = 0.0
    for x in xs:
        for y in xs:
            total += wg.one_mode_wigner(cat, x + 1j * y)
    assert abs(total * step**2 - 1.0) < 1e-2


def test_two_mode_origin_equals_joint_parity():
    rho = random_density((6, 6), 7)
    pp = fs.tensor(fs.parity(6), fs.parity(6))
    want = (4 / np.pi**2) * rho.expect(pp).real
    assert abs(wg.two_mode_wigner(rho, 0, 0) - want) < 1e-10


def test_wigner_mode_count_validation():
    two = bell_cat_like()
    one = fs.fock(0, 5)
    with pytest.raises(ValueError):
        wg.one_mode_wigner(two, 0.1)
    with pytest.raises(ValueError):
        wg.two_mode_wigner(one, 0.1, 0.1)


# --- joint parity from outcome probabilities ---------------------------------

def test_joint_parity_from_probs():
    assert wg.joint_parity_from_probs(0.4, 0.1, 0.2, 0.3) == pytest.approx(0.4)
    assert wg.joint_parity_from_probs(1.0, 0.0, 0.0, 0.0) == 1.0
    with pytest.raises(ValueError):
        wg.joint_parity_from_probs(0.4, 0.1, 0.2, 0.2)
    with pytest.raises(ValueError):
        wg.joint_parity_from_probs(0.5, 0.6, -0.3, 0.2)


# --- grids --------------------------------------------------------------------

def test_grid_builders_and_validation():
    g = wg.rere_grid((1j * 0.82, -1j * 1.32))
    assert g.shape == (17, 17)
    assert g.axis1[0] == -1.6 and g.axis1[-1] == 1.6
    assert np.allclose(np.diff(g.axis1), 0.2)
    with pytest.raises(ValueError):
        wg.rere_grid((0.1, 0.0))
    with pytest.raises(ValueError):
        wg.imim_grid((1j * 0.1, 0.0))
    with pytest.raises(ValueError):
        wg.one_mode_grid(2)
    with pytest.raises(ValueError):
        wg.WignerGrid("XY", np.arange(3.0), np.arange(3.0))


def test_pixel_alphas():
    g = wg.rere_grid((1j * 0.5, -1j * 0.3))
    a1, a2 = g.pixel_alphas(0, 16)
    assert a1 == -1.6 + 0.5j and a2 == 1.6 - 0.3j
    gi = wg.imim_grid((0.2, -0.4))
    b1, b2 = gi.pixel_alphas(8, 8)
    assert b1 == 0.2 + 0.0j and b2 == -0.4 + 0.0j
    g1 = wg.one_mode_grid(1)
    c1, c2 = g1.pixel_alphas(0, 0)
    assert c1 == 0j and c2 == -1.6 - 1.6j


def test_exact_grid_matches_pointwise():
    psi = bell_cat_like()
    m = wg.measure_grid(psi, wg.rere_grid((0j, 1j * 0.82)))
    for i, j in [(0, 0), (3, 11), (8, 8), (16, 2)]:
        a1, a2 = m.pixel_alphas(i, j)
        assert m.values[i, j] == pytest.approx(
            wg.two_mode_wigner(psi, a1, a2), abs=1e-12
        )


def test_exact_one_mode_grid_matches_reduced():
    psi = bell_cat_like()
    m = wg.measure_grid(psi, wg.one_mode_grid(0))
    red = psi.reduced(0)
    for i, j in [(0, 0), (4, 9), (16, 16)]:
        a = m.axis1[i] + 1j * m.axis2[j]
        assert m.values[i, j] == pytest.approx(
            wg.one_mode_wigner(red, a), abs=1e-12
        )


def test_rere_zero_offset_point_symmetry():
    # joint-parity eigenstates have W(a1,a2) = W(-a1,-a2)
    psi = bell_cat_like()
    m = wg.measure_grid(psi, wg.rere_grid((0j, 0j)))
    assert np.abs(m.values - m.values[::-1, ::-1]).max() < 1e-8


def test_values_within_parity_bound():
    psi = bell_cat_like()
    m2 = wg.measure_grid(psi, wg.rere_grid())
    assert np.abs(m2.values).max() <= wg.TWO_MODE_NORM * (1 + 1e-12)
    m1 = wg.measure_grid(psi, wg.one_mode_grid(1))
    assert np.abs(m1.values).max() <= wg.ONE_MODE_NORM * (1 + 1e-12)
    s = wg.measure_grid(psi, wg.rere_grid(), shots=200, seed=0)
    assert np.abs(s.values).max() <= wg.TWO_MODE_NORM * (1 + 1e-12)


# --- sampled measurement -------------------------------------------------------

def test_sampling_deterministic_by_seed():
    psi = bell_cat_like()
    g = wg.rere_grid()
    s1 = wg.measure_grid(psi, g, shots=400, seed=11)
    s2 = wg.measure_grid(psi, g, shots=400, seed=11)
    s3 = wg.measure_grid(psi, g, shots=400, seed=12)
    assert np.array_equal(s1.counts, s2.counts)
    assert not np.array_equal(s1.counts, s3.counts)
    assert s1.counts.sum(axis=0).min() == 400
    assert s1.counts.sum(axis=0).max() == 400


def test_sampling_shot_validation():
    psi = bell_cat_like()
    g = wg.rere_grid()
    for bad in (0, -5):
        with pytest.raises(ValueError):
            wg.measure_grid(psi, g, shots=bad, seed=1)


def test_sampling_three_sigma_agreement():
    psi = bell_cat_like()
    g = wg.rere_grid()
    exact = wg.measure_grid(psi, g)
    shots = 100_000
    s = wg.measure_grid(psi, g, shots=shots, seed=5)
    # parity estimator std is at most 1/sqrt(shots) per pixel
    bound = 3 * wg.TWO_MODE_NORM / np.sqrt(shots)
    assert np.abs(s.values - exact.values).max() < bound


def test_sampled_one_mode_marginal():
    psi = bell_cat_like()
    for mode in (0, 1):
        g = wg.one_mode_grid(mode)
        exact = wg.measure_grid(psi, g)
        s = wg.measure_grid(psi, g, shots=100_000, seed=21 + mode)
        bound = 3 * wg.ONE_MODE_NORM / np.sqrt(100_000)
        assert np.abs(s.values - exact.values).max() < bound


def test_confusion_matrix_damps_parity():
    # symmetric per-transmon flips scale the joint parity by
    # (1 - 2 e1)(1 - 2 e2)
    psi = bell_cat_like()
    g = wg.rere_grid()
    exact = wg.measure_grid(psi, g)
    cm = (
        np.array([[0.95, 0.05], [0.05, 0.95]]),
        np.array([[0.90, 0.10], [0.10, 0.90]]),
    )
    shots = 200_000
    s = wg.measure_grid(psi, g, shots=shots, seed=9, confusion=cm)
    pred = exact.values * (0.9 * 0.8)
    assert np.abs(s.values - pred).max() < 3 * wg.TWO_MODE_NORM / np.sqrt(shots)


def test_confusion_matrix_validation():
    psi = bell_cat_like()
    g = wg.rere_grid()
    bad_sum = (np.array([[0.9, 0.2], [0.1, 0.9]]), np.eye(2))
    with pytest.raises(ValueError):
        wg.measure_grid(psi, g, shots=10, seed=0, confusion=bad_sum)
    neg = (np.array([[1.1, 0.0], [-0.1, 1.0]]), np.eye(2))
    with pytest.raises(ValueError):
        wg.measure_grid(psi, g, shots=10, seed=0, confusion=neg)


# --- dataset ------------------------------------------------------------------

def test_dataset_layout():
    psi = bell_cat_like(n=8)
    grids = wg.tomography_dataset(psi)
    assert len(grids) == 12
    assert [g.kind for g in grids] == ["ReRe"] * 5 + ["ImIm"] * 5 + ["ReIm"] * 2
    for g, (o1, o2) in zip(grids[:5], wg.DATASET_OFFSETS):
        assert g.offset1 == 1j * o1 and g.offset2 == 1j * o2
    for g, (o1, o2) in zip(grids[5:10], wg.DATASET_OFFSETS):
        assert g.offset1 == complex(o1) and g.offset2 == complex(o2)
    assert grids[10].mode == 0 and grids[11].mode == 1
    for g in grids:
        assert g.shape == (17, 17)
        assert g.values.size == 289


def test_dataset_seed_reproducible():
    psi = bell_cat_like(n=8)
    a = wg.tomography_dataset(psi, shots=150, seed=42)
    b = wg.tomography_dataset(psi, shots=150, seed=42)
    for x, y in zip(a, b):
        assert np.array_equal(x.counts, y.counts)


def test_csv_and_manifest_roundtrip(tmp_path):
    psi = bell_cat_like(n=8)
    grids = wg.tomography_dataset(psi, shots=150, seed=42)
    man = wg.write_dataset(grids, tmp_path, meta={"shots": 150, "seed": 42})
    text = man.read_text()
    back = wg.load_dataset(man)
    assert len(back) == len(grids)
    for x, y in zip(grids, back):
        assert x.kind == y.kind and x.mode == y.mode
        assert x.offset1 == y.offset1 and x.offset2 == y.offset2
        assert np.allclose(x.values, y.values, atol=1e-10)
        assert np.array_equal(x.counts, y.counts)
        assert np.allclose(x.axis1, y.axis1) and np.allclose(x.axis2, y.axis2)
    # rewriting the same dataset is byte identical
    man2 = wg.write_dataset(grids, tmp_path, meta={"shots": 150, "seed": 42})
    assert man2.read_text() == text


def test_csv_header_and_exact_mode(tmp_path):
    psi = bell_cat_like(n=8)
    exact = wg.measure_grid(psi, wg.rere_grid())
    exact.to_csv(tmp_path / "w.csv")
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert lines[0] == "re_a1,im_a1,re_a2,im_a2,value"
    assert len(lines) == 1 + 289
    sampled = wg.measure_grid(psi, wg.rere_grid(), shots=25, seed=1)
    sampled.to_csv(tmp_path / "s.csv")
    head = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert head == "re_a1,im_a1,re_a2,im_a2,value,shots,n_ee,n_eg,n_ge,n_gg"
    with pytest.raises(ValueError):
        wg.rere_grid().to_csv(tmp_path / "x.csv")
