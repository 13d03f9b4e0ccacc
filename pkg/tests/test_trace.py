import math

import numpy as np
import pytest

from blochsum.model import ContourSpec, PotentialSpec, build_basis, build_potential, sample_brillouin
from blochsum.trace import (
    ConfluenceError,
    FermiDirac,
    compare_traces,
    contour_integral_quadrature,
    divided_difference,
    fd_divided_difference,
    residue_value,
    trace_oracle_direct,
    trace_per_unit_volume,
)


def test_single_node_value():
    assert divided_difference(FermiDirac(1.0, 0.0), [1.0]) == pytest.approx(0.2689414, abs=1e-7)


def test_confluent_pair_is_derivative():
    val = divided_difference(FermiDirac(1.0, 0.0), [1.0, 1.0])
    assert val == pytest.approx(-math.e / (1 + math.e) ** 2, rel=1e-12)
    assert val == pytest.approx(-0.1966119, abs=1e-7)


def test_permutation_symmetry():
    fd = FermiDirac(1.0, 0.0)
    assert divided_difference(fd, [1, 2, 5]) == pytest.approx(divided_difference(fd, [5, 1, 2]), abs=1e-12)


def test_confluent_limit_is_continuous():
    fd = FermiDirac(2.0, 3.0)
    a = divided_difference(fd, [2.0, 2.0, 4.0])
    b = divided_difference(fd, [2.0, 2.0 + 1e-6, 4.0])
    assert a == pytest.approx(b, abs=1e-6)


def test_polynomial_divided_difference():
    # cubic: third divided difference is the leading coefficient
    f = lambda x: 2 * x**3 - x + 4
    assert divided_difference(f, [0.5, 1.5, 3.0, 7.0]) == pytest.approx(2.0, rel=1e-12)


def test_derivative_cap():
    with pytest.raises(ConfluenceError):
        fd_divided_difference([1.0] * 10, FermiDirac(1.0, 0.0))
    assert np.isfinite(fd_divided_difference([1.0] * 9, FermiDirac(1.0, 0.0)))


def test_fermi_dirac_derivatives_match_finite_differences():
    fd = FermiDirac(1.5, 2.0)
    h = 1e-3
    for x in (-1.0, 1.9, 2.5, 6.0):
        for n in (1, 2, 3):
            num = (fd.derivative(x + h, n - 1) - fd.derivative(x - h, n - 1)) / (2 * h)
            assert fd.derivative(x, n) == pytest.approx(num, rel=1e-5, abs=1e-10)


def test_far_from_mu_no_overflow():
    fd = FermiDirac(50.0, 0.0)
    assert fd(100.0) == 0.0 or fd(100.0) < 1e-300
    assert fd(-100.0) == 1.0
    assert fd_divided_difference([-30.0, -20.0], fd) == pytest.approx(0.0, abs=1e-300)


def test_quadrature_single_node():
    val = contour_integral_quadrature(ContourSpec(1.0, 0.0), [1.0])
    assert val.imag == pytest.approx(-2 * math.pi * 0.2689414, abs=1e-6)
    assert abs(val.real) < 1e-12


def test_quadrature_two_nodes():
    c = ContourSpec(1.0, 0.0)
    val = contour_integral_quadrature(c, [1.0, 2.0])
    assert val == pytest.approx(2j * math.pi * fd_divided_difference([1.0, 2.0], FermiDirac(1.0, 0.0)), abs=1e-8)


def test_empty_band_limit():
    assert abs(contour_integral_quadrature(ContourSpec(1.0, -40.0), [1.0, 3.0])) < 1e-12


def test_nodes_outside_rejected():
    with pytest.raises(ValueError):
        contour_integral_quadrature(ContourSpec(1.0, 0.0), [-2.0])
    with pytest.raises(ValueError):
        contour_integral_quadrature(ContourSpec(1.0, 0.0), [50.0])


def test_tail_warning():
    with pytest.warns(RuntimeWarning):
        contour_integral_quadrature(ContourSpec(1.0, 0.0, x_max=5.0), [1.0], tol=1e-12)


def test_residue_identity_confluent_pair():
    c = ContourSpec(2.0, 10.0).covering(30.0)
    nodes = [4.0, 4.0, 12.5]
    assert contour_integral_quadrature(c, nodes) == pytest.approx(residue_value(c, nodes), abs=1e-8)


GRID16 = sample_brillouin(1, 16)


@pytest.fixture(scope="module")
def cos_setup():
    V = build_potential(PotentialSpec.cosine())
    return V, build_basis(1, 16)


def test_band_sum_vs_oracle(cos_setup, tmp_path):
    V, b = cos_setup
    c = ContourSpec(2.0, 10.0)
    bs = trace_per_unit_volume(V, b, c, (0, 0), 12, GRID16)
    orc = trace_oracle_direct(V, b, c, (0, 0), GRID16)
    cmp = compare_traces(bs, orc)
    assert cmp["relative_difference"] <= 1e-6
    # (-1)^n 2 pi i times a real band sum: purely imaginary
    assert abs(bs.value.real) <= 1e-12 * abs(bs.value)
    bs.to_csv(tmp_path / "t.csv")
    bs.to_json(tmp_path / "t.json")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "k1,re,im,abs_sum"


def test_n1_vanishes_on_symmetric_grid(cos_setup):
    V, b = cos_setup
    r = trace_per_unit_volume(V, b, ContourSpec(2.0, 10.0), (0,), 12, sample_brillouin(1, 64))
    assert abs(r.value) <= 1e-8
    o = trace_oracle_direct(V, b, ContourSpec(2.0, 10.0), (0,), sample_brillouin(1, 16))
    assert abs(o.value) <= 1e-8


def test_free_empty_band():
    V = build_potential(PotentialSpec("zero", shift=1.0))
    b = build_basis(1, 8)
    beta = 2.0
    c = ContourSpec(beta, 1.0 - 10 / beta - 20.0)
    r = trace_per_unit_volume(V, b, c, (0, 0), 8, sample_brillouin(1, 8))
    assert abs(r.value) <= 1e-12


def test_truncation_sweep(cos_setup):
    # the tail is exp(-beta (x_max - mu)): ~2e-9 at 20/beta, ~1e-13 at 30/beta
    V, b = cos_setup
    grid = sample_brillouin(1, 4)
    vals = {m: trace_oracle_direct(V, b, ContourSpec(2.0, 10.0, x_max=10.0 + m / 2.0), (0, 0), grid).value for m in (20, 30, 40)}
    scale = abs(vals[40])
    assert abs(vals[20] - vals[30]) / scale <= 10 * math.exp(-20)
    assert abs(vals[30] - vals[40]) / scale <= 1e-10


def test_cyclic_invariance_2d():
    V = build_potential(PotentialSpec("trig-polynomial", dimension=2, shift=3.0, amplitudes={(1, 0): 1.0, (0, 1): 0.5, (1, 1): 0.3}))
    b = build_basis(2, 3)
    grid = sample_brillouin(2, 2, offset=0.1)
    c = ContourSpec(2.0, 10.0)
    a = trace_per_unit_volume(V, b, c, (0, 1, 1), 10, grid).value
    r = trace_per_unit_volume(V, b, c, (1, 1, 0), 10, grid).value
    assert abs(a - r) <= 1e-10 * max(abs(a), 1e-300)


def test_band_sum_matches_reversed_oracle_2d():
    V = build_potential(PotentialSpec("random-smooth", dimension=2, width=1.0, cutoff=2, seed=5, shift=4.0))
    b = build_basis(2, 3)
    grid = sample_brillouin(2, 2, offset=0.2)
    c = ContourSpec(1.0, 12.0)
    J = b.size // 2
    bs = trace_per_unit_volume(V, b, c, (0, 1, 0), J, grid)
    orc = trace_oracle_direct(V, b, c, (0, 1, 0)[::-1], grid)
    assert compare_traces(bs, orc)["relative_difference"] <= 1e-6


def test_abs_sum_cauchy_smooth(cos_setup):
    V, b = cos_setup
    c = ContourSpec(2.0, 10.0)
    grid = sample_brillouin(1, 4)
    A = [trace_per_unit_volume(V, b, c, (0, 0), J, grid).abs_sums.max() for J in (8, 12, 16)]
    assert A[2] - A[1] <= A[1] - A[0] + 1e-15
    assert (A[2] - A[1]) / A[2] <= 1e-6


def test_executor_is_deterministic(cos_setup):
    from concurrent.futures import ThreadPoolExecutor

    V, b = cos_setup
    c = ContourSpec(2.0, 10.0)
    grid = sample_brillouin(1, 8)
    serial = trace_per_unit_volume(V, b, c, (0, 0), 8, grid)
    with ThreadPoolExecutor(4) as pool:
        par = trace_per_unit_volume(V, b, c, (0, 0), 8, grid, executor=pool)
    assert serial.value == par.value
    assert np.array_equal(serial.per_k, par.per_k)


def test_parameter_checks(cos_setup):
    V, b = cos_setup
    with pytest.raises(ValueError):
        trace_per_unit_volume(V, b, ContourSpec(2.0, 10.0), (0, 1), 8, GRID16)
    with pytest.raises(ValueError):
        trace_per_unit_volume(V, b, ContourSpec(2.0, 10.0), (0, 0), 40, GRID16)
    with pytest.raises(ValueError):
        trace_oracle_direct(V, build_basis(1, 300), ContourSpec(2.0, 10.0), (0,), GRID16)
