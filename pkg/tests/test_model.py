import math

import numpy as np
import pytest

from blochsum.model import (
    ContourSpec,
    ModelError,
    PotentialSpec,
    build_basis,
    build_potential,
    sample_brillouin,
)


def test_zero_family_is_shift_only():
    V = build_potential(PotentialSpec("zero", shift=1.0))
    assert V.as_dict() == {(0,): 1.0}


def test_cosine_coefficients():
    V = build_potential(PotentialSpec.cosine(amplitude=2.0, shift=3.0))
    assert V.coefficient(1) == 1.0
    assert V.coefficient(-1) == 1.0
    assert V.coefficient(0) == 3.0
    x = np.linspace(0, 1, 17)
    assert np.allclose(V.evaluate(x), 2 * np.cos(2 * np.pi * x) + 3, atol=1e-14)


def test_truncated_delta_coefficients():
    V = build_potential(PotentialSpec("truncated-delta", strength=1.0, cutoff=64, shift=0.5))
    d = V.as_dict()
    assert len(d) == 129
    assert d[(0,)] == pytest.approx(1.5)
    assert all(c == 1.0 for m, c in d.items() if m != (0,))


def test_missing_conjugate_is_filled():
    V = build_potential(PotentialSpec("trig-polynomial", amplitudes={2: 0.5 + 0.5j}))
    assert V.coefficient(-2) == pytest.approx(0.5 - 0.5j)


@pytest.mark.parametrize(
    "spec",
    [
        PotentialSpec("truncated-delta", strength=0.0, cutoff=4),
        PotentialSpec("truncated-delta", strength=-1.0, cutoff=4),
        PotentialSpec("power-law-decay", decay=1.0, cutoff=8),
        PotentialSpec("power-law-decay", decay=0.5, cutoff=8),
        PotentialSpec("gaussian-decay", width=0.0),
        PotentialSpec("trig-polynomial", amplitudes={1: 1.0, -1: 2.0}),
        PotentialSpec("nonsense"),
    ],
)
def test_invalid_parameters_rejected(spec):
    with pytest.raises(ModelError):
        build_potential(spec)


def test_seeded_families_reproducible():
    a = build_potential(PotentialSpec("random-smooth", width=2.0, seed=7))
    b = build_potential(PotentialSpec("random-smooth", width=2.0, seed=7))
    c = build_potential(PotentialSpec("random-smooth", width=2.0, seed=8))
    assert np.array_equal(a.coeffs, b.coeffs)
    assert not np.array_equal(a.coeffs, c.coeffs)
    p = build_potential(PotentialSpec("power-law-decay", decay=3.0, cutoff=10, seed=3))
    assert np.abs(p.evaluate(np.linspace(0, 1, 33)).imag).max() < 1e-12


def test_basis_order_and_count():
    assert build_basis(1, 1).freqs[:, 0].tolist() == [-1, 0, 1]
    b2 = build_basis(2, 1)
    assert b2.size == 9
    assert tuple(b2.freqs[0]) == (-1, -1)
    assert build_basis(1, 128).size == 257
    assert b2.index((0, 0)) == 4


def test_basis_size_guard():
    with pytest.raises(ModelError):
        build_basis(3, 16)
    with pytest.raises(ModelError):
        build_basis(1, 10, max_size=15)


def test_brillouin_grids():
    g1 = sample_brillouin(1, 1)
    assert g1.points.tolist() == [[0.0]]
    assert g1.weights[0] == pytest.approx(2 * np.pi)
    g4 = sample_brillouin(1, 4)
    assert len(g4) == 4
    assert g4.weights.sum() == pytest.approx(2 * np.pi, abs=1e-12)
    g23 = sample_brillouin(2, 3)
    assert len(g23) == 9
    assert g23.weights.sum() == pytest.approx(4 * np.pi**2, abs=1e-12)
    # symmetric about the origin, so k and -k are both sampled
    pts = np.sort(sample_brillouin(1, 8).points[:, 0])
    assert np.array_equal(pts, -pts[::-1])
    assert np.all((pts >= -np.pi) & (pts < np.pi))


def test_contour_defaults_and_validation():
    c = ContourSpec(2.0, 10.0)
    assert c.delta == pytest.approx(np.pi / 4)
    assert c.x_max == pytest.approx(20.0)
    assert c.tail_bound == pytest.approx(math.exp(-20))
    with pytest.raises(ModelError):
        ContourSpec(2.0, 10.0, delta=1.0)
    with pytest.raises(ModelError):
        ContourSpec(-1.0, 0.0)
    assert ContourSpec(1.0, -40.0).x_max > -1
    assert ContourSpec(1.0, 0.0).covering(50.0).x_max == pytest.approx(70.0)


def test_derivative_coefficients(cosine):
    d2 = cosine.derivative_coeffs(0, 2)
    ref = {-1: -(2 * np.pi) ** 2, 0: 0.0, 1: -(2 * np.pi) ** 2}
    for m, c in zip(cosine.freqs[:, 0], d2):
        assert c == pytest.approx(ref[int(m)])
    assert cosine.sup_derivative(0, 1) == pytest.approx(4 * np.pi)
