import numpy as np
import pytest

from fbcqe.errors import ValidationError
from fbcqe.exact import (
    diagonalize,
    find_crossing,
    find_crossings,
    ground_populations,
    ground_sector,
)
from fbcqe.hamiltonian import TcParams, build_tavis_cummings


def tc(n_sites, g, n_max=4):
    return TcParams(n_sites=n_sites, omega_b=2.0, omega_f=0.5, g_c=g, n_max=n_max)


def test_eigenpairs_are_valid():
    h = build_tavis_cummings(tc(2, 0.7))
    spec = diagonalize(h, k=5)
    hd = h.matrix.toarray()
    assert np.all(np.diff(spec.energies) >= -1e-12)
    for e, s in zip(spec.energies, spec.states):
        assert np.linalg.norm(hd @ s.amplitudes - e * s.amplitudes) <= 1e-9
        assert h.variance(s) <= 1e-10
    gram = np.array(
        [[np.vdot(a.amplitudes, b.amplitudes) for b in spec.states] for a in spec.states]
    )
    assert np.abs(gram - np.eye(5)).max() <= 1e-10


def test_sector_one_analytic_energy():
    g = 1.0
    h = build_tavis_cummings(tc(1, g))
    spec = diagonalize(h, k=3)
    analytic = (2.5 - np.sqrt(2.25 + 4 * g * g)) / 2.0
    assert analytic == pytest.approx(0.0)
    # at g = 1 the sector-0 and sector-1 levels are degenerate at E = 0
    assert spec.energies[0] == pytest.approx(0.0, abs=1e-10)
    assert spec.energies[1] == pytest.approx(0.0, abs=1e-10)
    assert bool(spec.degenerate[0])


def test_uncoupled_ground():
    h = build_tavis_cummings(tc(3, 0.0))
    spec = diagonalize(h, k=1)
    assert spec.ground_energy == pytest.approx(0.0, abs=1e-12)
    assert ground_sector(spec, 3) == 0
    pops = ground_populations(spec, 3)
    assert np.allclose(pops, 1.0, atol=1e-12)


def test_population_symmetry():
    h = build_tavis_cummings(tc(3, 1.1))
    spec = diagonalize(h, k=1)
    pops = ground_populations(spec, 3)
    assert pops.max() - pops.min() <= 1e-10


def test_dense_cap_enforced():
    h = build_tavis_cummings(tc(2, 0.5))
    with pytest.raises(ValidationError):
        diagonalize(h, dense_cap=4)


def test_crossing_analytic_n1():
    g_star = find_crossing(tc(1, 0.0), (0.5, 1.5), tol=1e-8)
    assert g_star == pytest.approx(1.0, abs=1e-6)


def test_crossing_needs_sector_change():
    with pytest.raises(ValidationError):
        find_crossing(tc(1, 0.0), (0.1, 0.3), tol=1e-6)
    with pytest.raises(ValidationError):
        find_crossing(tc(1, 0.0), (0.5, 0.5), tol=1e-6)


def test_find_crossings_n1():
    crossings = find_crossings(tc(1, 0.0), 0.0, 2.0, scan_points=21, tol=1e-7)
    assert len(crossings) == 1
    assert crossings[0].g == pytest.approx(1.0, abs=1e-6)
    assert (crossings[0].sector_below, crossings[0].sector_above) == (0, 1)


def test_find_crossings_empty_range():
    assert find_crossings(tc(1, 0.0), 0.5, 0.5, scan_points=5) == []


def test_truncation_self_consistency():
    for g in (0.5, 1.2, 2.0):
        e4 = diagonalize(build_tavis_cummings(tc(3, g, n_max=4)), k=1).ground_energy
        e6 = diagonalize(build_tavis_cummings(tc(3, g, n_max=6)), k=1).ground_energy
        assert abs(e4 - e6) <= 1e-9


def test_ground_energy_nonincreasing_in_g():
    energies = [
        diagonalize(build_tavis_cummings(tc(3, g)), k=1).ground_energy
        for g in np.linspace(0.0, 2.0, 11)
    ]
    assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))


def test_population_staircase():
    # three discontinuous drops at the sector changes; plateau levels
    # decrease while populations drift gently upward inside each plateau
    pops, sectors = [], []
    for g in np.linspace(0.0, 2.0, 21):
        spec = diagonalize(build_tavis_cummings(tc(3, g)), k=1)
        pops.append(float(ground_populations(spec, 3)[0]))
        sectors.append(ground_sector(spec, 3))
    jumps = [i for i in range(1, 21) if sectors[i] != sectors[i - 1]]
    assert len(jumps) == 3
    for i in jumps:
        assert pops[i] < pops[i - 1] - 0.05
    plateau_means = []
    for m in sorted(set(sectors)):
        plateau_means.append(np.mean([p for p, s in zip(pops, sectors) if s == m]))
    assert all(b < a for a, b in zip(plateau_means, plateau_means[1:]))
