import math

import numpy as np
import pytest

from core import (
    DegenerateDataError,
    DimensionMismatchError,
    Metric,
    ParameterError,
    PointSequence,
    Provenance,
    RegionSpec,
    annulus_volume,
)
from generators import GeneratorConfig, generate, lenz_cross_distance
from incidence import (
    _cells_per_axis,
    count_annulus,
    count_annulus_pairs,
    count_annulus_pairs_grid,
    count_slab,
    count_slab_pairs,
    difference_set_count,
    discrete_energy,
    exact_distance_count,
    slab_main_term,
    slab_main_term_quadrature,
    support_count,
)


def _points(rows):
    return PointSequence(np.asarray(rows, dtype=float), Provenance('test'))


def _configs(d, count):
    rng = np.random.default_rng(1000 + d)
    families = ['iid', 'halton', 'kronecker', 'lattice', 'clustered']
    for i in range(count):
        family = families[i % len(families)]
        params = {'side': int(rng.integers(3, 12))} if family == 'lattice' else {}
        if family == 'clustered':
            params = {'clusters': 5, 'radius': 0.05}
        N = int(rng.integers(20, 2001))
        a = float(rng.uniform(0.01, 0.3))
        b = float(rng.uniform(a + 1e-3, 0.49))
        yield generate(GeneratorConfig(family, d, seed=i, params=params), N), a, b, N


@pytest.mark.parametrize('d', [2, 3, 4])
def test_grid_agrees_with_brute_force(d):
    for seq, a, b, N in _configs(d, 100):
        assert count_annulus_pairs_grid(seq, a, b, N) == count_annulus_pairs(seq, a, b, N)


def test_grid_agrees_on_exact_ties():
    # lattice distances land exactly on the annulus endpoints
    seq = generate(GeneratorConfig('lattice', 2, params={'side': 10}), 100)
    for a, b in ((0.1, 0.2), (0.2, math.sqrt(0.08)), (0.3, 0.4)):
        assert count_annulus_pairs_grid(seq, a, b, 100) == count_annulus_pairs(seq, a, b, 100)


def test_grid_with_coarse_cells():
    seq = generate(GeneratorConfig('iid', 2, seed=3), 700)
    brute = count_annulus_pairs(seq, 0.05, 0.3, 700)
    for G in (1, 2, 5, 17):
        assert count_annulus_pairs_grid(seq, 0.05, 0.3, 700, cells_per_axis=G) == brute


@pytest.mark.parametrize('d, a, b, expected', [
    (2, 0.25, 0.30, 20),
    (2, 0.01, 0.49, 2),
    (2, 0.2, 0.2001, 64),
    (3, 0.25, 0.30, 16),
])
def test_grid_cells_follow_shell_width(d, a, b, expected):
    assert _cells_per_axis(d, a, b) == expected


def test_grid_agrees_on_wide_shell():
    seq = generate(GeneratorConfig('iid', 3, seed=21), 900)
    assert count_annulus_pairs_grid(seq, 0.01, 0.49, 900) == count_annulus_pairs(seq, 0.01, 0.49, 900)


def test_small_annulus_examples():
    seq = _points([[0.0, 0.0], [0.3, 0.0]])
    assert count_annulus_pairs(seq, 0.25, 0.35, 2) == 2
    assert count_annulus_pairs_grid(seq, 0.25, 0.35, 2) == 2
    wrapped = _points([[0.05, 0.5], [0.95, 0.5]])
    assert count_annulus_pairs_grid(wrapped, 0.05, 0.15, 2) == 2
    assert count_annulus_pairs(wrapped, 0.05, 0.15, 2, metric=Metric.EUCLIDEAN) == 0


@pytest.mark.parametrize('a, b', [(0.2, 0.5), (0.0, 0.2), (0.3, 0.2)])
def test_annulus_parameter_errors(a, b):
    seq = generate(GeneratorConfig('iid', 2), 10)
    with pytest.raises(ParameterError):
        count_annulus_pairs_grid(seq, a, b, 10)


def test_annulus_main_term():
    a, b, N = 0.25, 0.30, 4096
    vol = annulus_volume(a, b, 2)
    close = 0
    for seed in range(10):
        seq = generate(GeneratorConfig('iid', 2, seed=seed), N)
        if abs(count_annulus_pairs_grid(seq, a, b, N) / N ** 2 - vol) <= 0.005:
            close += 1
    assert close >= 9


def test_counts_independent_of_threads():
    seq = generate(GeneratorConfig('halton', 3), 1500)
    assert count_annulus_pairs_grid(seq, 0.1, 0.3, 1500, threads=4) == \
        count_annulus_pairs_grid(seq, 0.1, 0.3, 1500, threads=1)
    assert count_annulus_pairs(seq, 0.1, 0.3, 1500, threads=3) == \
        count_annulus_pairs(seq, 0.1, 0.3, 1500, threads=1)


def test_annulus_count_is_symmetric_and_monotone():
    seq = generate(GeneratorConfig('kronecker', 3), 900)
    count = count_annulus_pairs_grid(seq, 0.15, 0.3, 900)
    assert count_annulus_pairs_grid(seq.reversed(), 0.15, 0.3, 900) == count
    assert count_annulus_pairs_grid(seq, 0.2, 0.25, 900) <= count <= \
        count_annulus_pairs_grid(seq, 0.1, 0.35, 900)


def test_annulus_counts_add_across_seam():
    seq = generate(GeneratorConfig('iid', 2, seed=11), 600)
    a, b, c = 0.05, 0.2, 0.4
    above = float(np.nextafter(b, 1.0))
    left = count_annulus_pairs(seq, a, b, 600)
    right = count_annulus_pairs(seq, above, c, 600)
    assert left + right == count_annulus_pairs(seq, a, c, 600)


def test_random_points_have_no_exact_distances():
    seq = generate(GeneratorConfig('iid', 2, seed=5), 400)
    assert exact_distance_count(seq, 0.2, 400) == 0


@pytest.mark.parametrize('m, expected', [(3, 18), (5, 50), (6, 72), (7, 98), (8, 160)])
def test_lenz_exact_distances(m, expected):
    seq = generate(GeneratorConfig('lenz', 4, params={'points_per_circle': m}), 2 * m)
    t = lenz_cross_distance(0.25)
    assert exact_distance_count(seq, t, 2 * m) == expected
    assert exact_distance_count(seq, t, 2 * m, metric=Metric.EUCLIDEAN) == expected


def test_exact_distance_rejects():
    seq = generate(GeneratorConfig('iid', 2), 10)
    with pytest.raises(ParameterError):
        exact_distance_count(seq, 0.005, 10)
    with pytest.raises(ParameterError):
        exact_distance_count(seq, 0.2, 10, eta=-1e-9)


def test_single_slab_pair():
    v = _points([[0.5, 0.5]])
    assert count_slab_pairs(v, v, 0.4, 0.6, 1) == pytest.approx(1.0)
    assert count_slab_pairs(v, v, 0.6, 0.7, 1) == 0.0


def test_slab_weights_vanish_off_support():
    v = _points([[0.05, 0.5], [0.5, 0.5]])
    w = _points([[0.5, 0.5], [0.5, 0.95]])
    assert count_slab_pairs(v, w, 0.01, 2.0, 2) == pytest.approx(1.0)


def test_slab_errors():
    v = generate(GeneratorConfig('iid', 2), 10)
    with pytest.raises(ParameterError):
        count_slab_pairs(v, v, 0.005, 0.5, 10)
    with pytest.raises(DimensionMismatchError):
        count_slab_pairs(v, generate(GeneratorConfig('iid', 3), 10), 0.1, 0.5, 10)


def test_slab_count_independent_of_threads():
    v = generate(GeneratorConfig('iid', 2, seed=1), 3000)
    w = generate(GeneratorConfig('iid', 2, seed=2), 3000)
    assert count_slab_pairs(v, w, 0.4, 0.6, 3000, threads=4) == count_slab_pairs(v, w, 0.4, 0.6, 3000)


def test_slab_main_term_degenerate():
    assert slab_main_term(0.5, 0.5, 2) == (0.0, 0.0)
    assert slab_main_term(2.0, 3.0, 2) == (0.0, 0.0)
    with pytest.raises(ParameterError):
        slab_main_term(0.2, 0.5, 2, samples=100)


def test_slab_main_term_matches_quadrature():
    value, stderr = slab_main_term(0.5, 0.7, 2, samples=200_000, seed=4)
    assert stderr > 0
    assert value == pytest.approx(slab_main_term_quadrature(0.5, 0.7), abs=4 * stderr + 1e-4)


def test_slab_main_term_is_reproducible():
    assert slab_main_term(0.3, 0.6, 3, samples=50_000, seed=9) == \
        slab_main_term.__wrapped__(0.3, 0.6, 3, samples=50_000, seed=9)


def test_energy_of_two_points():
    seq = _points([[0.0, 0.0], [0.5, 0.0]])
    assert discrete_energy(seq, 1.0, 2) == pytest.approx(1.0)


def test_energy_errors():
    seq = _points([[0.1, 0.1], [0.1, 0.1]])
    with pytest.raises(DegenerateDataError):
        discrete_energy(seq, 1.0, 2)
    with pytest.raises(ParameterError):
        discrete_energy(seq, 2.0, 2)


def test_energy_skips_coincident_pairs(caplog):
    seq = _points([[0.0, 0.0], [0.0, 0.0], [0.5, 0.0]])
    assert discrete_energy(seq, 1.0, 3) == pytest.approx(8.0 / 9.0)
    assert 'coincident' in caplog.text


def test_energy_is_invariant_under_permutation_and_translation():
    seq = generate(GeneratorConfig('halton', 2), 300)
    energy = discrete_energy(seq, 1.0, 300)
    shuffled = np.random.default_rng(3).permutation(seq.coords)
    assert discrete_energy(_points(shuffled), 1.0, 300) == pytest.approx(energy, rel=1e-12)
    shifted = _points(seq.coords + np.array([0.37, 0.81]))
    assert discrete_energy(shifted, 1.0, 300) == pytest.approx(energy, rel=1e-9)


def test_energy_grows_with_exponent():
    seq = _points(np.column_stack([np.linspace(0.1, 0.4, 20), np.full(20, 0.5)]))
    assert discrete_energy(seq, 1.1, 20) > discrete_energy(seq, 1.0, 20)


def test_energy_of_random_points():
    N = 2048
    seq = generate(GeneratorConfig('iid', 2, seed=17), N)
    expected = 4.0 * math.log(1.0 + math.sqrt(2.0)) * (N - 1) / N
    assert discrete_energy(seq, 1.0, N, threads=2) == pytest.approx(expected, rel=0.05)


def test_support_counts():
    assert support_count(_points(np.full((40, 2), 0.3)), 40) == 1
    lattice = generate(GeneratorConfig('lattice', 1, params={'side': 10}), 35)
    assert support_count(lattice, 35) == 10
    iid = generate(GeneratorConfig('iid', 3, seed=2), 500)
    assert support_count(iid, 500) == 500


def test_support_merges_wraparound_neighbours():
    seq = _points([[0.0], [1.0 - 4e-10], [0.5]])
    assert support_count(seq, 3) == 2


def test_support_keeps_adjacent_grid_classes_apart():
    side = 4
    ticks = np.arange(side) / side
    lattice = _points(np.array(np.meshgrid(ticks, ticks)).reshape(2, -1).T)
    assert support_count(lattice, side ** 2, quantum=0.25) == 16
    fine = _points((np.arange(1000) * 1e-6)[:, None])
    assert support_count(fine, 1000, quantum=1e-6) == 1000
    assert support_count(_points([[0.0], [1.4e-9]]), 2) == 2


def test_difference_set_counts():
    iid = generate(GeneratorConfig('iid', 2, seed=6), 512)
    assert difference_set_count(iid, 512) == 512 ** 2 - 512 + 1
    kron = generate(GeneratorConfig('kronecker', 1), 512)
    assert difference_set_count(kron, 512) == 1023
    lattice = generate(GeneratorConfig('lattice', 2, params={'side': 6}), 36)
    assert difference_set_count(lattice, 36) == 36


def test_annulus_report():
    seq = generate(GeneratorConfig('iid', 2, seed=1), 800)
    region = RegionSpec.parse('annulus:0.1:0.2')
    report = count_annulus(seq, region, 800)
    assert report.count == count_annulus_pairs(seq, 0.1, 0.2, 800)
    assert report.main_term == pytest.approx(800 ** 2 * annulus_volume(0.1, 0.2, 2))
    record = report.as_record()
    assert record['remainder'] == report.count - report.main_term
    assert record['abs_remainder'] == abs(record['remainder'])
    assert count_annulus(seq, region, 800, method='brute').count == report.count
    with pytest.raises(ParameterError):
        count_annulus(seq, region, 800, method='fft')
    with pytest.raises(ParameterError):
        count_annulus(seq, RegionSpec.parse('slab:0.2:0.4'), 800)


def test_slab_report():
    v = generate(GeneratorConfig('iid', 2, seed=1), 200)
    w = generate(GeneratorConfig('iid', 2, seed=2), 200)
    report = count_slab(v, w, RegionSpec.parse('slab:0.5:0.7'), 200, samples=20_000)
    assert report.main_term_stderr > 0
    assert report.main_term == pytest.approx(200 ** 2 * slab_main_term(0.5, 0.7, 2, 20_000, 0)[0])
