import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from meanquant.errors import BatchTooSmall, ConfigError, DimensionMismatch, EmptySample, EmptySupport
from meanquant.measure import MeasureSample, make_measure, mean_measure
from meanquant.quantization import (
    Codebook,
    QuantizeConfig,
    auto_iterations,
    batch_quantize,
    cell_stats,
    distortion,
    kmeanspp_init,
    lloyd_step,
    make_codebook,
    minibatch_quantize,
    minibatch_step,
    project_to_ball,
    quantize,
    voronoi_assign,
)
from meanquant.verify import brute_force_kmeans

from conftest import dirac_sample, measures, random_measure


def line(xs, w=None, radius=20.0):
    xs = np.asarray(xs, dtype=float)
    return make_measure(xs[:, None], np.ones(len(xs)) if w is None else w, radius)


def cb1(xs, radius=20.0):
    return make_codebook(np.asarray(xs, dtype=float)[:, None], radius)


# -- Voronoi / distortion ------------------------------------------------------


def test_voronoi_examples():
    cb = cb1([0, 1])
    assert voronoi_assign(cb, [0.4]) == 1
    assert voronoi_assign(cb, [0.5]) == 1
    assert voronoi_assign(cb, [0.6]) == 2
    dup = cb1([0, 0])
    for x in (-3.0, 0.0, 7.0):
        assert voronoi_assign(dup, [x]) == 1


def test_voronoi_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        voronoi_assign(cb1([0, 1]), [0.0, 0.0])


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=6), st.integers(-10, 10))
def test_voronoi_tie_goes_to_lowest_index(cs, x):
    # integer data keeps distances exact so ties are real ties
    cb = cb1(cs)
    j = voronoi_assign(cb, [float(x)])
    d = [abs(c - x) for c in cs]
    assert j - 1 == d.index(min(d))


def test_distortion_examples():
    m = make_measure([(0.0, 0.0), (1.0, 1.0)], [1, 2], 5.0)
    assert distortion(make_codebook(m.points, 5.0), m) == 0.0
    assert distortion(make_codebook([(0.0, 0.0)], 5.0), make_measure([(1.0, 0.0)], [1], 5.0)) == 1.0
    # 2 * 0.5^2; the k=1 optimum sits at the centroid 0.5
    m = line([0, 1])
    assert distortion(cb1([0.5]), m) == 0.5
    bf = brute_force_kmeans(m, 1)
    assert bf.distortion == 0.5 and bf.codebook.codepoints[0, 0] == 0.5


@given(measures(), st.integers(1, 4), st.integers(0, 10**6))
@settings(max_examples=60, deadline=None)
def test_distortion_nonnegative_and_bounded(m, k, seed):
    cb = kmeanspp_init(m, k, seed)
    f = distortion(cb, m)
    assert f >= 0
    assert f <= m.total_mass * (2 * m.ball_radius) ** 2 * (1 + 1e-12)


def test_cell_stats_examples():
    m = line([0, 1, 10])
    masses, moments = cell_stats(cb1([0, 9]), m)
    np.testing.assert_array_equal(masses, [2, 1])
    np.testing.assert_array_equal(moments[:, 0] / masses, [0.5, 10.0])
    masses, moments = cell_stats(cb1([3.0]), m)
    assert masses[0] == 3 and moments[0, 0] == 11
    masses, moments = cell_stats(cb1([0.0, 100.0 - 80.0]), line([0, 1]))
    assert masses[1] == 0 and np.all(moments[1] == 0)


@given(measures(), st.integers(1, 5), st.integers(0, 10**6))
@settings(max_examples=60, deadline=None)
def test_cell_masses_partition_total(m, k, seed):
    cb = kmeanspp_init(m, k, seed)
    masses, moments = cell_stats(cb, m)
    assert masses.sum() == pytest.approx(m.total_mass, rel=1e-12)
    np.testing.assert_allclose(moments.sum(axis=0), m.weights @ m.points, atol=1e-9)


# -- seeding -------------------------------------------------------------------


def test_kmeanspp_single():
    m = make_measure([(0.3, 0.4)], [1.0], 1.0)
    np.testing.assert_array_equal(kmeanspp_init(m, 1, 0).codepoints, [[0.3, 0.4]])


@pytest.mark.parametrize("seed", range(25))
def test_kmeanspp_full_support_is_permutation(seed):
    m = make_measure([(0, 0), (1, 0), (0, 1), (1, 1)], [1, 2, 3, 4], 2.0)
    cb = kmeanspp_init(m, 4, seed)
    got = sorted(map(tuple, cb.codepoints))
    assert got == sorted(map(tuple, m.points))


def test_kmeanspp_deterministic(rng):
    m = random_measure(rng, 30, 3)
    a = kmeanspp_init(m, 5, 123).codepoints
    b = kmeanspp_init(m, 5, 123).codepoints
    np.testing.assert_array_equal(a, b)


def test_kmeanspp_more_codepoints_than_support():
    m = make_measure([(0, 0), (1, 0)], [1, 1], 2.0)
    cb = kmeanspp_init(m, 4, 0)
    assert cb.k == 4
    assert set(map(tuple, cb.codepoints)) == {(0.0, 0.0), (1.0, 0.0)}


def test_kmeanspp_first_draw_follows_weights():
    # first pick proportional to weight: 0.9 vs 0.1
    m = line([0, 1], w=[9.0, 1.0])
    first = [kmeanspp_init(m, 1, s).codepoints[0, 0] for s in range(2000)]
    assert np.mean(np.array(first) == 0.0) == pytest.approx(0.9, abs=0.03)


# -- Lloyd ---------------------------------------------------------------------


def test_lloyd_step_examples():
    m = line([0, 1, 2, 3])
    np.testing.assert_array_equal(lloyd_step(cb1([0.5, 2.5]), m).codepoints[:, 0], [0.5, 2.5])
    np.testing.assert_array_equal(lloyd_step(cb1([0, 3]), m).codepoints[:, 0], [0.5, 2.5])


def test_lloyd_empty_cell_policies():
    m = line([0, 1, 2, 3])
    cb = cb1([1.5, 15.0])
    keep = lloyd_step(cb, m, "keep")
    np.testing.assert_array_equal(keep.codepoints[:, 0], [1.5, 15.0])
    reseed = lloyd_step(cb, m, "reseed_farthest")
    # atoms 0 and 3 tie as farthest from 1.5; the first one wins
    np.testing.assert_array_equal(reseed.codepoints[:, 0], [1.5, 0.0])
    with pytest.raises(ConfigError):
        lloyd_step(cb, m, "bogus")


@given(measures(max_atoms=10), st.integers(1, 5), st.integers(0, 10**6))
@settings(max_examples=80, deadline=None)
def test_lloyd_never_increases_distortion(m, k, seed):
    cb = kmeanspp_init(m, k, seed)
    before = distortion(cb, m)
    for policy in ("keep", "reseed_farthest"):
        after = distortion(lloyd_step(cb, m, policy), m)
        assert after <= before * (1 + 1e-12) + 1e-15


@given(measures(max_atoms=10), st.integers(1, 5), st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_lloyd_output_stays_in_ball(m, k, seed):
    cb = lloyd_step(kmeanspp_init(m, k, seed), m)
    assert np.all(np.linalg.norm(cb.codepoints, axis=1) <= m.ball_radius * (1 + 1e-12))


def test_auto_iterations():
    assert auto_iterations(1) == 1
    assert auto_iterations(100) == 17
    assert auto_iterations(10000) == 33
    with pytest.raises(ConfigError):
        auto_iterations(0)


@given(st.integers(2, 10**7))
def test_auto_iterations_is_smallest_contracting_count(n):
    # smallest T with (4/3)^T >= n, except at exact powers where float log may round up
    T = auto_iterations(n)
    assert (4 / 3) ** T >= n * (1 - 1e-12)
    assert (4 / 3) ** (T - 1) < n * (1 + 1e-12)


# -- batch ---------------------------------------------------------------------


def test_batch_exact_support_zero_distortion():
    pts = [(0.0, 0.0), (3.0, 0.0), (0.0, 3.0)]
    m = make_measure(pts, [1, 1, 1], 5.0)
    sample = MeasureSample((m,) * 5)
    cb, rep = batch_quantize(sample, QuantizeConfig(k=3, iterations=1, init=make_codebook([(0.5, 0.5), (2.5, 0.5), (0.5, 2.5)], 5.0)))
    assert rep.final_distortion == pytest.approx(0.0, abs=1e-24)
    np.testing.assert_allclose(cb.codepoints, pts, atol=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_batch_trace_non_increasing(seed):
    rng = np.random.default_rng(seed)
    sample = MeasureSample(tuple(random_measure(rng, 6, 2) for _ in range(30)))
    _, rep = batch_quantize(sample, QuantizeConfig(k=5, seed=seed, iterations=50))
    tr = np.array(rep.distortion_trace)
    assert np.all(np.diff(tr) <= 1e-12 * tr[:-1])
    assert rep.final_distortion == tr[-1]
    assert len(tr) == rep.iterations_run + 1


def test_batch_report_fields(rng):
    sample = MeasureSample(tuple(random_measure(rng, 3, 2) for _ in range(100)))
    cb, rep = batch_quantize(sample, QuantizeConfig(k=4))
    assert rep.planned_iterations == 17
    assert rep.iterations_run <= 17
    assert sum(rep.cell_masses) == pytest.approx(mean_measure(sample).total_mass)
    assert rep.min_cell_mass == min(rep.cell_masses)
    assert rep.to_json()["algorithm"] == "batch"


def test_batch_early_stop():
    sample = dirac_sample([[0.0], [1.0], [10.0], [11.0]])
    _, rep = batch_quantize(sample, QuantizeConfig(k=2, iterations=50, init=cb1([0.0, 10.0], sample.ball_radius)))
    assert rep.early_stopped and rep.iterations_run == 2


def test_batch_deterministic_and_restarts(rng):
    sample = MeasureSample(tuple(random_measure(rng, 4, 2) for _ in range(40)))
    cfg = QuantizeConfig(k=6, seed=5)
    a, _ = batch_quantize(sample, cfg)
    b, _ = batch_quantize(sample, cfg)
    np.testing.assert_array_equal(a.codepoints, b.codepoints)
    _, one = batch_quantize(sample, QuantizeConfig(k=6, seed=5, restarts=1))
    _, many = batch_quantize(sample, QuantizeConfig(k=6, seed=5, restarts=8))
    assert many.final_distortion <= one.final_distortion


def test_batch_errors():
    with pytest.raises(EmptySample):
        batch_quantize(MeasureSample(()), QuantizeConfig(k=1))
    sample = dirac_sample([[0.0]])
    for bad in (dict(k=0), dict(k=1, iterations=0), dict(k=1, restarts=0),
                dict(k=1, empty_cell_policy="x"), dict(k=1, init="random"),
                dict(k=2, init=cb1([0.0]))):
        with pytest.raises(ConfigError):
            batch_quantize(sample, QuantizeConfig(**bad))


def test_callback_sees_every_step():
    sample = dirac_sample([[0.0], [1.0], [5.0], [6.0], [9.0]])
    seen = []
    _, rep = batch_quantize(sample, QuantizeConfig(k=2, iterations=5), callback=lambda t, c: seen.append(t))
    assert seen == list(range(1, rep.iterations_run + 1))


# -- mini-batch ----------------------------------------------------------------


def test_minibatch_single_batch_is_lloyd_step():
    # t = 0, one batch, no split: c - (c p - m) / p = m / p, the centroid
    m = line([0, 1, 2, 3])
    sample = MeasureSample((m,))
    init = cb1([0.0, 3.0])
    cb, rep = minibatch_quantize(sample, QuantizeConfig(k=2, algorithm="minibatch_nosplit", iterations=1, init=init))
    np.testing.assert_allclose(cb.codepoints, lloyd_step(init, m).codepoints, rtol=0, atol=1e-15)
    np.testing.assert_array_equal(cb.codepoints[:, 0], [0.5, 2.5])
    assert rep.iterations_run == 1 and rep.distortion_trace == []


def test_minibatch_step_skips_empty_cells():
    m = line([0, 1])
    new = minibatch_step(np.array([[0.5], [15.0]]), 0, [m], [m], 20.0)
    np.testing.assert_array_equal(new, [[0.5], [15.0]])


def test_minibatch_step_projects_to_sphere():
    # split estimates disagree: tiny mass estimate, large numerator overshoots
    a = make_measure([(0.1, 0.0)], [0.01], 1.0)
    b = make_measure([(0.9, 0.0)], [5.0], 1.0)
    new = minibatch_step(np.array([[0.0, 0.0]]), 0, [a], [b], 1.0)
    assert np.linalg.norm(new[0]) == pytest.approx(1.0, abs=1e-15)
    assert np.linalg.norm(new[0]) <= 1.0


def test_project_to_ball():
    pts = np.array([[3.0, 4.0], [0.3, 0.4]])
    out = project_to_ball(pts, 1.0)
    np.testing.assert_allclose(out, [[0.6, 0.8], [0.3, 0.4]])


def test_minibatch_batch_count_and_errors(rng):
    sample = MeasureSample(tuple(random_measure(rng, 2, 2) for _ in range(10)))
    _, rep = minibatch_quantize(sample, QuantizeConfig(k=2, algorithm="minibatch", minibatch_size=3))
    assert rep.iterations_run == 3
    _, rep = minibatch_quantize(sample, QuantizeConfig(k=2, algorithm="minibatch", minibatch_size=1000))
    assert rep.iterations_run == 1
    with pytest.raises(BatchTooSmall):
        minibatch_quantize(sample, QuantizeConfig(k=2, algorithm="minibatch", iterations=11))
    with pytest.raises(BatchTooSmall):
        minibatch_quantize(sample, QuantizeConfig(k=2, algorithm="minibatch", iterations=6))
    minibatch_quantize(sample, QuantizeConfig(k=2, algorithm="minibatch_nosplit", iterations=10))
    with pytest.raises(EmptySample):
        minibatch_quantize(MeasureSample(()), QuantizeConfig(k=1, algorithm="minibatch"))
    with pytest.raises(ConfigError):
        minibatch_quantize(sample, QuantizeConfig(k=2))


@given(st.integers(0, 10**6), st.sampled_from(["minibatch", "minibatch_nosplit"]))
@settings(max_examples=25, deadline=None)
def test_minibatch_codepoints_stay_in_ball(seed, algo):
    rng = np.random.default_rng(seed)
    sample = MeasureSample(tuple(random_measure(rng, 3, 2, radius=2.0) for _ in range(20)))
    cb, _ = minibatch_quantize(sample, QuantizeConfig(k=3, algorithm=algo, minibatch_size=4, seed=seed))
    assert np.all(np.linalg.norm(cb.codepoints, axis=1) <= 2.0)


def test_quantize_dispatch(rng):
    sample = MeasureSample(tuple(random_measure(rng, 3, 2) for _ in range(20)))
    for algo in ("batch", "minibatch", "minibatch_nosplit"):
        cb, rep = quantize(sample, QuantizeConfig(k=3, algorithm=algo, minibatch_size=5))
        assert cb.k == 3 and rep.algorithm == algo


def test_codebook_json_roundtrip():
    cb = make_codebook([(0.1, 0.2), (0.3, -0.4)], 1.0)
    back = Codebook.from_json(cb.to_json())
    np.testing.assert_array_equal(back.codepoints, cb.codepoints)
    assert back.ball_radius == 1.0


def test_codebook_outside_ball_rejected():
    with pytest.raises(Exception):
        make_codebook([(2.0, 0.0)], 1.0)
