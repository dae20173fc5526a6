import warnings

import numpy as np
import pytest

from refractsurf.errors import DegenerateEnergyWarning, HeightAmbiguityWarning, InvalidInputError
from refractsurf.maps import DepthMap
from refractsurf.metrics import mae_normals, rmse_depth
from refractsurf.reconstruction.energy import LightPathEnergy
from refractsurf.reconstruction.solver import (
    SolverOptions,
    init_flat,
    parse_init,
    plane_depths,
    reconstruct,
)
from refractsurf.scenes import benchmark_scene
from refractsurf.tracer import generate


def test_parse_init():
    assert parse_init("flat") == ("independent_flat", None)
    assert parse_init("sequential") == ("sequential", None)
    assert parse_init("fixed:2.0") == ("fixed", 2.0)
    for bad in ("fixed:", "fixed:-1", "warm"):
        with pytest.raises(InvalidInputError):
            parse_init(bad)


def test_options_validation():
    with pytest.raises(InvalidInputError):
        SolverOptions(init_scheme="random")
    with pytest.raises(InvalidInputError):
        SolverOptions(max_iterations=0)


def test_plane_depths_hit_plane(wave1_frame):
    corr, _ = wave1_frame
    d = plane_depths(corr, 1.7)
    z = DepthMap.from_vector(corr.camera, d, corr.valid).z
    np.testing.assert_allclose(z, 1.7, atol=1e-14)


def test_init_flat_recovers_plane(flat_frame):
    corr, _ = flat_frame
    assert init_flat(corr) == pytest.approx(2.0, abs=0.01)


def test_init_flat_wave_mean():
    cs = [init_flat(generate(benchmark_scene("wave1", t=t, rows=32, cols=32))[0]) for t in (0, 25, 50, 75, 99)]
    assert np.mean(cs) == pytest.approx(2.0, abs=0.1)


def test_init_flat_degenerate():
    corr, _ = generate(benchmark_scene("wave1", t=10, rows=16, cols=16, mu=1.0))
    with pytest.warns(DegenerateEnergyWarning):
        c = init_flat(corr)
    assert c == pytest.approx(0.1)


def test_init_flat_orthographic_warns():
    corr, _ = generate(benchmark_scene("wave1", t=10, rows=16, cols=16, mode="orthographic"))
    # parallel rays through a fronto-parallel plane never bend, whatever its depth
    with pytest.warns(HeightAmbiguityWarning), pytest.warns(DegenerateEnergyWarning):
        init_flat(corr)


def test_flat_round_trip(flat_frame):
    corr, truth = flat_frame
    res = reconstruct(corr)
    assert res.converged
    assert rmse_depth(res.depth, truth.depth) < 0.01
    assert mae_normals(res.normals, truth.normals) < 0.5


def test_fixed_init_is_honored_and_improves(wave1_frame):
    corr, truth = wave1_frame
    opts = SolverOptions(init_scheme="fixed", init_depth=2.0, max_iterations=60)
    res = reconstruct(corr, opts)
    e0 = LightPathEnergy(corr)(plane_depths(corr, 2.0))
    assert res.history[0].energy == pytest.approx(e0, rel=1e-15)
    assert res.initial_energy == res.history[0].energy
    np.testing.assert_allclose(res.initial_depth.z, 2.0, atol=1e-14)
    assert res.final_energy <= res.initial_energy
    assert res.iterations == 60 and not res.converged


def test_wave1_accuracy(wave1_frame):
    corr, truth = wave1_frame
    res = reconstruct(corr, SolverOptions(init_scheme="fixed", init_depth=2.0))
    assert rmse_depth(res.depth, truth.depth) <= 0.1
    assert mae_normals(res.normals, truth.normals) <= 8.0


def test_sequential_uses_previous(small_frame):
    corr, truth = small_frame
    res = reconstruct(corr, SolverOptions(init_scheme="sequential", max_iterations=5), prev=truth.depth)
    assert res.history[0].energy == pytest.approx(LightPathEnergy(corr)(truth.depth.vector()))
    first = reconstruct(corr, SolverOptions(init_scheme="sequential", max_iterations=1))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert first.initial_energy == pytest.approx(
            LightPathEnergy(corr)(plane_depths(corr, init_flat(corr))))


def test_sequential_shape_mismatch(small_frame, wave1_frame):
    with pytest.raises(InvalidInputError):
        reconstruct(small_frame[0], SolverOptions(init_scheme="sequential"), prev=wave1_frame[1].depth)


def test_deterministic(small_frame):
    corr, _ = small_frame
    a = reconstruct(corr, SolverOptions(max_iterations=40))
    b = reconstruct(corr, SolverOptions(max_iterations=40))
    np.testing.assert_array_equal(a.depth.d, b.depth.d)
