"""End-to-end acceptance checks.

Each test prints one ``criterion N: PASS|FAIL`` line with the measured values
and then asserts the same condition.  Run with ``pytest tests/test_acceptance.py -v``.
"""

import time

import numpy as np
import pytest

from refractsurf.benchmark import run_benchmark
from refractsurf.cli import main
from refractsurf.errors import TotalInternalReflectionError
from refractsurf.maps import DepthMap
from refractsurf.metrics import rmse_depth, zero_mean_normalize
from refractsurf.optics import MediumPair, angle_between, refract
from refractsurf.reconstruction.energy import LightPathEnergy
from refractsurf.reconstruction.landscape import TwoPointSetup, energy_grid_2pt, grid_argmin
from refractsurf.reconstruction.solver import SolverOptions, init_flat, plane_depths
from refractsurf.scenes import benchmark_scene
from refractsurf.tracer import generate

RESULTS: list[str] = []

FRAMES = (25, 50, 75)
FIXED = SolverOptions(init_scheme="fixed", init_depth=2.0)
INDEPENDENT = SolverOptions(init_scheme="independent_flat")


@pytest.fixture
def verdict(capsys):
    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        RESULTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return record


@pytest.fixture(scope="module")
def wave2_fixed():
    return run_benchmark(benchmark_scene("wave2", "flat"), FRAMES, FIXED, threads=1)


def test_criterion_01_wave1_reproduction(verdict):
    start = time.perf_counter()
    reports = {bg: run_benchmark(benchmark_scene("wave1", bg), FRAMES, FIXED, threads=1)
               for bg in ("flat", "func")}
    elapsed = time.perf_counter() - start
    ok = elapsed <= 300 and all(r.mean_rmse <= 0.10 and r.mean_mae <= 8.0 for r in reports.values())
    detail = "; ".join(f"z_{bg}: RMSE {r.mean_rmse:.4f} MAE {r.mean_mae:.2f} deg" for bg, r in reports.items())
    verdict(1, ok, f"{detail}; {elapsed:.1f} s (limits 0.10, 8.0 deg, 300 s)")


def test_criterion_02_wave2_reproduction(verdict, wave2_fixed):
    r = wave2_fixed
    verdict(2, r.mean_rmse <= 0.10 and r.mean_mae <= 9.0,
            f"RMSE {r.mean_rmse:.4f} MAE {r.mean_mae:.2f} deg (limits 0.10, 9.0 deg)")


def test_criterion_03_init_ordering(verdict, wave2_fixed):
    flat = run_benchmark(benchmark_scene("wave2", "flat"), FRAMES, INDEPENDENT, threads=1)
    verdict(3, wave2_fixed.mean_rmse < flat.mean_rmse,
            f"fixed d0=2 RMSE {wave2_fixed.mean_rmse:.4f} < independent flat RMSE {flat.mean_rmse:.4f}")


def test_criterion_04_landscape(verdict):
    grid = np.linspace(1.0, 2.9, 101)
    cell = grid[1] - grid[0]
    parts, ok = [], True
    for truth in ((1.5, 2.5), (2.5, 1.5), (2.5, 2.5)):
        values = energy_grid_2pt(grid, grid, TwoPointSetup(truth=truth, background_z=3.0))
        a, b = grid_argmin(values, grid, grid)
        hit = abs(a - truth[0]) <= cell + 1e-12 and abs(b - truth[1]) <= cell + 1e-12
        ok &= hit
        parts.append(f"gt {truth} -> ({a:.3f}, {b:.3f})")
    verdict(4, ok, "; ".join(parts) + f" (cell {cell:.3f})")


def test_criterion_05_snell_oracle(verdict):
    rng = np.random.default_rng(5)
    n_samples = 100_000
    worst_angle = worst_coplanar = 0.0
    tir_mismatch = tir_count = 0
    mus = rng.uniform(0.3, 1.6, n_samples)
    thetas = rng.uniform(0.0, 0.5 * np.pi - 1e-6, n_samples)
    phis = rng.uniform(-np.pi, np.pi, n_samples)
    normals = rng.normal(size=(n_samples, 3))
    normals[:, 2] = -np.abs(normals[:, 2])
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    for mu, theta, phi, n in zip(mus, thetas, phis, normals):
        # L at angle theta from n
        e1 = np.cross(n, [1.0, 0.0, 0.0] if abs(n[0]) < 0.9 else [0.0, 1.0, 0.0])
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n, e1)
        L = np.cos(theta) * n + np.sin(theta) * (np.cos(phi) * e1 + np.sin(phi) * e2)
        L /= np.linalg.norm(L)
        theta1 = float(angle_between(L, n))
        expect_tir = mu * np.sin(theta1) > 1
        tir_count += expect_tir
        try:
            s = refract(L, n, MediumPair(mu))
        except TotalInternalReflectionError:
            tir_mismatch += not expect_tir
            continue
        tir_mismatch += expect_tir
        worst_angle = max(worst_angle, abs(float(angle_between(s, -n)) - np.arcsin(mu * np.sin(theta1))))
        worst_coplanar = max(worst_coplanar, abs(float(np.cross(L, n) @ s)))
    ok = worst_angle < 1e-10 and worst_coplanar < 1e-10 and tir_mismatch == 0
    verdict(5, ok, f"max angle error {worst_angle:.2e} rad, max coplanarity {worst_coplanar:.2e}, "
                   f"TIR mismatches {tir_mismatch} of {tir_count} TIR cases")


def test_criterion_06_gradient(verdict):
    corr, truth = generate(benchmark_scene("wave1", "flat", t=50, rows=16, cols=16))
    model = LightPathEnergy(corr)
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(20):
        d = truth.depth.vector() + rng.normal(0.0, 0.02, corr.n_valid)
        _, g = model.value_and_grad(d)
        fd = np.empty_like(d)
        for i in range(d.size):
            h = 1e-6 * max(1.0, abs(d[i]))
            e = np.zeros_like(d)
            e[i] = h
            fd[i] = (model(d + e) - model(d - e)) / (2 * h)
        worst = max(worst, float(np.max(np.abs(g - fd) / np.maximum(np.abs(g), np.abs(fd)))))
    verdict(6, worst < 1e-4, f"max relative component error {worst:.2e} (limit 1e-4)")


def test_criterion_07_forward_consistency(verdict):
    worst_ratio = worst_residual = 0.0
    for kind in ("wave1", "wave2"):
        for t in (0, 25, 50, 75, 99):
            corr, truth = generate(benchmark_scene(kind, "flat", t=t))
            model = LightPathEnergy(corr)
            d = truth.depth.vector()
            ratio = model(d) / model(plane_depths(corr, init_flat(corr)))
            residual = np.max(model.residuals_with_normals(d, truth.normals.n[corr.valid]))
            worst_ratio = max(worst_ratio, ratio)
            worst_residual = max(worst_residual, float(residual))
    verdict(7, worst_ratio < 0.05 and worst_residual < 1e-9,
            f"max E(gt)/E(flat init) {worst_ratio:.4f} (limit 0.05), "
            f"max residual with analytic normals {worst_residual:.2e} (limit 1e-9)")


def test_criterion_08_orthographic_shift(verdict):
    corr, truth = generate(benchmark_scene("wave1", "flat", t=50, rows=32, cols=32, mode="orthographic"))
    model = LightPathEnergy(corr)
    d = truth.depth.vector()
    base = model(d)
    rng = np.random.default_rng(8)
    shifts = rng.uniform(-0.5, 0.5, 10)
    worst = max(abs(model(d + c) - base) for c in shifts)
    z = np.where(truth.depth.valid, truth.depth.z, np.nan)
    worst_rmse = max(rmse_depth(zero_mean_normalize(z + c), zero_mean_normalize(z)) for c in shifts)
    verdict(8, worst < 1e-10 and worst_rmse < 1e-12,
            f"max |E(d+c)-E(d)| {worst:.3e} (limit 1e-10); "
            f"normalized shifted-copy RMSE {worst_rmse:.1e}")


def test_criterion_09_degeneracies(verdict):
    corr, _ = generate(benchmark_scene("wave1", "func", t=30, mu=1.0))
    model = LightPathEnergy(corr)
    rng = np.random.default_rng(9)
    zb = corr.xb[..., 2]
    worst = 0.0
    for _ in range(10):
        z = rng.uniform(0.3, 1.0, zb.shape) * zb
        worst = max(worst, model(DepthMap.from_z(corr.camera, z).vector()))
    delta = 0.5
    terms = model.terms(DepthMap.from_z(corr.camera, zb + delta).vector())
    barrier_error = abs(float(np.sum(terms.barrier)) - delta * corr.n_valid)
    verdict(9, worst < 1e-12 and barrier_error < 1e-12 * corr.n_valid,
            f"max mu=1 energy {worst:.2e} (limit 1e-12); barrier minus delta*|Omega| {barrier_error:.1e}")


def test_criterion_10_flat_round_trip(verdict, tmp_path, capsys):
    cfg = tmp_path / "flat.cfg"
    cfg.write_text("surface.kind = flat_plane\nsurface.c = 2.0\nbackground.kind = flat\n")
    prefix = str(tmp_path / "flat")
    codes = [main(["generate", str(cfg), prefix]),
             main(["reconstruct", prefix + ".rfrc", prefix, "--init", "flat"]),
             main(["evaluate", prefix + ".est_depth.rfdm", prefix + ".gt_depth.rfdm"])]
    fields = dict(tok.split("=") for tok in capsys.readouterr().out.split() if "=" in tok)
    rmse, mae = float(fields["RMSE"]), float(fields["MAE_deg"])
    c = init_flat(generate(benchmark_scene("flat_plane", "flat", c=2.0))[0])
    ok = codes == [0, 0, 0] and rmse < 0.01 and mae < 0.5 and abs(c - 2.0) < 0.01
    verdict(10, ok, f"RMSE {rmse:.2e} MAE {mae:.2e} deg, init_flat c* {c:.6f} (exit codes {codes})")


def test_criterion_11_determinism(verdict, tmp_path, monkeypatch):
    cfg = tmp_path / "t.cfg"
    cfg.write_text("surface.kind = wave2\ngrid.rows = 32\ngrid.cols = 32\n")
    outputs = []
    for threads in ("1", "4", "0", "1"):
        monkeypatch.setenv("REFRACT_THREADS", threads)
        out = tmp_path / f"run_{len(outputs)}"
        assert main(["benchmark", str(cfg), str(out), "--frames", "0,25,50,75,99",
                     "--init", "flat", "--max-iterations", "150"]) == 0
        outputs.append((out / "benchmark.csv").read_bytes())
    verdict(11, len(set(outputs)) == 1,
            f"{len(outputs)} runs with REFRACT_THREADS=1,4,0,1 -> {len(set(outputs))} distinct CSV")
