import logging

import numpy as np
import pytest

from refractsurf import io
from refractsurf.cli import main
from refractsurf.maps import DepthMap
from refractsurf.reconstruction.energy import LightPathEnergy
from refractsurf.reconstruction.solver import plane_depths


def write_config(path, **keys):
    path.write_text("".join(f"{k} = {v}\n" for k, v in keys.items()))
    return str(path)


@pytest.fixture
def wave_cfg(tmp_path):
    return write_config(tmp_path / "wave.cfg", **{"surface.kind": "wave1", "surface.t": 50,
                                                   "grid.rows": 24, "grid.cols": 24})


@pytest.fixture
def generated(tmp_path, wave_cfg):
    assert main(["generate", wave_cfg, str(tmp_path / "w")]) == 0
    return tmp_path / "w"


def test_generate_writes_files(tmp_path, wave_cfg):
    prefix = tmp_path / "w"
    assert main(["generate", wave_cfg, str(prefix), "--flow"]) == 0
    for suffix in (".rfrc", ".gt_depth.rfdm", ".gt_normals.rfdm", ".flow.csv", ".flow.ppm"):
        assert (tmp_path / f"w{suffix}").is_file()
    assert (tmp_path / "w.rfrc").read_bytes()[:4] == b"RFRC"
    assert (tmp_path / "w.flow.csv").read_text().splitlines()[0] == "row,col,du,dv"


def test_generate_bad_key(tmp_path, capsys):
    cfg = write_config(tmp_path / "bad.cfg", **{"surface.kind": "wave9"})
    assert main(["generate", cfg, str(tmp_path / "x")]) == 2
    assert "surface.kind" in capsys.readouterr().err


def test_generate_identical_media_flow_is_white(tmp_path):
    cfg = write_config(tmp_path / "mu1.cfg", **{"surface.kind": "wave1", "surface.t": 50,
                                                 "media.mu": 1, "grid.rows": 16, "grid.cols": 16})
    assert main(["generate", cfg, str(tmp_path / "m"), "--flow"]) == 0
    img = io.read_pnm(tmp_path / "m.flow.ppm")
    assert np.all(img == 255)


def test_generate_seed_and_noise(tmp_path, wave_cfg):
    for name, seed in (("a", 1), ("b", 1), ("c", 2)):
        main(["generate", wave_cfg, str(tmp_path / name), "--noise-std", "0.01", "--seed", str(seed)])
    a, b, c = ((tmp_path / f"{n}.rfrc").read_bytes() for n in "abc")
    assert a == b and a != c


def test_missing_inputs(tmp_path):
    assert main(["generate", str(tmp_path / "nope.cfg"), str(tmp_path / "x")]) == 1
    assert main(["reconstruct", str(tmp_path / "nope.rfrc"), str(tmp_path / "x")]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--no-such-flag"])
    assert exc.value.code == 2


def test_reconstruct_fixed_init(generated, capsys):
    rfrc = str(generated) + ".rfrc"
    out = str(generated.parent / "est")
    assert main(["reconstruct", rfrc, out, "--init", "fixed:2.0", "--max-iterations", "30"]) == 0
    printed = capsys.readouterr().out
    assert "converged=false" in printed and "final_energy=" in printed
    rows = (generated.parent / "est.iters.csv").read_text().splitlines()
    assert rows[0] == "iteration,energy,grad_inf_norm,step_length"
    corr = io.read_rfrc(rfrc)
    e0 = LightPathEnergy(corr)(plane_depths(corr, 2.0))
    assert float(rows[1].split(",")[1]) == e0
    assert io.read_z(generated.parent / "est.est_depth.rfdm").shape == (24, 24)
    assert io.read_normals(generated.parent / "est.est_normals.rfdm").shape == (24, 24)


def test_reconstruct_flat_converges(tmp_path, capsys):
    cfg = write_config(tmp_path / "flat.cfg", **{"surface.kind": "flat_plane", "surface.c": 2.0,
                                                  "grid.rows": 16, "grid.cols": 16})
    main(["generate", cfg, str(tmp_path / "f")])
    assert main(["reconstruct", str(tmp_path / "f.rfrc"), str(tmp_path / "e"), "--init", "flat"]) == 0
    assert "converged=true" in capsys.readouterr().out


def test_reconstruct_sequential_with_prev(generated, capsys):
    rfrc = str(generated) + ".rfrc"
    gt = str(generated) + ".gt_depth.rfdm"
    out = str(generated.parent / "s")
    assert main(["reconstruct", rfrc, out, "--init", "sequential", "--prev", gt,
                 "--max-iterations", "3"]) == 0
    corr = io.read_rfrc(rfrc)
    e_gt = LightPathEnergy(corr)(DepthMap.from_z(corr.camera, io.read_z(gt)).vector())
    first = float((generated.parent / "s.iters.csv").read_text().splitlines()[1].split(",")[1])
    assert first == pytest.approx(e_gt, rel=1e-12)


def test_evaluate(generated, tmp_path, capsys):
    gt = str(generated) + ".gt_depth.rfdm"
    assert main(["evaluate", gt, gt, "--csv", str(tmp_path / "m.csv"),
                 "--heatmap", str(tmp_path / "h.pgm")]) == 0
    out = capsys.readouterr().out
    assert "RMSE=0.0" in out and "MAE_deg=0.0" in out
    assert (tmp_path / "m.csv").read_text().splitlines()[1].startswith("0,0.0,0.0,nan,0,0")
    assert io.read_pnm(tmp_path / "h.pgm").shape == (24, 24)
    assert "max_abs_error = 0.0" in (tmp_path / "h.pgm.txt").read_text()


def test_evaluate_ortho_shift(generated, tmp_path, capsys):
    gt_path = str(generated) + ".gt_depth.rfdm"
    io.write_rfdm(tmp_path / "shift.rfdm", io.read_z(gt_path) + 0.4)
    def printed_rmse():
        return float(capsys.readouterr().out.split()[0].split("=")[1])

    assert main(["evaluate", str(tmp_path / "shift.rfdm"), gt_path]) == 0
    assert printed_rmse() == pytest.approx(0.4, abs=1e-12)
    assert main(["evaluate", str(tmp_path / "shift.rfdm"), gt_path, "--ortho"]) == 0
    assert printed_rmse() < 1e-14


def test_evaluate_grid_mismatch(generated, tmp_path):
    io.write_rfdm(tmp_path / "small.rfdm", np.ones((4, 4)))
    assert main(["evaluate", str(tmp_path / "small.rfdm"), str(generated) + ".gt_depth.rfdm"]) == 3


def test_benchmark(tmp_path, caplog):
    cfg = write_config(tmp_path / "t.cfg", **{"surface.kind": "wave1", "grid.rows": 12, "grid.cols": 12})
    out = tmp_path / "bench"
    assert main(["benchmark", cfg, str(out), "--frames", "25,50,75", "--init", "fixed:2",
                 "--max-iterations", "10", "--heatmaps"]) == 0
    assert len((out / "benchmark.csv").read_text().splitlines()) == 4
    assert (out / "summary.txt").is_file()
    assert (out / "heatmap_t050.pgm").is_file() and (out / "heatmap_t050.pgm.txt").is_file()

    caplog.set_level(logging.INFO, logger="refractsurf.benchmark")
    assert main(["benchmark", cfg, str(tmp_path / "seq"), "--frames", "75,25,50",
                 "--init", "sequential", "--max-iterations", "5"]) == 0
    ts = [float(r.getMessage().split("=")[1]) for r in caplog.records if "processing frame" in r.getMessage()]
    assert ts == sorted(ts) == [25, 50, 75]


def test_benchmark_all_frames(tmp_path):
    cfg = write_config(tmp_path / "t.cfg", **{"surface.kind": "wave2", "grid.rows": 6, "grid.cols": 6})
    assert main(["benchmark", cfg, str(tmp_path / "all"), "--frames", "all", "--init", "fixed:2",
                 "--max-iterations", "2"]) == 0
    assert len((tmp_path / "all" / "benchmark.csv").read_text().splitlines()) == 101


def test_energy_grid(tmp_path, capsys):
    prefix = str(tmp_path / "eg")
    assert main(["energy-grid", prefix]) == 0
    out = capsys.readouterr().out
    d1 = float(out.split("d1=")[1].split()[0])
    d2 = float(out.split("d2=")[1].split()[0])
    assert abs(d1 - 2.5) <= 0.019 and abs(d2 - 2.5) <= 0.019
    lines = (tmp_path / "eg.csv").read_text().splitlines()
    assert len(lines) == 102 and len(lines[0].split(",")) == 102
    assert io.read_pnm(tmp_path / "eg.pgm").shape == (101, 101)


def test_energy_grid_config_and_single_cell(tmp_path, capsys):
    cfg = write_config(tmp_path / "two.cfg", **{"truth.d1": 1.5, "truth.d2": 2.5, "background.z": 3})
    assert main(["energy-grid", str(tmp_path / "one"), "--config", cfg,
                 "--d1", "1.5:1.5:1", "--d2", "2.5:2.5:1"]) == 0
    assert "d1=1.5 d2=2.5" in capsys.readouterr().out
    bad = write_config(tmp_path / "bad.cfg", **{"truth.d3": 1})
    assert main(["energy-grid", str(tmp_path / "x"), "--config", bad]) == 2


def test_energy_grid_empty_range(tmp_path):
    assert main(["energy-grid", str(tmp_path / "e"), "--d1", "2:1:10"]) == 2
    assert main(["energy-grid", str(tmp_path / "e"), "--d1", "1:2:0"]) == 2
    assert main(["energy-grid", str(tmp_path / "e"), "--d2", "oops"]) == 2
