
import numpy as np
import pytest

from backend.candidates import candidate_envelope, exact_profile_2d
from backend.errors import DomainError, SizeError, UnsupportedError
from backend.gaussian import SQRT_2PI, gaussian_profile
from backend.oracle import VoxelSet
from backend.optimizer import (
    HEADER,
    INIT_MODES,
    OptimizerConfig,
    PhaseField,
    band_fraction,
    double_well,
    double_well_prime,
    initial_field,
    interface_energy,
    load_field,
    minimize,
    minimize_mirror,
    perimeter_estimate,
    profile_sweep,
    project_volume,
    recovery_field,
    relaxed_energy,
    save_field,
    threshold_refine,
)
from backend.records import Provenance

FAST = dict(grid_n=32, schedule=(4.0, 2.0, 1.5), max_iterations=60, threshold_steps=10)


def test_double_well():
    u = np.array([0.0, 0.5, 1.0])
    assert np.allclose(double_well(u), [0.0, 1.0 / 16.0, 0.0])
    assert np.allclose(double_well_prime(u), [0.0, 0.0, 0.0])


def test_project_volume_hits_target():
    values = np.random.default_rng(0).random((16, 16))
    projected = project_volume(values, 0.3)
    assert projected.mean() == pytest.approx(0.3, abs=1e-12)
    assert projected.min() >= 0.0 and projected.max() <= 1.0
    with pytest.raises(DomainError):
        project_volume(values, 1.0)


def test_sharp_slab_estimate_is_one():
    cfg = OptimizerConfig(grid_n=64, init="slab")
    f = initial_field(2, 0.5, cfg, epsilon=1.5 / 64)
    assert perimeter_estimate(f) == pytest.approx(1.0, abs=1e-3)


def test_relaxed_energy_vanishes_on_pure_phases():
    zeros = PhaseField(2, 8, np.zeros((8, 8)), 2.0 / 8)
    assert relaxed_energy(zeros) == 0.0
    assert perimeter_estimate(zeros) == 0.0


@pytest.mark.parametrize("mode", [m for m in INIT_MODES if m != "voxel_warm_start"])
def test_initial_fields_hold_volume(mode):
    cfg = OptimizerConfig(grid_n=16, init=mode)
    f = initial_field(3, 0.2, cfg)
    assert f.volume == pytest.approx(0.2, abs=1e-9)
    f.validate()


def test_voxel_warm_start_is_upsampled():
    warm = VoxelSet.from_cells(2, 4, [0, 1, 4, 5])
    cfg = OptimizerConfig(grid_n=16, init="voxel_warm_start", warm_start=warm)
    f = initial_field(2, 0.25, cfg, epsilon=1.5 / 16)
    assert f.values.shape == (16, 16)
    assert f.values[0, 0] > 0.9 and f.values[-1, -1] < 0.1


def test_config_validation():
    with pytest.raises(DomainError):
        OptimizerConfig(schedule=(2.0, 4.0)).validate()
    with pytest.raises(DomainError):
        OptimizerConfig(init="sphere").validate()
    with pytest.raises(DomainError):
        OptimizerConfig(init="voxel_warm_start").validate()
    with pytest.raises(DomainError):
        OptimizerConfig(schedule=(4.0, 0.5)).validate()


def test_minimize_rejects_bad_problems():
    with pytest.raises(UnsupportedError):
        minimize(5, 0.5, OptimizerConfig(grid_n=8))
    with pytest.raises(SizeError):
        minimize(2, 0.5, OptimizerConfig(grid_n=4097))
    with pytest.raises(DomainError):
        minimize(2, 0.0, OptimizerConfig(grid_n=8))


def test_threshold_refine_returns_a_near_binary_set():
    cfg = OptimizerConfig(grid_n=32, init="corner_ball")
    f = initial_field(2, 0.2, cfg, epsilon=1.5 / 32)
    assert band_fraction(f) > 0.05
    refined = threshold_refine(f, 0.2, steps=10)
    assert band_fraction(refined) < 0.05
    assert refined.volume == pytest.approx(0.2, abs=1e-9)
    assert interface_energy(refined, 0.2) <= interface_energy(f, 0.2) + 1e-6
    assert refined.epsilon == f.epsilon


def test_threshold_refine_keeps_a_sharp_slab():
    cfg = OptimizerConfig(grid_n=32, init="slab")
    f = initial_field(2, 0.5, cfg, epsilon=1.5 / 32)
    refined = threshold_refine(f, 0.5, steps=5)
    assert set(np.unique(refined.values)) == {0.0, 1.0}
    assert interface_energy(refined, 0.5) == pytest.approx(1.0, abs=1e-3)


def test_threshold_refine_rejects_grids_too_coarse_to_sharpen():
    f = PhaseField(1, 4, np.array([1.0, 0.6, 0.0, 0.0]), 0.25)
    with pytest.raises(DomainError):
        threshold_refine(f, 0.4, steps=2)


def test_interface_energy_is_calibrated_on_flat_cuts():
    cfg = OptimizerConfig(grid_n=64, init="slab")
    f = initial_field(2, 0.5, cfg, epsilon=1.5 / 64)
    assert interface_energy(f, 0.5) == pytest.approx(1.0, abs=1e-3)
    assert relaxed_energy(recovery_field(f, 0.5)) < 1.0 - 1e-3


def test_minimize_small_square_at_half():
    result = minimize(2, 0.5, OptimizerConfig(**FAST))
    assert abs(result.estimate - 1.0) < 0.05
    assert result.estimate == pytest.approx(interface_energy(result.field, 0.5))
    assert result.diagnostics["volume_error"] < 1e-6
    assert result.diagnostics["error_bar"] == pytest.approx(4.0 / 32)
    assert result.diagnostics["near_binary_fraction"] < 0.05
    assert {"stages", "relaxed_energy", "flow_energy", "initial_estimate", "source"} <= set(result.diagnostics)


def test_mirror_runs_agree():
    first, mirror = minimize_mirror(2, 0.3, OptimizerConfig(**FAST))
    assert mirror.field.volume == pytest.approx(0.7, abs=1e-6)
    assert abs(first.estimate - mirror.estimate) < 0.05


def test_grid_refinement_stays_inside_error_bar():
    coarse = minimize(2, 0.3, OptimizerConfig(**FAST))
    fine = minimize(2, 0.3, OptimizerConfig(**dict(FAST, grid_n=64)))
    assert abs(coarse.estimate - fine.estimate) < coarse.diagnostics["error_bar"]


def test_sweep_endpoints_and_provenance():
    curve = profile_sweep(1, [0.0, 0.25, 0.5, 1.0], OptimizerConfig(grid_n=64, schedule=(4.0, 2.0), max_iterations=40))
    assert curve.provenance is Provenance.NUMERICAL
    assert curve.values[0] == 0.0 and curve.values[-1] == 0.0
    assert np.allclose(curve.values[1:-1], 1.0, atol=0.02)
    assert len(curve.diagnostics) == 4


def test_field_dump_round_trip(tmp_path):
    f = PhaseField(2, 4, np.linspace(0.0, 1.0, 16), 0.5)
    binary = save_field(f, tmp_path / "f.bin")
    assert binary.stat().st_size == HEADER.size + 16 * 8
    loaded = load_field(binary)
    assert loaded.dimension == 2 and loaded.grid_n == 4 and loaded.epsilon == 0.5
    assert np.array_equal(loaded.values, f.values)

    text = save_field(f, tmp_path / "f.txt", fmt="text")
    assert text.read_text().startswith("# 2 4 0.5")
    assert np.array_equal(load_field(text).values, f.values)


def test_truncated_field_file(tmp_path):
    path = tmp_path / "short.bin"
    path.write_bytes(b"\x00\x01")
    with pytest.raises(DomainError):
        load_field(path)


@pytest.mark.slow
@pytest.mark.parametrize("lam", [0.1, 0.3, 0.5])
def test_square_profile_accuracy(lam):
    result = minimize(2, lam, OptimizerConfig(grid_n=256))
    exact = exact_profile_2d(lam)
    assert abs(result.estimate / exact - 1.0) < 0.03
    assert result.estimate >= SQRT_2PI * gaussian_profile(lam) - 1e-6
    assert result.estimate <= candidate_envelope(2, [lam]).values[0] * 1.05


@pytest.mark.slow
@pytest.mark.parametrize("d,grid_n", [(2, 128), (3, 40)])
def test_flat_near_half(d, grid_n):
    curve = profile_sweep(d, [0.44, 0.5, 0.56], OptimizerConfig(grid_n=grid_n))
    assert np.all(np.abs(curve.values - 1.0) < 0.03)
