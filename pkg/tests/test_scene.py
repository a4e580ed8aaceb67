"""Scene generation, measurement simulation, and fixture round-trips."""

import numpy as np
import pytest

from cofbl.model import RadarConfig, build_dictionary
from cofbl.scene import (
    GROUP,
    JOINT,
    JOINT_GROUP,
    ROW,
    SparsityModel,
    evolve_scene,
    load_scene,
    perturb_support,
    save_scene,
    simulate,
    structure_ok,
    synth_ccir,
    synth_gaussian_ccir,
)


def config(**overrides):
    base = dict(
        n_tx=2,
        n_rx=2,
        n_range_bins=8,
        n_pulses=4,
        waveform_len=8,
        bandwidths=(100e3, 200e3),
        pri=1e-3,
        amplitudes=(1.0, 1.0),
        group_len=2,
    )
    base.update(overrides)
    return RadarConfig(**base)


class TestSparsityModel:
    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            SparsityModel(kind="diagonal", sparsity_level=2)

    def test_grouped_level_divisibility(self):
        with pytest.raises(ValueError):
            SparsityModel(kind=GROUP, sparsity_level=3, group_len=2)


class TestSynthCcir:
    def test_zero_level_gives_empty_scene(self):
        cfg = config()
        scene = synth_ccir(cfg, SparsityModel(kind=ROW, sparsity_level=0), seed=0)
        assert scene.support.size == 0
        np.testing.assert_array_equal(scene.values, 0)

    def test_joint_index_arithmetic(self):
        # N=2, M=1, R=4, active bins {1, 3} -> rows {1, 3, 5, 7}
        cfg = config(n_tx=2, n_rx=1, n_range_bins=4, group_len=1)
        for seed in range(64):
            scene = synth_ccir(cfg, SparsityModel(kind=JOINT, sparsity_level=2), seed)
            bins = np.sort(scene.support[scene.support < 4])
            if list(bins) == [1, 3]:
                np.testing.assert_array_equal(scene.support, [1, 3, 5, 7])
                return
        pytest.fail("bins {1, 3} never drawn across 64 seeds")

    def test_group_support_is_union_of_aligned_blocks(self):
        cfg = config(n_range_bins=2, group_len=2)  # NMR = 8
        scene = synth_ccir(cfg, SparsityModel(kind=GROUP, sparsity_level=4, group_len=2), 5)
        assert scene.support.size == 4
        assert structure_ok(scene.support, GROUP, cfg.n_tx, cfg.n_rx, cfg.n_range_bins, 2)

    @pytest.mark.parametrize(
        "kind,level,d",
        [(ROW, 5, 1), (GROUP, 4, 2), (JOINT, 3, 1), (JOINT_GROUP, 4, 2)],
    )
    def test_generated_scene_passes_structure_scan(self, kind, level, d):
        cfg = config()
        model = SparsityModel(kind=kind, sparsity_level=level, group_len=d)
        for seed in range(10):
            scene = synth_ccir(cfg, model, seed)
            assert structure_ok(
                scene.support, kind, cfg.n_tx, cfg.n_rx, cfg.n_range_bins, d
            )
            # simultaneous sparsity: active rows nonzero in every pulse
            assert np.all(np.abs(scene.values[scene.support]) > 0)
            off = np.setdiff1d(np.arange(cfg.n_coeffs), scene.support)
            np.testing.assert_array_equal(scene.values[off], 0)

    def test_deterministic_under_seed(self):
        cfg = config()
        model = SparsityModel(kind=JOINT_GROUP, sparsity_level=4, group_len=2)
        a = synth_ccir(cfg, model, 123)
        b = synth_ccir(cfg, model, 123)
        np.testing.assert_array_equal(a.values, b.values)
        c = synth_ccir(cfg, model, 124)
        assert not np.array_equal(a.values, c.values)

    def test_infeasible_level_rejected(self):
        cfg = config()
        with pytest.raises(ValueError):
            synth_ccir(cfg, SparsityModel(kind=JOINT, sparsity_level=9), 0)

    def test_unit_variance_entries(self):
        cfg = config(n_range_bins=64, n_pulses=64, group_len=1)
        scene = synth_ccir(cfg, SparsityModel(kind=ROW, sparsity_level=128), 7)
        active = scene.values[scene.support]
        assert abs(np.mean(np.abs(active) ** 2) - 1.0) < 0.05


class TestStructureScanner:
    def test_row_accepts_anything(self):
        assert structure_ok([0, 3, 11], ROW, 2, 2, 8)

    def test_group_rejects_misaligned(self):
        assert not structure_ok([1, 2], GROUP, 1, 1, 8, group_len=2)
        assert structure_ok([2, 3], GROUP, 1, 1, 8, group_len=2)

    def test_joint_requires_identical_bins(self):
        # N=2, M=1, R=4: rows {1, 5} mean bin 1 on both pairs
        assert structure_ok([1, 5], JOINT, 2, 1, 4)
        assert not structure_ok([1, 6], JOINT, 2, 1, 4)

    def test_out_of_range_rejected(self):
        assert not structure_ok([99], ROW, 2, 1, 4)


class TestGaussianScene:
    def test_variance_profile(self):
        cfg = config(n_pulses=256, group_len=1)
        psi = np.full(cfg.n_coeffs, 0.5)
        psi[:4] = 2.0
        scene = synth_gaussian_ccir(cfg, psi, 3)
        per_row = np.mean(np.abs(scene.values) ** 2, axis=1)
        assert abs(per_row[:4].mean() - 2.0) < 0.3
        assert abs(per_row[4:].mean() - 0.5) < 0.1

    def test_rejects_nonpositive(self):
        cfg = config()
        with pytest.raises(ValueError):
            synth_gaussian_ccir(cfg, np.zeros(cfg.n_coeffs), 0)


class TestSimulate:
    def scene_and_dico(self, **overrides):
        cfg = config(**overrides)
        dico = build_dictionary(cfg)
        scene = synth_ccir(cfg, SparsityModel(kind=ROW, sparsity_level=6), 1)
        return cfg, dico, scene

    def test_infinite_snr_is_noiseless(self):
        _, dico, scene = self.scene_and_dico()
        ms = simulate(dico, scene, np.inf, seed=0)
        np.testing.assert_array_equal(ms.Y, dico.apply(scene.values))
        assert ms.noise_variance == 0.0

    def test_same_seed_bit_identical(self):
        _, dico, scene = self.scene_and_dico()
        a = simulate(dico, scene, 10.0, seed=42)
        b = simulate(dico, scene, 10.0, seed=42)
        np.testing.assert_array_equal(a.Y, b.Y)
        c = simulate(dico, scene, 10.0, seed=43)
        assert not np.array_equal(a.Y, c.Y)

    def test_noise_replay_reconstructs_measurement(self):
        _, dico, scene = self.scene_and_dico()
        ms = simulate(dico, scene, 5.0, seed=9)
        np.testing.assert_array_equal(ms.Y, dico.apply(scene.values) + ms.noise())

    def test_realized_snr_close_to_request(self):
        cfg = config(n_range_bins=64, n_pulses=16, waveform_len=32, group_len=1)
        dico = build_dictionary(cfg)
        scene = synth_ccir(cfg, SparsityModel(kind=ROW, sparsity_level=32), 2)
        assert cfg.n_pulses * cfg.n_samples >= 1e4 / 4  # enough noise samples
        ms = simulate(dico, scene, 12.0, seed=4)
        signal = dico.apply(scene.values)
        realized = 10 * np.log10(
            np.linalg.norm(signal) ** 2 / np.linalg.norm(ms.Y - signal) ** 2
        )
        assert abs(realized - 12.0) < 0.5

    def test_zero_scene_with_finite_snr_rejected(self):
        cfg = config()
        dico = build_dictionary(cfg)
        empty = synth_ccir(cfg, SparsityModel(kind=ROW, sparsity_level=0), 0)
        with pytest.raises(ValueError):
            simulate(dico, empty, 10.0, seed=0)


class TestPerturbSupport:
    def test_zero_fraction_is_identity(self):
        cfg = config()
        scene = synth_ccir(cfg, SparsityModel(kind=ROW, sparsity_level=4), 0)
        assert perturb_support(scene, 0.0, 1) is scene

    def test_ceiling_arithmetic(self):
        cfg = config(n_range_bins=16, group_len=1)  # NMR = 64
        scene = synth_ccir(cfg, SparsityModel(kind=ROW, sparsity_level=20), 0)
        out = perturb_support(scene, 0.05, 1)
        assert out.support.size == 21
        np.testing.assert_array_equal(
            np.intersect1d(out.support, scene.support), scene.support
        )
        # original entries untouched
        np.testing.assert_array_equal(out.values[scene.support], scene.values[scene.support])

    def test_breaks_group_structure(self):
        cfg = config(n_range_bins=32, group_len=4)
        model = SparsityModel(kind=GROUP, sparsity_level=40, group_len=4)
        scene = synth_ccir(cfg, model, 3)
        assert structure_ok(scene.support, GROUP, cfg.n_tx, cfg.n_rx, cfg.n_range_bins, 4)
        out = perturb_support(scene, 0.10, 7)
        assert not structure_ok(out.support, GROUP, cfg.n_tx, cfg.n_rx, cfg.n_range_bins, 4)

    def test_no_room_rejected(self):
        cfg = config(n_tx=1, n_rx=1, n_range_bins=4, bandwidths=(1e5,), amplitudes=(1.0,), group_len=1)
        scene = synth_ccir(cfg, SparsityModel(kind=ROW, sparsity_level=4), 0)
        with pytest.raises(ValueError):
            perturb_support(scene, 0.5, 0)


class TestEvolveScene:
    def base_scene(self):
        cfg = config(n_range_bins=32, group_len=1)  # NMR = 128
        return synth_ccir(cfg, SparsityModel(kind=ROW, sparsity_level=30), 0)

    def test_empty_schedule_constant_support(self):
        scene = self.base_scene()
        slots = evolve_scene(scene, [], seed=1, n_slots=5)
        assert len(slots) == 5
        for slot in slots:
            np.testing.assert_array_equal(slot.support, scene.support)

    def test_shrink_arithmetic(self):
        scene = self.base_scene()
        slots = evolve_scene(scene, [((1, 30), 0.0), ((31, 40), -0.10)], seed=2)
        assert all(s.support.size == 30 for s in slots[:30])
        assert all(s.support.size == 27 for s in slots[30:])

    def test_three_phase_sizes(self):
        scene = self.base_scene()
        schedule = [((1, 30), 0.0), ((31, 60), -0.10), ((61, 100), -0.10)]
        slots = evolve_scene(scene, schedule, seed=3)
        sizes = sorted({s.support.size for s in slots}, reverse=True)
        assert sizes == [30, 27, 25]  # s, ceil(0.9 s), ceil(0.81 s)
        assert len(slots) == 100

    def test_entries_redrawn_per_slot(self):
        scene = self.base_scene()
        slots = evolve_scene(scene, [((1, 3), 0.0)], seed=4)
        assert not np.array_equal(slots[0].values, slots[1].values)
        np.testing.assert_array_equal(slots[0].support, slots[1].support)

    def test_remove_too_many_rejected(self):
        scene = self.base_scene()
        with pytest.raises(ValueError):
            evolve_scene(scene, [((1, 2), -1.5)], seed=0)


class TestSceneFixtures:
    def test_round_trip(self, tmp_path):
        cfg = config()
        model = SparsityModel(kind=JOINT_GROUP, sparsity_level=4, group_len=2)
        scene = synth_ccir(cfg, model, 11)
        path = tmp_path / "scene.txt"
        save_scene(path, scene, cfg, seed=11)
        loaded, header = load_scene(path)
        np.testing.assert_array_equal(loaded.values, scene.values)
        np.testing.assert_array_equal(loaded.support, scene.support)
        assert loaded.model == scene.model
        assert header["seed"] == 11
        assert header["n_pulses"] == cfg.n_pulses

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not a scene\n")
        with pytest.raises(ValueError):
            load_scene(path)
