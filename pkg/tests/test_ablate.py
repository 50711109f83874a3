import json

import numpy as np
import pytest

from depthfill import ablate
from depthfill.scenegen import generate_scene


class TestSuites:
    def test_standard_suite_shape(self):
        suite = ablate.standard_suite()
        assert len(suite) == 10
        for spec in suite:
            assert (spec.height, spec.width) == (128, 128)
            assert 8 <= spec.region_count <= 16
            assert spec.texture_mode in ("noise_texture", "per_region_shade")

    def test_standard_suite_is_unclipped(self):
        for i, spec in enumerate(ablate.standard_suite()):
            scene = generate_scene(spec)
            assert not scene.clipped, f"scene {i} clipped"

    def test_window_suite_shape(self):
        suite = ablate.window_suite()
        assert len(suite) == 6
        for spec in suite:
            assert spec.layout == "vertical_strips"
            assert spec.texture_mode in ("noise_texture", "per_region_shade")
            assert not generate_scene(spec).clipped

    def test_suites_have_noise_textured_scenes(self):
        # the guidance study needs a non-trivial noise_texture subset
        noise = [s for s in ablate.standard_suite()
                 if s.texture_mode == "noise_texture"]
        assert len(noise) >= 3

    def test_sample_count_is_two_percent(self):
        assert ablate.suite_sample_count() == round(0.02 * 128 * 128) == 328

    def test_region_planes_anchor_steep_entries(self):
        planes = ablate.region_planes(4, 2.0, 3.0,
                                      steep={2: (0.5, 0.0, 10.0, 0.0)})
        a, b, c = planes[2]
        assert (a, b) == (0.5, 0.0)
        # plane value at the anchor column equals the cycled offset
        center = 2.0 + ((2 * 0.37) % 1.0) * 1.0
        assert a * 10.0 + c == pytest.approx(center)


class TestGrids:
    def test_term_grid_has_all_eight_combos(self):
        rows = ablate.term_grid()
        names = [name for name, _ in rows]
        assert len(rows) == 8 and len(set(names)) == 8
        assert "dc" in names and "dc_gc_sms_guided" in names
        for name, cfg in rows:
            guided = name.endswith("_guided")
            assert cfg.gc.basis == ("mask" if guided else "image")
            assert cfg.sms.variant == ("selective_mask" if guided
                                       else "image_smooth")
            assert ("gc" in cfg.terms) == ("_gc" in name)
            assert ("sms" in cfg.terms) == ("_sms" in name)

    def test_window_grid_equalizes_selection_budget(self):
        # 1/64 of the window area keeps the total selected-pixel budget at
        # 256 per iteration for every window size in the sweep
        for name, cfg in ablate.window_grid():
            w = cfg.gc.window_size
            per_window = max(1, round(cfg.gc.select_fraction * w * w))
            windows = (128 // w) ** 2
            assert per_window * windows == 256, name

    def test_smoothness_grid_covers_variants(self):
        names = [name for name, _ in ablate.smoothness_grid()]
        assert names == ["selective_mask", "mask_all_gradients",
                         "mask_smooth", "image_smooth"]

    def test_guidance_grid_differs_only_in_basis(self):
        (mn, mcfg), (im, icfg) = ablate.guidance_grid()
        assert mcfg.gc.basis == "mask" and icfg.gc.basis == "image"
        assert mcfg.gc.window_size == icfg.gc.window_size
        assert mcfg.terms == icfg.terms


def tiny_scenes():
    return ablate.standard_suite()[:2]


class TestRunners:
    def test_cells_are_ordered_and_complete(self):
        res = ablate.smoothness_study(seeds=(3, 4), cap=12,
                                      scenes=tiny_scenes())
        assert len(res.cells) == 4 * 2 * 2
        key = [(c["config_index"], c["scene"], c["seed"]) for c in res.cells]
        assert key == sorted(key)
        for cell in res.cells:
            assert cell["termination"] in ("converged", "max_iterations")
            assert np.isfinite(cell["rmse"])

    def test_study_reruns_are_identical(self):
        a = ablate.guidance_study(seeds=(5,), cap=10, scenes=tiny_scenes())
        b = ablate.guidance_study(seeds=(5,), cap=10, scenes=tiny_scenes())
        assert a.to_payload() == b.to_payload()

    def test_payload_is_json_ready(self):
        res = ablate.window_study(seeds=(5,), cap=8,
                                  scenes=ablate.window_suite()[:1])
        text = json.dumps(res.to_payload(), sort_keys=True)
        back = json.loads(text)
        assert back["table"] == "window"
        assert {r["name"] for r in back["rows"]} == {
            "mask_full", "mask_w64", "mask_w16", "mask_w8", "image_w8"}

    def test_term_study_reports_required_orderings(self):
        res = ablate.term_study(seeds=(5,), cap=8, scenes=tiny_scenes())
        names = {o["name"] for o in res.orderings}
        assert {"dc>dc_sms", "dc_sms>dc_gc", "dc_gc>dc_gc_sms_guided",
                "gc_halves_dc_error", "guided_full_is_best"} <= names
        assert isinstance(res.all_passed, bool)

    def test_studies_registry(self):
        assert set(ablate.STUDIES) == set(ablate.TABLE_NAMES)
