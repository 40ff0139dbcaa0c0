import numpy as np
import pytest

from slideprompt.errors import ValidationError
from slideprompt.postprocess import (
    CLASSIFIED_DROPPED,
    CLASSIFIED_INVASIVE,
    CLASSIFIED_KEPT,
    PostprocessConfig,
    confidence_filter,
    detect_in_situ,
    postprocess_mask,
)
from slideprompt.raster import (
    BinaryMask,
    LabelMask,
    ProbabilityMap,
    class_plane,
    connected_components,
)

from oracles import naive_refine

CFG = PostprocessConfig()


def make_slide(melanoma_area=50, epidermis_area=1000, touching=True):
    """One melanoma rectangle next to (or away from) one epidermis rectangle."""
    data = np.zeros((60, 80), dtype=np.uint8)
    data[10:30, 10 : 10 + epidermis_area // 20] = 1  # 20 rows tall
    mel_row = 30 if touching else 35
    data[mel_row : mel_row + 5, 10 : 10 + melanoma_area // 5] = 2
    return LabelMask(data)


def random_label_slide(rng, h=48, w=48):
    data = np.zeros((h, w), dtype=np.uint8)
    for cls in (1, 2):
        blob_count = rng.integers(1, 5)
        for _ in range(blob_count):
            y, x = rng.integers(0, h - 8), rng.integers(0, w - 8)
            bh, bw = rng.integers(2, 9, size=2)
            data[y : y + bh, x : x + bw] = cls
    prob = rng.random((h, w)).astype(np.float32)
    return LabelMask(data), ProbabilityMap(prob)


class TestDetectInSitu:
    def test_small_touching_component_is_in_situ(self):
        mask = make_slide(melanoma_area=50)
        mel = connected_components(class_plane(mask, 2), 8)
        epi = connected_components(class_plane(mask, 1), 8)
        in_situ, invasive, partial = detect_in_situ(mel, epi, CFG)
        assert in_situ == {1} and invasive == set()
        assert partial[1].epidermis_ratio == pytest.approx(0.05)

    def test_large_touching_component_stays_invasive(self):
        mask = make_slide(melanoma_area=500)
        mel = connected_components(class_plane(mask, 2), 8)
        epi = connected_components(class_plane(mask, 1), 8)
        in_situ, invasive, _ = detect_in_situ(mel, epi, CFG)
        assert in_situ == set() and invasive == {1}

    def test_untouched_component_stays_invasive(self):
        mask = make_slide(melanoma_area=8, touching=False)
        mel = connected_components(class_plane(mask, 2), 8)
        epi = connected_components(class_plane(mask, 1), 8)
        in_situ, invasive, partial = detect_in_situ(mel, epi, CFG)
        assert invasive == {1}
        assert partial[1].epidermis_ratio is None

    def test_ratio_uses_largest_touched_epidermis(self):
        data = np.zeros((40, 60), dtype=np.uint8)
        data[0:2, 0:5] = 1          # small epidermis, area 10
        data[5:25, 0:50] = 1        # big epidermis, area 1000
        data[2:5, 0:20] = 2         # melanoma area 60 touching both
        mask = LabelMask(data)
        mel = connected_components(class_plane(mask, 2), 8)
        epi = connected_components(class_plane(mask, 1), 8)
        in_situ, _, partial = detect_in_situ(mel, epi, CFG)
        assert partial[1].epidermis_ratio == pytest.approx(60 / 1000)
        assert in_situ == {1}  # 0.06 < 0.1 against the larger neighbor

    def test_alpha_m_zero_disables_detection(self):
        mask = make_slide(melanoma_area=50)
        mel = connected_components(class_plane(mask, 2), 8)
        epi = connected_components(class_plane(mask, 1), 8)
        cfg = PostprocessConfig(alpha_m=0.0)
        in_situ, invasive, _ = detect_in_situ(mel, epi, cfg)
        assert in_situ == set() and invasive == {1}

    def test_alpha_m_monotonicity(self, rng):
        for _ in range(10):
            mask, _ = random_label_slide(rng)
            mel = connected_components(class_plane(mask, 2), 8)
            epi = connected_components(class_plane(mask, 1), 8)
            previous = set()
            for alpha_m in (0.0, 0.05, 0.2, 0.5, 0.99):
                cfg = PostprocessConfig(alpha_m=alpha_m)
                in_situ, _, _ = detect_in_situ(mel, epi, cfg)
                assert previous <= in_situ
                previous = in_situ


class TestConfidenceFilter:
    def _component(self, probs):
        data = np.zeros((3, 12), dtype=np.uint8)
        data[1, 1 : 1 + len(probs)] = 2
        prob = np.zeros((3, 12), dtype=np.float32)
        prob[1, 1 : 1 + len(probs)] = probs
        mask = LabelMask(data)
        mel = connected_components(class_plane(mask, 2), 8)
        return mel, ProbabilityMap(prob)

    def test_half_high_is_kept_at_default_threshold(self):
        mel, prob = self._component([0.9] * 5 + [0.1] * 5)
        kept, ratios = confidence_filter(mel, {1}, prob, CFG)
        assert kept == {1}
        assert ratios[1] == pytest.approx(0.5)

    def test_higher_alpha_c_drops_it(self):
        mel, prob = self._component([0.9] * 5 + [0.1] * 5)
        cfg = PostprocessConfig(alpha_c=0.6)
        kept, _ = confidence_filter(mel, {1}, prob, cfg)
        assert kept == set()

    def test_probability_exactly_beta_is_not_high_confidence(self):
        mel, prob = self._component([0.8] * 10)
        kept, ratios = confidence_filter(mel, {1}, prob, CFG)
        assert ratios[1] == 0.0
        assert kept == set()

    def test_ratio_exactly_alpha_c_is_kept(self):
        mel, prob = self._component([0.9] * 4 + [0.1] * 6)
        kept, _ = confidence_filter(mel, {1}, prob, CFG)  # 0.4 >= 0.4
        assert kept == {1}

    def test_alpha_c_monotonicity(self, rng):
        for _ in range(10):
            mask, prob = random_label_slide(rng)
            mel = connected_components(class_plane(mask, 2), 8)
            candidates = set(mel.ids())
            previous = candidates
            for alpha_c in (0.0, 0.25, 0.5, 0.75, 1.0):
                cfg = PostprocessConfig(alpha_c=alpha_c)
                kept, _ = confidence_filter(mel, candidates, prob, cfg)
                assert kept <= previous
                previous = kept


class TestPostprocessMask:
    def test_no_epidermis_is_identity_on_melanoma_plane(self, rng):
        data = (rng.random((32, 32)) < 0.3).astype(np.uint8) * 2
        mask = LabelMask(data)
        prob = ProbabilityMap(rng.random((32, 32)).astype(np.float32))
        refined, _ = postprocess_mask(mask, prob, CFG)
        assert (refined.data == (data == 2)).all()

    def test_all_low_confidence_touchers_dropped(self):
        mask = make_slide(melanoma_area=50)
        prob = ProbabilityMap(np.full(mask.shape, 0.1, dtype=np.float32))
        refined, report = postprocess_mask(mask, prob, CFG)
        assert refined.count() == 0
        assert report.counts()[CLASSIFIED_DROPPED] == 1

    def test_shrink_only(self, rng):
        for _ in range(10):
            mask, prob = random_label_slide(rng)
            refined, _ = postprocess_mask(mask, prob, CFG)
            assert not (refined.data & ~(mask.data == 2)).any()

    def test_alpha_m_zero_is_identity(self, rng):
        mask, prob = random_label_slide(rng)
        refined, _ = postprocess_mask(mask, prob, PostprocessConfig(alpha_m=0.0))
        assert (refined.data == (mask.data == 2)).all()

    def test_report_covers_every_component_once(self, rng):
        for _ in range(10):
            mask, prob = random_label_slide(rng)
            mel = connected_components(class_plane(mask, 2), 8)
            _, report = postprocess_mask(mask, prob, CFG)
            assert sum(report.counts().values()) == mel.count
            assert [d.component_id for d in report.decisions] == list(mel.ids())

    def test_matches_naive_oracle(self, rng):
        for _ in range(25):
            mask, prob = random_label_slide(rng)
            refined, _ = postprocess_mask(mask, prob, CFG)
            expected = naive_refine(
                mask.data, prob.data, CFG.alpha_m, CFG.beta, CFG.alpha_c, CFG.connectivity
            )
            assert (refined.data == expected).all()

    def test_grid_mismatch_rejected(self):
        mask = LabelMask(np.zeros((4, 4), dtype=np.uint8))
        prob = ProbabilityMap(np.zeros((5, 5), dtype=np.float32))
        with pytest.raises(ValidationError):
            postprocess_mask(mask, prob, CFG)

    def test_report_text_schema(self):
        mask = make_slide(melanoma_area=50)
        prob = ProbabilityMap(np.full(mask.shape, 0.9, dtype=np.float32))
        _, report = postprocess_mask(mask, prob, CFG)
        lines = report.to_text().strip().splitlines()
        assert len(lines) == 1
        cid, area, classified, ratio, conf, touched = lines[0].split("\t")
        assert cid == "1"
        assert area == "50"
        assert classified == CLASSIFIED_KEPT
        assert float(ratio) == pytest.approx(0.05)
        assert float(conf) == 1.0
        assert touched == "1:1000"


class TestConfigValidation:
    def test_bad_thresholds_rejected(self):
        with pytest.raises(ValidationError):
            PostprocessConfig(alpha_m=1.0)
        with pytest.raises(ValidationError):
            PostprocessConfig(beta=0.0)
        with pytest.raises(ValidationError):
            PostprocessConfig(alpha_c=1.5)
        with pytest.raises(ValidationError):
            PostprocessConfig(connectivity=6)
