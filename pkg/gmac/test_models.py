# gmac/test_models.py
"""
Tests for degree distributions, bundles, run configurations and BER reports.
"""
import os
import sys

import pytest
from pydantic import ValidationError

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from gmac.errors import DesignError
from gmac.models import (
    BerReport, ComponentStats, DegreeDistribution, DesignConfig, LevelDesign, RunManifest, SimConfig,
    config_hash,
)


class TestDegreeDistribution:

    def test_renormalizes_rounded_fractions(self):
        dd = DegreeDistribution(lambdas={2: 0.3609, 3: 0.4312, 34: 0.1749, 35: 0.0330}, d_c=6)
        assert sum(dd.lambdas.values()) == pytest.approx(1.0, abs=1e-12)

    def test_rejects_bad_fractions(self):
        with pytest.raises(ValidationError):
            DegreeDistribution(lambdas={2: 0.5, 3: 0.4}, d_c=6)
        with pytest.raises(ValidationError):
            DegreeDistribution(lambdas={1: 1.0}, d_c=6)
        with pytest.raises(ValidationError):
            DegreeDistribution(lambdas={}, d_c=6)

    def test_alias_and_zero_entries(self):
        dd = DegreeDistribution.model_validate({"lambda": {"2": 0.5, "3": 0.5, "7": 0.0}, "d_c": 6})
        assert dd.lambdas == {2: 0.5, 3: 0.5}
        assert dd.max_degree == 3

    def test_from_vector(self):
        dd = DegreeDistribution.from_vector([2, 3, 4], [0.5, 1e-12, 0.5], 8)
        assert list(dd.degrees) == [2, 4]
        assert dd.edges_per_node() == pytest.approx(0.375)
        assert dd.design_rate() == pytest.approx(1.0 - 0.125 / 0.375)

    def test_rate_must_be_positive(self):
        with pytest.raises(DesignError):
            DegreeDistribution.regular(3, 3).design_rate()


class TestLevelDesign:

    def test_rate_filled_in(self):
        code = LevelDesign(user=1, level=2, dsnr_db=18.0, constellation="OPT", d_c=20, lambdas={2: 1.0})
        assert code.design_rate == pytest.approx(0.9)

    def test_dump_uses_alias(self):
        code = LevelDesign(user=2, level=1, dsnr_db=10.0, constellation="MC", d_c=6, lambdas={3: 1.0})
        assert "lambda" in code.model_dump(by_alias=True)


class TestConfigs:

    def test_design_config_bounds(self):
        assert DesignConfig(constellation="MC", snr_db=10.0).dc_range == (4, 12)
        with pytest.raises(ValidationError):
            DesignConfig(constellation="MC", snr_db=10.0, delta=0.2)
        with pytest.raises(ValidationError):
            DesignConfig(constellation="MC", snr_db=10.0, dc_range=(8, 4))

    def test_sim_config(self):
        with pytest.raises(ValidationError):
            SimConfig(bundle="x", snr_db=[])
        cfg = SimConfig(bundle="x", snr_db=[8.0])
        assert cfg.threads >= 1 and not cfg.genie

    def test_config_hash(self):
        a = SimConfig(bundle="x", snr_db=[8.0], seed=1)
        assert config_hash(a) == config_hash(SimConfig(bundle="x", snr_db=[8.0], seed=1))
        assert config_hash(a) != config_hash(SimConfig(bundle="x", snr_db=[8.0], seed=2))
        assert len(config_hash(a)) == 16


class TestReports:

    def test_component_rates(self):
        stats = ComponentStats(snr_db=8.0, user=1, level=1, bit_errors=5, bits=1000, frame_errors=2, frames=10)
        assert stats.ber == pytest.approx(0.005)
        assert stats.fer == pytest.approx(0.2)
        low, high = stats.ber_interval
        assert low < 0.005 < high
        assert ComponentStats(snr_db=8.0, user=1, level=1, bit_errors=150, bits=1000).ber_interval is None
        assert ComponentStats(snr_db=8.0, user=1, level=1).ber == 0.0

    def test_averaged(self):
        report = BerReport(channel_constellation="MC", design="mc_10db", components=[
            ComponentStats(snr_db=8.0, user=1, level=1, bit_errors=10, bits=100),
            ComponentStats(snr_db=8.0, user=2, level=1, bit_errors=30, bits=100),
            ComponentStats(snr_db=9.0, user=1, level=1, bit_errors=0, bits=100),
        ])
        assert report.snr_points == [8.0, 9.0]
        assert report.averaged() == {8.0: pytest.approx(0.2), 9.0: 0.0}
        assert report.to_json()["averaged"][0] == {"snr_db": 8.0, "ber": pytest.approx(0.2)}

    def test_manifest_defaults(self):
        manifest = RunManifest(command="capacity", config_hash="abc", started_at="2024-01-01T00:00:00")
        assert manifest.status == "ok"
        assert manifest.tool_version
