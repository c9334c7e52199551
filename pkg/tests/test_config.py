import numpy as np
import pytest

from vesselid import config as cf
from vesselid.errors import ConfigError


def write(tmp_path, text):
    path = tmp_path / "app.toml"
    path.write_text(text)
    return path


class TestLoadConfig:
    def test_defaults_without_file(self):
        cfg = cf.load_config(None)
        assert cfg.identify.d_certain == 0.30
        assert cfg.features.fast_threshold == 20
        assert cfg.histogram.num_bins == 36
        assert cfg.gateway.area.alpha_min == 5e-5

    def test_section_overrides(self, tmp_path):
        path = write(
            tmp_path,
            """
            [imaging]
            num_bins = 18
            blue_hue_lo = 190.0

            [identify]
            d_certain = 0.2
            d_likely = 0.3
            d_uncertain = 0.5

            [features]
            fast_threshold = 15

            [gateway]
            alpha_max = 0.5
            class_allow = [0, 3]

            [service]
            port = 9001
            """,
        )
        cfg = cf.load_config(path)
        assert cfg.histogram.num_bins == 18
        assert cfg.mask.blue_hue_lo == 190.0
        assert cfg.identify.d_certain == 0.2
        assert cfg.features.fast_threshold == 15
        assert cfg.gateway.area.alpha_max == 0.5
        assert cfg.gateway.class_allow == (0, 3)
        assert cfg.service.port == 9001

    def test_unknown_key_rejected(self, tmp_path):
        path = write(tmp_path, "[identify]\nnot_a_knob = 3\n")
        with pytest.raises(ConfigError):
            cf.load_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = write(tmp_path, "[sonar]\nx = 1\n")
        with pytest.raises(ConfigError):
            cf.load_config(path)

    def test_cross_field_constraint_revalidated(self, tmp_path):
        path = write(
            tmp_path,
            "[identify]\nd_certain = 0.5\nd_likely = 0.4\nd_uncertain = 0.6\n",
        )
        with pytest.raises(ConfigError):
            cf.load_config(path)

    def test_geoloc_extrinsics(self, tmp_path):
        rot = [1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0]
        entries = ", ".join(str(v) for v in rot)
        path = write(
            tmp_path,
            f"[geoloc]\nf = 500.0\nextrinsics = [{entries}]\ntarget_height = 2.0\n",
        )
        cfg = cf.load_config(path)
        assert cfg.geoloc.intrinsics.f == 500.0
        assert cfg.geoloc.target_height == 2.0
        assert np.allclose(cfg.geoloc.extrinsics.r_uav_cam, np.array(rot).reshape(3, 3))

    def test_bad_extrinsics_length(self, tmp_path):
        path = write(tmp_path, "[geoloc]\nextrinsics = [1.0, 0.0]\n")
        with pytest.raises(ConfigError):
            cf.load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            cf.load_config(tmp_path / "absent.toml")

    def test_invalid_toml(self, tmp_path):
        path = write(tmp_path, "not valid [toml")
        with pytest.raises(ConfigError):
            cf.load_config(path)
