"""TOML application config with strict key checking.

Every section maps onto one module's config dataclass; cross-field
constraints are re-validated on load so a bad file fails immediately
instead of surprising the pipeline mid-run.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .features import FeatureConfig
from .gateway import AreaFilterConfig
from .geoloc import CameraIntrinsics, Extrinsics
from .identify import IdentifyConfig
from .imaging import HistogramConfig, MaskConfig
from .synth import nadir_camera_rotation


@dataclass(frozen=True)
class GeolocConfig:
    intrinsics: CameraIntrinsics
    extrinsics: Extrinsics
    target_height: float = 1.0
    sync_tolerance: float = 0.1


@dataclass(frozen=True)
class GatewayConfig:
    area: AreaFilterConfig
    fps: float = 10.0
    class_allow: Optional[Tuple[int, ...]] = None  # None passes all classes
    queue_capacity: int = 8


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8008
    history_cap: int = 256


@dataclass(frozen=True)
class AppConfig:
    mask: MaskConfig
    histogram: HistogramConfig
    features: FeatureConfig
    identify: IdentifyConfig
    geoloc: GeolocConfig
    gateway: GatewayConfig
    service: ServiceConfig


def _default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(f=600.0, cx_pp=320.0, cy_pp=240.0, width=640, height=480)


def default_config() -> AppConfig:
    return AppConfig(
        mask=MaskConfig(),
        histogram=HistogramConfig(),
        features=FeatureConfig(),
        identify=IdentifyConfig(),
        geoloc=GeolocConfig(
            intrinsics=_default_intrinsics(),
            extrinsics=Extrinsics(nadir_camera_rotation()),
        ),
        gateway=GatewayConfig(area=AreaFilterConfig()),
        service=ServiceConfig(),
    )


def _take(section: Dict[str, Any], name: str, allowed: Sequence[str]) -> Dict[str, Any]:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {', '.join(sorted(unknown))}")
    return dict(section)


def _build(cls, section: Dict[str, Any], name: str):
    allowed = [f.name for f in fields(cls)]
    try:
        return cls(**_take(section, name, allowed))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def config_from_dict(raw: Dict[str, Any]) -> AppConfig:
    known_sections = {"imaging", "features", "identify", "geoloc", "gateway", "service"}
    unknown = set(raw) - known_sections
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown))}")

    imaging = dict(raw.get("imaging", {}))
    mask_keys = [f.name for f in fields(MaskConfig)]
    hist_keys = [f.name for f in fields(HistogramConfig)]
    _take(imaging, "imaging", mask_keys + hist_keys)
    mask = _build(MaskConfig, {k: v for k, v in imaging.items() if k in mask_keys}, "imaging")
    hist = _build(HistogramConfig, {k: v for k, v in imaging.items() if k in hist_keys}, "imaging")

    features = _build(FeatureConfig, dict(raw.get("features", {})), "features")
    identify = _build(IdentifyConfig, dict(raw.get("identify", {})), "identify")

    geoloc_raw = dict(raw.get("geoloc", {}))
    geoloc_keys = ["f", "cx_pp", "cy_pp", "width", "height",
                   "extrinsics", "target_height", "sync_tolerance"]
    _take(geoloc_raw, "geoloc", geoloc_keys)
    defaults = _default_intrinsics()
    try:
        intrinsics = CameraIntrinsics(
            f=float(geoloc_raw.get("f", defaults.f)),
            cx_pp=float(geoloc_raw.get("cx_pp", defaults.cx_pp)),
            cy_pp=float(geoloc_raw.get("cy_pp", defaults.cy_pp)),
            width=int(geoloc_raw.get("width", defaults.width)),
            height=int(geoloc_raw.get("height", defaults.height)),
        )
        ext_values = geoloc_raw.get("extrinsics")
        if ext_values is None:
            extrinsics = Extrinsics(nadir_camera_rotation())
        else:
            if len(ext_values) != 9:
                raise ConfigError("extrinsics needs 9 row-major entries")
            extrinsics = Extrinsics(np.array(ext_values, dtype=float).reshape(3, 3))
        geo = GeolocConfig(
            intrinsics=intrinsics,
            extrinsics=extrinsics,
            target_height=float(geoloc_raw.get("target_height", 1.0)),
            sync_tolerance=float(geoloc_raw.get("sync_tolerance", 0.1)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[geoloc]: {exc}") from exc

    gateway_raw = dict(raw.get("gateway", {}))
    gw_keys = ["alpha_min", "alpha_max", "fps", "class_allow", "queue_capacity"]
    _take(gateway_raw, "gateway", gw_keys)
    try:
        area = AreaFilterConfig(
            alpha_min=float(gateway_raw.get("alpha_min", AreaFilterConfig().alpha_min)),
            alpha_max=float(gateway_raw.get("alpha_max", AreaFilterConfig().alpha_max)),
        )
    except ValueError as exc:
        raise ConfigError(f"[gateway]: {exc}") from exc
    allow = gateway_raw.get("class_allow")
    gateway = GatewayConfig(
        area=area,
        fps=float(gateway_raw.get("fps", 10.0)),
        class_allow=None if allow in (None, []) else tuple(int(c) for c in allow),
        queue_capacity=int(gateway_raw.get("queue_capacity", 8)),
    )

    service = _build(ServiceConfig, dict(raw.get("service", {})), "service")

    return AppConfig(
        mask=mask, histogram=hist, features=features, identify=identify,
        geoloc=geo, gateway=gateway, service=service,
    )


def load_config(path: Optional[str] = None) -> AppConfig:
    """Load a TOML config file; missing path means all defaults."""
    if path is None:
        return default_config()
    file_path = Path(path)
    if not file_path.exists():
        raise ConfigError(f"config file not found: {file_path}")
    try:
        raw = tomllib.loads(file_path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {file_path}: {exc}") from exc
    return config_from_dict(raw)
