"""Shared fixtures and independent reference helpers for the test suite."""

import math

import numpy as np
import pytest

from vesselid.imaging import ImageBuffer


def hsv_to_rgb_reference(h, s, v):
    """Scalar HSV -> 8-bit RGB, written independently of the package code."""
    c = v * s
    hp = (h % 360.0) / 60.0
    x = c * (1 - abs(hp % 2 - 1))
    if hp < 1:
        r, g, b = c, x, 0.0
    elif hp < 2:
        r, g, b = x, c, 0.0
    elif hp < 3:
        r, g, b = 0.0, c, x
    elif hp < 4:
        r, g, b = 0.0, x, c
    elif hp < 5:
        r, g, b = x, 0.0, c
    else:
        r, g, b = c, 0.0, x
    m = v - c
    return tuple(int(round((u + m) * 255.0)) for u in (r, g, b))


def solid_image(width, height, rgb, alpha=None):
    pixels = np.zeros((height, width, 3), dtype=np.uint8)
    pixels[:, :] = rgb
    a = None
    if alpha is not None:
        a = np.full((height, width), alpha, dtype=np.uint8)
    return ImageBuffer.from_array(pixels, a)


def smooth_asymmetric_patch(size, seed):
    """Low-frequency asymmetric intensity patch for orientation/steering tests."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    cx = cy = (size - 1) / 2.0
    img = np.full((size, size), 80.0)
    for _ in range(6):
        gx = rng.uniform(0.15, 0.85) * size
        gy = rng.uniform(0.15, 0.85) * size
        sigma = rng.uniform(0.08, 0.2) * size
        amp = rng.uniform(40.0, 120.0) * rng.choice([-1.0, 1.0])
        img += amp * np.exp(-(((xs - gx) ** 2 + (ys - gy) ** 2) / (2 * sigma * sigma)))
    # Gradient breaks symmetry decisively.
    img += 30.0 * (xs - cx) / size
    return np.clip(img, 0, 255).astype(np.uint8)


def rotate_patch(patch, angle):
    """Bilinear rotation about the patch center (independent of package code)."""
    size = patch.shape[0]
    c = (size - 1) / 2.0
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    ca, sa = math.cos(-angle), math.sin(-angle)
    sx = ca * (xs - c) - sa * (ys - c) + c
    sy = sa * (xs - c) + ca * (ys - c) + c
    sx = np.clip(sx, 0, size - 1)
    sy = np.clip(sy, 0, size - 1)
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    x1 = np.minimum(x0 + 1, size - 1)
    y1 = np.minimum(y0 + 1, size - 1)
    wx = sx - x0
    wy = sy - y0
    p = patch.astype(np.float64)
    top = p[y0, x0] * (1 - wx) + p[y0, x1] * wx
    bot = p[y1, x0] * (1 - wx) + p[y1, x1] * wx
    return np.clip(np.floor(top * (1 - wy) + bot * wy + 0.5), 0, 255).astype(np.uint8)


@pytest.fixture(scope="session")
def scenario_templates():
    """Rendered target templates plus their loaded models (session cache)."""
    from vesselid import identify as idf, synth

    spec = synth.ScenarioSpec()
    boats = synth.scenario_template_boats(spec)
    img1 = synth.render_boat_template(boats[0], spec.template_canvas, seed=spec.seed * 31 + 1)
    img2 = synth.render_boat_template(boats[1], spec.template_canvas, seed=spec.seed * 31 + 2)
    model1 = idf.load_template(img1, 1)
    model2 = idf.load_template(img2, 2)
    return {"spec": spec, "images": (img1, img2), "models": (model1, model2)}


@pytest.fixture(scope="session")
def mini_dataset(tmp_path_factory):
    """A small generated dataset shared by CLI and mission tests."""
    from vesselid import synth

    root = tmp_path_factory.mktemp("dataset")
    spec = synth.ScenarioSpec(frames=16, seed=11)
    synth.write_scenario_dataset(spec, root / "data")
    return {"spec": spec, "dir": root / "data"}


@pytest.fixture(scope="session")
def mini_bundle(mini_dataset, tmp_path_factory):
    from vesselid import identify as idf
    from vesselid.imaging import ImageBuffer as IB

    src = mini_dataset["dir"] / "templates_src"
    img1 = IB.load_png(src / "template1.png")
    img2 = IB.load_png(src / "template2.png")
    models = [idf.load_template(img1, 1), idf.load_template(img2, 2)]
    out = tmp_path_factory.mktemp("bundle") / "templates"
    idf.save_template_bundle(out, models, [img1, img2])
    return out
