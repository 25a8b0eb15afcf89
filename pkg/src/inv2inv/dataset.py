"""Procedural toy photos, their sketches and exemplars."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates, zoom

from .energy import EdgeExtractor, image_to_sketch, sketch_to_image
from .errors import DomainError
from .rng import CounterStream, Purpose, stream_id
from .tensorio import read_tensor, write_image, write_tensor

SHAPES = ("ellipse", "triangle", "rectangle", "blob")
EXEMPLAR_KINDS = ("photo", "stroke", "segmentation")

# RGB in [-1, 1]
PALETTE = (
    (0.85, -0.55, -0.6),   # red
    (0.9, 0.2, -0.75),     # orange
    (0.85, 0.75, -0.6),    # yellow
    (-0.45, 0.55, -0.5),   # green
    (-0.7, 0.3, 0.45),     # teal
    (-0.6, -0.3, 0.8),     # blue
    (0.3, -0.6, 0.6),      # purple
    (0.2, -0.3, -0.65),    # brown
)
BACKGROUNDS = (
    (0.8, 0.8, 0.75),
    (0.55, 0.7, 0.85),
    (0.75, 0.85, 0.6),
    (-0.55, -0.5, -0.4),
)


@dataclass(frozen=True)
class ToyDatasetSpec:
    size: int = 32
    channels: int = 3
    shapes: tuple[str, ...] = SHAPES
    palette: tuple[tuple[float, float, float], ...] = PALETTE
    jitter: float = 0.0  # freehand warp amplitude in pixels
    count: int = 64
    seed: int = 0
    exemplar_kinds: tuple[str, ...] = ("photo",)

    def __post_init__(self):
        if self.count < 1:
            raise DomainError("dataset count must be >= 1")
        if self.channels != 3:
            raise DomainError("toy photos are RGB")
        if self.size < 8 or self.size % 4:
            raise DomainError("image size must be a multiple of 4 and >= 8")
        for s in self.shapes:
            if s not in SHAPES:
                raise DomainError(f"unknown shape {s!r}")
        for k in self.exemplar_kinds:
            if k not in EXEMPLAR_KINDS:
                raise DomainError(f"unknown exemplar kind {k!r}")


@dataclass
class ToySample:
    photo: np.ndarray  # (3, H, W) in [-1, 1]
    sketch: np.ndarray  # (1, H, W) in [0, 1]
    exemplar: np.ndarray  # (3, H, W)
    meta: dict = field(default_factory=dict)


_SUPER = 4


def _coverage(kind: str, size: int, u: np.ndarray) -> np.ndarray:
    """Anti-aliased mask of one shape; ``u`` holds 8 uniforms of parameters."""
    n = size * _SUPER
    c = (np.arange(n) + 0.5) / n
    yy, xx = np.meshgrid(c, c, indexing="ij")
    cy, cx = 0.35 + 0.3 * u[0], 0.35 + 0.3 * u[1]
    ry, rx = 0.18 + 0.14 * u[2], 0.18 + 0.14 * u[3]
    th = np.pi * u[4]
    dy, dx = yy - cy, xx - cx
    py = np.cos(th) * dy - np.sin(th) * dx
    px = np.sin(th) * dy + np.cos(th) * dx
    if kind == "ellipse":
        mask = (py / ry) ** 2 + (px / rx) ** 2 <= 1.0
    elif kind == "rectangle":
        mask = (np.abs(py) <= 0.8 * ry) & (np.abs(px) <= 0.8 * rx)
    elif kind == "triangle":
        r = max(ry, rx) * 1.1
        ang = th + np.array([0.0, 2.0, 4.0]) * np.pi / 3
        vy, vx = cy + r * np.cos(ang), cx + r * np.sin(ang)
        mask = np.ones_like(yy, dtype=bool)
        for i in range(3):
            j = (i + 1) % 3
            k = (i + 2) % 3
            side = (vx[j] - vx[i]) * (yy - vy[i]) - (vy[j] - vy[i]) * (xx - vx[i])
            ref = (vx[j] - vx[i]) * (vy[k] - vy[i]) - (vy[j] - vy[i]) * (vx[k] - vx[i])
            mask &= side * np.sign(ref) >= 0
    else:  # blob
        ang = np.arctan2(dy, dx)
        rad = np.hypot(dy, dx)
        r0 = 0.5 * (ry + rx)
        wob = 1.0 + 0.18 * np.cos(2 * ang + 6.0 * u[5]) + 0.12 * np.cos(3 * ang + 6.0 * u[6])
        wob += 0.08 * np.cos(5 * ang + 6.0 * u[7])
        mask = rad <= r0 * wob
    return mask.reshape(size, _SUPER, size, _SUPER).mean(axis=(1, 3))


def _render(kind: str, size: int, fill, background, u: np.ndarray) -> np.ndarray:
    cov = _coverage(kind, size, u)
    ramp = np.linspace(-1.0, 1.0, size)[:, None] * np.ones((1, size))
    bg = np.asarray(background)[:, None, None] * (1.0 - 0.1 * ramp)
    fg = np.asarray(fill)[:, None, None] * (1.0 + 0.12 * ramp.T)
    img = cov * fg + (1.0 - cov) * bg
    return np.clip(img, -1.0, 1.0)


def _strokes(size: int, palette, background, stream: CounterStream) -> np.ndarray:
    img = np.ones((3, size, size)) * np.asarray(background)[:, None, None]
    c = np.arange(size) + 0.5
    yy, xx = np.meshgrid(c, c, indexing="ij")
    for _ in range(5):
        u = stream.uniform((6,))
        col = np.asarray(palette[int(u[0] * len(palette)) % len(palette)])
        y0, x0, y1, x1 = (u[1:5] * size)
        width = 1.5 + 2.5 * u[5]
        d = np.array([y1 - y0, x1 - x0])
        L2 = max(float(d @ d), 1e-9)
        s = np.clip(((yy - y0) * d[0] + (xx - x0) * d[1]) / L2, 0.0, 1.0)
        dist = np.hypot(yy - (y0 + s * d[0]), xx - (x0 + s * d[1]))
        a = np.clip(width - dist, 0.0, 1.0)
        img = a * col[:, None, None] + (1.0 - a) * img
    return img


def _block_mean(img: np.ndarray, f: int) -> np.ndarray:
    C, H, W = img.shape
    m = img.reshape(C, H // f, f, W // f, f).mean(axis=(2, 4))
    return np.repeat(np.repeat(m, f, axis=1), f, axis=2)


def freehand_warp(sketch: np.ndarray, amplitude: float, stream: CounterStream) -> np.ndarray:
    """Warp a sketch with a smooth random displacement field of the given amplitude."""
    if amplitude <= 0:
        return sketch
    H, W = sketch.shape[-2:]
    coarse = stream.normal((2, 4, 4))
    field_ = np.stack([zoom(c, (H / 4, W / 4), order=3) for c in coarse]) * amplitude
    yy, xx = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    coords = np.stack([yy + field_[0], xx + field_[1]])
    out = map_coordinates(sketch[0], coords, order=1, mode="nearest")
    return np.clip(out, 0.0, 1.0)[None]


def _f32(x: np.ndarray) -> np.ndarray:
    return x.astype(np.float32).astype(np.float64)


def generate_samples(spec: ToyDatasetSpec, edge: EdgeExtractor | None = None) -> list[ToySample]:
    edge = edge or EdgeExtractor()
    stream = CounterStream(spec.seed, stream_id(Purpose.DATASET))
    warp = CounterStream(spec.seed, stream_id(Purpose.DATASET, 1))
    out = []
    P, Bg = len(spec.palette), len(BACKGROUNDS)
    for i in range(spec.count):
        u = stream.uniform((24,))
        kind = spec.shapes[int(u[0] * len(spec.shapes)) % len(spec.shapes)]
        fill_i = int(u[1] * P) % P
        bg_i = int(u[2] * Bg) % Bg
        photo = _f32(_render(kind, spec.size, spec.palette[fill_i], BACKGROUNDS[bg_i], u[3:11]))
        # sketch of the stored (float32-exact) photo
        sketch = edge.sketch(photo)
        sketch = _f32(freehand_warp(sketch, spec.jitter, warp))
        ex_kind = spec.exemplar_kinds[int(u[11] * len(spec.exemplar_kinds)) % len(spec.exemplar_kinds)]
        ex_shape = spec.shapes[int(u[12] * len(spec.shapes)) % len(spec.shapes)]
        ex_fill = spec.palette[(fill_i + 1 + int(u[13] * (P - 1))) % P]
        ex_bg = BACKGROUNDS[(bg_i + 1 + int(u[14] * (Bg - 1))) % Bg]
        if ex_kind == "stroke":
            exemplar = _strokes(spec.size, spec.palette, ex_bg, stream)
        else:
            exemplar = _render(ex_shape, spec.size, ex_fill, ex_bg, u[15:23])
            if ex_kind == "segmentation":
                exemplar = _block_mean(exemplar, max(2, spec.size // 8))
        meta = {"id": i, "shape": kind, "fill": fill_i, "background": bg_i,
                "exemplar_kind": ex_kind, "exemplar_shape": ex_shape}
        out.append(ToySample(photo, sketch, _f32(exemplar), meta))
    return out


INDEX_FIELDS = ("id", "shape", "fill", "background", "exemplar_kind", "exemplar_shape",
                "photo", "sketch", "exemplar")


def spec_lines(spec: ToyDatasetSpec) -> list[str]:
    return [
        f"size = {spec.size}",
        f"channels = {spec.channels}",
        f"shapes = {','.join(spec.shapes)}",
        f"jitter = {spec.jitter!r}",
        f"count = {spec.count}",
        f"seed = {spec.seed}",
        f"exemplar_kinds = {','.join(spec.exemplar_kinds)}",
    ]


def generate_toy_dataset(spec: ToyDatasetSpec, out_dir) -> Path:
    """Write photo/sketch/exemplar triples plus ``index.csv`` under ``out_dir``.

    Each array is stored as an exact IVIT tensor and as a PPM/PGM preview.
    Sketch files use image convention (strokes -1, paper +1).
    """
    root = Path(out_dir)
    for sub in ("photos", "sketches", "exemplars"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    rows = []
    for s in generate_samples(spec):
        i = s.meta["id"]
        paths = {"photo": f"photos/{i:05d}", "sketch": f"sketches/{i:05d}",
                 "exemplar": f"exemplars/{i:05d}"}
        write_tensor(root / f"{paths['photo']}.ivit", s.photo)
        write_image(root / f"{paths['photo']}.ppm", s.photo)
        sk_img = sketch_to_image(s.sketch, 1)
        write_tensor(root / f"{paths['sketch']}.ivit", sk_img)
        write_image(root / f"{paths['sketch']}.pgm", sk_img)
        write_tensor(root / f"{paths['exemplar']}.ivit", s.exemplar)
        write_image(root / f"{paths['exemplar']}.ppm", s.exemplar)
        rows.append({**s.meta, **{k: v + ".ivit" for k, v in paths.items()}})
    with open(root / "index.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=INDEX_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    (root / "dataset.txt").write_text("\n".join(spec_lines(spec)) + "\n")
    return root


def load_dataset(root) -> list[ToySample]:
    root = Path(root)
    out = []
    with open(root / "index.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            sketch = image_to_sketch(read_tensor(root / row["sketch"]))
            out.append(ToySample(read_tensor(root / row["photo"]), sketch,
                                 read_tensor(root / row["exemplar"]), dict(row)))
    return out
