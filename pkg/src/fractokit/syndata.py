"""Procedural synthetic fracture micrographs with ground truth.

Every image is a deterministic function of (seed, class, magnification,
size). A scene lives in resolution-independent world coordinates: a
band-limited value-noise background, a smooth low-variance mirror disc at
the fracture origin, radial hackle ridges converging on it, and one
class-defining cue rendered at the origin (bright rounded blobs, parallel
striations with a breakout wedge, or a dark elliptical pore). Rendering at
magnification m samples a window of width 50/m world units, so low
magnifications show the whole mirror geometry while the highest ones show
only the cue region. Class identity also shifts the global texture
statistics (hackle density, anisotropy, scattered porosity), which is what
makes the corpus separable for baseline classifiers at every scale.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ImageTooSmall
from .fileio import write_jsonl
from .images import GrayImage, quantize, save_gray
from .manifest import (
    KNOWN_MAGNIFICATIONS,
    FractureClass,
    ImageRecord,
    Magnification,
    ReportEntry,
    TRAINABLE_CLASSES,
    format_filename,
    write_manifest,
)
from .matcher import write_report_table
from .prng import SplitMix64, mix

#: World field of view at the reference magnification (50x spans 1.0).
FOV_AT_50X = 50.0

_U64 = np.uint64
_M1 = _U64(0xBF58476D1CE4E5B9)
_M2 = _U64(0x94D049BB133111EB)
_PX = _U64(0x9E3779B97F4A7C15)
_PY = _U64(0xC2B2AE3D27D4EB4F)


def _mix_u64(v: np.ndarray) -> np.ndarray:
    v = (v ^ (v >> _U64(30))) * _M1
    v = (v ^ (v >> _U64(27))) * _M2
    return v ^ (v >> _U64(31))


def _lattice(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic uniform [0,1) value at integer lattice points."""
    v = ix.astype(np.int64).astype(np.uint64) * _PX
    v = v ^ (iy.astype(np.int64).astype(np.uint64) * _PY)
    v = v ^ _U64(seed & 0xFFFFFFFFFFFFFFFF)
    return (_mix_u64(v + _PX) >> _U64(11)).astype(np.float64) * (2.0**-53)


def _value_noise(x: np.ndarray, y: np.ndarray, freq: float, seed: int) -> np.ndarray:
    """Smoothstep-interpolated lattice noise in [0,1)."""
    xf = x * freq
    yf = y * freq
    x0 = np.floor(xf)
    y0 = np.floor(yf)
    tx = xf - x0
    ty = yf - y0
    tx = tx * tx * (3.0 - 2.0 * tx)
    ty = ty * ty * (3.0 - 2.0 * ty)
    v00 = _lattice(x0, y0, seed)
    v10 = _lattice(x0 + 1.0, y0, seed)
    v01 = _lattice(x0, y0 + 1.0, seed)
    v11 = _lattice(x0 + 1.0, y0 + 1.0, seed)
    top = v00 + tx * (v10 - v00)
    bot = v01 + tx * (v11 - v01)
    return top + ty * (bot - top)


def _u(seed: int, salt: int) -> float:
    """One deterministic uniform in [0,1) per (seed, salt)."""
    return SplitMix64(mix(seed, salt)).next_u64() / 2.0**64


def _smoothstep(edge0: float, edge1: float, x: np.ndarray) -> np.ndarray:
    t = np.clip((x - edge0) / (edge1 - edge0), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


@dataclass(frozen=True)
class SynthSpec:
    fracture_class: FractureClass
    magnification: Magnification
    seed: int
    size: int = 512

    def __post_init__(self):
        if self.size < 64:
            raise ValueError("size must be >= 64")
        if not self.fracture_class.trainable:
            raise ValueError("synthetic images exist only for trainable classes")
        if self.magnification is Magnification.UNKNOWN:
            raise ValueError("magnification must be one of the eight known levels")


@dataclass(frozen=True)
class SynthTruth:
    origin_xy: tuple  # (x, y) pixel of the fracture origin
    defect_bbox: tuple  # (x0, y0, x1, y1), half-open, clipped to the image


@dataclass(frozen=True)
class _Scene:
    """Resolution-independent scene parameters for one specimen."""

    origin: tuple  # world position of the fracture origin
    window_off: tuple  # frame offset in units of fov, fixed across mags
    mirror_r: float
    mirror_aspect: float
    mirror_angle: float
    base: float
    coarse_amps: tuple
    carrier_amp: float
    grain_amp: float
    grain_angle: float
    hackle_n: int
    hackle_phase: float
    hackle_amp: float
    hackle_sharp: float
    band_amp: float
    band_angle: float
    blob_amp: float
    blob_thresh: float
    blob_fade: bool
    halo_amp: float
    halo_r: float
    halo_aspect: float
    halo_angle: float
    halo_lobe: float
    halo_lobe_amp: float
    halo_split: tuple  # offset of the secondary halo lobe, units of halo_r
    mirror_gain: float
    cue_offset: tuple  # tiny world offset of the cue from the origin
    cue_r: float
    cue_angle: float
    noise_seed: int


#: Coarse structure octaves (world frequency). The dense low ladder keeps
#: stable energy inside the hash's 8x8 DCT block at every magnification.
_COARSE_FREQS = (1.2, 2.5, 6.0, 16.0, 32.0)
#: Fine-texture carriers, one per magnification: at field of view 50/m the
#: matching carrier lands near 46 periods per frame. Octaves are gated at
#: 64 periods per frame (band-limiting), so resampling to the audit's
#: 128 px working size never aliases, and at the hash's 32x32 grid the
#: carrier folds outside the low-frequency 8x8 block.
_CARRIER_FREQS = (46.0, 92.0, 230.0, 460.0, 920.0, 1840.0, 3680.0, 9200.0)
#: Band limit: skip octaves beyond this many periods per frame.
_MAX_PERIODS = 64.0
#: Class-signature ladders, one entry per magnification. Machining bands
#: land at ~2.8 periods per frame (inside the hash's 8x8 DCT block);
#: porosity / grain blob lattices land at ~7 cells per frame. Both are
#: smooth large features, so they are stable under jitter.
_BAND_FREQS = (2.8, 5.6, 14.0, 28.0, 56.0, 112.0, 224.0, 560.0)
_BLOB_FREQS = (7.0, 14.0, 35.0, 70.0, 140.0, 280.0, 560.0, 1400.0)
#: Per-rung contrast for scattered-blob ladders that should fade at high
#: magnification (sparse fine porosity), keeping the central defect the
#: dominant high-magnification evidence.
_BLOB_FADE = (1.0, 1.0, 1.0, 1.0, 0.8, 0.6, 0.45, 0.3)
#: Oriented narrow-band grain with per-scale contrast, one frequency per
#: magnification, landing at ~56 periods per frame. This band decorrelates
#: under the strong jitter's crop displacement yet folds outside the
#: hash's 8x8 DCT block on the 32x32 grid, keeping hashes stable under
#: mild jitter. Contrast grows with magnification (finer relief shows more
#: strongly), which also preserves the mild-jitter SSIM floor at low mags.
_GRAIN_BANDS = (
    (56.0, 0.65),
    (112.0, 0.70),
    (280.0, 0.80),
    (560.0, 0.90),
    (1120.0, 1.00),
    (2240.0, 1.05),
    (4480.0, 1.05),
    (11200.0, 0.92),
)


def _build_scene(seed: int, klass: FractureClass) -> _Scene:
    u = lambda salt: _u(seed, salt)
    origin = (0.45 + 0.10 * u(1), 0.45 + 0.10 * u(2))
    window_off = (-0.20 + 0.40 * u(3), -0.20 + 0.40 * u(4))
    # The cue must stay in frame even at 10000x (fov = 0.005).
    cue_offset = (-0.0012 + 0.0024 * u(5), -0.0012 + 0.0024 * u(6))
    if klass is FractureClass.GREEN_BODY:
        return _Scene(
            origin=origin,
            window_off=window_off,
            mirror_r=0.048 + 0.014 * u(7),
            mirror_aspect=0.62 + 0.38 * u(23),
            mirror_angle=2 * math.pi * u(24),
            base=108.0 + 8.0 * u(8),
            coarse_amps=(9.0, 10.0, 12.0, 11.0, 9.0),
            carrier_amp=12.0,
            grain_amp=12.0,
            grain_angle=2 * math.pi * u(16),
            hackle_n=10 + int(4 * u(9)),
            hackle_phase=2 * math.pi * u(10),
            hackle_amp=13.0,
            hackle_sharp=5.0,
            band_amp=0.0,
            band_angle=0.0,
            blob_amp=14.0,
            blob_thresh=0.85 + 0.03 * u(25),
            blob_fade=False,
            halo_amp=13.0,
            halo_r=0.022 + 0.012 * u(17),
            halo_aspect=0.45 + 0.55 * u(18),
            halo_angle=2 * math.pi * u(19),
            halo_lobe=2 * math.pi * u(20),
            halo_lobe_amp=0.6,
            halo_split=(0.35 * math.cos(2 * math.pi * u(26)), 0.35 * math.sin(2 * math.pi * u(26))),
            mirror_gain=9.0,
            cue_offset=cue_offset,
            cue_r=0.0040 + 0.0012 * u(11),
            cue_angle=2 * math.pi * u(12),
            noise_seed=mix(seed, 13),
        )
    if klass is FractureClass.HARD_MACHINING:
        return _Scene(
            origin=origin,
            window_off=window_off,
            mirror_r=0.034 + 0.010 * u(7),
            mirror_aspect=0.62 + 0.38 * u(23),
            mirror_angle=2 * math.pi * u(24),
            base=100.0 + 8.0 * u(8),
            coarse_amps=(7.0, 8.0, 8.0, 8.0, 7.0),
            carrier_amp=10.0,
            grain_amp=12.0,
            grain_angle=2 * math.pi * u(15),
            hackle_n=24 + int(8 * u(9)),
            hackle_phase=2 * math.pi * u(10),
            hackle_amp=15.0,
            hackle_sharp=7.0,
            band_amp=11.0,
            band_angle=2 * math.pi * u(14),
            blob_amp=-10.0,
            blob_thresh=0.85 + 0.03 * u(25),
            blob_fade=False,
            halo_amp=0.0,
            halo_r=0.026,
            halo_aspect=1.0,
            halo_angle=0.0,
            halo_lobe=0.0,
            halo_lobe_amp=0.0,
            halo_split=(0.0, 0.0),
            mirror_gain=6.0,
            cue_offset=cue_offset,
            cue_r=0.0040 + 0.0012 * u(11),
            cue_angle=2 * math.pi * u(12),
            noise_seed=mix(seed, 13),
        )
    return _Scene(
        origin=origin,
        window_off=window_off,
        mirror_r=0.055 + 0.015 * u(7),
        mirror_aspect=0.62 + 0.38 * u(23),
        mirror_angle=2 * math.pi * u(24),
        base=92.0 + 8.0 * u(8),
        coarse_amps=(10.0, 11.0, 14.0, 12.0, 9.0),
        carrier_amp=11.0,
        grain_amp=12.0,
        grain_angle=2 * math.pi * u(16),
        hackle_n=16 + int(6 * u(9)),
        hackle_phase=2 * math.pi * u(10),
        hackle_amp=10.0,
        hackle_sharp=5.0,
        band_amp=0.0,
        band_angle=0.0,
        blob_amp=-24.0,
        blob_thresh=0.84 + 0.04 * u(25),
        blob_fade=True,
        halo_amp=-13.0,
        halo_r=0.024 + 0.012 * u(17),
        halo_aspect=0.35 + 0.65 * u(18),
        halo_angle=2 * math.pi * u(19),
        halo_lobe=2 * math.pi * u(20),
        halo_lobe_amp=0.0,
        halo_split=(0.40 * math.cos(2 * math.pi * u(26)), 0.40 * math.sin(2 * math.pi * u(26))),
        mirror_gain=8.0,
        cue_offset=cue_offset,
        cue_r=0.0009 + 0.0007 * u(11),
        cue_angle=2 * math.pi * u(12),
        noise_seed=mix(seed, 13),
    )


def _world_to_px(w: float, wmin: float, fov: float, size: int) -> float:
    return (w - wmin) / fov * size - 0.5


def generate_image(spec: SynthSpec):
    """Render one micrograph; returns (image, truth)."""
    scene = _build_scene(spec.seed, spec.fracture_class)
    size = spec.size
    fov = FOV_AT_50X / spec.magnification.numeric
    cx = scene.origin[0] + scene.window_off[0] * fov
    cy = scene.origin[1] + scene.window_off[1] * fov
    xmin = cx - fov / 2.0
    ymin = cy - fov / 2.0
    xs = xmin + (np.arange(size, dtype=np.float64) + 0.5) * (fov / size)
    ys = ymin + (np.arange(size, dtype=np.float64) + 0.5) * (fov / size)
    gx = xs[None, :]
    gy = ys[:, None]

    dx = gx - scene.origin[0]
    dy = gy - scene.origin[1]
    r = np.hypot(dx, dy)
    theta = np.arctan2(dy, dx)
    mca = math.cos(scene.mirror_angle)
    msa = math.sin(scene.mirror_angle)
    rm = np.hypot(dx * mca + dy * msa, (-dx * msa + dy * mca) / scene.mirror_aspect)
    mirror = _smoothstep(scene.mirror_r, scene.mirror_r * 0.72, rm)  # 1 inside, 0 outside

    texture = np.zeros((size, size), dtype=np.float64)
    octaves = list(zip(_COARSE_FREQS, scene.coarse_amps))
    octaves += [(f, scene.carrier_amp) for f in _CARRIER_FREQS]
    for i, (freq, amp) in enumerate(octaves):
        if freq * fov > _MAX_PERIODS:
            continue
        texture += amp * (_value_noise(gx, gy, freq, mix(scene.noise_seed, i)) - 0.5)
    warp = 3.0 * (_value_noise(gx, gy, 6.0, mix(scene.noise_seed, 19)) - 0.5)
    for gf, gscale in _GRAIN_BANDS:
        if 32.0 < gf * fov <= _MAX_PERIODS:
            u_axis = gx * math.cos(scene.grain_angle) + gy * math.sin(scene.grain_angle)
            texture += gscale * scene.grain_amp * np.sin(2.0 * math.pi * gf * u_axis + warp)
    # mist ring: rougher band just outside the mirror
    ring = np.exp(-(((rm - 1.25 * scene.mirror_r) / (0.35 * scene.mirror_r)) ** 2))
    texture *= (1.0 - 0.35 * mirror) * (1.0 + 0.45 * ring)

    img = scene.base + texture + scene.mirror_gain * mirror
    if scene.halo_amp != 0.0:
        ca = math.cos(scene.halo_angle)
        sa = math.sin(scene.halo_angle)
        hx = (dx * ca + dy * sa) / scene.halo_r
        hy = (-dx * sa + dy * ca) / (scene.halo_r * scene.halo_aspect)
        halo = 0.62 * np.exp(-(hx * hx + hy * hy))
        ox2 = dx - scene.halo_split[0] * scene.halo_r
        oy2 = dy - scene.halo_split[1] * scene.halo_r
        hx2 = (ox2 * ca + oy2 * sa) / (0.7 * scene.halo_r)
        hy2 = (-ox2 * sa + oy2 * ca) / (0.7 * scene.halo_r * scene.halo_aspect)
        halo = halo + 0.55 * np.exp(-(hx2 * hx2 + hy2 * hy2))
        if scene.halo_lobe_amp > 0.0:
            halo = halo * (1.0 + scene.halo_lobe_amp * np.cos(2.0 * theta + scene.halo_lobe))
        img += scene.halo_amp * halo

    # radial hackle ridges outside the mirror, fading with distance
    ridges = np.maximum(0.0, np.cos(scene.hackle_n * theta + scene.hackle_phase)) ** scene.hackle_sharp
    fade = 1.0 / (1.0 + (r / (8.0 * scene.mirror_r)) ** 2)
    img += scene.hackle_amp * ridges * (1.0 - mirror) * fade

    if scene.band_amp != 0.0:
        ph = gx * math.cos(scene.band_angle) + gy * math.sin(scene.band_angle)
        wave = 4.0 * (_value_noise(gx, gy, 2.0, mix(scene.noise_seed, 23)) - 0.5)
        for bf in _BAND_FREQS:
            if 1.4 < bf * fov <= 3.5:
                img += scene.band_amp * np.cos(2.0 * math.pi * bf * ph + wave) * (1.0 - 0.5 * mirror)

    if scene.blob_amp != 0.0:
        for rung, bf in enumerate(_BLOB_FREQS):
            if 5.0 < bf * fov <= 11.0:
                scale = _BLOB_FADE[rung] if scene.blob_fade else 1.0
                blobs = _value_noise(gx, gy, bf, mix(scene.noise_seed, 21))
                img += scale * scene.blob_amp * _smoothstep(scene.blob_thresh, scene.blob_thresh + 0.09, blobs) * (1.0 - 0.5 * mirror)

    ox = scene.origin[0] + scene.cue_offset[0]
    oy = scene.origin[1] + scene.cue_offset[1]
    img, half_w, half_h = _render_cue(img, gx, gy, ox, oy, scene, spec.fracture_class)

    px = int(np.clip(round(_world_to_px(scene.origin[0], xmin, fov, size)), 0, size - 1))
    py = int(np.clip(round(_world_to_px(scene.origin[1], ymin, fov, size)), 0, size - 1))
    bx0 = int(np.clip(math.floor(_world_to_px(ox - half_w, xmin, fov, size)), 0, size - 1))
    by0 = int(np.clip(math.floor(_world_to_px(oy - half_h, ymin, fov, size)), 0, size - 1))
    bx1 = int(np.clip(math.ceil(_world_to_px(ox + half_w, xmin, fov, size)) + 1, bx0 + 1, size))
    by1 = int(np.clip(math.ceil(_world_to_px(oy + half_h, ymin, fov, size)) + 1, by0 + 1, size))

    return quantize(img), SynthTruth(origin_xy=(px, py), defect_bbox=(bx0, by0, bx1, by1))


def _render_cue(img, gx, gy, ox, oy, scene: _Scene, klass: FractureClass):
    """Draw the class cue; returns (image, world half-width, half-height)."""
    dx = gx - ox
    dy = gy - oy
    d = np.hypot(dx, dy)
    if klass is FractureClass.GREEN_BODY:
        n_blobs = 8 + int(4 * _u(scene.noise_seed, 30))
        sigma = scene.cue_r / 3.0
        for i in range(n_blobs):
            ang = 2 * math.pi * _u(scene.noise_seed, 31 + 2 * i)
            reach = 1.0 if i % 2 == 0 else 2.4
            rad = scene.cue_r * reach * _u(scene.noise_seed, 32 + 2 * i)
            bx = ox + rad * math.cos(ang)
            by = oy + rad * math.sin(ang)
            dd = (gx - bx) ** 2 + (gy - by) ** 2
            img += 32.0 * np.exp(-dd / (2.0 * sigma * sigma))
        half = scene.cue_r * 2.6
        return img, half, half
    if klass is FractureClass.HARD_MACHINING:
        wavelength = scene.cue_r / 3.0
        ux = math.cos(scene.cue_angle)
        uy = math.sin(scene.cue_angle)
        phase = (dx * ux + dy * uy) / wavelength
        envelope = np.exp(-((d / scene.cue_r) ** 2))
        img += 24.0 * np.cos(2.0 * math.pi * phase) * envelope
        # wedge-shaped breakout on one side of the striation field
        wedge_dir = scene.cue_angle + math.pi / 2.0
        ang = np.arctan2(dy, dx) - wedge_dir
        ang = np.arctan2(np.sin(ang), np.cos(ang))  # wrap to [-pi, pi]
        wedge = _smoothstep(0.55, 0.25, np.abs(ang)) * _smoothstep(1.4 * scene.cue_r, 0.9 * scene.cue_r, d)
        img -= 32.0 * wedge
        half = scene.cue_r * 1.4
        return img, half, half
    # material: dark elliptical pore with a faint bright rim
    ra = scene.cue_r * (0.85 + 0.3 * _u(scene.noise_seed, 40))
    rb = scene.cue_r * (0.55 + 0.25 * _u(scene.noise_seed, 41))
    ca = math.cos(scene.cue_angle)
    sa = math.sin(scene.cue_angle)
    xr = (dx * ca + dy * sa) / ra
    yr = (-dx * sa + dy * ca) / rb
    q = xr * xr + yr * yr
    img -= 95.0 * _smoothstep(1.0, 0.72, q)
    img += 10.0 * np.exp(-(((q - 1.15) / 0.18) ** 2))
    n_sat = 2 + int(3 * _u(scene.noise_seed, 49))
    for i in range(n_sat):
        ang = 2 * math.pi * _u(scene.noise_seed, 50 + 2 * i)
        rad = scene.cue_r * (1.6 + 1.4 * _u(scene.noise_seed, 51 + 2 * i))
        sx = ox + rad * math.cos(ang)
        sy = oy + rad * math.sin(ang)
        sr = scene.cue_r * (0.35 + 0.3 * _u(scene.noise_seed, 56 + i))
        depth = 40.0 + 30.0 * _u(scene.noise_seed, 60 + i)
        dd = ((gx - sx) ** 2 + (gy - sy) ** 2) / (sr * sr)
        img -= depth * _smoothstep(1.0, 0.6, dd)
    half_w = 1.02 * math.sqrt((ra * ca) ** 2 + (rb * sa) ** 2)
    half_h = 1.02 * math.sqrt((ra * sa) ** 2 + (rb * ca) ** 2)
    return img, half_w, half_h


# --- near-duplicate construction -------------------------------------------

@dataclass(frozen=True)
class JitterSpec:
    gamma: float = 1.05
    crop_px: int = 1
    noise_sigma: float = 1.0

    def __post_init__(self):
        if not (0.8 <= self.gamma <= 1.25):
            raise ValueError("gamma must be in [0.8, 1.25]")
        if not (0 <= self.crop_px <= 8):
            raise ValueError("crop_px must be in [0, 8]")
        if not (0.0 <= self.noise_sigma <= 4.0):
            raise ValueError("noise_sigma must be in [0, 4]")


STRONG_JITTER = JitterSpec(gamma=1.25, crop_px=8, noise_sigma=4.0)


def make_near_duplicate(img: GrayImage, j: JitterSpec = JitterSpec(), seed: int = 0) -> GrayImage:
    """Gamma shift + symmetric crop-and-rescale + Gaussian noise.

    Identity parameters return an exact pixel copy. Intermediate results
    stay in float; quantisation happens once at the end.
    """
    h, w = img.shape
    if h - 2 * j.crop_px < 64 or w - 2 * j.crop_px < 64:
        raise ImageTooSmall(f"{w}x{h} with crop {j.crop_px} leaves less than 64 px per side")
    if j.gamma == 1.0 and j.crop_px == 0 and j.noise_sigma == 0.0:
        return img.copy()
    out = img.astype(np.float64)
    if j.gamma != 1.0:
        out = 255.0 * (out / 255.0) ** j.gamma
    if j.crop_px > 0:
        c = j.crop_px
        out = kernels.bilinear_resize(np.ascontiguousarray(out[c : h - c, c : w - c]), h, w)
    if j.noise_sigma > 0.0:
        rng = np.random.Generator(np.random.PCG64(seed))
        out = out + rng.normal(0.0, j.noise_sigma, out.shape)
    return quantize(out)


# --- corpus ----------------------------------------------------------------

_SUB_TYPES = {
    FractureClass.GREEN_BODY: "pressing_crack",
    FractureClass.HARD_MACHINING: "grinding_breakout",
    FractureClass.MATERIAL: "pore",
}


@dataclass(frozen=True)
class PlannedImage:
    image_id: str
    filename: str
    spec: SynthSpec
    foan: str
    serial: str
    instance_tag: str
    duplicate_of: str | None = None  # image_id of the jitter source
    corrupted: bool = False


@dataclass(frozen=True)
class CorpusPlan:
    images: list  # PlannedImage
    report: list  # ReportEntry
    duplicate_pairs: list  # (original_id, duplicate_id)


def plan_corpus(n_per_class_per_mag: int, dup_fraction: float = 0.0, corrupt_fraction: float = 0.0, seed: int = 0, size: int = 512) -> CorpusPlan:
    """Lay out specimens, duplicates and corrupted filenames deterministically."""
    if n_per_class_per_mag < 1:
        raise ValueError("n_per_class_per_mag must be >= 1")
    for name, frac in (("dup_fraction", dup_fraction), ("corrupt_fraction", corrupt_fraction)):
        if not (0.0 <= frac < 1.0):
            raise ValueError(f"{name} must be in [0, 1)")

    base: list[PlannedImage] = []
    report = []
    foan_idx = 0
    for klass in TRAINABLE_CLASSES:
        for _ in range(n_per_class_per_mag):
            foan_idx += 1
            foan = f"FOAN-2021-{foan_idx:05d}"
            serial = str(100 + foan_idx)
            report.append(
                ReportEntry(
                    foan=foan,
                    serial=serial,
                    fracture_class=klass,
                    sub_type=_SUB_TYPES[klass],
                    source_report=f"report_{foan_idx:04d}.pdf",
                )
            )
            scene_seed = mix(seed, 100, foan_idx)
            for mag in KNOWN_MAGNIFICATIONS:
                filename = format_filename(foan, serial, "f1", extra=mag.value)
                base.append(
                    PlannedImage(
                        image_id=filename.rsplit(".", 1)[0],
                        filename=filename,
                        spec=SynthSpec(klass, mag, scene_seed, size),
                        foan=foan,
                        serial=serial,
                        instance_tag="f1",
                    )
                )

    n_base = len(base)
    n_dup = round(dup_fraction * n_base)
    order = list(range(n_base))
    SplitMix64(mix(seed, 200)).shuffle(order)
    dup_sources = sorted(order[:n_dup])

    images = list(base)
    pairs = []
    for i in dup_sources:
        src = base[i]
        filename = format_filename(src.foan, src.serial, "f2", extra=src.spec.magnification.value)
        dup = PlannedImage(
            image_id=filename.rsplit(".", 1)[0],
            filename=filename,
            spec=src.spec,
            foan=src.foan,
            serial=src.serial,
            instance_tag="f2",
            duplicate_of=src.image_id,
        )
        images.append(dup)
        pairs.append((src.image_id, dup.image_id))

    n_total = len(images)
    n_corrupt = round(corrupt_fraction * n_total)
    if n_corrupt > n_base:
        raise ValueError("corrupt_fraction too high for the base image pool")
    order = list(range(n_base))
    SplitMix64(mix(seed, 300)).shuffle(order)
    corrupt_set = set(order[:n_corrupt])
    for i in sorted(corrupt_set):
        images[i] = _corrupt_plan(images[i], mix(seed, 301, i))

    return CorpusPlan(images=images, report=report, duplicate_pairs=pairs)


def _corrupt_plan(plan: PlannedImage, seed: int) -> PlannedImage:
    """Rewrite two year digits of the FOAN token in the filename.

    All corpus FOANs share the year, so the corrupted name stays on the
    grammar but sits at edit distance >= 2 from every report entry, which
    keeps its similarity at most 1 - 2/15 < 0.9: deterministically
    unmatchable under the default threshold.
    """
    rng = SplitMix64(seed)
    year = list(plan.foan[5:9])
    pos = [0, 1, 2, 3]
    rng.shuffle(pos)
    for p in pos[:2]:
        year[p] = str((int(year[p]) + 1 + rng.randbelow(9)) % 10)
    bad_foan = f"FOAN-{''.join(year)}-{plan.foan[10:]}"
    filename = format_filename(bad_foan, plan.serial, plan.instance_tag, extra=plan.spec.magnification.value)
    return PlannedImage(
        image_id=filename.rsplit(".", 1)[0],
        filename=filename,
        spec=plan.spec,
        foan=plan.foan,
        serial=plan.serial,
        instance_tag=plan.instance_tag,
        corrupted=True,
    )


def render_planned(plan: PlannedImage, base_cache: dict | None = None, seed: int = 0):
    """Image + truth for one planned entry (duplicates jitter their source)."""
    if plan.duplicate_of is None:
        return generate_image(plan.spec)
    if base_cache is not None and plan.duplicate_of in base_cache:
        src_img, truth = base_cache[plan.duplicate_of]
    else:
        src_img, truth = generate_image(plan.spec)
    noise_seed = mix(seed, 400, plan.spec.seed, plan.spec.magnification.numeric)
    dup = make_near_duplicate(src_img, JitterSpec(), seed=noise_seed)
    return dup, truth


def generate_corpus(n_per_class_per_mag: int, dup_fraction: float = 0.0, corrupt_fraction: float = 0.0, seed: int = 0, size: int = 512):
    """In-memory corpus: (records, report_table, images, truths, dup_pairs).

    ``images`` maps image_id to the rendered array; suitable for desk-scale
    n. Use write_corpus for larger runs.
    """
    plan = plan_corpus(n_per_class_per_mag, dup_fraction, corrupt_fraction, seed, size)
    images = {}
    truths = {}
    records = []
    cache = {}
    for p in plan.images:
        if p.duplicate_of is None:
            img, truth = generate_image(p.spec)
            cache[p.image_id] = (img, truth)
        else:
            img, truth = render_planned(p, cache, seed=seed)
        images[p.image_id] = img
        truths[p.image_id] = truth
        records.append(_plan_record(p))
    return records, plan.report, images, truths, plan.duplicate_pairs


def _plan_record(p: PlannedImage) -> ImageRecord:
    return ImageRecord(
        image_id=p.image_id,
        path=f"images/{p.filename}",
        foan=p.foan,
        serial=p.serial,
        instance_tag=p.instance_tag,
        fracture_class=p.spec.fracture_class,
        magnification=p.spec.magnification,
        fold=None,
    )


def write_corpus(out_dir, n_per_class_per_mag: int, dup_fraction: float = 0.0, corrupt_fraction: float = 0.0, seed: int = 0, size: int = 512) -> CorpusPlan:
    """Generate and write a corpus tree.

    Layout: images/*.png, manifest.jsonl (ground-truth labels), report.jsonl,
    truth_duplicates.jsonl, truth_defects.jsonl.
    """
    out = Path(out_dir)
    plan = plan_corpus(n_per_class_per_mag, dup_fraction, corrupt_fraction, seed, size)

    dup_sources = {p.duplicate_of for p in plan.images if p.duplicate_of is not None}
    cache = {}
    defects = []
    records = []
    for p in plan.images:
        if p.duplicate_of is None:
            img, truth = generate_image(p.spec)
            if p.image_id in dup_sources:
                cache[p.image_id] = (img, truth)
        else:
            img, truth = render_planned(p, cache, seed=seed)
        save_gray(out / "images" / p.filename, img)
        defects.append(
            {
                "image_id": p.image_id,
                "origin_xy": list(truth.origin_xy),
                "defect_bbox": list(truth.defect_bbox),
            }
        )
        records.append(_plan_record(p))

    write_manifest(out / "manifest.jsonl", records)
    write_report_table(out / "report.jsonl", plan.report)
    write_jsonl(out / "truth_duplicates.jsonl", ({"original": a, "duplicate": b} for a, b in plan.duplicate_pairs))
    write_jsonl(out / "truth_defects.jsonl", defects)
    return plan
