"""Gaze ingestion and synthesis.

Fixation records enter either from disk (comma-separated text, one
fixation per row) or from the simulator, which fabricates a plausible
two-stage annotation pass (rough scan, then thorough coverage) over a
ground-truth mask. All downstream code sees image-frame pixel
coordinates only; screen-frame data must be mapped at parse time by
supplying a :class:`DisplayGeometry`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ParseError, ValidationError
from .seeding import derive_seed

FIXATION_HEADER = "image_id,x,y,onset_ms,duration_ms"

# Fraction of cover fixations allocated to the central band; annotators
# dwell on object interiors before tracing boundaries.
CENTRAL_COVER_FRACTION = 0.6


@dataclass(frozen=True)
class GazeSample:
    """One fixation: position in image pixels, onset/duration in ms."""

    x: float
    y: float
    onset: float
    duration: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError(f"fixation position must be finite, got ({self.x}, {self.y})")
        if self.duration < 0:
            raise ValidationError(f"fixation duration must be >= 0, got {self.duration}")
        if self.onset < 0:
            raise ValidationError(f"fixation onset must be >= 0, got {self.onset}")


@dataclass
class GazeSequence:
    """Ordered fixations for one image, in image pixel coordinates."""

    image_id: str
    width: int
    height: int
    samples: list[GazeSample] = field(default_factory=list)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"image extent must be positive, got {self.width}x{self.height}")
        onsets = [s.onset for s in self.samples]
        if any(b < a for a, b in zip(onsets, onsets[1:])):
            raise ValidationError("samples must be ordered by non-decreasing onset")

    def positions(self) -> np.ndarray:
        """(N, 2) array of (x, y) positions."""
        return np.array([[s.x, s.y] for s in self.samples], dtype=np.float64).reshape(-1, 2)

    def durations(self) -> np.ndarray:
        return np.array([s.duration for s in self.samples], dtype=np.float64)


@dataclass(frozen=True)
class DisplayGeometry:
    """Where the stimulus image sat on the recording screen."""

    screen_w: int
    screen_h: int
    image_display_w: int
    image_display_h: int
    image_offset_x: int
    image_offset_y: int

    def __post_init__(self):
        for name in ("screen_w", "screen_h", "image_display_w", "image_display_h"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if (self.image_offset_x < 0 or self.image_offset_y < 0
                or self.image_offset_x + self.image_display_w > self.screen_w
                or self.image_offset_y + self.image_display_h > self.screen_h):
            raise ValidationError("displayed image must fit inside the screen")

    def to_image(self, x, y, image_w=None, image_h=None):
        """Screen pixels -> image pixels (native size defaults to the display extent)."""
        image_w = self.image_display_w if image_w is None else image_w
        image_h = self.image_display_h if image_h is None else image_h
        ix = (x - self.image_offset_x) * (image_w / self.image_display_w)
        iy = (y - self.image_offset_y) * (image_h / self.image_display_h)
        return ix, iy

    def to_screen(self, ix, iy, image_w=None, image_h=None):
        image_w = self.image_display_w if image_w is None else image_w
        image_h = self.image_display_h if image_h is None else image_h
        x = ix * (self.image_display_w / image_w) + self.image_offset_x
        y = iy * (self.image_display_h / image_h) + self.image_offset_y
        return x, y


_GEOMETRY_KEYS = {
    "screen_w": "screen_w",
    "screen_h": "screen_h",
    "image_display_w": "image_display_w",
    "image_display_h": "image_display_h",
    "offset_x": "image_offset_x",
    "offset_y": "image_offset_y",
}


def parse_geometry(text: str) -> DisplayGeometry:
    """Parse the key-value geometry block (``key = value`` lines, # comments)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", line=lineno)
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _GEOMETRY_KEYS:
            raise ParseError(f"unknown geometry key {key!r}", line=lineno)
        try:
            values[_GEOMETRY_KEYS[key]] = int(val.strip())
        except ValueError:
            raise ParseError(f"geometry value for {key!r} must be an integer", line=lineno) from None
    missing = set(_GEOMETRY_KEYS.values()) - set(values)
    if missing:
        raise ParseError(f"geometry block missing keys: {sorted(missing)}")
    return DisplayGeometry(**values)


@dataclass
class ParseReport:
    """Bookkeeping from one parse pass."""

    n_rows: int = 0
    n_sequences: int = 0
    clamped: dict[str, int] = field(default_factory=dict)
    inferred_sizes: list[str] = field(default_factory=list)

    @property
    def n_clamped(self) -> int:
        return sum(self.clamped.values())


def parse_fixation_file(stream, geometry: DisplayGeometry | None = None,
                        image_sizes: dict[str, tuple[int, int]] | None = None):
    """Parse fixation records into one :class:`GazeSequence` per image.

    `stream` yields text lines in the documented format (header row
    ``image_id,x,y,onset_ms,duration_ms``). With `geometry`, coordinates
    are read as screen pixels and mapped to the image frame; without it
    they are taken as image pixels already. `image_sizes` supplies
    native image extents per id; otherwise the display extent (with
    geometry) or the observed coordinate range (without) is used.
    Fixations mapping outside the image are clamped to the border and
    counted in the report, never dropped.
    """
    seqs, _ = parse_fixation_file_with_report(stream, geometry, image_sizes)
    return seqs


def parse_fixation_file_with_report(stream, geometry=None, image_sizes=None):
    rows = {}
    lineno = 0
    header_seen = False
    for raw in stream:
        lineno += 1
        line = raw.strip()
        if not line:
            continue
        if not header_seen:
            if line.replace(" ", "") != FIXATION_HEADER:
                raise ParseError(
                    f"expected header {FIXATION_HEADER!r}, got {line!r}", line=lineno)
            header_seen = True
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 5:
            raise ParseError(f"expected 5 columns, got {len(parts)}", line=lineno)
        image_id = parts[0]
        try:
            x, y, onset, duration = (float(p) for p in parts[1:])
        except ValueError:
            raise ParseError(f"non-numeric field in {parts[1:]!r}", line=lineno) from None
        if duration < 0:
            raise ValidationError(f"line {lineno}: negative duration {duration}")
        if onset < 0:
            raise ValidationError(f"line {lineno}: negative onset {onset}")
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValidationError(f"line {lineno}: non-finite position ({x}, {y})")
        rows.setdefault(image_id, []).append((onset, x, y, duration))

    report = ParseReport(n_rows=sum(len(v) for v in rows.values()))
    sequences = []
    for image_id in rows:
        recs = sorted(rows[image_id], key=lambda r: r[0])
        xs = np.array([r[1] for r in recs])
        ys = np.array([r[2] for r in recs])
        if geometry is not None:
            native = (image_sizes or {}).get(image_id)
            w, h = native if native else (geometry.image_display_w, geometry.image_display_h)
            xs, ys = geometry.to_image(xs, ys, w, h)
        elif image_sizes and image_id in image_sizes:
            w, h = image_sizes[image_id]
        else:
            # no bounds available: infer the extent from the data itself
            w = int(np.floor(xs.max())) + 1 if len(xs) else 1
            h = int(np.floor(ys.max())) + 1 if len(ys) else 1
            report.inferred_sizes.append(image_id)
        cx = np.clip(xs, 0.0, w - 1.0)
        cy = np.clip(ys, 0.0, h - 1.0)
        n_clamped = int(np.sum((cx != xs) | (cy != ys)))
        if n_clamped:
            report.clamped[image_id] = n_clamped
        samples = [GazeSample(float(px), float(py), float(r[0]), float(r[3]))
                   for px, py, r in zip(cx, cy, recs)]
        sequences.append(GazeSequence(image_id, int(w), int(h), samples))
    report.n_sequences = len(sequences)
    return sequences, report


def write_fixation_file(sequences, stream) -> None:
    """Serialize sequences in the documented format.

    Floats are written with shortest round-trip precision, so
    parse -> write -> parse reproduces numeric content exactly.
    """
    stream.write(FIXATION_HEADER + "\n")
    for seq in sequences:
        for s in seq.samples:
            stream.write(f"{seq.image_id},{s.x!r},{s.y!r},{s.onset!r},{s.duration!r}\n")


def rescale_sequence(seq: GazeSequence, width: int, height: int) -> GazeSequence:
    """Rescale fixation coordinates to a new image resolution."""
    if width <= 0 or height <= 0:
        raise ValidationError("target extent must be positive")
    sx = width / seq.width
    sy = height / seq.height
    samples = [GazeSample(s.x * sx, s.y * sy, s.onset, s.duration) for s in seq.samples]
    return GazeSequence(seq.image_id, width, height, samples)


@dataclass(frozen=True)
class SimulatorConfig:
    """Knobs for the synthetic annotator."""

    n_scan_fixations: int = 8
    n_cover_fixations: int = 40
    jitter_sigma: float = 1.5
    distractor_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_scan_fixations < 0 or self.n_cover_fixations < 0:
            raise ValidationError("fixation counts must be >= 0")
        if self.jitter_sigma < 0:
            raise ValidationError("jitter_sigma must be >= 0")
        if not 0.0 <= self.distractor_rate <= 1.0:
            raise ValidationError("distractor_rate must be in [0, 1]")


def _coverage_bands(mask):
    """Split the mask into a central band and a boundary band."""
    area = int(mask.sum())
    n_erode = max(1, int(round(0.08 * math.sqrt(area))))
    central = ndimage.binary_erosion(mask, iterations=n_erode)
    if not central.any():
        central = mask.copy()
    boundary = mask & ~central
    if not boundary.any():
        boundary = mask.copy()
    return central, boundary


def simulate_gaze(gt_mask, config: SimulatorConfig, image_id: str = "synthetic") -> GazeSequence:
    """Fabricate a fixation sequence that annotates `gt_mask`.

    Stage 1 places ``n_scan_fixations`` near the mask centroid; stage 2
    covers the mask, central band first and boundary band after, with
    Gaussian positional jitter. An exact ``round(distractor_rate * n)``
    count of fixation slots is re-pointed at uniform background pixels.
    Deterministic for a fixed (mask, config) pair.
    """
    mask = np.asarray(gt_mask).astype(bool)
    if mask.ndim != 2:
        raise ValidationError("gt_mask must be 2-D")
    if not mask.any():
        raise ValidationError("no target to annotate (mask has no foreground)")
    height, width = mask.shape
    rng = np.random.default_rng(config.seed)

    fg_i, fg_j = np.nonzero(mask)
    cy, cx = fg_i.mean(), fg_j.mean()

    n_scan = config.n_scan_fixations
    n_cover = config.n_cover_fixations
    n_total = n_scan + n_cover

    xs = np.empty(n_total)
    ys = np.empty(n_total)

    # stage 1: rough scan, biased to the quarter of foreground nearest the centroid
    d2 = (fg_i - cy) ** 2 + (fg_j - cx) ** 2
    order = np.argsort(d2, kind="stable")
    near = order[: max(1, len(order) // 4)]
    pick = rng.choice(near, size=n_scan, replace=True) if n_scan else np.empty(0, dtype=int)
    xs[:n_scan] = fg_j[pick]
    ys[:n_scan] = fg_i[pick]

    # stage 2: thorough coverage, central band then boundary band
    central, boundary = _coverage_bands(mask)
    n_central = int(round(CENTRAL_COVER_FRACTION * n_cover))
    for band, start, count in ((central, n_scan, n_central),
                               (boundary, n_scan + n_central, n_cover - n_central)):
        if count == 0:
            continue
        bi, bj = np.nonzero(band)
        pick = rng.choice(len(bi), size=count, replace=True)
        xs[start : start + count] = bj[pick]
        ys[start : start + count] = bi[pick]

    if config.jitter_sigma > 0 and n_total:
        xs += rng.normal(0.0, config.jitter_sigma, n_total)
        ys += rng.normal(0.0, config.jitter_sigma, n_total)
        np.clip(xs, 0.0, width - 1.0, out=xs)
        np.clip(ys, 0.0, height - 1.0, out=ys)

    n_distract = int(round(config.distractor_rate * n_total))
    if n_distract:
        bg_i, bg_j = np.nonzero(~mask)
        if len(bg_i) == 0:
            raise ValidationError("mask has no background to place distractors on")
        slots = rng.choice(n_total, size=n_distract, replace=False)
        pick = rng.choice(len(bg_i), size=n_distract, replace=True)
        xs[slots] = bg_j[pick]
        ys[slots] = bg_i[pick]

    durations = rng.uniform(120.0, 400.0, n_total)
    gaps = rng.uniform(20.0, 80.0, n_total)
    onsets = np.concatenate(([0.0], np.cumsum(durations + gaps)[:-1]))

    samples = [GazeSample(float(x), float(y), float(t), float(d))
               for x, y, t, d in zip(xs, ys, onsets, durations)]
    return GazeSequence(image_id, width, height, samples)


@dataclass(frozen=True)
class ShapeConfig:
    """Synthetic blob parameters; radii are fractions of the image side.

    With ``n_distractors > 0`` the background additionally carries that many
    lookalike blobs (same intensity bump scaled by ``distractor_contrast_frac``)
    that are NOT part of the ground-truth mask, mimicking the off-target
    structures that attract stray annotator gaze in real scans.
    """

    min_radius_frac: float = 0.12
    max_radius_frac: float = 0.28
    wobble: float = 0.25
    harmonics: int = 4
    fg_fraction_min: float = 0.03
    fg_fraction_max: float = 0.35
    contrast: float = 0.35
    texture_amount: float = 0.06
    noise_sigma: float = 0.03
    n_distractors: int = 0
    distractor_min_radius_frac: float = 0.05
    distractor_max_radius_frac: float = 0.10
    distractor_contrast_frac: float = 1.0

    def __post_init__(self):
        if not 0 < self.min_radius_frac <= self.max_radius_frac < 0.5:
            raise ValidationError("radius fractions must satisfy 0 < min <= max < 0.5")
        if not 0 < self.fg_fraction_min < self.fg_fraction_max < 1:
            raise ValidationError("foreground fraction bounds must satisfy 0 < min < max < 1")
        if self.n_distractors < 0:
            raise ValidationError("n_distractors must be >= 0")
        if self.n_distractors and not (
            0 < self.distractor_min_radius_frac
            <= self.distractor_max_radius_frac < 0.5
        ):
            raise ValidationError(
                "distractor radius fractions must satisfy 0 < min <= max < 0.5")
        if self.distractor_contrast_frac <= 0:
            raise ValidationError("distractor_contrast_frac must be positive")


MIN_IMAGE_SIZE = 16


def _star_mask(size, rng, cx, cy, r0, wobble, harmonics):
    amps = rng.uniform(-wobble, wobble, harmonics) / np.arange(1, harmonics + 1)
    phases = rng.uniform(0.0, 2.0 * np.pi, harmonics)
    ii, jj = np.mgrid[0:size, 0:size]
    theta = np.arctan2(ii - cy, jj - cx)
    radius = r0 * (1.0 + sum(a * np.cos((k + 1) * theta + p)
                             for k, (a, p) in enumerate(zip(amps, phases))))
    dist = np.hypot(ii - cy, jj - cx)
    return dist <= radius


def _blob_mask(size, rng, cfg: ShapeConfig):
    cx = rng.uniform(0.35, 0.65) * size
    cy = rng.uniform(0.35, 0.65) * size
    r0 = rng.uniform(cfg.min_radius_frac, cfg.max_radius_frac) * size
    return _star_mask(size, rng, cx, cy, r0, cfg.wobble, cfg.harmonics)


def _distractor_field(size, rng, cfg: ShapeConfig, fg_mask):
    """Union of lookalike blobs kept disjoint from the (padded) foreground."""
    keep_out = ndimage.binary_dilation(fg_mask, iterations=2)
    field = np.zeros((size, size), dtype=bool)
    for _ in range(cfg.n_distractors):
        for _attempt in range(50):
            cx = rng.uniform(0.08, 0.92) * size
            cy = rng.uniform(0.08, 0.92) * size
            r0 = rng.uniform(cfg.distractor_min_radius_frac,
                             cfg.distractor_max_radius_frac) * size
            blob = _star_mask(size, rng, cx, cy, r0, cfg.wobble, cfg.harmonics)
            if not (blob & keep_out).any():
                field |= blob
                break
    return field


def generate_synthetic_dataset(n_images: int, image_size: int,
                               shape_config: ShapeConfig | None = None,
                               seed: int = 0):
    """Produce `(image, gt_mask)` pairs with one bright blob each.

    Images are float32 in [0, 1]; masks are uint8 {0, 1} and exactly the
    blob's support (a single connected, star-convex region). Foreground
    fraction is rejection-sampled into the configured bounds.
    """
    if n_images < 1:
        raise ValidationError("n_images must be >= 1")
    cfg = shape_config or ShapeConfig()
    if image_size < MIN_IMAGE_SIZE or cfg.min_radius_frac * image_size < 2:
        raise ValidationError(
            f"image_size {image_size} too small for the minimum shape")

    pairs = []
    for idx in range(n_images):
        rng = np.random.default_rng(derive_seed(seed, f"synthetic-image-{idx}"))
        for _attempt in range(100):
            mask = _blob_mask(image_size, rng, cfg)
            frac = mask.mean()
            if cfg.fg_fraction_min <= frac <= cfg.fg_fraction_max:
                break
        else:
            raise ValidationError("could not sample a mask within foreground bounds")

        bg_level = rng.uniform(0.25, 0.4)
        texture = ndimage.gaussian_filter(rng.normal(0.0, 1.0, (image_size, image_size)), 3.0)
        tmax = np.abs(texture).max()
        if tmax > 0:
            texture *= cfg.texture_amount / tmax
        image = bg_level + texture
        image[mask] += cfg.contrast
        if cfg.n_distractors:
            lookalikes = _distractor_field(image_size, rng, cfg, mask)
            image[lookalikes] += cfg.contrast * cfg.distractor_contrast_frac
        image += rng.normal(0.0, cfg.noise_sigma, image.shape)
        pairs.append((np.clip(image, 0.0, 1.0).astype(np.float32), mask.astype(np.uint8)))
    return pairs
