"""Generation and analysis of 1D projector color patterns.

A pattern is a discrete color profile along the projector's coded axis:
an array of shape (resolution, channels) with values in [0, 1]. Pattern
quality is judged by how well separated the colors of distant positions
are, since reconstruction works by matching observed colors back to
positions. The analysis helpers here (confusion matrices, minimum
separation) quantify exactly that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.spatial.distance import cdist

from .validation import check_positive

__all__ = [
    "PATTERN_KINDS",
    "ConfusionMatrix",
    "Pattern",
    "PatternSpec",
    "assign_channels",
    "channel_frequencies",
    "confusion_matrix",
    "default_params",
    "gen_pattern",
    "graycode_stack",
    "min_separation",
    "pattern_image",
    "white_pattern",
]

PATTERN_KINDS = ("random", "lissajous", "stairs", "spiral", "graycode", "white")

# Parameter schema per kind; gen_pattern rejects anything outside these.
_PARAM_NAMES = {
    "random": {"seed", "control_points", "channel_order"},
    "lissajous": {"frequencies", "phases", "channel_order"},
    "stairs": {"frequencies", "channel_order"},
    "spiral": {"carrier_freq", "mod_freq", "amp_lo", "amp_hi", "channel_order"},
    "graycode": {"stripe_width"},
    "white": set(),
}


def default_params(kind):
    """Return the default parameter dict for a pattern kind."""
    defaults = {
        "random": {"seed": 0, "control_points": 16},
        # Non-integer frequencies keep the curve open; integer triples close
        # on themselves and alias distant positions to identical colors.
        "lissajous": {"frequencies": (1.0, 4.3, 4.7), "phases": (0.0, 7 * math.pi / 8, 0.0)},
        "stairs": {"frequencies": (1.0, 4.0, 16.0)},
        "spiral": {"carrier_freq": 8.0, "mod_freq": 1.0, "amp_lo": 0.15, "amp_hi": 0.45},
        "graycode": {"stripe_width": 1},
        "white": {},
    }
    if kind not in defaults:
        raise ValueError(f"unknown pattern kind {kind!r}, expected one of {PATTERN_KINDS}")
    return defaults[kind]


@dataclass(frozen=True)
class PatternSpec:
    """Declarative description of a pattern.

    Parameters
    ----------
    kind : str
        One of ``PATTERN_KINDS``.
    resolution : int
        Number of samples along the coded axis, at least 2.
    channels : int
        1 for grayscale patterns, 3 for color.
    params : dict
        Kind-specific parameters; missing entries take defaults.
    """

    kind: str
    resolution: int = 1024
    channels: int = 3
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PATTERN_KINDS:
            raise ValueError(
                f"unknown pattern kind {self.kind!r}, expected one of {PATTERN_KINDS}"
            )
        if not isinstance(self.resolution, int) or self.resolution < 2:
            raise ValueError(f"resolution must be an int >= 2, got {self.resolution}")
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        unknown = set(self.params) - _PARAM_NAMES[self.kind]
        if unknown:
            raise ValueError(
                f"unknown parameter {sorted(unknown)[0]!r} for kind {self.kind!r}"
            )
        if self.kind == "graycode" and self.channels != 1:
            raise ValueError("graycode patterns are single channel")
        if self.kind == "spiral" and self.channels != 3:
            raise ValueError("spiral patterns need 3 channels")
        object.__setattr__(self, "params", dict(self.params))

    def resolved_params(self):
        """Defaults merged with explicit overrides."""
        merged = default_params(self.kind)
        merged.update(self.params)
        return merged


@dataclass(frozen=True)
class Pattern:
    """A generated pattern: sample values plus the spec that produced them."""

    spec: PatternSpec
    values: np.ndarray  # [resolution, channels], float64 in [0, 1]

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.spec.resolution, self.spec.channels):
            raise ValueError(
                f"values must have shape ({self.spec.resolution}, {self.spec.channels}), "
                f"got {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("pattern values contain non-finite entries")
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError(
                f"pattern values must lie in [0, 1], got range "
                f"[{vals.min():.6g}, {vals.max():.6g}]"
            )
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def resolution(self):
        return self.spec.resolution

    @property
    def channels(self):
        return self.spec.channels


def gen_pattern(spec):
    """Generate the sample values for a pattern spec.

    The same spec always produces the same values; randomness enters only
    through an explicit ``seed`` parameter.

    Parameters
    ----------
    spec : PatternSpec

    Returns
    -------
    Pattern
    """
    if not isinstance(spec, PatternSpec):
        raise TypeError(f"spec must be a PatternSpec, got {type(spec).__name__}")
    params = spec.resolved_params()
    t = np.linspace(0.0, 1.0, spec.resolution)  # [resolution]
    generator = {
        "random": _gen_random,
        "lissajous": _gen_lissajous,
        "stairs": _gen_stairs,
        "spiral": _gen_spiral,
        "graycode": _gen_graycode,
        "white": _gen_white,
    }[spec.kind]
    values = generator(t, spec.channels, params)
    order = params.get("channel_order")
    if order is not None:
        values = _apply_channel_order(values, order)
    return Pattern(spec=spec, values=values)


def white_pattern(resolution=1024, channels=3):
    """All-ones reference pattern used for normalization."""
    spec = PatternSpec(kind="white", resolution=resolution, channels=channels)
    return gen_pattern(spec)


def _gen_random(t, channels, params):
    """Smooth random path through color space: a cubic spline through
    uniformly random control colors, clipped to the unit cube."""
    n_ctrl = int(params["control_points"])
    if n_ctrl < 4:
        raise ValueError(f"control_points must be >= 4, got {n_ctrl}")
    rng = np.random.default_rng(int(params["seed"]))
    ctrl_t = np.linspace(0.0, 1.0, n_ctrl)
    ctrl = rng.uniform(0.0, 1.0, size=(n_ctrl, channels))
    spline = make_interp_spline(ctrl_t, ctrl, k=3)
    return np.clip(spline(t), 0.0, 1.0)


def _gen_lissajous(t, channels, params):
    """Sinusoids of incommensurate frequency per channel."""
    freqs = params["frequencies"]
    phases = params["phases"]
    if len(freqs) < channels or len(phases) < channels:
        raise ValueError(
            f"lissajous needs {channels} frequencies and phases, "
            f"got {len(freqs)} and {len(phases)}"
        )
    values = np.empty((t.size, channels))
    for c in range(channels):
        f = check_positive(freqs[c], "frequencies")
        values[:, c] = 0.5 + 0.5 * np.sin(2.0 * math.pi * f * t + float(phases[c]))
    return values


def _gen_stairs(t, channels, params):
    """Sawtooth ramps, one frequency per channel."""
    freqs = params["frequencies"]
    if len(freqs) < channels:
        raise ValueError(f"stairs needs {channels} frequencies, got {len(freqs)}")
    values = np.empty((t.size, channels))
    for c in range(channels):
        f = check_positive(freqs[c], "frequencies")
        values[:, c] = (f * t) % 1.0
    return values


def _gen_spiral(t, channels, params):
    """Linear ramp on channel 0 plus an amplitude modulated quadrature
    carrier on channels 1 and 2, tracing a spiral through color space."""
    carrier = check_positive(params["carrier_freq"], "carrier_freq")
    mod = check_positive(params["mod_freq"], "mod_freq")
    amp_lo = float(params["amp_lo"])
    amp_hi = float(params["amp_hi"])
    if not 0.0 <= amp_lo <= amp_hi <= 0.5:
        raise ValueError(
            f"need 0 <= amp_lo <= amp_hi <= 0.5, got {amp_lo} and {amp_hi}"
        )
    # Triangle wave in [0, 1]: rises then falls once per modulation period.
    tri = 1.0 - np.abs(2.0 * ((mod * t) % 1.0) - 1.0)
    amp = amp_lo + (amp_hi - amp_lo) * tri
    phase = 2.0 * math.pi * carrier * t
    values = np.empty((t.size, 3))
    values[:, 0] = t
    values[:, 1] = 0.5 + amp * np.sin(phase)
    values[:, 2] = 0.5 + amp * np.cos(phase)
    return values


def _gen_graycode(t, channels, params):
    """One bit plane of a reflected binary code along the axis."""
    width = int(params["stripe_width"])
    if width < 1 or (width & (width - 1)) != 0:
        raise ValueError(f"stripe_width must be a positive power of two, got {width}")
    idx = np.arange(t.size)
    bits = ((idx // width) ^ (idx // (2 * width))) & 1
    return bits[:, None].astype(np.float64)


def _gen_white(t, channels, params):
    return np.ones((t.size, channels))


def _apply_channel_order(values, order):
    order = tuple(int(c) for c in order)
    if sorted(order) != list(range(values.shape[1])):
        raise ValueError(
            f"channel_order must be a permutation of 0..{values.shape[1] - 1}, "
            f"got {order}"
        )
    return values[:, order]


def graycode_stack(width):
    """Build the bit-plane patterns that binary-code ``width`` positions.

    Returns ceil(log2(width)) single channel patterns, coarsest stripes
    first. Reading the stack top to bottom at one position yields its
    reflected binary code, so all positions decode uniquely and adjacent
    positions differ in exactly one plane.

    Parameters
    ----------
    width : int
        Number of coded positions, at least 2.

    Returns
    -------
    list of Pattern
    """
    if not isinstance(width, int) or width < 2:
        raise ValueError(f"width must be an int >= 2, got {width}")
    n_bits = math.ceil(math.log2(width))
    stack = []
    for b in range(n_bits - 1, -1, -1):
        spec = PatternSpec(
            kind="graycode",
            resolution=width,
            channels=1,
            params={"stripe_width": 2 ** b},
        )
        stack.append(gen_pattern(spec))
    return stack


@dataclass(frozen=True)
class ConfusionMatrix:
    """Pairwise color distances between all positions of a pattern."""

    entries: np.ndarray  # [resolution, resolution], float64
    normalization: str

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"entries must be square, got shape {entries.shape}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def resolution(self):
        return self.entries.shape[0]


def confusion_matrix(pattern, normalization="per-pattern-max"):
    """Euclidean color distance between every pair of pattern positions.

    Entry (i, j) is the L2 distance between the colors at positions i and
    j. Large off-diagonal values mean the positions are easy to tell
    apart; near-zero values far from the diagonal mark positions that a
    color match can confuse.

    Parameters
    ----------
    pattern : Pattern
    normalization : {"per-pattern-max", "none"}
        With "per-pattern-max" the matrix is divided by its largest
        entry, making matrices of different patterns comparable.

    Returns
    -------
    ConfusionMatrix
    """
    if normalization not in ("per-pattern-max", "none"):
        raise ValueError(
            f"normalization must be 'per-pattern-max' or 'none', got {normalization!r}"
        )
    entries = cdist(pattern.values, pattern.values)  # [res, res]
    if normalization == "per-pattern-max":
        peak = entries.max()
        if peak > 0.0:
            entries = entries / peak
    return ConfusionMatrix(entries=entries, normalization=normalization)


def min_separation(pattern, exclusion_band):
    """Smallest color distance between positions more than a band apart.

    Positions within ``exclusion_band`` samples of each other are allowed
    to look similar; this measures the worst confusability outside that
    band. Zero means two distant positions share an identical color.

    Parameters
    ----------
    pattern : Pattern
    exclusion_band : int
        Half width of the ignored diagonal band, 1 <= band < resolution.

    Returns
    -------
    float
    """
    res = pattern.resolution
    if not isinstance(exclusion_band, int) or not 1 <= exclusion_band < res:
        raise ValueError(
            f"exclusion_band must be an int in [1, {res - 1}], got {exclusion_band}"
        )
    entries = cdist(pattern.values, pattern.values)
    offsets = np.abs(np.arange(res)[:, None] - np.arange(res)[None, :])
    outside = offsets > exclusion_band
    if not outside.any():
        raise ValueError("exclusion_band leaves no position pairs to compare")
    return float(entries[outside].min())


def channel_frequencies(pattern):
    """Mean absolute sample-to-sample change per channel.

    A proxy for spatial frequency: rapidly varying channels score high.
    """
    return np.abs(np.diff(pattern.values, axis=0)).mean(axis=0)  # [channels]


def assign_channels(pattern):
    """Route the highest frequency signal to channel 1.

    Camera green pixels are the least noisy, so the channel whose signal
    varies fastest should be emitted as green (index 1). Returns a
    pattern with columns permuted accordingly; the applied permutation is
    recorded in the spec as ``channel_order`` so regeneration reproduces
    it.

    Parameters
    ----------
    pattern : Pattern
        A 3 channel pattern.

    Returns
    -------
    Pattern
    """
    if pattern.channels != 3:
        raise ValueError(f"assign_channels needs 3 channels, got {pattern.channels}")
    scores = channel_frequencies(pattern)
    order = [0, 1, 2]
    busiest = int(np.argmax(scores))
    order[1], order[busiest] = order[busiest], order[1]
    base_order = pattern.spec.params.get("channel_order", (0, 1, 2))
    combined = tuple(base_order[c] for c in order)
    params = dict(pattern.spec.params)
    params["channel_order"] = combined
    spec = PatternSpec(
        kind=pattern.spec.kind,
        resolution=pattern.spec.resolution,
        channels=pattern.spec.channels,
        params=params,
    )
    return Pattern(spec=spec, values=pattern.values[:, order])


def pattern_image(pattern, rows=64):
    """Render a pattern as an image strip for visual inspection.

    Returns
    -------
    numpy.ndarray
        Shape (rows, resolution, channels), float64 in [0, 1].
    """
    if not isinstance(rows, int) or rows < 1:
        raise ValueError(f"rows must be an int >= 1, got {rows}")
    return np.broadcast_to(
        pattern.values[None, :, :], (rows,) + pattern.values.shape
    ).copy()
