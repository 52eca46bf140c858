"""File formats: images, point clouds, manifests, and the table binary.

Everything the pipeline persists goes through this module. Formats are
deliberately boring: PFM for float images, PLY for clouds, "key = value"
manifests for metadata, and a small versioned binary for lookup tables.
Readers reject rather than guess: wrong magic, truncation, or missing
keys raise FormatError naming the problem.
"""

from __future__ import annotations

import ast
import re
import struct
from dataclasses import dataclass

import numpy as np

from .calibrate import RayLUT
from .geometry import CameraModel, ProjectorModel
from .patterns import Pattern, PatternSpec
from .reconstruct import PointCloud
from .simulate import NoiseModel

__all__ = [
    "FORMATS",
    "FormatError",
    "FormatHeader",
    "detect_format",
    "format_float",
    "load_lut",
    "parse_pattern_specs",
    "read_manifest",
    "read_pattern_specs",
    "read_pfm",
    "read_ply",
    "read_rig",
    "save_lut",
    "write_manifest",
    "write_pattern_csv",
    "write_pattern_specs",
    "write_pfm",
    "write_pgm",
    "write_ply",
    "write_ppm",
    "write_rig",
]


class FormatError(ValueError):
    """A file does not conform to its declared format."""


@dataclass(frozen=True)
class FormatHeader:
    """Registry entry tying a magic prefix to a format name."""

    name: str
    magic: bytes
    description: str


FORMATS = (
    FormatHeader("lut", b"RLUT", "per-pixel spline lookup table"),
    FormatHeader("pfm", b"PF", "portable float map, 3 channel"),
    FormatHeader("pfm", b"Pf", "portable float map, 1 channel"),
    FormatHeader("ply", b"ply", "point cloud"),
    FormatHeader("ppm", b"P6", "portable pixmap, 8 bit"),
    FormatHeader("pgm", b"P5", "portable graymap, 8 bit"),
)


def detect_format(path):
    """Best-effort format name for a file: by magic, else by structure.

    Returns one of the registered format names, "manifest" for readable
    key = value text, or "unknown".
    """
    with open(path, "rb") as fh:
        head = fh.read(64)
    for fmt in FORMATS:
        if head.startswith(fmt.magic):
            return fmt.name
    try:
        text = head.decode("utf-8")
    except UnicodeDecodeError:
        return "unknown"
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            return "manifest" if "=" in line else "unknown"
    return "manifest" if text.strip() == "" or "=" in text else "unknown"


def format_float(x):
    """Shortest decimal string that round-trips the float exactly."""
    return repr(float(x))


# --- PFM ------------------------------------------------------------------

def write_pfm(path, image):
    """Write a float image as PFM (little-endian, bottom-up rows).

    Accepts (H, W) for grayscale or (H, W, 3) for color; data is stored
    as float32. Non-finite values are rejected because most PFM readers
    choke on them; encode missing pixels as a sentinel first.
    """
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 2:
        magic = b"Pf"
    elif image.ndim == 3 and image.shape[2] == 3:
        magic = b"PF"
    else:
        raise FormatError(
            f"image must be (H, W) or (H, W, 3), got shape {image.shape}"
        )
    if not np.all(np.isfinite(image)):
        raise FormatError("image contains non-finite values")
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(np.flipud(image).astype("<f4").tobytes())


def read_pfm(path):
    """Read a PFM image, returning float32 of shape (H, W) or (H, W, 3)."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, pos = _pfm_token(data, 0, path)
    if magic not in (b"Pf", b"PF"):
        raise FormatError(f"{path}: not a PFM file (magic {magic!r})")
    w_tok, pos = _pfm_token(data, pos, path)
    h_tok, pos = _pfm_token(data, pos, path)
    scale_tok, pos = _pfm_token(data, pos, path)
    try:
        w, h = int(w_tok), int(h_tok)
        scale = float(scale_tok)
    except ValueError:
        raise FormatError(f"{path}: malformed PFM header") from None
    if w < 1 or h < 1 or scale == 0.0:
        raise FormatError(f"{path}: malformed PFM header")
    channels = 3 if magic == b"PF" else 1
    expected = w * h * channels * 4
    payload = data[pos:]
    if len(payload) < expected:
        raise FormatError(
            f"{path}: truncated PFM, expected {expected} data bytes, "
            f"got {len(payload)}"
        )
    if len(payload) > expected:
        raise FormatError(f"{path}: {len(payload) - expected} trailing bytes")
    dtype = "<f4" if scale < 0 else ">f4"
    image = np.frombuffer(payload, dtype=dtype).astype(np.float32)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return np.flipud(image.reshape(shape)).copy()


def _pfm_token(data, pos, path):
    """Next whitespace-delimited header token plus one delimiter byte."""
    while pos < len(data) and data[pos:pos + 1].isspace():
        pos += 1
    start = pos
    while pos < len(data) and not data[pos:pos + 1].isspace():
        pos += 1
    if start == pos or pos >= len(data):
        raise FormatError(f"{path}: truncated PFM header")
    return data[start:pos], pos + 1


# --- PLY ------------------------------------------------------------------

_PLY_PROPS = ("x", "y", "z", "residual")


def write_ply(path, cloud, binary=True):
    """Write a point cloud as PLY with x, y, z, residual float properties.

    Coordinates are stored as float32. ASCII output prints them with
    enough digits to round-trip float32 exactly.
    """
    if not isinstance(cloud, PointCloud):
        raise TypeError(f"cloud must be a PointCloud, got {type(cloud).__name__}")
    rows = np.empty((len(cloud), 4), dtype="<f4")
    rows[:, :3] = cloud.positions
    rows[:, 3] = cloud.residuals
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {len(cloud)}\n"
        + "".join(f"property float {p}\n" for p in _PLY_PROPS)
        + "end_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(rows.tobytes())
        else:
            lines = ["%.9g %.9g %.9g %.9g" % tuple(row) for row in rows]
            fh.write(("\n".join(lines) + "\n" if lines else "").encode("ascii"))


def read_ply(path):
    """Read a PLY written by ``write_ply``; pixels come back as -1."""
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply\n") or end < 0:
        raise FormatError(f"{path}: not a PLY file")
    header_lines = data[:end].decode("ascii", errors="replace").splitlines()
    payload = data[end + len(b"end_header\n"):]

    fmt = None
    count = None
    props = []
    for line in header_lines[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            if parts[1] != "vertex":
                raise FormatError(f"{path}: unsupported element {parts[1]!r}")
            count = int(parts[2])
        elif parts[0] == "property":
            props.append((parts[1], parts[2]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise FormatError(f"{path}: unsupported PLY format {fmt!r}")
    if count is None:
        raise FormatError(f"{path}: missing vertex element")
    if props != [("float", p) for p in _PLY_PROPS]:
        raise FormatError(
            f"{path}: expected float properties {_PLY_PROPS}, got {props}"
        )

    if fmt == "binary_little_endian":
        expected = count * 16
        if len(payload) != expected:
            raise FormatError(
                f"{path}: expected {expected} payload bytes for {count} "
                f"vertices, got {len(payload)}"
            )
        rows = np.frombuffer(payload, dtype="<f4").reshape(count, 4)
    else:
        lines = [ln for ln in payload.decode("ascii", errors="replace").splitlines()
                 if ln.strip()]
        if len(lines) != count:
            raise FormatError(
                f"{path}: expected {count} vertex lines, got {len(lines)}"
            )
        try:
            rows = np.array([[float(v) for v in ln.split()] for ln in lines],
                            dtype=np.float32)
        except ValueError:
            raise FormatError(f"{path}: malformed vertex line") from None
        if rows.size and rows.shape[1] != 4:
            raise FormatError(f"{path}: expected 4 values per vertex")
        rows = rows.reshape(count, 4)
    positions = rows[:, :3].astype(np.float64)
    residuals = rows[:, 3].astype(np.float64)
    pixels = np.full((count, 2), -1, dtype=np.int64)
    return PointCloud(positions=positions, residuals=residuals, pixels=pixels)


# --- 8 bit images ---------------------------------------------------------

def write_pgm(path, image):
    """Write values in [0, 1] as an 8 bit binary portable graymap."""
    image = _to_uint8(image, 2)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def write_ppm(path, image):
    """Write values in [0, 1] as an 8 bit binary portable pixmap."""
    image = _to_uint8(image, 3)
    if image.shape[2] != 3:
        raise FormatError(f"image must have 3 channels, got {image.shape[2]}")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def _to_uint8(image, ndim):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != ndim:
        raise FormatError(f"image must have {ndim} dimensions, got {image.ndim}")
    if not np.all(np.isfinite(image)):
        raise FormatError("image contains non-finite values")
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


# --- manifests ------------------------------------------------------------

_KEY_RE = re.compile(r"[A-Za-z0-9._-]+\Z")


def write_manifest(path, entries):
    """Write "key = value" lines in the given order."""
    lines = []
    for key, value in entries.items():
        if not _KEY_RE.match(key):
            raise FormatError(f"invalid manifest key {key!r}")
        value = str(value)
        if "\n" in value:
            raise FormatError(f"value of {key!r} contains a newline")
        lines.append(f"{key} = {value}\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(lines)


def read_manifest(path, required=()):
    """Read a "key = value" file into an ordered dict.

    Blank lines and '#' comments are skipped; unknown keys are preserved
    so files can carry extra metadata. Missing required keys raise
    FormatError naming the first one.
    """
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(
                    f"{path}: line {lineno}: expected 'key = value', got {line!r}"
                )
            key, value = line.split("=", 1)
            key = key.strip()
            if not _KEY_RE.match(key):
                raise FormatError(f"{path}: line {lineno}: invalid key {key!r}")
            if key in entries:
                raise FormatError(f"{path}: line {lineno}: duplicate key {key!r}")
            entries[key] = value.strip()
    for key in required:
        if key not in entries:
            raise FormatError(f"{path}: missing required key {key!r}")
    return entries


# --- lookup table binary ---------------------------------------------------

_LUT_MAGIC = b"RLUT"
_LUT_VERSION = 1
_HEAD = struct.Struct("<4sIIIIff")
_CAMERA = struct.Struct("<IIddddd")
_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_F32_PAIR = struct.Struct("<ff")


def save_lut(path, lut):
    """Write a lookup table in the versioned binary layout.

    Knots and coefficients are stored as little-endian float32; loading
    widens them back to float64. Saving a freshly fitted (float64) table
    therefore quantizes it once; saving a loaded table is lossless, and
    the acceptance contract is byte-for-byte stability from then on. The
    exact layout is documented in docs/formats.md.
    """
    if not isinstance(lut, RayLUT):
        raise TypeError(f"lut must be a RayLUT, got {type(lut).__name__}")
    h, w = lut.valid.shape
    k = lut.n_channels
    if lut.valid.any():
        d_min, d_max = lut.depth_range
    else:
        d_min = d_max = 0.0

    out = bytearray()
    out += _HEAD.pack(_LUT_MAGIC, _LUT_VERSION, w, h, k, d_min, d_max)
    if lut.camera is not None:
        cam = lut.camera
        out += _U8.pack(1)
        out += _CAMERA.pack(cam.width, cam.height, cam.fx, cam.fy,
                            cam.cx, cam.cy, cam.k1)
    else:
        out += _U8.pack(0)
    for cid in lut.channel_ids:
        raw = str(cid).encode("utf-8")
        if len(raw) > 0xFFFF:
            raise FormatError(f"channel id too long: {cid!r}")
        out += _U16.pack(len(raw)) + raw

    for j in range(h):
        for i in range(w):
            if not lut.valid[j, i]:
                out += _U8.pack(0)
                continue
            out += _U8.pack(1)
            out += _F32_PAIR.pack(lut.depth_lo[j, i], lut.depth_hi[j, i])
            for c in range(k):
                t, co = lut._slices(j, i, c)
                out += _U32.pack(t.size)
                out += t.astype("<f4").tobytes()
                out += co.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(out)


def load_lut(path):
    """Read a lookup table written by ``save_lut``.

    Raises
    ------
    FormatError
        On wrong magic, unsupported version, truncation, or trailing
        bytes.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    cur = _Cursor(data, path)
    magic, version, w, h, k, _, _ = cur.unpack(_HEAD)
    if magic != _LUT_MAGIC:
        raise FormatError(f"{path}: not a lookup table file (magic {magic!r})")
    if version != _LUT_VERSION:
        raise FormatError(
            f"{path}: unsupported table version {version}, expected {_LUT_VERSION}"
        )
    if w < 1 or h < 1 or k < 1:
        raise FormatError(f"{path}: malformed table dimensions {w} x {h} x {k}")

    camera = None
    if cur.unpack(_U8)[0]:
        cw, ch, fx, fy, cx, cy, k1 = cur.unpack(_CAMERA)
        camera = CameraModel(width=cw, height=ch, fx=fx, fy=fy, cx=cx, cy=cy, k1=k1)
    channel_ids = []
    for _ in range(k):
        (id_len,) = cur.unpack(_U16)
        channel_ids.append(cur.take(id_len).decode("utf-8"))

    valid = np.zeros((h, w), dtype=bool)
    depth_lo = np.full((h, w), np.nan)
    depth_hi = np.full((h, w), np.nan)
    knot_parts = []
    coef_parts = []
    knot_lens = np.zeros(h * w * k, dtype=np.int64)
    coef_lens = np.zeros(h * w * k, dtype=np.int64)
    for j in range(h):
        for i in range(w):
            if not cur.unpack(_U8)[0]:
                continue
            valid[j, i] = True
            depth_lo[j, i], depth_hi[j, i] = cur.unpack(_F32_PAIR)
            base = (j * w + i) * k
            for c in range(k):
                (n_knots,) = cur.unpack(_U32)
                if n_knots < 8:
                    raise FormatError(
                        f"{path}: pixel ({i}, {j}) channel {c} has {n_knots} "
                        "knots, a cubic spline needs at least 8"
                    )
                knots = cur.take_f32(n_knots)
                coefs = cur.take_f32(n_knots - 4)
                knot_parts.append(knots)
                coef_parts.append(coefs)
                knot_lens[base + c] = n_knots
                coef_lens[base + c] = n_knots - 4
    cur.expect_end()

    knot_offsets = np.zeros(h * w * k + 1, dtype=np.int64)
    np.cumsum(knot_lens, out=knot_offsets[1:])
    coef_offsets = np.zeros(h * w * k + 1, dtype=np.int64)
    np.cumsum(coef_lens, out=coef_offsets[1:])
    return RayLUT(
        camera=camera,
        channel_ids=tuple(channel_ids),
        valid=valid,
        depth_lo=depth_lo,
        depth_hi=depth_hi,
        knot_offsets=knot_offsets,
        knots_flat=(np.concatenate(knot_parts) if knot_parts
                    else np.empty(0)),
        coef_offsets=coef_offsets,
        coefs_flat=(np.concatenate(coef_parts) if coef_parts
                    else np.empty(0)),
    )


class _Cursor:
    """Sequential reader that turns short reads into FormatError."""

    def __init__(self, data, path):
        self.data = data
        self.path = path
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError(
                f"{self.path}: truncated file, needed {n} bytes at offset "
                f"{self.pos}, have {len(self.data) - self.pos}"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return fmt.unpack(self.take(fmt.size))

    def take_f32(self, count):
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<f4").astype(np.float64)

    def expect_end(self):
        if self.pos != len(self.data):
            raise FormatError(
                f"{self.path}: {len(self.data) - self.pos} trailing bytes"
            )


# --- rig files --------------------------------------------------------------

_RIG_REQUIRED = (
    "camera.width", "camera.height", "camera.fx", "camera.fy",
    "camera.cx", "camera.cy",
    "projector.rotation", "projector.translation", "projector.coded_axis_fov",
)


def write_rig(path, camera, projector, noise=None, extra=None):
    """Write a rig description (camera, projector, noise) as a manifest.

    The rotation is stored as 9 row-major floats with full precision, so
    reading the file back reproduces the matrices bit for bit.
    """
    entries = {
        "camera.width": camera.width,
        "camera.height": camera.height,
        "camera.fx": format_float(camera.fx),
        "camera.fy": format_float(camera.fy),
        "camera.cx": format_float(camera.cx),
        "camera.cy": format_float(camera.cy),
        "camera.k1": format_float(camera.k1),
        "projector.rotation": _format_floats(projector.rotation.ravel()),
        "projector.translation": _format_floats(projector.translation),
        "projector.coded_axis_fov": format_float(projector.coded_axis_fov),
        "projector.blur_sigma": format_float(projector.blur_sigma),
        "projector.response_gamma": format_float(projector.response_gamma),
        "projector.vignetting_strength": format_float(projector.vignetting_strength),
    }
    noise = noise or NoiseModel()
    entries.update({
        "noise.read_noise_sigma": format_float(noise.read_noise_sigma),
        "noise.shot_noise_scale": format_float(noise.shot_noise_scale),
        "noise.ambient_level": format_float(noise.ambient_level),
        "noise.channel_gains": _format_floats(noise.channel_gains),
    })
    if extra:
        entries.update(extra)
    write_manifest(path, entries)


def read_rig(path):
    """Read a rig manifest back into (camera, projector, noise)."""
    entries = read_manifest(path, required=_RIG_REQUIRED)
    try:
        camera = CameraModel(
            width=int(entries["camera.width"]),
            height=int(entries["camera.height"]),
            fx=float(entries["camera.fx"]),
            fy=float(entries["camera.fy"]),
            cx=float(entries["camera.cx"]),
            cy=float(entries["camera.cy"]),
            k1=float(entries.get("camera.k1", "0.0")),
        )
        rotation = np.array(_parse_floats(entries["projector.rotation"], 9))
        projector = ProjectorModel(
            rotation=rotation.reshape(3, 3),
            translation=np.array(_parse_floats(entries["projector.translation"], 3)),
            coded_axis_fov=float(entries["projector.coded_axis_fov"]),
            blur_sigma=float(entries.get("projector.blur_sigma", "0.0")),
            response_gamma=float(entries.get("projector.response_gamma", "1.0")),
            vignetting_strength=float(
                entries.get("projector.vignetting_strength", "0.0")),
        )
        noise = NoiseModel(
            read_noise_sigma=float(entries.get("noise.read_noise_sigma", "0.0")),
            shot_noise_scale=float(entries.get("noise.shot_noise_scale", "0.0")),
            ambient_level=float(entries.get("noise.ambient_level", "0.0")),
            channel_gains=tuple(
                _parse_floats(entries.get("noise.channel_gains", "1.0 1.0 1.0"), 3)),
        )
    except (ValueError, TypeError) as exc:
        raise FormatError(f"{path}: invalid rig: {exc}") from None
    return camera, projector, noise


def _format_floats(values):
    return " ".join(format_float(v) for v in np.asarray(values, dtype=np.float64))


def _parse_floats(text, count):
    values = [float(v) for v in text.split()]
    if len(values) != count:
        raise ValueError(f"expected {count} floats, got {len(values)}")
    return values


# --- pattern spec files -----------------------------------------------------

def write_pattern_specs(path, named_specs):
    """Write named pattern specs as a manifest.

    Keys follow ``pattern.<index>.<field>`` with parameters under
    ``pattern.<index>.param.<name>``.
    """
    entries = {}
    for idx, (name, spec) in enumerate(named_specs):
        prefix = f"pattern.{idx}"
        entries[f"{prefix}.name"] = name
        entries[f"{prefix}.kind"] = spec.kind
        entries[f"{prefix}.resolution"] = spec.resolution
        entries[f"{prefix}.channels"] = spec.channels
        for pname, pvalue in spec.params.items():
            entries[f"{prefix}.param.{pname}"] = repr(pvalue)
    write_manifest(path, entries)


def parse_pattern_specs(entries, source="pattern specs"):
    """Build (name, PatternSpec) pairs from manifest entries."""
    groups = {}
    pat = re.compile(r"pattern\.(\d+)\.(.+)\Z")
    for key, value in entries.items():
        m = pat.match(key)
        if not m:
            continue
        groups.setdefault(int(m.group(1)), {})[m.group(2)] = value
    if not groups:
        raise FormatError(f"{source}: no pattern.<index>.kind entries found")

    specs = []
    for idx in sorted(groups):
        fields = groups[idx]
        if "kind" not in fields:
            raise FormatError(f"{source}: pattern.{idx} is missing 'kind'")
        params = {}
        for fname, fvalue in fields.items():
            if fname.startswith("param."):
                pname = fname[len("param."):]
                try:
                    params[pname] = ast.literal_eval(fvalue)
                except (ValueError, SyntaxError):
                    raise FormatError(
                        f"{source}: pattern.{idx}.param.{pname}: "
                        f"cannot parse value {fvalue!r}"
                    ) from None
        try:
            spec = PatternSpec(
                kind=fields["kind"],
                resolution=int(fields.get("resolution", 1024)),
                channels=int(fields.get("channels", 3)),
                params=params,
            )
        except ValueError as exc:
            raise FormatError(f"{source}: pattern.{idx}: {exc}") from None
        name = fields.get("name", f"{spec.kind}-{idx}")
        specs.append((name, spec))
    return specs


def read_pattern_specs(path):
    """Read a pattern spec manifest into (name, PatternSpec) pairs."""
    return parse_pattern_specs(read_manifest(path), source=str(path))


def write_pattern_csv(path, pattern):
    """Pattern samples as CSV: coordinate followed by channel values."""
    if not isinstance(pattern, Pattern):
        raise TypeError(f"pattern must be a Pattern, got {type(pattern).__name__}")
    res, channels = pattern.values.shape
    t = np.linspace(0.0, 1.0, res)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t," + ",".join(f"c{c}" for c in range(channels)) + "\n")
        for k in range(res):
            row = [format_float(t[k])]
            row.extend(format_float(v) for v in pattern.values[k])
            fh.write(",".join(row) + "\n")
