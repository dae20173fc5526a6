"""Binary map formats and small text/image writers.

RFRC (correspondences), little-endian::

    b"RFRC" | version u32 | rows u32 | cols u32
    | camera: mode u8, fx fy cx cy pitch reserved (6 x f64) | mu f64
    | rows*cols records of (valid u8, xb f64, yb f64, zb f64), row-major

RFDM (dense f64 maps)::

    b"RFDM" | version u32 | rows u32 | cols u32 | rows*cols*channels f64, row-major

Depth maps are stored as one channel of z-coordinates, normal fields as three
channels; invalid pixels are NaN.  The channel count follows from the file size.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from refractsurf.camera import CameraModel
from refractsurf.errors import FormatError
from refractsurf.maps import CorrespondenceMap, DepthMap, NormalField
from refractsurf.optics import MediumPair

VERSION = 1
_HEADER = struct.Struct("<4sIII")
_CAMERA = struct.Struct("<B6dd")
_RECORD = np.dtype([("valid", "u1"), ("xb", "<f8"), ("yb", "<f8"), ("zb", "<f8")])
_MODE_CODES = {"perspective": 0, "orthographic": 1}


def encode_rfrc(corr: CorrespondenceMap) -> bytes:
    rows, cols = corr.shape
    cam = corr.camera
    head = _HEADER.pack(b"RFRC", VERSION, rows, cols)
    head += _CAMERA.pack(_MODE_CODES[cam.mode], *cam.params(), corr.media.mu)
    rec = np.zeros(rows * cols, dtype=_RECORD)
    rec["valid"] = corr.valid.ravel()
    xb = np.where(corr.valid[..., None], corr.xb, 0.0).reshape(-1, 3)
    rec["xb"], rec["yb"], rec["zb"] = xb[:, 0], xb[:, 1], xb[:, 2]
    return head + rec.tobytes()


def decode_rfrc(data: bytes) -> CorrespondenceMap:
    if len(data) < _HEADER.size + _CAMERA.size:
        raise FormatError("RFRC file truncated")
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != b"RFRC":
        raise FormatError(f"bad magic {magic!r}, expected b'RFRC'")
    if version != VERSION:
        raise FormatError(f"unsupported RFRC version {version}")
    mode_code, fx, fy, cx, cy, pitch, _, mu = _CAMERA.unpack_from(data, _HEADER.size)
    modes = {v: k for k, v in _MODE_CODES.items()}
    if mode_code not in modes:
        raise FormatError(f"unknown camera mode code {mode_code}")
    camera = CameraModel(modes[mode_code], cols, rows, fx=fx, fy=fy, cx=cx, cy=cy, pitch=pitch)
    offset = _HEADER.size + _CAMERA.size
    expected = offset + rows * cols * _RECORD.itemsize
    if len(data) != expected:
        raise FormatError(f"RFRC payload size {len(data)} != expected {expected}")
    rec = np.frombuffer(data, dtype=_RECORD, offset=offset)
    valid = rec["valid"].astype(bool).reshape(rows, cols)
    xb = np.stack([rec["xb"], rec["yb"], rec["zb"]], axis=-1).reshape(rows, cols, 3)
    return CorrespondenceMap(camera, MediumPair(mu), xb, valid)


def write_rfrc(path: str | Path, corr: CorrespondenceMap) -> None:
    Path(path).write_bytes(encode_rfrc(corr))


def read_rfrc(path: str | Path) -> CorrespondenceMap:
    return decode_rfrc(Path(path).read_bytes())


def encode_rfdm(array) -> bytes:
    a = np.asarray(array, dtype="<f8")
    if a.ndim == 2:
        a = a[..., None]
    if a.ndim != 3:
        raise FormatError("RFDM arrays must be (rows, cols) or (rows, cols, channels)")
    rows, cols, _ = a.shape
    return _HEADER.pack(b"RFDM", VERSION, rows, cols) + np.ascontiguousarray(a).tobytes()


def decode_rfdm(data: bytes) -> np.ndarray:
    """Decode to an array of shape (rows, cols, channels)."""
    if len(data) < _HEADER.size:
        raise FormatError("RFDM file truncated")
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != b"RFDM":
        raise FormatError(f"bad magic {magic!r}, expected b'RFDM'")
    if version != VERSION:
        raise FormatError(f"unsupported RFDM version {version}")
    payload = len(data) - _HEADER.size
    cell = rows * cols * 8
    if cell == 0 or payload % cell or payload == 0:
        raise FormatError("RFDM payload is not a whole number of channels")
    channels = payload // cell
    return np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(rows, cols, channels).copy()


def write_rfdm(path: str | Path, array) -> None:
    Path(path).write_bytes(encode_rfdm(array))


def read_rfdm(path: str | Path) -> np.ndarray:
    return decode_rfdm(Path(path).read_bytes())


def write_depth(path: str | Path, depth: DepthMap) -> None:
    write_rfdm(path, np.where(depth.valid, depth.z, np.nan))


def write_normals(path: str | Path, normals: NormalField) -> None:
    write_rfdm(path, normals.n)


def read_z(path: str | Path) -> np.ndarray:
    a = read_rfdm(path)
    if a.shape[2] != 1:
        raise FormatError(f"{path}: expected a 1-channel depth map, got {a.shape[2]} channels")
    return a[..., 0]


def read_normals(path: str | Path) -> NormalField:
    a = read_rfdm(path)
    if a.shape[2] != 3:
        raise FormatError(f"{path}: expected a 3-channel normal map, got {a.shape[2]} channels")
    return NormalField(a, np.all(np.isfinite(a), axis=-1))


# ---------------------------------------------------------------------------
# Text and image output
# ---------------------------------------------------------------------------

def format_float(x: float) -> str:
    """Shortest round-tripping representation; 'nan' for missing values."""
    return "nan" if not np.isfinite(x) else repr(float(x))


def write_csv(path: str | Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_float(v) if isinstance(v, float) else str(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_pgm(path: str | Path, values, lo: float | None = None,
              hi: float | None = None) -> tuple[float, float]:
    """Write a linear-scale binary PGM mapping ``lo`` to black and ``hi`` to white.

    Limits default to the finite min/max; NaN pixels are black.  Returns the
    ``(lo, hi)`` actually used.
    """
    v = np.asarray(values, dtype=np.float64)
    finite = np.isfinite(v)
    if lo is None:
        lo = float(np.min(v[finite])) if finite.any() else 0.0
    if hi is None:
        hi = float(np.max(v[finite])) if finite.any() else lo
    span = hi - lo if hi > lo else 1.0
    scaled = np.clip((np.where(finite, v, lo) - lo) / span, 0.0, 1.0)
    img = np.where(finite, np.round(scaled * 255), 0).astype(np.uint8)
    rows, cols = img.shape
    Path(path).write_bytes(f"P5\n{cols} {rows}\n255\n".encode("ascii") + img.tobytes())
    return lo, hi


def write_ppm(path: str | Path, rgb) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    rows, cols, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{cols} {rows}\n255\n".encode("ascii") + rgb.tobytes())


def read_pnm(path: str | Path) -> np.ndarray:
    """Read a binary PGM/PPM written by this module."""
    data = Path(path).read_bytes()
    magic, size, _maxval, pixels = data.split(b"\n", 3)
    cols, rows = (int(p) for p in size.split())
    channels = 3 if magic == b"P6" else 1
    img = np.frombuffer(pixels, dtype=np.uint8, count=rows * cols * channels)
    return img.reshape(rows, cols, channels) if channels == 3 else img.reshape(rows, cols)


def _color_wheel() -> np.ndarray:
    """Middlebury flow color wheel: 55 hues red->yellow->green->cyan->blue->magenta."""
    RY, YG, GC, CB, BM, MR = 15, 6, 4, 11, 13, 6
    wheel = np.zeros((RY + YG + GC + CB + BM + MR, 3))
    col = 0
    wheel[col:col + RY, 0] = 255
    wheel[col:col + RY, 1] = np.floor(255 * np.arange(RY) / RY)
    col += RY
    wheel[col:col + YG, 0] = 255 - np.floor(255 * np.arange(YG) / YG)
    wheel[col:col + YG, 1] = 255
    col += YG
    wheel[col:col + GC, 1] = 255
    wheel[col:col + GC, 2] = np.floor(255 * np.arange(GC) / GC)
    col += GC
    wheel[col:col + CB, 1] = 255 - np.floor(255 * np.arange(CB) / CB)
    wheel[col:col + CB, 2] = 255
    col += CB
    wheel[col:col + BM, 2] = 255
    wheel[col:col + BM, 0] = np.floor(255 * np.arange(BM) / BM)
    col += BM
    wheel[col:col + MR, 2] = 255 - np.floor(255 * np.arange(MR) / MR)
    wheel[col:col + MR, 0] = 255
    return wheel


FLOW_ZERO = 1e-9


def flow_to_rgb(flow, valid=None) -> np.ndarray:
    """Color-code a (rows, cols, 2) flow field.

    Hue encodes direction and saturation the magnitude relative to the largest
    valid vector; zero flow maps to white and invalid pixels to black.
    """
    flow = np.asarray(flow, dtype=np.float64)
    if valid is None:
        valid = np.all(np.isfinite(flow), axis=-1)
    u = np.where(valid, flow[..., 0], 0.0)
    v = np.where(valid, flow[..., 1], 0.0)
    rad = np.hypot(u, v)
    # round-off sized vectors (identical media) must still render as zero flow
    rad = np.where(rad < FLOW_ZERO, 0.0, rad)
    u, v = np.where(rad > 0, u, 0.0), np.where(rad > 0, v, 0.0)
    rad_max = rad.max() if rad.size else 0.0
    if rad_max > 0:
        u, v, rad = u / rad_max, v / rad_max, rad / rad_max
    wheel = _color_wheel()
    ncols = wheel.shape[0]
    a = np.arctan2(-v, -u) / np.pi
    fk = (a + 1) / 2 * (ncols - 1)
    k0 = np.floor(fk).astype(int)
    k1 = (k0 + 1) % ncols
    f = fk - k0
    img = np.zeros(flow.shape[:2] + (3,), dtype=np.uint8)
    for c in range(3):
        col = ((1 - f) * wheel[k0, c] + f * wheel[k1, c]) / 255.0
        col = 1 - rad * (1 - col)
        img[..., c] = np.floor(255 * col)
    img[~valid] = 0
    return img
