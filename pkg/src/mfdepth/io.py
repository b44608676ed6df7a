"""PFM / PGM / PPM raster files and the JSON camera formats.

* PFM: little-endian float32, scale ``-1.0``, rows stored bottom-to-top.
  Invalid depth pixels are written as 0 and read back as invalid.
* PGM (P5, maxval 255): binary masks, 0 = false and 255 = true.
* PPM (P6, maxval 255): RGB images, values mapped from [0, 1].
* Intrinsics JSON ``{"fx", "fy", "cx", "cy"}``; pose JSON
  ``{"rotation": [9 floats, row-major], "translation": [3 floats]}``.
"""

from __future__ import annotations

import json
import os
import re

import numpy as np

from .core import BinaryMask, CameraIntrinsics, DepthMap, ImagePlane, RigidPose
from .errors import DomainError, FormatError

_PNM_HEADER = re.compile(rb"^(P[56])\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s")


def write_pfm(path, array: np.ndarray) -> None:
    arr = np.asarray(array, dtype="<f4")
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim == 2:
        kind = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        kind = b"PF"
    else:
        raise FormatError(f"PFM supports 1 or 3 channels, got shape {arr.shape}")
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(kind + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n")
        fh.write(np.ascontiguousarray(arr[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    """Return the PFM contents as float64, shape (H, W) or (H, W, 3)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from exc
    lines = raw.split(b"\n", 3)
    if len(lines) < 4 or lines[0] not in (b"Pf", b"PF"):
        raise FormatError(f"{path}: not a PFM file")
    try:
        w, h = (int(x) for x in lines[1].split())
        scale = float(lines[2])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PFM header") from exc
    channels = 3 if lines[0] == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    count = w * h * channels
    payload = lines[3]
    if w < 1 or h < 1 or len(payload) != 4 * count:
        raise FormatError(f"{path}: PFM payload size does not match {w}x{h}x{channels}")
    arr = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    arr = arr.reshape((h, w, channels) if channels == 3 else (h, w))[::-1]
    return np.ascontiguousarray(arr)


def write_depth(path, depth: DepthMap) -> None:
    write_pfm(path, np.where(depth.valid, depth.data, 0.0))


def read_depth(path) -> DepthMap:
    arr = read_pfm(path)
    if arr.ndim != 2:
        raise FormatError(f"{path}: depth PFM must be single channel")
    return DepthMap(arr)


def _read_pnm(path, magic: bytes) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from exc
    m = _PNM_HEADER.match(raw)
    if m is None or m.group(1) != magic:
        raise FormatError(f"{path}: not a binary {magic.decode()} file")
    w, h, maxval = int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported")
    channels = 3 if magic == b"P6" else 1
    body = raw[m.end():]
    if len(body) != w * h * channels:
        raise FormatError(f"{path}: pixel payload does not match {w}x{h}")
    arr = np.frombuffer(body, dtype=np.uint8)
    return arr.reshape((h, w, channels)) if channels == 3 else arr.reshape((h, w))


def _write_pnm(path, arr: np.ndarray, magic: bytes) -> None:
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + f"\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(arr, dtype=np.uint8).tobytes())


def write_mask(path, mask: BinaryMask) -> None:
    _write_pnm(path, np.where(mask.data, 255, 0).astype(np.uint8), b"P5")


def read_mask(path) -> BinaryMask:
    return BinaryMask(_read_pnm(path, b"P5") >= 128)


def read_gray(path) -> ImagePlane:
    return ImagePlane(_read_pnm(path, b"P5").astype(np.float64) / 255.0)


def _to_bytes(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(values) * 255.0), 0, 255).astype(np.uint8)


def write_image(path, image: ImagePlane) -> None:
    """Write a [0, 1] image as PPM (3 channels) or PGM (1 channel)."""
    if image.channels == 3:
        _write_pnm(path, _to_bytes(image.data), b"P6")
    elif image.channels == 1:
        _write_pnm(path, _to_bytes(image.data[:, :, 0]), b"P5")
    else:
        raise FormatError(f"cannot write a {image.channels}-channel image as PNM")


def read_image(path) -> ImagePlane:
    """Read a PPM, PGM or PFM file as an image plane."""
    try:
        with open(path, "rb") as fh:
            magic = fh.read(2)
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from exc
    if magic == b"P6":
        return ImagePlane(_read_pnm(path, b"P6").astype(np.float64) / 255.0)
    if magic == b"P5":
        return read_gray(path)
    if magic in (b"Pf", b"PF"):
        return ImagePlane(read_pfm(path))
    raise FormatError(f"{path}: unsupported image format")


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise FormatError(f"{path}: expected a JSON object")
    return obj


def intrinsics_from_dict(obj: dict) -> CameraIntrinsics:
    try:
        return CameraIntrinsics(*(float(obj[k]) for k in ("fx", "fy", "cx", "cy")))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"intrinsics need numeric fx, fy, cx, cy ({exc})") from exc


def pose_from_dict(obj: dict) -> RigidPose:
    try:
        rot = [float(x) for x in obj["rotation"]]
        trans = [float(x) for x in obj["translation"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"pose needs rotation and translation arrays ({exc})") from exc
    if len(rot) != 9 or len(trans) != 3:
        raise FormatError("pose rotation must have 9 entries and translation 3")
    return RigidPose(np.reshape(rot, (3, 3)), trans)


def read_intrinsics(path) -> CameraIntrinsics:
    obj = read_json(path)
    try:
        return intrinsics_from_dict(obj)
    except (FormatError, DomainError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


def read_pose(path) -> RigidPose:
    obj = read_json(path)
    try:
        return pose_from_dict(obj)
    except (FormatError, DomainError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_json(path, obj) -> None:
    """Deterministic JSON dump (sorted keys, trailing newline)."""
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
