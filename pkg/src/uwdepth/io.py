"""File formats: PNG/TIFF images, TIFF/PFM depth maps, PNG masks, JSON
intrinsics/poses/water models.

Images on disk are 8- or 16-bit PNG or 32-bit float TIFF and convert to/from
[0, 1] floats; depth files are 32-bit float TIFF or PFM with NaN and
non-positive entries treated as invalid.
"""

from __future__ import annotations

import json
from pathlib import Path

import cv2
import numpy as np

from .errors import FileFormatError, ParameterError
from .imaging import DepthMap, Image, Mask
from .geometry import Intrinsics, Pose
from .losses import LossMap

_PNG_SUFFIXES = {".png"}
_TIFF_SUFFIXES = {".tif", ".tiff"}


def _to_bgr(data: np.ndarray) -> np.ndarray:
    if data.ndim == 3 and data.shape[2] == 3:
        return data[:, :, ::-1]
    return data


def read_image(path: str | Path) -> Image:
    """Read an 8/16-bit PNG or float TIFF into a [0, 1] float image."""
    path = Path(path)
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FileFormatError(f"cannot read image: {path}")
    if raw.ndim == 3 and raw.shape[2] == 4:
        raw = raw[:, :, :3]
    raw = _to_bgr(raw)  # cv2 loads BGR; flip back to RGB
    if raw.dtype == np.uint8:
        data = raw.astype(np.float64) / 255.0
    elif raw.dtype == np.uint16:
        data = raw.astype(np.float64) / 65535.0
    elif raw.dtype in (np.float32, np.float64):
        data = raw.astype(np.float64)
    else:
        raise FileFormatError(f"unsupported image dtype {raw.dtype}: {path}")
    if not np.all(np.isfinite(data)):
        raise FileFormatError(f"image contains non-finite values: {path}")
    return Image(data)


def write_image(path: str | Path, img: Image, bit_depth: int = 8):
    """Write PNG (8- or 16-bit, values clipped to [0, 1]) or float32 TIFF."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    suffix = path.suffix.lower()
    data = img.data[:, :, 0] if img.channels == 1 else img.data
    if suffix in _PNG_SUFFIXES:
        clipped = np.clip(data, 0.0, 1.0)
        if bit_depth == 8:
            quant = np.rint(clipped * 255.0).astype(np.uint8)
        elif bit_depth == 16:
            quant = np.rint(clipped * 65535.0).astype(np.uint16)
        else:
            raise ParameterError("PNG bit depth must be 8 or 16", bit_depth=bit_depth)
        ok = cv2.imwrite(str(path), _to_bgr(quant))
    elif suffix in _TIFF_SUFFIXES:
        ok = cv2.imwrite(str(path), _to_bgr(data.astype(np.float32)))
    else:
        raise ParameterError(f"unsupported image suffix: {suffix}")
    if not ok:
        raise FileFormatError(f"failed to write image: {path}")


def read_depth(path: str | Path) -> DepthMap:
    """Read a float TIFF or PFM depth map; NaN/<=0 become invalid pixels."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        data = _read_pfm(path)
    elif suffix in _TIFF_SUFFIXES:
        raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
        if raw is None:
            raise FileFormatError(f"cannot read depth file: {path}")
        if raw.ndim == 3:
            raw = raw[:, :, 0]
        data = raw.astype(np.float64)
    else:
        raise ParameterError(f"unsupported depth suffix: {suffix}")
    valid = np.isfinite(data) & (data > 0)
    return DepthMap(np.where(valid, data, 0.0), valid)


def write_depth(path: str | Path, depth: DepthMap):
    """Write a float32 TIFF or PFM; invalid pixels are stored as NaN."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.where(depth.valid, depth.depth, np.nan).astype(np.float32)
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        _write_pfm(path, data)
    elif suffix in _TIFF_SUFFIXES:
        if not cv2.imwrite(str(path), data):
            raise FileFormatError(f"failed to write depth: {path}")
    else:
        raise ParameterError(f"unsupported depth suffix: {suffix}")


def _read_pfm(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header == b"Pf":
            channels = 1
        elif header == b"PF":
            channels = 3
        else:
            raise FileFormatError(f"not a PFM file: {path}")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise FileFormatError(f"malformed PFM dimensions: {path}")
        width, height = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        endian = "<" if scale < 0 else ">"
        count = width * height * channels
        data = np.frombuffer(fh.read(count * 4), dtype=endian + "f4", count=count)
    shape = (height, width, channels) if channels == 3 else (height, width)
    # PFM stores rows bottom-to-top
    arr = np.flipud(data.reshape(shape)).astype(np.float64)
    return arr[:, :, 0] if channels == 3 else arr


def _write_pfm(path: Path, data: np.ndarray):
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{data.shape[1]} {data.shape[0]}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(np.flipud(data).astype("<f4").tobytes())


def read_mask(path: str | Path) -> Mask:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FileFormatError(f"cannot read mask: {path}")
    if raw.ndim == 3:
        raw = raw[:, :, 0]
    return Mask(raw > 0)


def write_mask(path: str | Path, mask: Mask):
    """1-channel PNG, 0 = dropped, 255 = kept."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), mask.keep.astype(np.uint8) * 255):
        raise FileFormatError(f"failed to write mask: {path}")


def write_loss_map(path: str | Path, loss: LossMap):
    """Float32 TIFF with NaN at invalid pixels."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.where(loss.valid, loss.value, np.nan).astype(np.float32)
    if not cv2.imwrite(str(path), data):
        raise FileFormatError(f"failed to write loss map: {path}")


def read_loss_map(path: str | Path) -> LossMap:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FileFormatError(f"cannot read loss map: {path}")
    if raw.ndim == 3:
        raw = raw[:, :, 0]
    data = raw.astype(np.float64)
    valid = np.isfinite(data)
    return LossMap(np.where(valid, data, 0.0), valid)


def _load_json(path: str | Path) -> dict | list:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"cannot read JSON file {path}: {exc}") from exc


def read_intrinsics(path: str | Path) -> Intrinsics:
    """JSON object {fx, fy, cx, cy, width, height} (dimensions optional)."""
    obj = _load_json(path)
    if not isinstance(obj, dict):
        raise FileFormatError(f"intrinsics file must hold a JSON object: {path}")
    try:
        return Intrinsics(fx=float(obj["fx"]), fy=float(obj["fy"]),
                          cx=float(obj["cx"]), cy=float(obj["cy"]),
                          width=obj.get("width"), height=obj.get("height"))
    except KeyError as exc:
        raise FileFormatError(f"intrinsics JSON missing key {exc}: {path}") from exc


def write_intrinsics(path: str | Path, K: Intrinsics):
    obj = {"fx": K.fx, "fy": K.fy, "cx": K.cx, "cy": K.cy}
    if K.width is not None:
        obj["width"] = K.width
    if K.height is not None:
        obj["height"] = K.height
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def _pose_from_obj(obj) -> Pose:
    m = np.asarray(obj, dtype=np.float64)
    if m.size == 16:
        m = m.reshape(4, 4)
    return Pose.from_matrix(m)


def read_poses(path: str | Path) -> list[Pose]:
    """JSON 4x4 row-major matrix (nested or flat 16), or a list of nested 4x4s."""
    obj = _load_json(path)
    try:
        arr = np.asarray(obj, dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise FileFormatError(f"malformed pose file {path}: {exc}") from exc
    if arr.ndim == 3:
        return [_pose_from_obj(m) for m in obj]
    if (arr.ndim == 2 and arr.shape == (4, 4)) or (arr.ndim == 1 and arr.size == 16):
        return [_pose_from_obj(obj)]
    raise FileFormatError(f"pose file must hold one or more 4x4 matrices: {path}")


def write_poses(path: str | Path, poses: list[Pose]):
    mats = [p.matrix.tolist() for p in poses]
    payload = mats[0] if len(mats) == 1 else mats
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def read_water_model(path: str | Path):
    from .enhancement import WaterModel
    obj = _load_json(path)
    if not isinstance(obj, dict):
        raise FileFormatError(f"water model file must hold a JSON object: {path}")
    return WaterModel.from_json(obj)


def write_water_model(path: str | Path, model):
    Path(path).write_text(json.dumps(model.to_json(), indent=2) + "\n")
