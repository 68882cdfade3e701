"""Image, depth, and focal-stack manifest I/O.

PFM is the lossless interchange format: float32 scalars, written
little-endian (negative scale line), rows stored bottom to top. PNG is the
preview/quantized format at 8 or 16 bits per channel. Manifest files are
JSON and resolve relative paths against the manifest's own directory.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .core import CameraConfig, DepthMap, FocalStack, FormatError, Image, ValidationError

log = logging.getLogger(__name__)

_PNG_EXTS = {".png"}
_PFM_EXTS = {".pfm"}


def _read_pfm(path: Path) -> np.ndarray:
    """Read a PFM file into an (m, n) or (m, n, 3) float32 array."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise FormatError(f"{path}: not a PFM file (magic {magic!r})")
        tokens: list[bytes] = []
        while len(tokens) < 2:
            line = fh.readline()
            if not line:
                raise FormatError(f"{path}: truncated PFM header")
            tokens.extend(line.split())
        try:
            width, height = int(tokens[0]), int(tokens[1])
        except ValueError as exc:
            raise FormatError(f"{path}: bad PFM dimensions {tokens[:2]}") from exc
        if width < 1 or height < 1:
            raise FormatError(f"{path}: bad PFM dimensions {width}x{height}")
        try:
            scale = float(fh.readline().strip())
        except ValueError as exc:
            raise FormatError(f"{path}: bad PFM scale line") from exc
        dtype = "<f4" if scale < 0 else ">f4"
        count = width * height * channels
        buf = fh.read(count * 4)
        if len(buf) < count * 4:
            raise FormatError(f"{path}: truncated PFM payload")
        flat = np.frombuffer(buf, dtype=dtype, count=count)
        data = flat.reshape(height, width) if channels == 1 else flat.reshape(height, width, 3)
        # Rows are stored bottom to top.
        return np.ascontiguousarray(np.flipud(data)).astype(np.float32)


def _write_pfm(path: Path, data: np.ndarray) -> None:
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim == 2:
        magic = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"PF"
    else:
        raise ValidationError(f"PFM supports 1 or 3 channels, got shape {arr.shape}")
    height, width = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n")
        fh.write(f"{width} {height}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(np.flipud(arr).astype("<f4").tobytes())


def _require_readable(path: Path) -> None:
    # Missing/unreadable files are I/O failures, not format failures.
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    if not os.access(path, os.R_OK):
        raise PermissionError(f"cannot read: {path}")


def load_image(path: str | Path, intensity_range: tuple[float, float] | None = None) -> Image:
    """Load a PNG or PFM image.

    PNG integer codes are mapped to [0, 1] by dividing by the maximum code
    (255 or 65535). PFM values pass through unchanged; their default range
    is the data min/max (widened by 1 if the data is constant) unless the
    caller declares one.
    """
    path = Path(path)
    _require_readable(path)
    ext = path.suffix.lower()
    if ext in _PFM_EXTS:
        data = _read_pfm(path).astype(np.float64)
        if not np.all(np.isfinite(data)):
            raise ValidationError(f"{path}: PFM contains NaN or Inf")
        if intensity_range is None:
            lo, hi = float(data.min()), float(data.max())
            if not lo < hi:
                hi = lo + 1.0
            intensity_range = (lo, hi)
        return Image(data, intensity_range=intensity_range)
    if ext in _PNG_EXTS:
        raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
        if raw is None:
            raise FormatError(f"{path}: not a decodable PNG")
        if raw.dtype == np.uint8:
            max_code = 255.0
        elif raw.dtype == np.uint16:
            max_code = 65535.0
        else:
            raise FormatError(f"{path}: unsupported PNG sample type {raw.dtype}")
        if raw.ndim == 3:
            if raw.shape[2] == 4:
                raw = raw[:, :, :3]
            if raw.shape[2] == 3:
                raw = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
            elif raw.shape[2] != 1:
                raise FormatError(f"{path}: unsupported channel count {raw.shape[2]}")
        data = raw.astype(np.float64) / max_code
        return Image(data, intensity_range=intensity_range or (0.0, 1.0))
    raise FormatError(f"{path}: unsupported image extension {ext!r}")


def save_image(image: Image, path: str | Path, bit_depth: int = 8) -> None:
    """Write an image as PFM (lossless float32) or PNG (quantized).

    PNG quantization clamps to the declared intensity range and maps it
    onto integer codes with round-half-up, so a value at the midpoint of an
    8-bit code step rounds to the higher code.
    """
    path = Path(path)
    ext = path.suffix.lower()
    if ext in _PFM_EXTS:
        _write_pfm(path, image.data)
        return
    if ext in _PNG_EXTS:
        if bit_depth == 8:
            max_code, dtype = 255.0, np.uint8
        elif bit_depth == 16:
            max_code, dtype = 65535.0, np.uint16
        else:
            raise ValidationError(f"PNG bit depth must be 8 or 16, got {bit_depth}")
        lo, hi = image.intensity_range
        unit = np.clip((image.data - lo) / (hi - lo), 0.0, 1.0)
        codes = np.floor(unit * max_code + 0.5).astype(dtype)
        if codes.shape[2] == 1:
            out = codes[:, :, 0]
        else:
            out = cv2.cvtColor(codes, cv2.COLOR_RGB2BGR)
        if not cv2.imwrite(str(path), out):
            raise OSError(f"failed to write {path}")
        return
    raise FormatError(f"{path}: unsupported image extension {ext!r}")


def load_depth(path: str | Path, valid_range: tuple[float, float] | None = None) -> DepthMap:
    """Load a single-channel PFM as a depth map.

    Without an explicit range the data min/max is used; a constant map gets
    the smallest representable widening so the range stays nonempty.
    """
    path = Path(path)
    _require_readable(path)
    if path.suffix.lower() not in _PFM_EXTS:
        raise FormatError(f"{path}: depth maps are stored as PFM")
    data = _read_pfm(path).astype(np.float64)
    if data.ndim != 2:
        raise FormatError(f"{path}: expected a single-channel PFM depth map")
    if valid_range is None:
        lo, hi = float(data.min()), float(data.max())
        if not lo < hi:
            hi = math.nextafter(lo, math.inf)
        valid_range = (lo, hi)
    return DepthMap(data, valid_range=valid_range)


def save_depth(depth: DepthMap, path: str | Path) -> None:
    path = Path(path)
    if path.suffix.lower() not in _PFM_EXTS:
        raise FormatError(f"{path}: depth maps are stored as PFM")
    _write_pfm(path, depth.data)


def save_depth_preview(depth: DepthMap, path: str | Path) -> None:
    """Write an 8-bit PNG preview, near = dark, normalized to the valid range."""
    lo, hi = depth.valid_range
    unit = np.clip((depth.data - lo) / (hi - lo), 0.0, 1.0)
    save_image(Image(unit[:, :, None], intensity_range=(0.0, 1.0)), path, bit_depth=8)


_MANIFEST_KEYS = {"frames", "focus_distances_m", "camera", "intensity_range", "ground_truth"}
_CAMERA_KEYS = {
    "focal_length_m",
    "aperture_diameter_m",
    "pixel_size_m",
    "min_blur_radius_px",
    "max_kernel_size",
}


@dataclass(frozen=True)
class StackManifest:
    """Description of a focal stack on disk.

    Frame and ground-truth paths are stored as written (usually relative)
    and resolved against the manifest's directory on load.
    """

    frames: tuple[str, ...]
    focus_distances_m: tuple[float, ...]
    camera: CameraConfig
    intensity_range: tuple[float, float] = (0.0, 1.0)
    ground_truth_depth: str | None = None
    ground_truth_aif: str | None = None

    def to_dict(self) -> dict:
        out: dict = {
            "frames": list(self.frames),
            "focus_distances_m": list(self.focus_distances_m),
            "camera": {
                "focal_length_m": self.camera.focal_length_m,
                "aperture_diameter_m": self.camera.aperture_diameter_m,
                "pixel_size_m": self.camera.pixel_size_m,
                "min_blur_radius_px": self.camera.min_blur_radius_px,
                "max_kernel_size": self.camera.max_kernel_size,
            },
            "intensity_range": list(self.intensity_range),
        }
        gt = {}
        if self.ground_truth_depth is not None:
            gt["depth"] = self.ground_truth_depth
        if self.ground_truth_aif is not None:
            gt["aif"] = self.ground_truth_aif
        if gt:
            out["ground_truth"] = gt
        return out

    @staticmethod
    def from_dict(raw: dict) -> "StackManifest":
        if not isinstance(raw, dict):
            raise FormatError("manifest root must be a JSON object")
        for key in raw:
            if key not in _MANIFEST_KEYS:
                log.warning("manifest: ignoring unknown key %r", key)
        try:
            frames = tuple(str(p) for p in raw["frames"])
            zf = tuple(float(z) for z in raw["focus_distances_m"])
            cam_raw = dict(raw["camera"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"manifest missing or malformed required field: {exc}") from exc
        for key in list(cam_raw):
            if key not in _CAMERA_KEYS:
                log.warning("manifest camera: ignoring unknown key %r", key)
                cam_raw.pop(key)
        try:
            camera = CameraConfig(**cam_raw)
        except TypeError as exc:
            raise FormatError(f"manifest camera config malformed: {exc}") from exc
        rng = raw.get("intensity_range", (0.0, 1.0))
        gt = raw.get("ground_truth", {}) or {}
        if not isinstance(gt, dict):
            raise FormatError("manifest ground_truth must be an object")
        return StackManifest(
            frames=frames,
            focus_distances_m=zf,
            camera=camera,
            intensity_range=(float(rng[0]), float(rng[1])),
            ground_truth_depth=gt.get("depth"),
            ground_truth_aif=gt.get("aif"),
        )


def save_manifest(manifest: StackManifest, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2)
        fh.write("\n")


def load_manifest(path: str | Path) -> StackManifest:
    path = Path(path)
    _require_readable(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    return StackManifest.from_dict(raw)


def load_stack(manifest_path: str | Path) -> FocalStack:
    """Load the focal stack a manifest describes.

    Relative frame paths resolve against the manifest's directory. Frame
    count/order must match the focus distances; shape and range coherence is
    enforced by the stack constructor.
    """
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    base = manifest_path.parent
    frames = []
    for rel in manifest.frames:
        frame_path = Path(rel)
        if not frame_path.is_absolute():
            frame_path = base / frame_path
        frames.append(load_image(frame_path, intensity_range=manifest.intensity_range))
    return FocalStack(
        frames=tuple(frames),
        focus_distances=manifest.focus_distances_m,
        camera=manifest.camera,
    )
