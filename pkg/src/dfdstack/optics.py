"""Thin-lens defocus forward model.

A scene point at depth Z, imaged with focus distance Z_f, focal length f,
and aperture diameter D, produces a blur disc of diameter

    b = D * |Z - Z_f| / Z * f / (Z_f - f)

on the sensor. The disc is modeled as an isotropic Gaussian with sigma equal
to the blur radius in pixels, truncated at three sigma and capped at a
maximum kernel size. Blurring an image under a per-pixel depth map is a
sparse linear operator on the flattened image: row p gathers the kernel
weights of pixel p's depth at p's in-bounds neighbors, and taps that fall
outside the image are simply omitted (optionally compensated by renormalizing
affected rows).

Bitwise consistency matters here: kernel weights are normalized per radius
group, in the same summation order as the standalone kernel constructor, so
an assembled operator row equals the kernel for that pixel's depth exactly
and a pixel's row never depends on other pixels' radii.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .core import CameraConfig, DepthMap, FocalStack, Image, ValidationError, readonly_array

# Pixels per assembly chunk; bounds peak memory at chunk * max_kernel_size**2.
_CHUNK = 8192


def _check_focus(camera: CameraConfig, focus_distance: float) -> float:
    zf = float(focus_distance)
    if not np.isfinite(zf) or zf <= camera.focal_length_m:
        raise ValidationError(
            f"focus distance must exceed the focal length {camera.focal_length_m} m, got {zf}"
        )
    return zf


def blur_diameter(camera: CameraConfig, focus_distance: float, depth):
    """Blur disc diameter in meters on the sensor; scalar or elementwise."""
    zf = _check_focus(camera, focus_distance)
    z = np.asarray(depth, dtype=np.float64)
    if not np.all(np.isfinite(z)) or np.any(z <= 0):
        raise ValidationError("depth must be finite and strictly positive")
    f = camera.focal_length_m
    b = camera.aperture_diameter_m * np.abs(z - zf) / z * (f / (zf - f))
    return float(b) if np.isscalar(depth) else b


def blur_sigma_px(camera: CameraConfig, focus_distance: float, depth):
    """Gaussian sigma in pixels; radii under min_blur_radius_px collapse to 0."""
    b = blur_diameter(camera, focus_distance, depth)
    sigma = np.asarray(b, dtype=np.float64) / (2.0 * camera.pixel_size_m)
    sigma = np.where(sigma < camera.min_blur_radius_px, 0.0, sigma)
    return float(sigma) if np.isscalar(depth) else sigma


def _gaussian_profile(d2, sigma):
    # Shared by the kernel constructor and the operator assembly so both
    # produce identical doubles for identical (offset, sigma) inputs.
    return np.exp(-d2 / (2.0 * np.square(sigma)))


@dataclass(frozen=True, eq=False)
class BlurKernel:
    """Square normalized blur kernel of side 2 * radius + 1."""

    radius: int
    weights: np.ndarray
    sigma: float = 0.0

    def __post_init__(self):
        weights = readonly_array(self.weights)
        side = 2 * self.radius + 1
        if self.radius < 0 or weights.shape != (side, side):
            raise ValidationError(f"kernel shape {weights.shape} does not match radius {self.radius}")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValidationError("kernel weights must be finite and nonnegative")
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return 2 * self.radius + 1

    @property
    def is_delta(self) -> bool:
        return self.radius == 0


_DELTA_WEIGHTS = np.ones((1, 1))


def gaussian_kernel(sigma: float, max_kernel_size: int = 17, min_blur_radius_px: float = 0.0) -> BlurKernel:
    """Normalized Gaussian kernel truncated at ceil(3 sigma).

    The radius is capped at floor(max_kernel_size / 2). A sigma of zero, or
    below min_blur_radius_px, yields the discrete delta.
    """
    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma < 0:
        raise ValidationError(f"sigma must be finite and nonnegative, got {sigma}")
    if max_kernel_size < 1 or max_kernel_size % 2 == 0:
        raise ValidationError(f"max kernel size must be odd and positive, got {max_kernel_size}")
    if min_blur_radius_px < 0:
        raise ValidationError("minimum blur radius must be nonnegative")
    if sigma == 0.0 or sigma < min_blur_radius_px:
        return BlurKernel(radius=0, weights=_DELTA_WEIGHTS, sigma=0.0)
    radius = int(min(np.ceil(3.0 * sigma), max_kernel_size // 2))
    if radius == 0:
        return BlurKernel(radius=0, weights=_DELTA_WEIGHTS, sigma=sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    d2 = offsets[:, None] ** 2 + offsets[None, :] ** 2
    weights = _gaussian_profile(d2, sigma)
    weights = weights / weights.sum()
    return BlurKernel(radius=radius, weights=weights, sigma=sigma)


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """mn x mn sparse blur operator acting on flattened (row-major) images."""

    matrix: sparse.csr_matrix
    grid_shape: tuple[int, int]

    def __post_init__(self):
        mat = self.matrix
        if not sparse.issparse(mat):
            raise ValidationError("operator matrix must be sparse")
        mat = mat.tocsr()
        m, n = (int(v) for v in self.grid_shape)
        if m < 1 or n < 1 or mat.shape != (m * n, m * n):
            raise ValidationError(
                f"operator shape {mat.shape} does not match grid {m}x{n}"
            )
        if mat.nnz and (np.any(mat.data < 0) or not np.all(np.isfinite(mat.data))):
            raise ValidationError("operator weights must be finite and nonnegative")
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "grid_shape", (m, n))

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def row_entries(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and weights of row p, in ascending column order."""
        if not 0 <= p < self.size:
            raise ValidationError(f"row index {p} out of range [0, {self.size})")
        lo, hi = self.matrix.indptr[p], self.matrix.indptr[p + 1]
        return self.matrix.indices[lo:hi].copy(), self.matrix.data[lo:hi].copy()

    def apply_flat(self, flat: np.ndarray) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape[0] != self.size:
            raise ValidationError(f"vector length {flat.shape[0]} does not match operator size {self.size}")
        return self.matrix @ flat


def build_sparse_operator(
    depth: DepthMap,
    camera: CameraConfig,
    focus_distance: float,
    renormalize_boundary: bool = False,
) -> SparseOperator:
    """Assemble the defocus operator for one focus setting.

    Row p holds the normalized kernel of depth(p) placed at p's in-bounds
    neighbors; out-of-bounds taps are omitted. With renormalize_boundary,
    each row is rescaled to sum to one afterwards.
    """
    m, n = depth.data.shape
    mn = m * n
    sigma = blur_sigma_px(camera, focus_distance, depth.data)
    rcap = camera.max_kernel_size // 2
    r_pix = np.zeros((m, n), dtype=np.int64)
    positive = sigma > 0
    r_pix[positive] = np.minimum(np.ceil(3.0 * sigma[positive]), rcap).astype(np.int64)

    ii, jj = np.indices((m, n))
    rows_parts: list[np.ndarray] = []
    cols_parts: list[np.ndarray] = []
    data_parts: list[np.ndarray] = []
    for radius in np.unique(r_pix):
        sel = r_pix == radius
        pi = ii[sel]
        pj = jj[sel]
        p_flat = pi * n + pj
        if radius == 0:
            rows_parts.append(p_flat)
            cols_parts.append(p_flat)
            data_parts.append(np.ones(p_flat.size))
            continue
        offsets = np.arange(-radius, radius + 1, dtype=np.float64)
        d2 = offsets[:, None] ** 2 + offsets[None, :] ** 2
        uu, vv = np.meshgrid(offsets.astype(np.int64), offsets.astype(np.int64), indexing="ij")
        sig_sel = sigma[sel]
        for start in range(0, p_flat.size, _CHUNK):
            stop = min(start + _CHUNK, p_flat.size)
            sig_c = sig_sel[start:stop]
            weights = _gaussian_profile(d2[None, :, :], sig_c[:, None, None])
            norm = weights.reshape(sig_c.size, -1).sum(axis=1)
            weights = weights / norm[:, None, None]
            qi = pi[start:stop, None, None] + uu[None]
            qj = pj[start:stop, None, None] + vv[None]
            inb = (qi >= 0) & (qi < m) & (qj >= 0) & (qj < n)
            rows_parts.append(np.broadcast_to(p_flat[start:stop, None, None], qi.shape)[inb])
            cols_parts.append((qi * n + qj)[inb])
            data_parts.append(weights[inb])

    rows = np.concatenate(rows_parts)
    cols = np.concatenate(cols_parts)
    data = np.concatenate(data_parts)
    matrix = sparse.coo_matrix((data, (rows, cols)), shape=(mn, mn)).tocsr()
    if renormalize_boundary:
        row_sums = np.asarray(matrix.sum(axis=1)).ravel()
        per_entry = np.repeat(row_sums, np.diff(matrix.indptr))
        matrix.data = matrix.data / per_entry
    return SparseOperator(matrix=matrix, grid_shape=(m, n))


def apply_operator(op: SparseOperator, image: Image) -> Image:
    """Blur an image with an assembled operator."""
    m, n = op.grid_shape
    if (image.height, image.width) != (m, n):
        raise ValidationError(
            f"image {image.height}x{image.width} does not match operator grid {m}x{n}"
        )
    flat = image.data.reshape(m * n, image.channels)
    out = op.apply_flat(flat)
    return Image(out.reshape(m, n, image.channels), intensity_range=image.intensity_range)


def render_focal_stack(
    aif: Image,
    depth: DepthMap,
    camera: CameraConfig,
    focus_distances,
    renormalize_boundary: bool = False,
) -> FocalStack:
    """Render the focal stack a camera would capture of (aif, depth)."""
    if (aif.height, aif.width) != (depth.height, depth.width):
        raise ValidationError(
            f"AIF {aif.height}x{aif.width} and depth {depth.height}x{depth.width} dimensions differ"
        )
    frames = tuple(
        apply_operator(build_sparse_operator(depth, camera, zf, renormalize_boundary), aif)
        for zf in focus_distances
    )
    return FocalStack(frames=frames, focus_distances=tuple(focus_distances), camera=camera)


def convolve_kernel(data: np.ndarray, kernel: BlurKernel, renormalize_boundary: bool = False) -> np.ndarray:
    """Spatially uniform blur by shift-and-accumulate, omitting out-of-bounds taps.

    Accumulation visits kernel taps in row-major order, the same order a
    sparse operator row stores them, so for a uniform depth map this equals
    the operator route exactly.
    """
    arr = np.asarray(data, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    m, n = arr.shape[:2]
    r = kernel.radius
    if kernel.is_delta and kernel.weights[0, 0] == 1.0:
        out = arr.copy()
        return out[:, :, 0] if squeeze else out
    acc = np.zeros_like(arr)
    wsum = np.zeros((m, n, 1)) if renormalize_boundary else None
    for du in range(-r, r + 1):
        di0, di1 = max(0, -du), min(m, m - du)
        if di0 >= di1:
            continue
        for dv in range(-r, r + 1):
            dj0, dj1 = max(0, -dv), min(n, n - dv)
            if dj0 >= dj1:
                continue
            w = kernel.weights[du + r, dv + r]
            acc[di0:di1, dj0:dj1] += w * arr[di0 + du:di1 + du, dj0 + dv:dj1 + dv]
            if wsum is not None:
                wsum[di0:di1, dj0:dj1] += w
    if wsum is not None:
        acc = acc / wsum
    return acc[:, :, 0] if squeeze else acc


@dataclass(frozen=True, eq=False)
class BlurStack:
    """AIF blurred at every (candidate depth, focus setting) pair.

    layers[c][k] is the AIF blurred as if the whole scene sat at
    candidate_depths[c], seen through focus setting k.
    """

    candidate_depths: tuple[float, ...]
    layers: tuple[tuple[Image, ...], ...]

    def __post_init__(self):
        cands = tuple(float(z) for z in self.candidate_depths)
        layers = tuple(tuple(row) for row in self.layers)
        if not cands:
            raise ValidationError("blur stack needs at least one candidate depth")
        if any(z <= 0 for z in cands):
            raise ValidationError("candidate depths must be strictly positive")
        if any(b <= a for a, b in zip(cands, cands[1:])):
            raise ValidationError("candidate depths must be strictly increasing")
        if len(layers) != len(cands):
            raise ValidationError("layer rows and candidate depths differ in length")
        k = len(layers[0])
        ref = layers[0][0]
        for row in layers:
            if len(row) != k:
                raise ValidationError("blur stack rows must cover the same focus settings")
            for img in row:
                if img.data.shape != ref.data.shape:
                    raise ValidationError("blur stack layers must share one shape")
        object.__setattr__(self, "candidate_depths", cands)
        object.__setattr__(self, "layers", layers)

    @property
    def num_candidates(self) -> int:
        return len(self.candidate_depths)

    @property
    def num_frames(self) -> int:
        return len(self.layers[0])


def build_blur_stack(
    aif: Image,
    camera: CameraConfig,
    focus_distances,
    candidate_depths,
    renormalize_boundary: bool = False,
    threads: int = 1,
) -> BlurStack:
    """Precompute blurred copies of the AIF for a depth-candidate grid.

    Work is split across candidates; each (candidate, frame) layer is
    independent, and results are assembled in candidate order, so the thread
    count never changes the output.
    """
    zfs = [_check_focus(camera, z) for z in focus_distances]
    cands = [float(z) for z in candidate_depths]
    rng = aif.intensity_range

    def one_candidate(z: float) -> tuple[Image, ...]:
        row = []
        for zf in zfs:
            kernel = gaussian_kernel(
                blur_sigma_px(camera, zf, z),
                camera.max_kernel_size,
                camera.min_blur_radius_px,
            )
            row.append(Image(convolve_kernel(aif.data, kernel, renormalize_boundary), intensity_range=rng))
        return tuple(row)

    if threads > 1 and len(cands) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            layers = tuple(pool.map(one_candidate, cands))
    else:
        layers = tuple(one_candidate(z) for z in cands)
    return BlurStack(candidate_depths=tuple(cands), layers=layers)
