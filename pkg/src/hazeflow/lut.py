"""Learnable 3D lookup table for adaptive color correction.

The table is an MxMxM lattice of output RGB triples. Applying it looks up
each pixel's cell and blends the 8 surrounding vertices with trilinear
weights; both the input image and the lattice receive gradients.

Two index conventions coexist deliberately. `lattice_coords` exposes the
raw coordinate map value/(C_max/M), clamped into [0, M-1] so the top cell
exists. `trilinear_apply` indexes with scale (M-1)/C_max, which is the
convention under which an identity-initialized lattice reproduces its
input exactly (including at value C_max) and any lattice linear in the
index is interpolated exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import LatticeRangeError, ShapeError
from .tensor import Tensor

_RANGE_TOL = 1e-6
_LUMA = (0.299, 0.587, 0.114)


class Lut3D:
    """MxMxM lattice of output RGB values, learnable via its grid tensor."""

    def __init__(self, grid, c_max: float = 1.0, requires_grad: bool = True):
        data = grid.data if isinstance(grid, Tensor) else np.asarray(grid)
        if data.ndim != 4 or data.shape[3] != 3 or not (
                data.shape[0] == data.shape[1] == data.shape[2]):
            raise ShapeError(f"LUT grid must be (M, M, M, 3), got {data.shape}")
        if data.shape[0] < 2:
            raise ShapeError("LUT needs at least 2 bins per channel")
        if isinstance(grid, Tensor):
            self.grid = grid
        else:
            self.grid = Tensor(data, requires_grad=requires_grad)
        self.c_max = float(c_max)

    @property
    def m(self) -> int:
        return self.grid.data.shape[0]

    @property
    def grid_spacing(self) -> float:
        return self.c_max / (self.m - 1)

    def copy(self) -> "Lut3D":
        return Lut3D(self.grid.data.copy(), self.c_max,
                     requires_grad=self.grid.requires_grad)


def identity_lut(m: int = 33, c_max: float = 1.0, dtype=np.float32,
                 requires_grad: bool = True) -> Lut3D:
    """Lattice whose vertex (i, j, k) stores (i, j, k) * C_max / (M - 1)."""
    if m < 2:
        raise ShapeError("LUT needs at least 2 bins per channel")
    axis = np.arange(m, dtype=dtype) * (c_max / (m - 1))
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
    return Lut3D(Tensor(grid.astype(dtype), requires_grad=requires_grad), c_max)


def fixed_contrast_saturation_lut(m: int = 33, c_max: float = 1.0,
                                  alpha: float = 1.2, beta: float = 1.2,
                                  dtype=np.float32) -> Lut3D:
    """Non-learnable lattice applying contrast then saturation enhancement.

    On normalized colors: c <- clamp((c - 0.5) * alpha + 0.5), then
    c <- clamp(L + beta * (c - L)) with L the Rec.601 luma.
    """
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    ident = identity_lut(m, c_max, dtype=np.float64, requires_grad=False)
    colors = ident.grid.data / c_max
    colors = np.clip((colors - 0.5) * alpha + 0.5, 0.0, 1.0)
    luma = (_LUMA[0] * colors[..., 0] + _LUMA[1] * colors[..., 1]
            + _LUMA[2] * colors[..., 2])[..., None]
    colors = np.clip(luma + beta * (colors - luma), 0.0, 1.0)
    grid = (colors * c_max).astype(dtype)
    return Lut3D(Tensor(grid, requires_grad=False), c_max)


def lattice_coords(rgb, lut: Lut3D) -> tuple[float, float, float]:
    """Continuous lattice coordinates of one RGB triple: value / (C_max / M).

    Raw coordinates reach M at value C_max; they are clamped into
    [0, M-1] so the enclosing interpolation cell always exists.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape != (3,):
        raise ShapeError(f"expected an RGB triple, got shape {rgb.shape}")
    if np.any(rgb < -_RANGE_TOL) or np.any(rgb > lut.c_max + _RANGE_TOL):
        raise LatticeRangeError(
            f"components {rgb} outside [0, {lut.c_max}]; clamp the image first")
    coords = np.clip(rgb * (lut.m / lut.c_max), 0.0, lut.m - 1)
    return float(coords[0]), float(coords[1]), float(coords[2])


def trilinear_apply(x: Tensor, lut: Lut3D) -> Tensor:
    """Map every pixel through the lattice with trilinear interpolation.

    Differentiable with respect to both the image and the grid; grid
    gradients scatter onto the 8 cell corners with the interpolation
    weights.
    """
    if x.data.ndim != 4 or x.data.shape[1] != 3:
        raise ShapeError(f"expected a (B, 3, H, W) image, got {x.shape}")
    data = x.data
    if data.min() < -_RANGE_TOL or data.max() > lut.c_max + _RANGE_TOL:
        raise LatticeRangeError(
            f"image values [{data.min():.4g}, {data.max():.4g}] outside "
            f"[0, {lut.c_max}]; clamp before applying the LUT")

    m = lut.m
    grid = lut.grid
    scale = (m - 1) / lut.c_max
    pos = np.clip(data.astype(np.float64) * scale, 0.0, m - 1)  # (B, 3, H, W)
    cell = np.minimum(pos.astype(np.int64), m - 2)
    frac = (pos - cell).astype(data.dtype)

    i0, j0, k0 = cell[:, 0], cell[:, 1], cell[:, 2]
    fr, fg, fb = frac[:, 0], frac[:, 1], frac[:, 2]

    flat = grid.data.reshape(m * m * m, 3)

    def corner(di, dj, dk):
        lin = ((i0 + di) * m + (j0 + dj)) * m + (k0 + dk)
        return lin, flat[lin]  # (B, H, W), (B, H, W, 3)

    out = None
    corners = []
    for di in (0, 1):
        wr = fr if di else (1.0 - fr)
        for dj in (0, 1):
            wg = fg if dj else (1.0 - fg)
            for dk in (0, 1):
                wb = fb if dk else (1.0 - fb)
                lin, val = corner(di, dj, dk)
                w = (wr * wg * wb)
                corners.append((lin, w, val, (di, dj, dk)))
                term = w[..., None] * val
                out = term if out is None else out + term

    out_data = np.ascontiguousarray(
        np.moveaxis(out, 3, 1).astype(data.dtype, copy=False))
    result = Tensor._result(out_data, (x, grid), "trilinear_apply")
    if result._op:
        def _bwd(g, a=x, gr=grid):
            gout = np.moveaxis(g, 1, 3)  # (B, H, W, 3)
            if gr.requires_grad or gr._op:
                gg = np.zeros_like(gr.data).reshape(m * m * m, 3)
                for lin, w, _val, _ in corners:
                    np.add.at(gg, lin, w[..., None] * gout)
                gr._accumulate(gg.reshape(gr.data.shape))
            if a.requires_grad or a._op:
                dr = np.zeros(fr.shape + (3,), dtype=np.float64)
                dg = np.zeros_like(dr)
                db = np.zeros_like(dr)
                for _lin, _w, val, (di, dj, dk) in corners:
                    wr = fr if di else (1.0 - fr)
                    wg = fg if dj else (1.0 - fg)
                    wb = fb if dk else (1.0 - fb)
                    sr = 1.0 if di else -1.0
                    sg = 1.0 if dj else -1.0
                    sb = 1.0 if dk else -1.0
                    dr += (sr * wg * wb)[..., None] * val
                    dg += (wr * sg * wb)[..., None] * val
                    db += (wr * wg * sb)[..., None] * val
                gx = np.empty_like(a.data)
                gx[:, 0] = (gout * dr).sum(axis=-1) * scale
                gx[:, 1] = (gout * dg).sum(axis=-1) * scale
                gx[:, 2] = (gout * db).sum(axis=-1) * scale
                a._accumulate(gx.astype(a.data.dtype, copy=False))
        result._backward = _bwd
    return result


def export_cube(lut: Lut3D, path) -> None:
    """Write the lattice as a plain-text table, blue index varying fastest."""
    m = lut.m
    grid = lut.grid.data
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"LUT_3D_SIZE {m}\n")
        for i in range(m):
            for j in range(m):
                for k in range(m):
                    r, g, b = grid[i, j, k]
                    fh.write(f"{r:.8f} {g:.8f} {b:.8f}\n")
