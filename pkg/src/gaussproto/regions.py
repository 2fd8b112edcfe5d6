"""Region proposals: SLIC superpixels, enclosing boxes, RoIAlign crops.

SLIC is local k-means in CIELAB + position space.  The assignment step
only ever moves a pixel to a strictly closer center inside the 2S search
window, and the update step recenters each cluster at its mean in the
scaled joint space, so the clustering objective is non-increasing across
iterations.  A final pass absorbs disconnected fragments into their
largest adjacent segment (large fragments survive as new segments).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import numerics as nm
from .colors import rgb_to_lab
from .errors import DegenerateBoxError, MTooLargeError, ShapeMismatchError
from .encoders import LatentGrid
from .numerics import Tensor


@dataclass
class SuperpixelConfig:
    num_segments: int = 200
    compactness: float = 10.0
    max_iter: int = 10
    min_fragment_ratio: float = 0.25  # of the mean segment area


@dataclass
class SuperpixelMap:
    labels: np.ndarray           # (H, W) segment id per pixel, 0..num_segments-1
    num_segments: int
    compactness: float
    requested_segments: int
    energy_history: list[float] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass
class RegionProposal:
    segment_id: int
    pixels: np.ndarray           # flat pixel indices into the H*W image
    box: tuple[int, int, int, int]        # (r0, c0, r1, c1), half-open, pixel coords
    label: int                   # class in 1..C (1 = background)
    latent_box: tuple[float, float, float, float]  # box / p, clamped, >= 1 cell span


def _seed_grid(height: int, width: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    # fractional positions keep Voronoi boundaries strictly between pixels
    ny = max(1, int(round(np.sqrt(m * height / width))))
    nx = max(1, int(round(m / ny)))
    ys = (np.arange(ny) + 0.5) * height / ny - 0.5
    xs = (np.arange(nx) + 0.5) * width / nx - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return yy.reshape(-1), xx.reshape(-1)


def _gradient_map(lab: np.ndarray) -> np.ndarray:
    gy = np.zeros(lab.shape[:2])
    gx = np.zeros(lab.shape[:2])
    gy[1:-1] = ((lab[2:] - lab[:-2]) ** 2).sum(axis=-1)
    gx[:, 1:-1] = ((lab[:, 2:] - lab[:, :-2]) ** 2).sum(axis=-1)
    return gy + gx


def _perturb_seeds(ys, xs, grad):
    """Move each seed to the strictly lowest-gradient pixel in its 3x3 patch."""
    H, W = grad.shape
    out_y, out_x = ys.copy(), xs.copy()
    py = np.clip(np.round(ys).astype(int), 0, H - 1)
    px = np.clip(np.round(xs).astype(int), 0, W - 1)
    for i, (y, x) in enumerate(zip(py, px)):
        best = grad[y, x]
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < H and 0 <= nx < W and grad[ny, nx] < best:
                    best = grad[ny, nx]
                    out_y[i], out_x[i] = float(ny), float(nx)
    return out_y, out_x, py, px


def slic(image: np.ndarray, num_segments: int, compactness: float = 10.0,
         max_iter: int = 10, min_fragment_ratio: float = 0.25) -> SuperpixelMap:
    """Segment an (H, W, 3) RGB image in [0,1] into ~num_segments superpixels."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[-1] != 3:
        raise ShapeMismatchError(f"slic expects (H, W, 3), got {image.shape}")
    H, W = image.shape[:2]
    if num_segments < 1 or H * W == 0:
        raise ValueError("need at least one segment and a non-empty image")
    if num_segments > H * W:
        raise MTooLargeError(f"{num_segments} segments > {H * W} pixels")

    lab = rgb_to_lab(image)
    step = np.sqrt(H * W / num_segments)
    ys, xs = _seed_grid(H, W, num_segments)
    ys, xs, py, px = _perturb_seeds(ys, xs, _gradient_map(lab))
    K = len(ys)

    # centers live in (L, a, b, y, x); spatial axes are scaled by
    # compactness/step inside the distance, which the mean also minimizes
    centers = np.concatenate([lab[py, px], np.stack([ys, xs], axis=1)], axis=1).astype(np.float64)
    yy, xx = np.mgrid[0:H, 0:W]
    labels = np.full((H, W), -1, dtype=np.int64)
    dist = np.full((H, W), np.inf)
    window = int(max(2, round(2 * step)))
    spatial_w = (compactness / step) ** 2
    energies: list[float] = []

    for _ in range(max_iter):
        if labels.min() >= 0:
            # refresh distances against the moved centers
            c = centers[labels]
            dist = ((lab - c[..., :3]) ** 2).sum(axis=-1) \
                + ((yy - c[..., 3]) ** 2 + (xx - c[..., 4]) ** 2) * spatial_w
        for k in range(K):
            cy, cx = centers[k, 3], centers[k, 4]
            y0, y1 = max(0, int(cy) - window), min(H, int(cy) + window + 1)
            x0, x1 = max(0, int(cx) - window), min(W, int(cx) + window + 1)
            d = ((lab[y0:y1, x0:x1] - centers[k, :3]) ** 2).sum(axis=-1) \
                + ((yy[y0:y1, x0:x1] - cy) ** 2 + (xx[y0:y1, x0:x1] - cx) ** 2) * spatial_w
            better = d < dist[y0:y1, x0:x1]
            dist[y0:y1, x0:x1][better] = d[better]
            labels[y0:y1, x0:x1][better] = k
        flat = labels.reshape(-1)
        counts = np.bincount(flat, minlength=K).astype(np.float64)
        nonempty = counts > 0
        for ch, values in enumerate((lab[..., 0], lab[..., 1], lab[..., 2], yy, xx)):
            sums = np.bincount(flat, weights=values.reshape(-1), minlength=K)
            centers[nonempty, ch] = sums[nonempty] / counts[nonempty]
        c = centers[labels]
        energy = float((((lab - c[..., :3]) ** 2).sum(axis=-1)
                        + ((yy - c[..., 3]) ** 2 + (xx - c[..., 4]) ** 2) * spatial_w).sum())
        energies.append(energy)

    labels = _enforce_connectivity(labels, K, H, W,
                                   min_size=max(1, int(min_fragment_ratio * H * W / num_segments)))
    return SuperpixelMap(labels=labels, num_segments=int(labels.max()) + 1,
                         compactness=compactness, requested_segments=num_segments,
                         energy_history=energies)


def _enforce_connectivity(labels: np.ndarray, K: int, H: int, W: int,
                          min_size: int) -> np.ndarray:
    # split every segment into 4-connected components
    comp = np.full((H, W), -1, dtype=np.int64)
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    total = 0
    for k in range(K):
        mask = labels == k
        if not mask.any():
            continue
        lab_k, n_k = ndimage.label(mask, structure=structure)
        comp[mask] = lab_k[mask] + total - 1
        total += n_k
    sizes = np.bincount(comp.reshape(-1), minlength=total)

    # keepers: the largest component of each segment, plus big fragments
    keeper = np.zeros(total, dtype=bool)
    comp_owner = np.full(total, -1, dtype=np.int64)
    flat_labels = labels.reshape(-1)
    flat_comp = comp.reshape(-1)
    first_idx = np.full(total, -1, dtype=np.int64)
    uniq, first_pos = np.unique(flat_comp, return_index=True)
    for c, pos in zip(uniq, first_pos):
        comp_owner[c] = flat_labels[pos]
        first_idx[c] = pos
    for k in range(K):
        members = np.flatnonzero(comp_owner == k)
        if len(members) == 0:
            continue
        best = members[np.argmax(sizes[members])]
        keeper[best] = True
    keeper |= sizes >= min_size

    # adjacency between components (4-neighborhood)
    pairs = set()
    a, b = comp[:, :-1], comp[:, 1:]
    diff = a != b
    pairs.update(zip(a[diff].tolist(), b[diff].tolist()))
    a, b = comp[:-1, :], comp[1:, :]
    diff = a != b
    pairs.update(zip(a[diff].tolist(), b[diff].tolist()))
    adj: list[set[int]] = [set() for _ in range(total)]
    for u, v in pairs:
        adj[u].add(v)
        adj[v].add(u)

    # union-find absorption of small fragments into the largest neighbor
    parent = np.arange(total)
    group_size = sizes.astype(np.int64).copy()

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    order = sorted((c for c in range(total) if not keeper[c]),
                   key=lambda c: (sizes[c], first_idx[c]))
    for frag in order:
        root = find(frag)
        candidates = {find(n) for n in adj[frag]} - {root}
        if not candidates:
            continue
        target = max(candidates, key=lambda r: (group_size[r], -r))
        parent[root] = target
        group_size[target] += group_size[root]

    roots = np.array([find(c) for c in range(total)])
    final = roots[comp]
    # contiguous ids in raster-scan order of first appearance
    _, first_seen = np.unique(final.reshape(-1), return_index=True)
    order_ids = final.reshape(-1)[np.sort(first_seen)]
    remap = {old: new for new, old in enumerate(order_ids)}
    out = np.vectorize(remap.__getitem__, otypes=[np.int64])(final)
    return out


def superpixel_boxes(sp: SuperpixelMap) -> list[tuple[int, int, int, int]]:
    """Tight half-open enclosing boxes, one per segment id."""
    H, W = sp.shape
    boxes = []
    objects = ndimage.find_objects(sp.labels + 1)
    for sl in objects:
        boxes.append((sl[0].start, sl[1].start, sl[0].stop, sl[1].stop))
    return boxes


def _latent_box(box: tuple[int, int, int, int], scale: int,
                grid_size: int) -> tuple[float, float, float, float]:
    r0, c0, r1, c1 = (v / scale for v in box)
    # sub-cell boxes expand to one full cell, then everything clamps to the grid
    def fix(lo: float, hi: float) -> tuple[float, float]:
        if hi - lo < 1.0:
            center = 0.5 * (lo + hi)
            lo, hi = center - 0.5, center + 0.5
        if lo < 0.0:
            lo, hi = 0.0, hi - lo
        if hi > grid_size:
            lo, hi = max(0.0, lo - (hi - grid_size)), float(grid_size)
        return lo, hi

    r0, r1 = fix(r0, r1)
    c0, c1 = fix(c0, c1)
    return (r0, c0, r1, c1)


def proposals_from_superpixels(sp: SuperpixelMap, mask: np.ndarray | None,
                               scale: int, num_classes: int = 2) -> list[RegionProposal]:
    """One proposal per segment, labeled by strict pixel majority (ties: background)."""
    H, W = sp.shape
    if mask is not None and mask.shape != (H, W):
        raise ShapeMismatchError(f"mask shape {mask.shape} != superpixels {sp.shape}")
    grid_size = max(1, H // scale)
    flat = sp.labels.reshape(-1)
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(sp.num_segments + 1))
    boxes = superpixel_boxes(sp)
    proposals = []
    for seg in range(sp.num_segments):
        pixels = order[bounds[seg]:bounds[seg + 1]]
        label = 1
        if mask is not None:
            counts = np.bincount(mask.reshape(-1)[pixels], minlength=num_classes + 1)
            for cls in range(2, num_classes + 1):
                if counts[cls] * 2 > len(pixels):
                    label = cls
                    break
        box = boxes[seg]
        proposals.append(RegionProposal(
            segment_id=seg,
            pixels=pixels,
            box=box,
            label=label,
            latent_box=_latent_box(box, scale, grid_size),
        ))
    return proposals


# -- RoIAlign -------------------------------------------------------------------


def _sample_points(boxes: np.ndarray, out_size: int, samples: int):
    """Sub-bin sample coordinates for each box: (R, s, s, samples^2) y and x."""
    R = boxes.shape[0]
    bh = (boxes[:, 2] - boxes[:, 0]) / out_size
    bw = (boxes[:, 3] - boxes[:, 1]) / out_size
    offs = (np.arange(samples) + 0.5) / samples
    iy = np.arange(out_size)
    # y = r0 + (i + off) * bin_h, broadcast to (R, s, samples)
    y = boxes[:, 0, None, None] + (iy[None, :, None] + offs[None, None, :]) * bh[:, None, None]
    x = boxes[:, 1, None, None] + (iy[None, :, None] + offs[None, None, :]) * bw[:, None, None]
    yy = np.broadcast_to(y[:, :, None, :, None], (R, out_size, out_size, samples, samples))
    xx = np.broadcast_to(x[:, None, :, None, :], (R, out_size, out_size, samples, samples))
    return (yy.reshape(R, out_size, out_size, samples * samples),
            xx.reshape(R, out_size, out_size, samples * samples))


def _bilinear_ingredients(coord: np.ndarray, limit: int):
    # grid value (i, j) sits at continuous coordinate (i + 0.5, j + 0.5)
    z = coord - 0.5
    lo = np.floor(z).astype(np.int64)
    frac = z - lo
    lo0 = np.clip(lo, 0, limit - 1)
    lo1 = np.clip(lo + 1, 0, limit - 1)
    return lo0, lo1, frac


def roi_align_many(values, boxes, out_size: int = 8, samples_per_bin: int = 2) -> Tensor:
    """Align many boxes against one (n', n', l) grid -> (R, l, s, s).

    Bilinear sampling at samples_per_bin^2 regular sub-bin points, averaged
    per bin, differentiable with respect to the grid values.
    """
    values = nm.as_tensor(values)
    if values.ndim != 3:
        raise ShapeMismatchError(f"expected (n', n', l) grid values, got {values.shape}")
    n = values.shape[0]
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    clamped = boxes.copy()
    clamped[:, 0::2] = np.clip(clamped[:, 0::2], 0.0, n)
    clamped[:, 1::2] = np.clip(clamped[:, 1::2], 0.0, values.shape[1])
    if np.any(clamped[:, 2] - clamped[:, 0] <= 0) or np.any(clamped[:, 3] - clamped[:, 1] <= 0):
        raise DegenerateBoxError("a box has zero extent after clamping")

    ys, xs = _sample_points(clamped, out_size, samples_per_bin)
    y0, y1, fy = _bilinear_ingredients(ys, values.shape[0])
    x0, x1, fx = _bilinear_ingredients(xs, values.shape[1])
    w00 = (1 - fy) * (1 - fx)
    w01 = (1 - fy) * fx
    w10 = fy * (1 - fx)
    w11 = fy * fx

    data = values.data  # (n', n', l)
    k2 = samples_per_bin * samples_per_bin
    out = (data[y0, x0] * w00[..., None] + data[y0, x1] * w01[..., None]
           + data[y1, x0] * w10[..., None] + data[y1, x1] * w11[..., None])
    out = out.mean(axis=3)                      # (R, s, s, l)
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward(g):
        gper = g.transpose(0, 2, 3, 1)[:, :, :, None, :] / k2   # (R, s, s, 1, l)
        buf = np.zeros_like(values.data)
        for w, yi, xi in ((w00, y0, x0), (w01, y0, x1), (w10, y1, x0), (w11, y1, x1)):
            np.add.at(buf, (yi, xi), gper * w[..., None])
        values._accumulate(buf)

    return Tensor._result(out, (values,), backward)


def roi_align(grid, latent_box, out_size: int = 8, samples_per_bin: int = 2) -> Tensor:
    """Crop one box from a latent grid -> (l, s, s)."""
    values = grid.values if isinstance(grid, LatentGrid) else grid
    out = roi_align_many(values, np.asarray(latent_box, dtype=np.float64).reshape(1, 4),
                         out_size=out_size, samples_per_bin=samples_per_bin)
    return nm.take(out, 0)
