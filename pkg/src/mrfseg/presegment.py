"""SLIC over-segmentation into compact superpixels.

Localized k-means in (L, a, b, x, y): seeds on a regular grid, each
assignment sweep restricted to a 2S x 2S box per center, followed by a
connectivity pass that absorbs small fragments.  Everything is seeded
and scanned deterministically; identical inputs give identical output.
"""

import numpy as np
from dataclasses import dataclass, field

from . import backends
from .errors import InvalidParamsError
from .image_io import LabImage, RasterImage

_CENTER_MOTION_TOL = 1e-3


@dataclass
class SlicParams:
    k: int = 400  # requested superpixel count
    m: float = 10.0  # compactness: weight of pixel distance vs Lab distance
    max_iters: int = 10
    min_region_frac: float = 0.25  # of H*W/k; smaller fragments get merged

    def __post_init__(self):
        if self.k < 1:
            raise InvalidParamsError("k must be >= 1")
        if self.m <= 0:
            raise InvalidParamsError("m must be > 0")
        if self.max_iters < 1:
            raise InvalidParamsError("max_iters must be >= 1")
        if not 0.0 < self.min_region_frac < 1.0:
            raise InvalidParamsError("min_region_frac must be in (0, 1)")


@dataclass
class SuperpixelPartition:
    """Per-pixel superpixel ids plus (optionally) per-superpixel stats."""

    labels: np.ndarray  # (H, W) int32, ids contiguous in [0, m)
    m: int
    pixel_lists: list = field(default=None, repr=False)  # flat raster indices
    centroids: np.ndarray = None  # (m, 2) mean (x, y)
    mean_lab: np.ndarray = None  # (m, 3)
    mean_rgb: np.ndarray = None  # (m, 3), the C_i color used for edge weights

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]


def _seed_grid(height, width, k):
    """Near-square seed grid with nx*ny <= k, at least one seed."""
    step = np.sqrt(height * width / k)
    nx = max(1, round(width / step))
    ny = max(1, round(height / step))
    while nx * ny > k:
        if nx >= ny and nx > 1:
            nx -= 1
        elif ny > 1:
            ny -= 1
        else:
            break
    xs = np.floor((np.arange(nx) + 0.5) * width / nx).astype(np.int64)
    ys = np.floor((np.arange(ny) + 0.5) * height / ny).astype(np.int64)
    xs = np.clip(xs, 0, width - 1)
    ys = np.clip(ys, 0, height - 1)
    return [(x, y) for y in ys for x in xs]


def _gradient_map(lab):
    """Squared Lab gradient magnitude from central differences."""
    padded = np.pad(lab, ((1, 1), (1, 1), (0, 0)), mode="edge")
    gx = padded[1:-1, 2:] - padded[1:-1, :-2]
    gy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    return (gx * gx).sum(axis=2) + (gy * gy).sum(axis=2)


def _perturb_seeds(seeds, grad):
    """Move each seed to the lowest-gradient pixel in its 3x3 window."""
    height, width = grad.shape
    out = []
    for x, y in seeds:
        y0, y1 = max(0, y - 1), min(height, y + 2)
        x0, x1 = max(0, x - 1), min(width, x + 2)
        win = grad[y0:y1, x0:x1]
        dy, dx = np.unravel_index(np.argmin(win), win.shape)
        out.append((x0 + dx, y0 + dy))
    return out


def slic(img: LabImage, params: SlicParams) -> SuperpixelPartition:
    """Over-segment a Lab image; returns a connected, relabeled partition."""
    height, width = img.height, img.width
    if params.k > height * width:
        raise InvalidParamsError(f"k={params.k} exceeds pixel count {height * width}")

    lab = np.ascontiguousarray(img.data, dtype=np.float64)
    lab_l = np.ascontiguousarray(lab[:, :, 0])
    lab_a = np.ascontiguousarray(lab[:, :, 1])
    lab_b = np.ascontiguousarray(lab[:, :, 2])

    step = np.sqrt(height * width / params.k)
    seeds = _perturb_seeds(_seed_grid(height, width, params.k), _gradient_map(lab))
    centers = np.array(
        [[lab_l[y, x], lab_a[y, x], lab_b[y, x], float(x), float(y)] for x, y in seeds],
        dtype=np.float64,
    )
    n = centers.shape[0]

    labels = np.empty((height, width), dtype=np.int32)
    dist = np.empty((height, width), dtype=np.float64)
    spatial_scale = params.m / step

    ys_flat, xs_flat = np.indices((height, width)).reshape(2, -1).astype(np.float64)
    planes = (lab_l.ravel(), lab_a.ravel(), lab_b.ravel(), xs_flat, ys_flat)

    for _ in range(params.max_iters):
        labels.fill(-1)
        dist.fill(np.inf)
        backends.slic_assign(lab_l, lab_a, lab_b, centers, spatial_scale, step, labels, dist)
        _assign_orphans(labels, planes, centers, spatial_scale, height, width)

        flat = labels.ravel()
        counts = np.bincount(flat, minlength=n).astype(np.float64)
        new_centers = centers.copy()
        occupied = counts > 0
        for dim, plane in enumerate(planes):
            sums = np.bincount(flat, weights=plane, minlength=n)
            new_centers[occupied, dim] = sums[occupied] / counts[occupied]
        motion = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if motion < _CENTER_MOTION_TOL:
            break

    partition = SuperpixelPartition(labels=labels, m=n)
    return enforce_connectivity(partition, params, lab=img)


def _assign_orphans(labels, planes, centers, spatial_scale, height, width):
    """Assign pixels outside every search window to their globally nearest center.

    Rare (only when centers drift or the seed grid is very coarse); keeps
    the partition total.
    """
    orphans = np.flatnonzero(labels.ravel() == -1)
    if orphans.size == 0:
        return
    lab_l, lab_a, lab_b, xs, ys = planes
    for idx in orphans:
        dl = centers[:, 0] - lab_l[idx]
        da = centers[:, 1] - lab_a[idx]
        db = centers[:, 2] - lab_b[idx]
        dx = centers[:, 3] - xs[idx]
        dy = centers[:, 4] - ys[idx]
        d = np.sqrt(dl * dl + da * da + db * db) + spatial_scale * np.sqrt(dx * dx + dy * dy)
        labels.ravel()[idx] = int(np.argmin(d))


def _connected_components(labels):
    """4-connected components of equal-label regions.

    Component ids are assigned per superpixel id in scan order, then the
    merge pass orders fragments by first raster occurrence.
    """
    from scipy import ndimage

    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    comp = np.full(labels.shape, -1, dtype=np.int64)
    next_id = 0
    for sp_id in range(int(labels.max()) + 1):
        mask = labels == sp_id
        if not mask.any():
            continue
        cc, n = ndimage.label(mask, structure=structure)
        comp[mask] = cc[mask] + (next_id - 1)
        next_id += n
    return comp, next_id


def enforce_connectivity(
    p: SuperpixelPartition, params: SlicParams, lab: LabImage = None
) -> SuperpixelPartition:
    """Merge small fragments into neighbors and relabel contiguously.

    Fragments below min_region_frac * (H*W/k) pixels are processed in
    raster order of their first pixel; each (if its merged component is
    still undersized) joins an adjacent component.  With ``lab`` given
    the target is the component with the closest mean color, which keeps
    noisy boundary slivers on their own side; otherwise (or on exact
    color ties) the most-pixels component wins, ties going to the
    component whose smallest original id is lower.
    """
    labels = p.labels
    height, width = labels.shape
    comp, n_comp = _connected_components(labels)
    flat = comp.ravel()

    threshold = params.min_region_frac * (height * width / params.k)
    sizes = np.bincount(flat, minlength=n_comp).astype(np.int64)
    _, first_idx = np.unique(flat, return_index=True)
    order = np.argsort(first_idx, kind="stable")
    fragments = [c for c in order if sizes[c] < threshold]

    parent = np.arange(n_comp)
    rep_min = np.arange(n_comp)
    size = sizes.copy()
    by_comp = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[by_comp], np.arange(n_comp + 1))
    members = [[by_comp[bounds[c]:bounds[c + 1]]] for c in range(n_comp)]

    color_sum = None
    if lab is not None:
        lab_flat = lab.data.reshape(-1, 3)
        color_sum = np.stack(
            [np.bincount(flat, weights=lab_flat[:, c], minlength=n_comp) for c in range(3)],
            axis=1,
        )

    def find(c):
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return c

    for frag in fragments:
        root = find(frag)
        if size[root] >= threshold:
            continue
        neighbors = set()
        for chunk in members[root]:
            for idx in chunk:
                y, x = divmod(int(idx), width)
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < height and 0 <= nx < width:
                        other = find(flat[ny * width + nx])
                        if other != root:
                            neighbors.add(other)
        if not neighbors:
            continue
        if color_sum is not None:
            own_color = color_sum[root] / size[root]
            target = min(
                sorted(neighbors),
                key=lambda o: (
                    float(((color_sum[o] / size[o] - own_color) ** 2).sum()),
                    -size[o],
                    rep_min[o],
                ),
            )
        else:
            target = min(sorted(neighbors), key=lambda o: (-size[o], rep_min[o]))
        parent[root] = target
        size[target] += size[root]
        rep_min[target] = min(rep_min[target], rep_min[root])
        members[target].extend(members[root])
        members[root] = []
        if color_sum is not None:
            color_sum[target] = color_sum[target] + color_sum[root]

    roots = np.array([find(c) for c in range(n_comp)])
    root_of_pixel = roots[flat]
    # contiguous ids in raster order of first appearance
    uniq, first = np.unique(root_of_pixel, return_index=True)
    new_id = np.empty(uniq.size, dtype=np.int32)
    new_id[np.argsort(first, kind="stable")] = np.arange(uniq.size, dtype=np.int32)
    remap = np.zeros(n_comp, dtype=np.int32)
    remap[uniq] = new_id
    return SuperpixelPartition(
        labels=remap[root_of_pixel].reshape(height, width), m=int(uniq.size)
    )


def superpixel_stats(
    p: SuperpixelPartition, img: RasterImage, lab: LabImage
) -> SuperpixelPartition:
    """Fill pixel lists, centroids, and mean Lab/RGB colors."""
    if (img.height, img.width) != (p.height, p.width):
        raise ValueError("image and partition dimensions disagree")
    flat = p.labels.ravel()
    counts = np.bincount(flat, minlength=p.m).astype(np.float64)

    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(p.m + 1))
    p.pixel_lists = [order[bounds[i]:bounds[i + 1]] for i in range(p.m)]

    ys, xs = np.indices((p.height, p.width)).reshape(2, -1).astype(np.float64)
    cx = np.bincount(flat, weights=xs, minlength=p.m) / counts
    cy = np.bincount(flat, weights=ys, minlength=p.m) / counts
    p.centroids = np.stack([cx, cy], axis=1)

    p.mean_rgb = np.stack(
        [np.bincount(flat, weights=img.data[:, :, c].ravel(), minlength=p.m) / counts
         for c in range(3)],
        axis=1,
    )
    p.mean_lab = np.stack(
        [np.bincount(flat, weights=lab.data[:, :, c].ravel(), minlength=p.m) / counts
         for c in range(3)],
        axis=1,
    )
    return p
