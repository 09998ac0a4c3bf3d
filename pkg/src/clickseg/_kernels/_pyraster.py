"""Pure-numpy implementations of the raster hot paths.

Used when the compiled extension is unavailable (or forced off via
CLICKSEG_FORCE_FALLBACK=1). Must stay bit-compatible with _fastraster.
"""

import numpy as np

BACKEND = "python"


def rle_encode(mask: np.ndarray) -> np.ndarray:
    """COCO-style uncompressed RLE: column-major scan, alternating run
    lengths starting with background (leading 0 when pixel (0,0) is set)."""
    flat = np.asarray(mask, dtype=np.uint8).ravel(order="F")
    if flat.size == 0:
        return np.zeros(0, dtype=np.int64)
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [flat.size]))
    runs = (ends - starts).astype(np.int64)
    if flat[0] == 1:
        runs = np.concatenate(([0], runs))
    return runs


def rle_decode(counts: np.ndarray, height: int, width: int) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total != height * width:
        raise ValueError(
            f"run lengths sum to {total}, expected {height * width}"
        )
    flat = np.zeros(height * width, dtype=np.uint8)
    pos = 0
    value = 0
    for run in counts:
        if value:
            flat[pos : pos + run] = 1
        pos += int(run)
        value ^= 1
    return flat.reshape((width, height)).T.copy()


def disk_map(rows, cols, height: int, width: int, radius: int) -> np.ndarray:
    """Union of clipped Euclidean disks (inclusive boundary) around clicks."""
    out = np.zeros((height, width), dtype=np.uint8)
    if len(rows) == 0:
        return out
    r2 = radius * radius
    for cr, cc in zip(np.asarray(rows), np.asarray(cols)):
        r0 = max(0, int(cr) - radius)
        r1 = min(height, int(cr) + radius + 1)
        c0 = max(0, int(cc) - radius)
        c1 = min(width, int(cc) + radius + 1)
        dy = np.arange(r0, r1) - int(cr)
        dx = np.arange(c0, c1) - int(cc)
        patch = dy[:, None] ** 2 + dx[None, :] ** 2 <= r2
        out[r0:r1, c0:c1] |= patch.astype(np.uint8)
    return out


def mask_intersection_union(a: np.ndarray, b: np.ndarray) -> tuple[int, int]:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    inter = int(np.count_nonzero(a & b))
    union = int(np.count_nonzero(a | b))
    return inter, union
