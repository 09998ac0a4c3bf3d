"""Raster kernel backend selection.

The compiled extension is preferred; the numpy fallback is used when the
extension is missing or CLICKSEG_FORCE_FALLBACK=1 is set. Both expose the
same functions with identical outputs.
"""

import os

from . import _pyraster

if os.environ.get("CLICKSEG_FORCE_FALLBACK") == "1":
    _impl = _pyraster
else:
    try:
        from . import _fastraster as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pyraster

BACKEND = _impl.BACKEND
rle_encode = _impl.rle_encode
rle_decode = _impl.rle_decode
disk_map = _impl.disk_map
mask_intersection_union = _impl.mask_intersection_union

__all__ = [
    "BACKEND",
    "rle_encode",
    "rle_decode",
    "disk_map",
    "mask_intersection_union",
]
