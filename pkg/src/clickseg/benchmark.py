"""Benchmark the compiled raster kernels against the numpy fallback."""

from __future__ import annotations

import time

import numpy as np

from ._kernels import _pyraster

try:
    from ._kernels import _fastraster
except ImportError:
    _fastraster = None


def _time(fn, *args, repeats: int = 20) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def run_benchmark(size: int = 512, n_clicks: int = 50, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    mask = (rng.random((size, size)) < 0.4).astype(np.uint8)
    counts = _pyraster.rle_encode(mask)
    rows = rng.integers(0, size, n_clicks)
    cols = rng.integers(0, size, n_clicks)
    backends = {"python": _pyraster}
    if _fastraster is not None:
        backends["cython"] = _fastraster
    results: dict = {"size": size, "n_clicks": n_clicks, "backends": {}}
    for name, impl in backends.items():
        results["backends"][name] = {
            "rle_encode_s": _time(impl.rle_encode, mask),
            "rle_decode_s": _time(impl.rle_decode, counts, size, size),
            "disk_map_s": _time(impl.disk_map, rows, cols, size, size, 5),
            "iou_counts_s": _time(impl.mask_intersection_union, mask, mask),
        }
    if "cython" in results["backends"]:
        results["speedup"] = {
            key: results["backends"]["python"][key]
            / max(results["backends"]["cython"][key], 1e-12)
            for key in results["backends"]["python"]
        }
    return results


def format_benchmark(results: dict) -> str:
    lines = [f"raster kernels, {results['size']}x{results['size']} mask:"]
    for name, timings in results["backends"].items():
        for key, value in timings.items():
            lines.append(f"  {name:>7} {key:<14} {value * 1e3:8.3f} ms")
    for key, value in results.get("speedup", {}).items():
        lines.append(f"  speedup {key:<14} {value:6.1f}x")
    return "\n".join(lines)
