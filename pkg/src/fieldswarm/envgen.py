"""Synthetic ground-truth environments.

Fields are fractional Brownian surfaces produced by spectral synthesis:
white Gaussian noise is filtered in the Fourier domain with a radial
amplitude ``f**-(H+1)`` so that increments follow the ``h**(2H)`` power law
expected for Hurst exponent ``H``.  Output maps are min-max normalized to
[0, 1].  An optional S-curve remap controls how rich / bimodal the
environment looks; obstacle layouts come from a small parametric family.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import GenerationError, LayoutError, ValidationError
from .grid import Cell, GridMap, GridSpec, ObstacleMask, neighbors8

DEFAULT_HURST = 0.7


@dataclass(frozen=True)
class FbfParams:
    """Fractional Brownian field parameters."""

    spec: GridSpec
    seed: int
    hurst: float = DEFAULT_HURST

    def __post_init__(self):
        if not 0.0 < self.hurst < 1.0:
            raise ValidationError(f"hurst must lie in (0,1), got {self.hurst}")


def generate_fbf(params: FbfParams) -> GridMap:
    """Deterministic fractional Brownian truth map, min-max normalized to [0,1]."""
    rows, cols = params.spec.rows, params.spec.cols
    rng = np.random.default_rng(params.seed)
    noise = rng.standard_normal((rows, cols))
    spectrum = np.fft.fft2(noise)

    fr = np.fft.fftfreq(rows)[:, None]
    fc = np.fft.fftfreq(cols)[None, :]
    freq = np.hypot(fr, fc)
    amp = np.zeros_like(freq)
    nonzero = freq > 0
    amp[nonzero] = freq[nonzero] ** (-(params.hurst + 1.0))

    field = np.fft.ifft2(spectrum * amp).real
    lo, hi = field.min(), field.max()
    if not np.isfinite(lo) or not np.isfinite(hi) or hi - lo <= 0:
        raise GenerationError(
            f"degenerate field for seed {params.seed}; retry with a different seed"
        )
    field = (field - lo) / (hi - lo)
    return GridMap(params.spec, field, kind="truth")


@dataclass(frozen=True)
class SCurveParams:
    """S-curve remap: ``threshold_value`` maps to 0.5, ``curve_power`` sets bimodality."""

    threshold_value: float
    curve_power: float

    def __post_init__(self):
        if not 0.0 < self.threshold_value < 1.0:
            raise ValidationError(f"threshold_value must lie in (0,1), got {self.threshold_value}")
        if not (self.curve_power > 0 and np.isfinite(self.curve_power)):
            raise ValidationError(f"curve_power must be finite positive, got {self.curve_power}")


def scurve(x, params: SCurveParams):
    """Monotone [0,1] -> [0,1] remap with f(0)=0, f(threshold)=0.5, f(1)=1.

    f(x) = x^k / (x^k + (t(1-x)/(1-t))^k) with t = threshold_value and
    k = curve_power.  Larger k pushes outputs toward 0 or 1; t sets which
    input lands at 0.5.  Accepts scalars or arrays.
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValidationError("scurve input must lie in [0,1]")
    t, k = params.threshold_value, params.curve_power
    num = arr**k
    alt = (t * (1.0 - arr) / (1.0 - t)) ** k
    with np.errstate(invalid="ignore"):
        out = num / (num + alt)
    # x=0 with k<1 can produce 0/0; the limit is 0 there and 1 at x=1.
    out = np.where(arr == 0.0, 0.0, out)
    out = np.where(arr == 1.0, 1.0, out)
    if np.ndim(x) == 0:
        return float(out)
    return out


def apply_scurve(gmap: GridMap, params: SCurveParams) -> GridMap:
    """Elementwise S-curve; monotone, so cell ordering is preserved."""
    return gmap.with_values(scurve(gmap.values, params))


LAYOUT_NAMES = ("none", "edge-reaching-bars", "interior-blocks", "scattered")


def obstacle_layout(name: str, spec: GridSpec) -> ObstacleMask:
    """One of the canned obstacle layouts, guaranteed to keep free space connected."""
    if name not in LAYOUT_NAMES:
        raise LayoutError(f"unknown layout {name!r}; choose from {LAYOUT_NAMES}")
    rows, cols = spec.rows, spec.cols
    blocked = np.zeros((rows, cols), dtype=bool)

    if name == "edge-reaching-bars":
        # Two horizontal bars anchored at opposite edges, comb-style.
        bar = max(1, rows // 12)
        reach = int(cols * 0.6)
        r1, r2 = rows // 3, (2 * rows) // 3
        blocked[r1 : r1 + bar, :reach] = True
        blocked[r2 : r2 + bar, cols - reach :] = True
    elif name == "interior-blocks":
        # Three rectangular blocks strictly inside the domain.
        h, w = max(2, rows // 6), max(2, cols // 6)
        for rc, cc in ((0.3, 0.3), (0.3, 0.7), (0.7, 0.5)):
            r0 = max(1, int(rc * rows) - h // 2)
            c0 = max(1, int(cc * cols) - w // 2)
            blocked[r0 : min(rows - 1, r0 + h), c0 : min(cols - 1, c0 + w)] = True
    elif name == "scattered":
        # Small square blocks on a jittered lattice; fixed internal seed so the
        # layout is a pure function of (name, spec).
        rng = np.random.default_rng(0xB10C5)
        size = max(1, min(rows, cols) // 16)
        for gr in range(2, rows - size - 2, max(4, rows // 7)):
            for gc in range(2, cols - size - 2, max(4, cols // 7)):
                if rng.random() < 0.55:
                    jr = gr + int(rng.integers(0, 2))
                    jc = gc + int(rng.integers(0, 2))
                    blocked[jr : jr + size, jc : jc + size] = True

    mask = ObstacleMask(spec, blocked)
    if not free_space_connected(mask):
        raise LayoutError(f"layout {name!r} disconnects free space on {rows}x{cols}")
    return mask


def free_space_connected(mask: ObstacleMask) -> bool:
    """Flood fill over :func:`neighbors8` reachability: one free component?"""
    free = mask.free
    total = int(free.sum())
    if total == 0:
        return False
    rr, cc = np.nonzero(free)
    start = Cell(int(rr[0]), int(cc[0]))
    seen = np.zeros_like(free)
    seen[start.row, start.col] = True
    queue = deque([start])
    count = 1
    while queue:
        cell = queue.popleft()
        for nb, _ in neighbors8(mask.spec, mask, cell):
            if not seen[nb.row, nb.col]:
                seen[nb.row, nb.col] = True
                count += 1
                queue.append(nb)
    return count == total
