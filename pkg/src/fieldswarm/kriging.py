"""Ordinary kriging over a grid: variogram estimation, spherical fit, prediction.

Distances are physical: cell offsets scaled by ``cell_size_m`` (so sim grids
with 1 m cells work in cell units and field grids work in meters).  The
prediction path factorizes the point system once and reuses it for every
grid cell, which keeps a full-map solve at O(n^3 + cells * n^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.optimize import least_squares
from scipy.spatial.distance import cdist

from .errors import InsufficientDataError, ValidationError
from .grid import Cell, GridMap, GridSpec, MeasurementLog, ObstacleMask

#: distinct measurement cells required before kriging is attempted
MIN_MEASUREMENTS = 3

#: diagonal jitter for conditioning; small enough to keep exact interpolation
JITTER = 1e-10

#: smallest admissible sill (degenerate constant-field fallback)
SILL_FLOOR = 1e-6


@dataclass(frozen=True)
class VariogramModel:
    """Spherical variogram: nugget at 0+, total sill reached at the range."""

    nugget: float
    sill: float
    range_m: float
    family: str = "spherical"

    def __post_init__(self):
        if self.family != "spherical":
            raise ValidationError(f"unsupported variogram family {self.family!r}")
        if self.nugget < 0 or self.sill <= self.nugget or self.range_m <= 0:
            raise ValidationError(
                f"need 0 <= nugget < sill and range > 0, got "
                f"nugget={self.nugget} sill={self.sill} range={self.range_m}"
            )

    def gamma(self, h):
        """Semivariance at lag ``h`` (array or scalar); gamma(0) = 0 exactly."""
        h = np.asarray(h, dtype=np.float64)
        hr = np.minimum(h / self.range_m, 1.0)
        g = self.nugget + (self.sill - self.nugget) * (1.5 * hr - 0.5 * hr**3)
        return np.where(h == 0.0, 0.0, g)


@dataclass(frozen=True)
class ReconstructedMap:
    """Kriged estimate plus per-cell kriging variance."""

    estimate: GridMap
    uncertainty: GridMap
    n_measurements_used: int


def dedupe_measurements(log: MeasurementLog) -> list[tuple[Cell, float]]:
    """One (cell, value) entry per distinct cell; repeated readings are averaged.

    Order follows each cell's first appearance in the log.
    """
    sums: dict[Cell, float] = {}
    counts: dict[Cell, int] = {}
    order: list[Cell] = []
    for m in log:
        if m.cell not in sums:
            sums[m.cell] = 0.0
            counts[m.cell] = 0
            order.append(m.cell)
        sums[m.cell] += m.value
        counts[m.cell] += 1
    return [(c, sums[c] / counts[c]) for c in order]


def empirical_variogram(
    points: list[tuple[Cell, float]], n_bins: int, cell_size_m: float = 1.0
) -> list[tuple[float, float, int]]:
    """Matheron estimator binned over pair distances.

    Returns (mean lag, semivariance, pair count) per non-empty bin, where
    semivariance(bin) = sum((v_i - v_j)^2) / (2 * N_bin) over pairs whose
    separation falls in the bin.  Bins partition (0, max pairwise distance].
    """
    if len(points) < 2:
        raise InsufficientDataError("empirical variogram needs at least 2 points")
    coords = np.array([(c.row, c.col) for c, _ in points], dtype=np.float64) * cell_size_m
    vals = np.array([v for _, v in points], dtype=np.float64)
    iu, ju = np.triu_indices(len(points), k=1)
    d = np.hypot(coords[iu, 0] - coords[ju, 0], coords[iu, 1] - coords[ju, 1])
    sq = 0.5 * (vals[iu] - vals[ju]) ** 2
    keep = d > 0
    d, sq = d[keep], sq[keep]
    if d.size == 0:
        raise InsufficientDataError("all point pairs are co-located")

    edges = np.linspace(0.0, d.max(), n_bins + 1)
    # right-inclusive bins over (0, max]
    which = np.clip(np.searchsorted(edges, d, side="left") - 1, 0, n_bins - 1)
    out = []
    for b in range(n_bins):
        sel = which == b
        n = int(sel.sum())
        if n == 0:
            continue
        out.append((float(d[sel].mean()), float(sq[sel].mean()), n))
    return out


def fit_spherical(emp: list[tuple[float, float, int]]) -> VariogramModel:
    """Pair-count-weighted least squares fit of (nugget, sill, range).

    Parameters are clamped to the model's validity bounds; an all-zero
    variogram degenerates to nugget 0 with the minimum positive sill.
    """
    if len(emp) < 3:
        raise InsufficientDataError(f"spherical fit needs >= 3 bins, got {len(emp)}")
    lags = np.array([e[0] for e in emp])
    gammas = np.array([e[1] for e in emp])
    weights = np.sqrt(np.array([e[2] for e in emp], dtype=np.float64))

    if np.all(gammas <= 0):
        return VariogramModel(nugget=0.0, sill=SILL_FLOOR, range_m=float(lags.max()))

    def model(p, h):
        nugget, psill, rng = p
        hr = np.minimum(h / rng, 1.0)
        return nugget + psill * (1.5 * hr - 0.5 * hr**3)

    def resid(p):
        return weights * (model(p, lags) - gammas)

    g_max = float(gammas.max())
    p0 = np.array([max(float(gammas[0]) * 0.5, 0.0), max(g_max - gammas[0] * 0.5, SILL_FLOOR), float(lags.max()) / 2.0])
    lower = np.array([0.0, SILL_FLOOR, lags.min() * 1e-3])
    upper = np.array([g_max + SILL_FLOOR, 10.0 * g_max + SILL_FLOOR, lags.max() * 10.0])
    p0 = np.clip(p0, lower, upper)
    sol = least_squares(resid, p0, bounds=(lower, upper))
    nugget, psill, rng = sol.x
    nugget = max(0.0, float(nugget))
    sill = nugget + max(SILL_FLOOR, float(psill))
    return VariogramModel(nugget=nugget, sill=sill, range_m=float(rng))


def fallback_model(values: np.ndarray, spec: GridSpec) -> VariogramModel:
    """Conservative model for when fitting is impossible (too few points).

    Nugget 0, sill = observed variance (floored), range = quarter of the
    grid diagonal.
    """
    var = float(np.var(values)) if len(values) else 0.0
    return VariogramModel(
        nugget=0.0,
        sill=max(var, SILL_FLOOR),
        range_m=max(spec.diagonal * spec.cell_size_m / 4.0, spec.cell_size_m),
    )


def krige(
    points: list[tuple[Cell, float]],
    model: VariogramModel,
    spec: GridSpec,
    mask: ObstacleMask,
) -> ReconstructedMap:
    """Ordinary kriging of every free cell from deduped measurements.

    Solves [gamma(xi,xj)] lam + mu 1 = gamma(xi,x0) with sum(lam) = 1 per
    cell; estimate = lam . v and variance = lam . gamma(xi,x0) + mu.
    Blocked cells carry NaN estimates and the maximal free-cell variance.
    """
    n = len(points)
    if n < MIN_MEASUREMENTS:
        raise InsufficientDataError(f"kriging needs >= {MIN_MEASUREMENTS} distinct cells, got {n}")
    csz = spec.cell_size_m
    coords = np.array([(c.row, c.col) for c, _ in points], dtype=np.float64) * csz
    vals = np.array([v for _, v in points], dtype=np.float64)

    a = np.empty((n + 1, n + 1), dtype=np.float64)
    a[:n, :n] = model.gamma(cdist(coords, coords))
    a[:n, :n][np.diag_indices(n)] = JITTER
    a[n, :n] = 1.0
    a[:n, n] = 1.0
    a[n, n] = 0.0
    try:
        lu, piv = linalg.lu_factor(a)
    except linalg.LinAlgError as exc:  # pragma: no cover - unreachable after dedup
        raise InsufficientDataError(f"singular kriging system: {exc}") from exc

    free_r, free_c = np.nonzero(mask.free)
    cell_coords = np.stack([free_r, free_c], axis=1).astype(np.float64) * csz
    b = np.empty((n + 1, len(free_r)), dtype=np.float64, order="F")
    b[:n] = model.gamma(cdist(coords, cell_coords))
    b[n] = 1.0

    w = linalg.lu_solve((lu, piv), b)
    est_free = w[:n].T @ vals
    var_free = np.einsum("ij,ij->j", w, b)
    var_free = np.maximum(var_free, 0.0)

    estimate = np.full((spec.rows, spec.cols), np.nan)
    variance = np.full((spec.rows, spec.cols), 0.0)
    estimate[free_r, free_c] = est_free
    variance[free_r, free_c] = var_free
    if mask.blocked.any():
        variance[mask.blocked] = float(var_free.max()) if var_free.size else model.sill

    return ReconstructedMap(
        estimate=GridMap(spec, estimate, kind="estimate"),
        uncertainty=GridMap(spec, variance, kind="uncertainty"),
        n_measurements_used=n,
    )


class KrigingMapper:
    """Stateful wrapper: dedup, fit cadence, and map reconstruction.

    The variogram is refit once every ``refit_every`` new raw measurements
    (fitting drifts slowly; the kriging system itself is re-solved on each
    call).  Below :data:`MIN_MEASUREMENTS` distinct cells the mapper reports
    no reconstruction and callers fall back to the burn-in surrogate.
    """

    def __init__(self, spec: GridSpec, mask: ObstacleMask, refit_every: int = 10, n_bins: int = 15):
        self.spec = spec
        self.mask = mask
        self.refit_every = refit_every
        self.n_bins = n_bins
        self._model: VariogramModel | None = None
        self._fitted_at = -(10**9)

    @property
    def model(self) -> VariogramModel | None:
        return self._model

    def _refit(self, points: list[tuple[Cell, float]], n_raw: int) -> None:
        vals = np.array([v for _, v in points])
        try:
            emp = empirical_variogram(points, self.n_bins, self.spec.cell_size_m)
            self._model = fit_spherical(emp)
        except InsufficientDataError:
            self._model = fallback_model(vals, self.spec)
        self._fitted_at = n_raw

    def reconstruct(self, log: MeasurementLog) -> ReconstructedMap | None:
        """Kriged maps from the log, or None while still in burn-in."""
        points = dedupe_measurements(log)
        if len(points) < MIN_MEASUREMENTS:
            return None
        n_raw = len(log)
        if self._model is None or n_raw - self._fitted_at >= self.refit_every:
            self._refit(points, n_raw)
        return krige(points, self._model, self.spec, self.mask)


def burn_in_surrogate(log: MeasurementLog, spec: GridSpec, mask: ObstacleMask) -> ReconstructedMap:
    """Pre-kriging stand-in: estimate = mean of readings (0 if none), uncertainty = 1."""
    mean = float(np.mean(log.values())) if len(log) else 0.0
    est = np.full((spec.rows, spec.cols), mean)
    unc = np.ones((spec.rows, spec.cols))
    est[mask.blocked] = np.nan
    return ReconstructedMap(
        estimate=GridMap(spec, est, kind="estimate"),
        uncertainty=GridMap(spec, unc, kind="uncertainty"),
        n_measurements_used=len({m.cell for m in log}),
    )
