"""Spectral sensitivity estimation from measured spectra and linearized intensities.

Sensitivity curves of real cameras occupy a low-dimensional space, so the
estimator projects onto a small basis obtained from the singular value
decomposition of a curve database and solves a least-squares problem
constrained to keep the reconstructed curve nonnegative at every
wavelength. The raw pseudo-inverse is provided as well; it is exact on
clean data and falls apart under noise, which is the whole reason the
constrained route exists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficiencyError, UnderdeterminedError
from .solvers import lsi
from .spectral import SensitivityMatrix, SpectralGrid, _frozen_array

#: Condition-number ceiling for the normal equations of the pseudo-inverse.
PINV_CONDITION_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class SensitivityDatabase:
    """Named sensitivity curves of known cameras, all on one grid."""

    entries: tuple
    grid: SpectralGrid

    def __post_init__(self) -> None:
        entries = tuple(self.entries)
        if len(entries) < 2:
            raise ValueError(f"database needs >= 2 entries, got {len(entries)}")
        for name, omega in entries:
            if omega.grid != self.grid:
                raise ValueError(f"database entry {name!r} is not on the shared grid")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def stacked(self, k: int) -> np.ndarray:
        """(n_entries, M) matrix of channel-k curves."""
        return np.stack([omega.channel(k) for _, omega in self.entries])


@dataclass(frozen=True, eq=False)
class SensitivityBasis:
    """Top right-singular vectors of the database, per channel."""

    grid: SpectralGrid
    bases: np.ndarray  # (3, d, M), orthonormal rows per channel
    singular_values: np.ndarray  # (3, min(n, M))
    d: int
    captured_variance: np.ndarray  # (3,) fraction of squared singular mass

    def __post_init__(self) -> None:
        object.__setattr__(self, "bases", _frozen_array(self.bases))
        object.__setattr__(self, "singular_values", _frozen_array(self.singular_values))
        object.__setattr__(self, "captured_variance", _frozen_array(self.captured_variance))

    def channel_basis(self, k: int) -> np.ndarray:
        return self.bases[k]


def build_basis(db: SensitivityDatabase, d: int) -> SensitivityBasis:
    """SVD the stacked database curves and keep the top-d right singular vectors."""
    m = db.grid.count
    limit = min(len(db), m)
    if not 1 <= d <= limit:
        raise ValueError(f"basis dimension must be in [1, {limit}], got {d}")
    bases = np.empty((3, d, m))
    singulars = np.empty((3, limit))
    captured = np.empty(3)
    for k in range(3):
        x = db.stacked(k)
        _, s, vt = np.linalg.svd(x, full_matrices=False)
        bases[k] = vt[:d]
        singulars[k] = s
        total = float((s**2).sum())
        captured[k] = float((s[:d] ** 2).sum() / total) if total > 0 else 0.0
    return SensitivityBasis(db.grid, bases, singulars, d, captured)


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Paired radiance spectra and linearized, exposure-normalized intensities.

    ``p[i]`` is the spectrum seen for sample i, ``i_linear[i]`` the
    matching per-channel linear intensity, and ``valid[i]`` is False for
    samples whose triplet was saturated; every fit ignores those rows.
    """

    grid: SpectralGrid
    p: np.ndarray  # (N, M)
    i_linear: np.ndarray  # (N, 3)
    valid: np.ndarray  # (N,) bool

    def __post_init__(self) -> None:
        p = np.array(self.p, dtype=float)
        i_lin = np.array(self.i_linear, dtype=float)
        valid = np.array(self.valid, dtype=bool)
        if p.ndim != 2 or p.shape[1] != self.grid.count:
            raise ValueError(f"p must be (N, {self.grid.count}), got {p.shape}")
        n = p.shape[0]
        if i_lin.shape != (n, 3):
            raise ValueError(f"i_linear must be ({n}, 3), got {i_lin.shape}")
        if valid.shape != (n,):
            raise ValueError(f"valid must be ({n},), got {valid.shape}")
        if (p < 0).any():
            raise ValueError("radiance rows must be nonnegative")
        for name, arr in (("p", p), ("i_linear", i_lin), ("valid", valid)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def valid_rows(self) -> tuple[np.ndarray, np.ndarray]:
        return self.p[self.valid], self.i_linear[self.valid]


def estimate_pinv(m: MeasurementSet, channel: int) -> np.ndarray:
    """Unconstrained normal-equations estimate of one sensitivity column.

    Solves (P^T P)^-1 P^T I directly. Negative entries are possible and
    expected under noise; use the constrained estimator when that matters.
    """
    p, i_lin = m.valid_rows()
    n, width = p.shape
    if n < width:
        raise UnderdeterminedError(
            f"pseudo-inverse needs >= {width} valid rows (one per wavelength), got {n}"
        )
    ptp = p.T @ p
    cond = np.linalg.cond(ptp)
    if not np.isfinite(cond) or cond > PINV_CONDITION_LIMIT:
        raise RankDeficiencyError(
            f"P^T P condition {cond:.3e} exceeds {PINV_CONDITION_LIMIT:.0e}; "
            "the spectra do not span the grid - use the constrained estimator"
        )
    return np.linalg.solve(ptp, p.T @ i_lin[:, channel])


@dataclass(frozen=True, eq=False)
class SensitivityFit:
    coefficients: np.ndarray  # (3, d)
    omega_hat: SensitivityMatrix
    residual_rms: np.ndarray  # (3,)


def _fit_channel(
    p: np.ndarray, y: np.ndarray, basis_k: np.ndarray, max_iter: int | None
) -> tuple[np.ndarray, np.ndarray, float]:
    d = basis_k.shape[0]
    a = p @ basis_k.T  # (N, d)
    g = basis_k.T  # constraint: reconstructed curve >= 0 at every grid index
    result = lsi(a, y, g, max_iter=max_iter if max_iter is not None else 100 * d)
    omega_col = basis_k.T @ result.x
    # The solver certifies violations <= 1e-10; flush that dust to zero.
    omega_col = np.where(omega_col < 0, 0.0, omega_col)
    rms = result.residual_norm / np.sqrt(len(y))
    return result.x, omega_col, rms


def estimate_constrained(
    m: MeasurementSet, basis: SensitivityBasis, max_iter: int | None = None
) -> SensitivityFit:
    """Basis-restricted least squares with the curve kept nonnegative.

    Per channel: min over c of ||(P B^T) c - I|| subject to (B^T c) >= 0
    elementwise, solved by the active-set machinery in ``solvers``.
    """
    if m.grid != basis.grid:
        raise ValueError("measurements and basis are on different grids")
    p, i_lin = m.valid_rows()
    if p.shape[0] < basis.d:
        raise UnderdeterminedError(
            f"constrained fit needs >= {basis.d} valid rows, got {p.shape[0]}"
        )
    coeffs = np.empty((3, basis.d))
    cols = np.empty((m.grid.count, 3))
    rms = np.empty(3)
    for k in range(3):
        coeffs[k], cols[:, k], rms[k] = _fit_channel(
            p, i_lin[:, k], basis.channel_basis(k), max_iter
        )
    return SensitivityFit(coeffs, SensitivityMatrix(m.grid, cols), rms)


@dataclass(frozen=True, eq=False)
class CrossValidationReport:
    """Fold-to-fold spread of the constrained estimate."""

    mu: SensitivityMatrix
    sigma: np.ndarray  # (M, 3) per-wavelength std across folds
    fold_rmse: np.ndarray  # (folds, 3) held-out intensity RMSE
    folds: int
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "sigma", _frozen_array(self.sigma))
        object.__setattr__(self, "fold_rmse", _frozen_array(self.fold_rmse))


def cross_validate(
    m: MeasurementSet, basis: SensitivityBasis, folds: int = 10, seed: int = 0
) -> CrossValidationReport:
    """K-fold spread of the constrained estimate over the valid measurement rows.

    Fold assignment is a seeded shuffle dealt round-robin, so reruns with
    the same seed reproduce the folds exactly.
    """
    if folds < 2:
        raise ValueError(f"need >= 2 folds, got {folds}")
    valid_idx = np.flatnonzero(m.valid)
    if valid_idx.size < folds:
        raise UnderdeterminedError(
            f"cross-validation needs >= {folds} valid rows, got {valid_idx.size}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(valid_idx.size)
    fold_of = np.empty(valid_idx.size, dtype=int)
    fold_of[order] = np.arange(valid_idx.size) % folds

    omegas = np.empty((folds, m.grid.count, 3))
    fold_rmse = np.empty((folds, 3))
    for f in range(folds):
        train = valid_idx[fold_of != f]
        held = valid_idx[fold_of == f]
        sub = MeasurementSet(
            m.grid, m.p[train], m.i_linear[train], np.ones(train.size, dtype=bool)
        )
        fit = estimate_constrained(sub, basis)
        omegas[f] = fit.omega_hat.channels
        pred = m.p[held] @ fit.omega_hat.channels
        fold_rmse[f] = np.sqrt(((pred - m.i_linear[held]) ** 2).mean(axis=0))
    mu = SensitivityMatrix(m.grid, omegas.mean(axis=0))
    sigma = omegas.std(axis=0)
    return CrossValidationReport(mu, sigma, fold_rmse, folds, seed)


def _gaussian(wl: np.ndarray, center: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((wl - center) / width) ** 2)


# Channel bump families for the synthetic databases: (center_nm, spread_nm).
_CHANNEL_CENTERS = ((605.0, 18.0), (540.0, 15.0), (465.0, 15.0))


def synthetic_database(
    grid: SpectralGrid, n_entries: int = 24, seed: int = 7
) -> SensitivityDatabase:
    """Stand-in for a measured camera database: Gaussian-mixture channel curves.

    Each entry gets a main bump per channel (center and width jittered
    around plausible camera values) plus an occasional side lobe. A real
    database in the documented CSV format drops in via ``io.load_database``.
    """
    if n_entries < 2:
        raise ValueError("need at least 2 entries")
    rng = np.random.default_rng(seed)
    wl = grid.wavelengths
    entries = []
    for idx in range(n_entries):
        cols = np.empty((grid.count, 3))
        for k, (center, spread) in enumerate(_CHANNEL_CENTERS):
            c = rng.normal(center, spread)
            width = rng.uniform(22.0, 42.0)
            amp = rng.uniform(0.6, 1.0)
            curve = amp * _gaussian(wl, c, width)
            if rng.uniform() < 0.5:
                side = rng.uniform(0.05, 0.2) * amp
                shift = rng.choice([-1.0, 1.0]) * rng.uniform(35.0, 70.0)
                curve = curve + side * _gaussian(wl, c + shift, rng.uniform(15.0, 30.0))
            cols[:, k] = curve
        entries.append((f"synthcam-{idx:03d}", SensitivityMatrix(grid, cols)))
    return SensitivityDatabase(tuple(entries), grid)


def spanning_database(
    grid: SpectralGrid, d: int = 6, n_entries: int = 24, seed: int = 11
) -> tuple[SensitivityDatabase, np.ndarray]:
    """Database of known rank d per channel, plus its (3, d, M) parent curves.

    Entries are strictly positive combinations of d Gaussian parents, so a
    basis built with dimension d spans the parents exactly. Tests use this
    to place a ground-truth camera inside the basis span.
    """
    if n_entries < max(2, d):
        raise ValueError(f"need at least max(2, d)={max(2, d)} entries")
    rng = np.random.default_rng(seed)
    wl = grid.wavelengths
    span = grid.end_nm - grid.start_nm
    parents = np.empty((3, d, grid.count))
    for k, (center, _) in enumerate(_CHANNEL_CENTERS):
        offsets = np.linspace(-0.22 * span, 0.22 * span, d)
        for j, off in enumerate(offsets):
            parents[k, j] = _gaussian(wl, center + off, rng.uniform(20.0, 34.0))
    entries = []
    for idx in range(n_entries):
        cols = np.empty((grid.count, 3))
        for k in range(3):
            mix = rng.uniform(0.05, 1.0, size=d)
            cols[:, k] = mix @ parents[k]
        entries.append((f"spancam-{idx:03d}", SensitivityMatrix(grid, cols)))
    return SensitivityDatabase(tuple(entries), grid), parents
