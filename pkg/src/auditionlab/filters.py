"""Recursive state estimators over the sound-source position.

Three interchangeable belief representations implement the same
predict/update cycle: an exact histogram filter on a lattice (the brute-force
Bayes reference the others are validated against), an extended Kalman filter,
and a particle filter with systematic resampling. Action updates can only
spread a belief; measurement updates are where information enters.
"""

import numpy as np
from scipy.special import logsumexp

from .acoustics import (
    COMPONENTS,
    Observation,
    SensorModel,
    measurement_jacobian,
    noise_floor_gain,
    observation_loglik,
    predicted_itd,
    predicted_observed_levels,
    predicted_signal_levels,
)
from .errors import DegenerateBeliefError, NumericsError, ValidationError
from .world import AgentPose, Bounds

_LOG_FLOOR = -700.0


# ---------------------------------------------------------------------------
# Grid (histogram) belief
# ---------------------------------------------------------------------------


class GridBelief:
    """Probability histogram over a regular lattice of candidate positions.

    The lattice has `shape` cells per axis, cell spacing `resolution`, and
    cell (0,0,0) centered at `origin`. Planar problems use a single layer
    along the degenerate axis. `log_weights` is flat, C-ordered, normalized
    so the exponentials sum to one.
    """

    def __init__(self, shape, origin, resolution: float, log_weights: np.ndarray):
        self.shape = tuple(int(n) for n in shape)
        if len(self.shape) != 3 or any(n < 1 for n in self.shape):
            raise ValidationError(f"grid shape must be three positive ints, got {shape}")
        self.origin = np.asarray(origin, dtype=float)
        if not (resolution > 0.0):
            raise ValidationError("grid resolution must be > 0")
        self.resolution = float(resolution)
        lw = np.asarray(log_weights, dtype=float).ravel()
        if lw.size != self.n_cells:
            raise ValidationError(
                f"log_weights size {lw.size} does not match grid of {self.n_cells} cells"
            )
        if np.any(np.isnan(lw)):
            raise ValidationError("log_weights must be finite or -inf, got NaN")
        self.log_weights = lw
        self._cells = None

    @property
    def n_cells(self) -> int:
        return self.shape[0] * self.shape[1] * self.shape[2]

    @property
    def cells(self) -> np.ndarray:
        """Cell-center positions, shape (n_cells, 3), C-ordered like log_weights."""
        if self._cells is None:
            axes = [
                self.origin[k] + self.resolution * np.arange(self.shape[k])
                for k in range(3)
            ]
            gx, gy, gz = np.meshgrid(*axes, indexing="ij")
            self._cells = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
        return self._cells

    @classmethod
    def uniform_box(cls, lo, hi, resolution: float) -> "GridBelief":
        """Uniform belief over an axis-aligned box. Axes with zero span get a
        single cell layer, so a flat box yields a planar grid."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if np.any(hi < lo):
            raise ValidationError("box hi must be >= lo")
        shape = []
        origin = []
        for k in range(3):
            span = hi[k] - lo[k]
            n = max(1, int(round(span / resolution)))
            if span == 0.0:
                n = 1
            shape.append(n)
            # center the n cells on the box midpoint
            mid = 0.5 * (lo[k] + hi[k])
            origin.append(mid - 0.5 * (n - 1) * resolution)
        n_cells = shape[0] * shape[1] * shape[2]
        lw = np.full(n_cells, -np.log(n_cells))
        return cls(shape, origin, resolution, lw)

    def probs(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def mean(self) -> np.ndarray:
        return self.probs() @ self.cells

    def mode(self) -> np.ndarray:
        return self.cells[int(np.argmax(self.log_weights))]

    def mode_index(self) -> int:
        return int(np.argmax(self.log_weights))

    def mass_where(self, mask: np.ndarray) -> float:
        """Total probability over cells selected by a boolean mask."""
        return float(self.probs()[mask].sum())

    def _normalized(self, log_weights: np.ndarray) -> "GridBelief":
        z = logsumexp(log_weights)
        if not np.isfinite(z):
            raise DegenerateBeliefError("belief mass underflowed to zero everywhere")
        return GridBelief(self.shape, self.origin, self.resolution, log_weights - z)


def _reflected_blur_matrix(n: int, sigma_cells: float, truncate: float = 6.0) -> np.ndarray:
    """1D Gaussian blur on n cells with reflecting boundaries.

    Out-of-range mass folds back in by the method of images, which makes the
    matrix symmetric and doubly stochastic. That in turn guarantees the blur
    can only raise (never lower) the entropy of a distribution it is applied
    to, and that a uniform distribution stays exactly uniform.
    """
    if sigma_cells <= 0.0:
        return np.eye(n)
    radius = max(1, int(np.ceil(truncate * sigma_cells)))
    offsets = np.arange(-radius, radius + 1)
    g = np.exp(-0.5 * (offsets / sigma_cells) ** 2)
    g /= g.sum()
    A = np.zeros((n, n))
    for src in range(n):
        for off, w in zip(offsets, g):
            dst = src + off
            while dst < 0 or dst >= n:
                dst = -dst - 1 if dst < 0 else 2 * n - 1 - dst
            A[dst, src] += w
    return A


def grid_predict(b: GridBelief, process_sigma: float) -> GridBelief:
    """Action update: convolve the histogram with a Gaussian of std
    `process_sigma` meters (reflected at the grid edges). Zero sigma is the
    identity; a static source normally uses zero or a very small value."""
    if process_sigma < 0.0:
        raise ValidationError("process_sigma must be >= 0")
    if process_sigma == 0.0:
        return GridBelief(b.shape, b.origin, b.resolution, b.log_weights.copy())
    sigma_cells = process_sigma / b.resolution
    W = b.probs().reshape(b.shape)
    for axis in range(3):
        n = b.shape[axis]
        if n == 1:
            continue
        A = _reflected_blur_matrix(n, sigma_cells)
        W = np.moveaxis(np.tensordot(A, np.moveaxis(W, axis, 0), axes=(1, 0)), 0, axis)
    W = W.ravel()
    W = W / W.sum()
    with np.errstate(divide="ignore"):
        lw = np.log(W)
    return GridBelief(b.shape, b.origin, b.resolution, lw)


def grid_update(
    b: GridBelief,
    obs: Observation,
    pose: AgentPose,
    model: SensorModel,
    components: tuple[str, ...] | None = None,
) -> GridBelief:
    """Measurement update: add per-cell log-likelihoods and renormalize.

    This is exact Bayes on the lattice, so it doubles as the oracle the EKF
    and particle filter are compared against. Raises DegenerateBeliefError if
    every cell underflows; the caller decides how to recover (and logs it).
    """
    ll = observation_loglik(b.cells, obs, pose, model, components)
    return b._normalized(b.log_weights + ll)


def belief_entropy(b: GridBelief) -> float:
    """Shannon entropy in nats, with 0 * log 0 = 0."""
    lw = b.log_weights
    p = np.exp(lw)
    mask = p > 0.0
    return float(-(p[mask] * lw[mask]).sum())


# ---------------------------------------------------------------------------
# Gaussian (EKF) belief
# ---------------------------------------------------------------------------


class GaussianBelief:
    """Gaussian over the source position: mean (3,) and covariance (3,3)."""

    def __init__(self, mean, covariance):
        self.mean = np.asarray(mean, dtype=float)
        if self.mean.shape != (3,) or not np.all(np.isfinite(self.mean)):
            raise ValidationError("mean must be a finite 3-vector")
        P = np.asarray(covariance, dtype=float)
        if P.shape != (3, 3) or not np.all(np.isfinite(P)):
            raise ValidationError("covariance must be a finite 3x3 matrix")
        asym = np.max(np.abs(P - P.T))
        if asym > 1e-9 * max(1.0, np.max(np.abs(P))):
            raise ValidationError(f"covariance asymmetry {asym:.3g} exceeds tolerance")
        P = 0.5 * (P + P.T)
        eigvals = np.linalg.eigvalsh(P)
        if eigvals[0] < -1e-8 * max(1.0, eigvals[-1]):
            raise ValidationError(f"covariance is not PSD (min eigenvalue {eigvals[0]:.3g})")
        if eigvals[0] < 0.0:
            # clamp the numerically-negative directions to zero
            vals, vecs = np.linalg.eigh(P)
            vals = np.maximum(vals, 0.0)
            P = vecs @ np.diag(vals) @ vecs.T
            P = 0.5 * (P + P.T)
        self.covariance = P


def ekf_predict(b: GaussianBelief, Q: np.ndarray) -> GaussianBelief:
    """Action update for a static source: identity dynamics, covariance + Q."""
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (3, 3):
        raise ValidationError("process covariance Q must be 3x3")
    if np.max(np.abs(Q - Q.T)) > 1e-9 * max(1.0, float(np.max(np.abs(Q)))):
        raise ValidationError("Q must be symmetric")
    if np.linalg.eigvalsh(Q)[0] < -1e-10 * max(1.0, float(np.max(np.abs(Q)))):
        raise ValidationError("Q must be positive semi-definite")
    return GaussianBelief(b.mean.copy(), b.covariance + Q)


def _ekf_measurement(
    mean: np.ndarray,
    obs: Observation,
    pose: AgentPose,
    model: SensorModel,
    components: tuple[str, ...] | None,
):
    """Assemble (z, h, H, R) rows for the usable components at `mean`."""
    comps = list(COMPONENTS if components is None else components)
    for cname in comps:
        if cname not in COMPONENTS:
            raise ValidationError(f"unknown observation component {cname!r}")
    if "itd" in comps and not obs.itd_valid:
        comps.remove("itd")

    point = mean.reshape(1, 3)
    try:
        J = measurement_jacobian(mean, pose, model)
        itd_ok = True
    except Exception:
        J = np.zeros((3, 3))
        itd_ok = False
        if "itd" in comps:
            comps.remove("itd")
    if not comps:
        raise ValidationError("observation has no usable components for this update")

    sig = predicted_signal_levels(point, pose, model)[0]
    lev = predicted_observed_levels(point, pose, model)[0]
    gain = noise_floor_gain(sig, model)

    rows_z, rows_h, rows_H, rows_r = [], [], [], []
    if "itd" in comps and itd_ok:
        rows_z.append(obs.itd)
        rows_h.append(float(predicted_itd(point, pose, model)[0]))
        rows_H.append(J[0])
        rows_r.append(model.sigma_itd**2)
    if "level_left" in comps:
        rows_z.append(obs.level_left)
        rows_h.append(lev[0])
        # chain rule through the power sum with the noise floor
        rows_H.append(gain[0] * J[1])
        rows_r.append(model.sigma_level**2)
    if "level_right" in comps:
        rows_z.append(obs.level_right)
        rows_h.append(lev[1])
        rows_H.append(gain[1] * J[2])
        rows_r.append(model.sigma_level**2)

    return (
        np.array(rows_z),
        np.array(rows_h),
        np.vstack(rows_H),
        np.diag(rows_r),
    )


def ekf_update(
    b: GaussianBelief,
    obs: Observation,
    pose: AgentPose,
    model: SensorModel,
    components: tuple[str, ...] | None = None,
) -> GaussianBelief:
    """Standard EKF measurement update linearized at the prior mean.

    Uses the Joseph-form covariance update and re-symmetrizes, so the result
    stays PSD even with a nearly singular prior (e.g. planar problems with a
    pinned z). The ITD row is skipped whenever the observation's ITD is
    invalid or the geometry at the mean is degenerate.
    """
    if model.sigma_level <= 0.0 or model.sigma_itd <= 0.0:
        raise ValidationError("filter updates need strictly positive observation sigmas")
    z, h, H, R = _ekf_measurement(b.mean, obs, pose, model, components)
    P = b.covariance
    S = H @ P @ H.T + R
    try:
        K = np.linalg.solve(S, H @ P).T
    except np.linalg.LinAlgError as exc:
        raise NumericsError(
            f"singular innovation covariance S={S!r} (cond likely infinite)"
        ) from exc
    innovation = z - h
    new_mean = b.mean + K @ innovation
    I_KH = np.eye(3) - K @ H
    new_P = I_KH @ P @ I_KH.T + K @ R @ K.T
    new_P = 0.5 * (new_P + new_P.T)
    return GaussianBelief(new_mean, new_P)


def gaussian_entropy(covariance: np.ndarray, min_eig: float = 1e-12) -> float:
    """Differential entropy of a Gaussian, restricted to its non-degenerate
    subspace (pinned axes in planar problems carry no entropy)."""
    vals = np.linalg.eigvalsh(np.asarray(covariance, dtype=float))
    vals = vals[vals > min_eig]
    if vals.size == 0:
        return 0.0
    return float(0.5 * vals.size * (1.0 + np.log(2.0 * np.pi)) + 0.5 * np.log(vals).sum())


# ---------------------------------------------------------------------------
# Particle belief
# ---------------------------------------------------------------------------


class ParticleBelief:
    """Weighted particle cloud over the source position."""

    def __init__(self, particles: np.ndarray, weights: np.ndarray, reinit_count: int = 0):
        self.particles = np.asarray(particles, dtype=float)
        if self.particles.ndim != 2 or self.particles.shape[1] != 3:
            raise ValidationError("particles must have shape (N, 3)")
        w = np.asarray(weights, dtype=float)
        if w.shape != (self.particles.shape[0],):
            raise ValidationError("weights must match the particle count")
        if np.any(w < 0.0) or not np.all(np.isfinite(w)):
            raise ValidationError("weights must be finite and non-negative")
        s = w.sum()
        if not (s > 0.0):
            raise ValidationError("weights must not all be zero")
        if abs(s - 1.0) > 1e-9:
            w = w / s
        self.weights = w
        self.reinit_count = int(reinit_count)

    @property
    def n(self) -> int:
        return self.particles.shape[0]

    @property
    def ess(self) -> float:
        """Effective sample size 1 / sum(w^2)."""
        return float(1.0 / np.sum(self.weights**2))

    @classmethod
    def uniform_box(cls, lo, hi, n: int, rng: np.random.Generator) -> "ParticleBelief":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        pts = rng.uniform(lo, hi, size=(n, 3))
        return cls(pts, np.full(n, 1.0 / n))

    def mean(self) -> np.ndarray:
        return self.weights @ self.particles

    def covariance(self) -> np.ndarray:
        d = self.particles - self.mean()
        return (self.weights[:, None] * d).T @ d


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Systematic (low-variance) resampling; returns selected indices."""
    n = len(weights)
    positions = (np.arange(n) + rng.random()) / n
    cumsum = np.cumsum(weights)
    cumsum[-1] = 1.0  # guard against float round-off at the top
    return np.searchsorted(cumsum, positions)


def pf_step(
    b: ParticleBelief,
    obs: Observation,
    pose: AgentPose,
    model: SensorModel,
    rng: np.random.Generator,
    components: tuple[str, ...] | None = None,
    resample_threshold: float = 0.5,
    jitter: float | np.ndarray = 0.01,
    reinit_bounds: Bounds | None = None,
) -> ParticleBelief:
    """One particle-filter cycle: reweight, then resample if ESS drops.

    Resampling (systematic) triggers when ESS < resample_threshold * N and is
    followed by a small Gaussian jitter (`jitter` std, scalar or per-axis) to
    keep the cloud from collapsing onto duplicates. A total weight underflow
    reinitializes uniformly over `reinit_bounds` and bumps `reinit_count`;
    without bounds it raises DegenerateBeliefError instead.
    """
    if model.sigma_level <= 0.0:
        raise ValidationError("filter updates need strictly positive observation sigmas")
    ll = observation_loglik(b.particles, obs, pose, model, components)
    with np.errstate(divide="ignore"):
        logw = np.log(b.weights) + ll
    shift = logw.max()
    particles = b.particles
    reinit_count = b.reinit_count
    w_sum = 0.0
    if np.isfinite(shift):
        w = np.exp(logw - shift)
        w_sum = w.sum()
    if not np.isfinite(w_sum) or w_sum <= 0.0:
        if reinit_bounds is None:
            raise DegenerateBeliefError("particle weights underflowed and no bounds to reinit")
        particles = rng.uniform(reinit_bounds.lo, reinit_bounds.hi, size=(b.n, 3))
        weights = np.full(b.n, 1.0 / b.n)
        return ParticleBelief(particles, weights, reinit_count + 1)
    weights = w / w_sum

    new_b = ParticleBelief(particles, weights, reinit_count)
    if new_b.ess < resample_threshold * new_b.n:
        idx = systematic_resample(new_b.weights, rng)
        jit = np.broadcast_to(np.asarray(jitter, dtype=float), (3,))
        moved = new_b.particles[idx] + rng.standard_normal((new_b.n, 3)) * jit
        new_b = ParticleBelief(moved, np.full(new_b.n, 1.0 / new_b.n), reinit_count)
    return new_b
