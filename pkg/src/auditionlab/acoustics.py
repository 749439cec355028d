"""Observation models: propagation, per-mic levels with a noise floor, and ITD.

Levels follow spherical spreading, ``L = level_ref - 20 log10(r / r_ref)``
with the range clamped below at ``r_min`` to remove the r -> 0 singularity.
Per microphone, concurrent sources and the ambient noise floor combine in
power, never in dB. The interaural time difference is the exact path-length
difference divided by the speed of sound, with the sign convention

    itd = (r_right - r_left) / c        (positive when the LEFT mic is closer)

Every level-set of the noise-free ITD is a surface of revolution about the
interaural axis, which is what makes the cone of confusion a real ambiguity
until the agent moves.
"""

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, ValidationError
from .world import AgentPose, SoundSource, WorldState, mic_positions

_LOG10_OVER_20 = np.log(10.0) / 20.0
_DB_SLOPE = 20.0 / np.log(10.0)  # dB per unit of ln(r)

COMPONENTS = ("level_left", "level_right", "itd")


@dataclass
class SensorModel:
    """Binaural sensor parameters and observation noise.

    d: rod length between the two microphones (m).
    c: speed of sound (m/s).
    r_ref: distance at which a source emits its reference level (m).
    r_min: range clamp removing the near-field singularity (m).
    noise_floor: ambient/system noise level N0 (dB), power-summed into
        every observation so silence reads N0 rather than -inf.
    sigma_level / sigma_itd: observation noise stds (dB, seconds).
    snr_gate: minimum per-mic SNR (dB above N0) for a usable ITD.
    source_level_ref: emission level (dB at r_ref) that estimators assume
        for the single target source when predicting observations.
    """

    d: float = 0.2
    c: float = 343.0
    r_ref: float = 1.0
    r_min: float = 0.05
    noise_floor: float = 0.0
    sigma_level: float = 1.0
    sigma_itd: float = 1e-5
    snr_gate: float = 10.0
    source_level_ref: float = 70.0

    def __post_init__(self):
        for name in ("d", "c", "r_ref", "r_min"):
            v = getattr(self, name)
            if not (v > 0.0) or not np.isfinite(v):
                raise ValidationError(f"SensorModel.{name} must be > 0, got {v}")
        for name in ("sigma_level", "sigma_itd"):
            v = getattr(self, name)
            if v < 0.0 or not np.isfinite(v):
                raise ValidationError(f"SensorModel.{name} must be >= 0, got {v}")
        if not np.isfinite(self.noise_floor) or not np.isfinite(self.snr_gate):
            raise ValidationError("noise_floor and snr_gate must be finite")

    @property
    def itd_max(self) -> float:
        """Largest geometrically possible |itd| (colinear source)."""
        return self.d / self.c


@dataclass
class Observation:
    """One binaural observation: per-mic levels plus an optional ITD.

    `itd` is None whenever `itd_valid` is False (no source loud enough at
    both mics, or no source at all). `ild` is the derived level difference.
    """

    level_left: float
    level_right: float
    itd: float | None
    itd_valid: bool
    time_step: int

    def __post_init__(self):
        if self.itd_valid and self.itd is None:
            raise ValidationError("itd_valid requires an itd value")
        if not self.itd_valid and self.itd is not None:
            raise ValidationError("itd must be absent when itd_valid is False")

    @property
    def ild(self) -> float:
        return self.level_left - self.level_right


def _clamped_range(r: np.ndarray | float, model: SensorModel):
    return np.maximum(r, model.r_min)


def signal_level(level_ref: float, r: np.ndarray | float, model: SensorModel):
    """Noise-free received level of one source at range r (vectorized)."""
    rc = _clamped_range(r, model)
    return level_ref - 20.0 * np.log10(rc / model.r_ref)


def received_level(
    source: SoundSource,
    mic: np.ndarray,
    model: SensorModel,
    time_step: int | None = None,
) -> float:
    """Noise-free signal level (dB) of `source` at point `mic`.

    Returns -inf when the source is scheduled off at `time_step` (the
    "no signal" sentinel; it contributes zero power to any sum).
    """
    mic = np.asarray(mic, dtype=float)
    if not np.all(np.isfinite(mic)):
        raise ValidationError("mic position must be finite")
    if time_step is not None and not source.active(time_step):
        return -np.inf
    r = float(np.linalg.norm(source.position - mic))
    return float(signal_level(source.level_ref, r, model))


def itd_true(source_pos: np.ndarray, pose: AgentPose, model: SensorModel) -> float:
    """Exact interaural time difference for a source at `source_pos`.

    Raises GeometryError when the source sits within `r_min` of either mic,
    where the range clamp would make the path difference meaningless.
    """
    p = np.asarray(source_pos, dtype=float)
    left, right = mic_positions(pose, model.d)
    r_l = float(np.linalg.norm(p - left))
    r_r = float(np.linalg.norm(p - right))
    if r_l < model.r_min or r_r < model.r_min:
        raise GeometryError(
            f"source within r_min={model.r_min} of a microphone (r_l={r_l:.4g}, r_r={r_r:.4g})"
        )
    return (r_r - r_l) / model.c


def power_sum_levels(levels_db: np.ndarray, floor_db: float) -> float:
    """Combine signal levels (dB) and the noise floor in power."""
    levels_db = np.asarray(levels_db, dtype=float)
    powers = np.power(10.0, levels_db / 10.0)
    return float(10.0 * np.log10(powers.sum() + 10.0 ** (floor_db / 10.0)))


def observe(state: WorldState, model: SensorModel, rng: np.random.Generator) -> Observation:
    """Sample one Observation of `state` under `model`.

    Per mic, all active sources and the noise floor are power-summed and the
    result is perturbed by N(0, sigma_level^2). The ITD is computed for the
    loudest active source only and perturbed by N(0, sigma_itd^2); it is
    valid only when that source clears the SNR gate at both microphones.
    Silence is a perfectly good observation: both levels read near the floor.
    """
    left, right = mic_positions(state.agent, model.d)
    active = state.active_sources()

    per_mic = {"left": [], "right": []}
    center_levels = []
    for src in active:
        per_mic["left"].append(received_level(src, left, model))
        per_mic["right"].append(received_level(src, right, model))
        center_levels.append(received_level(src, state.agent.position, model))

    level_left = power_sum_levels(np.array(per_mic["left"]), model.noise_floor)
    level_right = power_sum_levels(np.array(per_mic["right"]), model.noise_floor)
    if model.sigma_level > 0.0:
        level_left += float(rng.normal(0.0, model.sigma_level))
        level_right += float(rng.normal(0.0, model.sigma_level))

    itd = None
    itd_valid = False
    if active:
        k = int(np.argmax(center_levels))
        loudest = active[k]
        snr_ok = (
            per_mic["left"][k] - model.noise_floor >= model.snr_gate
            and per_mic["right"][k] - model.noise_floor >= model.snr_gate
        )
        if snr_ok:
            try:
                tau = itd_true(loudest.position, state.agent, model)
            except GeometryError:
                tau = None  # standing on the source; no usable delay
            if tau is not None:
                if model.sigma_itd > 0.0:
                    tau += float(rng.normal(0.0, model.sigma_itd))
                bound = model.itd_max + 5.0 * model.sigma_itd
                itd = float(np.clip(tau, -bound, bound))
                itd_valid = True

    return Observation(
        level_left=level_left,
        level_right=level_right,
        itd=itd,
        itd_valid=itd_valid,
        time_step=state.time_step,
    )


def measurement_jacobian(
    source_pos: np.ndarray, pose: AgentPose, model: SensorModel
) -> np.ndarray:
    """3x3 Jacobian of [itd, level_left, level_right] w.r.t. source position.

    Level rows differentiate the raw spreading law (zero inside the range
    clamp); the ITD row differentiates the exact path difference. Raises
    GeometryError in the same degenerate cases as `itd_true`.
    """
    p = np.asarray(source_pos, dtype=float)
    left, right = mic_positions(pose, model.d)
    dl = p - left
    dr = p - right
    r_l = float(np.linalg.norm(dl))
    r_r = float(np.linalg.norm(dr))
    if r_l < model.r_min or r_r < model.r_min:
        raise GeometryError(
            f"source within r_min={model.r_min} of a microphone (r_l={r_l:.4g}, r_r={r_r:.4g})"
        )
    u_l = dl / r_l
    u_r = dr / r_r

    J = np.zeros((3, 3))
    J[0] = (u_r - u_l) / model.c
    # d/dp [ -20 log10(r/r_ref) ] = -(20/ln10) * u / r, dead inside the clamp
    if r_l > model.r_min:
        J[1] = -_DB_SLOPE * u_l / r_l
    if r_r > model.r_min:
        J[2] = -_DB_SLOPE * u_r / r_r
    return J


# ---------------------------------------------------------------------------
# Vectorized single-target predictions shared by the grid/EKF/particle filters.
# The hypothesis everywhere: one source of level model.source_level_ref at the
# candidate position, heard over the configured noise floor.
# ---------------------------------------------------------------------------


def predicted_signal_levels(
    positions: np.ndarray, pose: AgentPose, model: SensorModel
) -> np.ndarray:
    """Raw per-mic signal levels, shape (K, 2) for K candidate positions."""
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    left, right = mic_positions(pose, model.d)
    r_l = np.linalg.norm(pos - left, axis=1)
    r_r = np.linalg.norm(pos - right, axis=1)
    out = np.empty((pos.shape[0], 2))
    out[:, 0] = signal_level(model.source_level_ref, r_l, model)
    out[:, 1] = signal_level(model.source_level_ref, r_r, model)
    return out


def predicted_observed_levels(
    positions: np.ndarray, pose: AgentPose, model: SensorModel
) -> np.ndarray:
    """Noise-floor-summed per-mic levels, shape (K, 2). Matches `observe`."""
    sig = predicted_signal_levels(positions, pose, model)
    floor_pow = 10.0 ** (model.noise_floor / 10.0)
    return 10.0 * np.log10(10.0 ** (sig / 10.0) + floor_pow)


def predicted_itd(positions: np.ndarray, pose: AgentPose, model: SensorModel) -> np.ndarray:
    """Exact ITD per candidate position, shape (K,). No degeneracy check;
    ranges are clamped at r_min so values stay finite."""
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    left, right = mic_positions(pose, model.d)
    r_l = np.maximum(np.linalg.norm(pos - left, axis=1), model.r_min)
    r_r = np.maximum(np.linalg.norm(pos - right, axis=1), model.r_min)
    return (r_r - r_l) / model.c


def noise_floor_gain(signal_db: np.ndarray, model: SensorModel) -> np.ndarray:
    """d(observed level)/d(signal level) under the power-sum with the floor."""
    sig_pow = 10.0 ** (np.asarray(signal_db, dtype=float) / 10.0)
    return sig_pow / (sig_pow + 10.0 ** (model.noise_floor / 10.0))


def _gauss_loglik(x: float, mu: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0.0:
        raise ValidationError("observation sigma must be > 0 to evaluate a likelihood")
    z = (x - mu) / sigma
    return -0.5 * z * z - np.log(sigma * np.sqrt(2.0 * np.pi))


def observation_loglik(
    positions: np.ndarray,
    obs: Observation,
    pose: AgentPose,
    model: SensorModel,
    components: tuple[str, ...] | None = None,
) -> np.ndarray:
    """Log-likelihood of `obs` for a single source at each candidate position.

    `components` selects which measurement channels participate; the ITD
    channel is silently skipped when the observation carries no valid ITD.
    Shape (K,), clamped below at -700 to keep exponentiation finite.
    """
    comps = COMPONENTS if components is None else tuple(components)
    for cname in comps:
        if cname not in COMPONENTS:
            raise ValidationError(f"unknown observation component {cname!r}")
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    ll = np.zeros(pos.shape[0])

    if "level_left" in comps or "level_right" in comps:
        levels = predicted_observed_levels(pos, pose, model)
        if "level_left" in comps:
            ll += _gauss_loglik(obs.level_left, levels[:, 0], model.sigma_level)
        if "level_right" in comps:
            ll += _gauss_loglik(obs.level_right, levels[:, 1], model.sigma_level)
    if "itd" in comps and obs.itd_valid:
        taus = predicted_itd(pos, pose, model)
        ll += _gauss_loglik(obs.itd, taus, model.sigma_itd)

    return np.maximum(ll, -700.0)
