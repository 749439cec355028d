"""Scenario builders shared between module tests and the acceptance suite."""

import numpy as np

from auditionlab.acoustics import SensorModel, observe
from auditionlab.filters import (
    GaussianBelief,
    GridBelief,
    ParticleBelief,
    ekf_update,
    grid_update,
    pf_step,
)
from auditionlab.world import (
    Action,
    AgentPose,
    SoundSource,
    TransitionNoise,
    WorldState,
    step,
)

NO_NOISE = TransitionNoise()


def direction_error_deg(estimate: np.ndarray, truth: np.ndarray, origin: np.ndarray) -> float:
    u = np.asarray(estimate, dtype=float) - origin
    v = np.asarray(truth, dtype=float) - origin
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    return float(np.degrees(np.arccos(np.clip(u @ v, -1.0, 1.0))))


# ---------------------------------------------------------------------------
# Planar localization: grid oracle vs EKF vs particle filter
# ---------------------------------------------------------------------------

PLANAR_LO = np.array([0.0, 0.0, 0.0])
PLANAR_HI = np.array([7.5, 7.5, 0.0])
PLANAR_RES = 0.25

PLANAR_MODEL = SensorModel(
    d=0.2, c=343.0, r_ref=1.0, r_min=0.05, noise_floor=0.0,
    sigma_level=1.0, sigma_itd=2e-5, snr_gate=10.0, source_level_ref=70.0,
)


def gaussian_prior_grid(lo, hi, resolution, mean, sigma) -> GridBelief:
    """Grid belief carrying an isotropic planar Gaussian prior."""
    from scipy.special import logsumexp

    g = GridBelief.uniform_box(lo, hi, resolution)
    d2 = ((g.cells[:, 0] - mean[0]) ** 2 + (g.cells[:, 1] - mean[1]) ** 2) / sigma**2
    lw = -0.5 * d2
    return GridBelief(g.shape, g.origin, g.resolution, lw - logsumexp(lw))


def run_planar_oracle_episode(rng: np.random.Generator, n_steps: int = 10,
                              n_particles: int = 10_000):
    """One detection-handoff tracking episode, all three filters in lockstep.

    The filters share a coarse Gaussian prior (a noisy position fix, the kind
    a detection front-end would hand over) so that all three represent the
    same Bayes chain. The agent turns its head by a random angle and takes a
    half-meter step each cycle; the turning is what moves the ITD mirror lobe
    around and keeps the joint posterior effectively unimodal. The EKF
    processes the measurement components one scalar at a time, standard
    sequential processing, which keeps its linearization point honest between
    the gentle level rows and the sharp ITD row.
    Returns (grid, ekf, pf, source_pos).
    """
    from auditionlab.errors import ValidationError
    from auditionlab.geometry import quat_conjugate, quat_rotate

    model = PLANAR_MODEL
    source_pos = np.array([rng.uniform(1.5, 6.0), rng.uniform(1.5, 6.0), 0.0])
    agent_pos = np.array([rng.uniform(1.0, 6.5), rng.uniform(1.0, 6.5), 0.0])
    state = WorldState(
        time_step=0,
        agent=AgentPose.identity(agent_pos),
        sources=(SoundSource(id=0, position=source_pos, level_ref=model.source_level_ref),),
    )

    prior_mean = source_pos + np.array([rng.normal(0.0, 0.75), rng.normal(0.0, 0.75), 0.0])
    prior_mean = np.clip(prior_mean, PLANAR_LO + 0.3, PLANAR_HI - 0.3)
    prior_mean[2] = 0.0
    prior_sigma = 1.25

    grid = gaussian_prior_grid(PLANAR_LO, PLANAR_HI, PLANAR_RES, prior_mean, prior_sigma)
    ekf = GaussianBelief(prior_mean, np.diag([prior_sigma**2, prior_sigma**2, 0.0]))
    pts = np.column_stack([
        rng.normal(prior_mean[0], prior_sigma, n_particles),
        rng.normal(prior_mean[1], prior_sigma, n_particles),
        np.zeros(n_particles),
    ])
    pf = ParticleBelief(pts, np.full(n_particles, 1.0 / n_particles))

    for _ in range(n_steps):
        state = step(state, Action.rotate((0.0, 0.0, rng.uniform(-np.pi, np.pi))),
                     NO_NOISE, rng)
        forward = state.agent.body_to_world(np.array([0.5, 0.0, 0.0]))
        target = np.clip(state.agent.position + forward, PLANAR_LO + 0.25, PLANAR_HI - 0.25)
        target[2] = 0.0
        body_delta = quat_rotate(quat_conjugate(state.agent.orientation),
                                 target - state.agent.position)
        state = step(state, Action.translate(body_delta), NO_NOISE, rng)
        obs = observe(state, model, rng)
        grid = grid_update(grid, obs, state.agent, model)
        for comp in (("level_left",), ("level_right",), ("itd",)):
            try:
                ekf = ekf_update(ekf, obs, state.agent, model, components=comp)
            except ValidationError:
                pass  # gated-out ITD or degenerate geometry at the mean
        pf = pf_step(pf, obs, state.agent, model, rng, jitter=np.array([0.01, 0.01, 0.0]))

    return grid, ekf, pf, source_pos


# ---------------------------------------------------------------------------
# Cone-of-confusion scenarios: ITD-only updates, static vs rotating listener
# ---------------------------------------------------------------------------

CONE_LO = np.array([-3.0, -3.0, -3.0])
CONE_HI = np.array([3.0, 3.0, 3.0])
CONE_RES = 0.25

CONE_MODEL = SensorModel(
    d=0.2, c=343.0, r_ref=1.0, r_min=0.05, noise_floor=0.0,
    sigma_level=0.5, sigma_itd=1e-5, snr_gate=10.0, source_level_ref=80.0,
)


def sample_cone_source(rng: np.random.Generator) -> np.ndarray:
    """A source with clear front/back separation and nonzero elevation."""
    azimuth = rng.uniform(np.deg2rad(25.0), np.deg2rad(65.0))
    if rng.random() < 0.5:
        azimuth = -azimuth
    elevation = rng.uniform(np.deg2rad(12.0), np.deg2rad(45.0))
    if rng.random() < 0.5:
        elevation = -elevation
    r = rng.uniform(1.5, 2.6)
    x = r * np.cos(elevation) * np.cos(azimuth)
    y = r * np.cos(elevation) * np.sin(azimuth)
    z = r * np.sin(elevation)
    if rng.random() < 0.5:
        x = -x
    return np.array([x, y, z])


def run_cone_episode(rng: np.random.Generator, rotate: bool, n_obs: int = 20):
    """ITD-only grid filtering from the origin.

    With `rotate` the listener sweeps its head 15 deg per step, first about
    the body z axis and then about the body x axis, so the interaural axis
    leaves every fixed plane and the cone ambiguity collapses.
    Returns (mirror_mass, direction_error_deg, grid, source).
    """
    model = CONE_MODEL
    source = sample_cone_source(rng)
    state = WorldState(
        time_step=0,
        agent=AgentPose.identity(),
        sources=(SoundSource(id=0, position=source, level_ref=model.source_level_ref),),
    )
    grid = GridBelief.uniform_box(CONE_LO, CONE_HI, CONE_RES)

    half = n_obs // 2
    for i in range(n_obs):
        if rotate:
            axis = np.array([0.0, 0.0, 1.0]) if i < half else np.array([1.0, 0.0, 0.0])
            state = step(state, Action.rotate(np.deg2rad(15.0) * axis), NO_NOISE, rng)
        else:
            state = step(state, Action.observe(), NO_NOISE, rng)
        obs = observe(state, model, rng)
        assert obs.itd_valid
        grid = grid_update(grid, obs, state.agent, model, components=("itd",))

    mirror_side = np.sign(-source[0])
    mirror_mass = grid.mass_where(np.sign(grid.cells[:, 0]) == mirror_side)
    err = direction_error_deg(grid.mean(), source, np.zeros(3))
    return mirror_mass, err, grid, source


# ---------------------------------------------------------------------------
# Monaural level-only localization on a 20 x 20 m world
# ---------------------------------------------------------------------------

MONAURAL_LO = np.array([0.0, 0.0, 0.0])
MONAURAL_HI = np.array([20.0, 20.0, 0.0])
MONAURAL_RES = 1.0

MONAURAL_MODEL = SensorModel(
    d=0.2, c=343.0, r_ref=1.0, r_min=0.05, noise_floor=0.0,
    sigma_level=0.5, sigma_itd=1e-5, snr_gate=10.0, source_level_ref=75.0,
)


def run_monaural_episode(rng: np.random.Generator, n_steps: int = 80):
    """Single-mic level-only localization with a random-walk trajectory.

    The walk keeps a persistent heading with Gaussian turns so it actually
    covers the room; distance circles from one microphone only intersect
    usefully when the baseline between observation points is wide.
    Returns (mode_is_true_cell, final_error_m, grid).
    """
    model = MONAURAL_MODEL
    cell_xy = rng.integers(0, 20, size=2)
    source_pos = np.array([cell_xy[0] + 0.5, cell_xy[1] + 0.5, 0.0])
    agent_pos = np.array([rng.uniform(1.0, 19.0), rng.uniform(1.0, 19.0), 0.0])
    state = WorldState(
        time_step=0,
        agent=AgentPose.identity(agent_pos),
        sources=(SoundSource(id=0, position=source_pos, level_ref=model.source_level_ref),),
    )
    grid = GridBelief.uniform_box(MONAURAL_LO, MONAURAL_HI, MONAURAL_RES)

    heading = rng.uniform(0.0, 2 * np.pi)
    for _ in range(n_steps):
        heading += rng.normal(0.0, 0.6)
        move = 2.0 * np.array([np.cos(heading), np.sin(heading), 0.0])
        target = np.clip(state.agent.position + move, MONAURAL_LO + 0.5, MONAURAL_HI - 0.5)
        target[2] = 0.0
        state = step(state, Action.translate(target - state.agent.position), NO_NOISE, rng)
        obs = observe(state, model, rng)
        grid = grid_update(grid, obs, state.agent, model, components=("level_left",))

    mode_ok = bool(np.all(np.abs(grid.mode() - source_pos) < 1e-9))
    err = float(np.linalg.norm(grid.mean() - source_pos))
    return mode_ok, err, grid
