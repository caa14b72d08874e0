"""Synthetic data generation for the bundled models.

Each generator builds a model instance, evaluates the canonical form at the
true parameters, and adds iid Gaussian noise. Input trajectories for the
flight models are fixed excitation schedules (circles, pushover-pullup,
multisines, chirps, and a doublet for the pitot model; a multisine IMU
profile for flight-path reconstruction; a tumbling attitude sweep for the
magnetometer).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..canon import Dataset, InvalidModelError, SampleContext
from ..linlsq import stack
from .attitude import dcm_body_to_ned_many, euler_rates_to_body
from .datacompat import DataCompatModel
from .mag import MagModel
from .pitot import PitotModel
from .scalar import Scalar1Model, Scalar2Model, canonical_eta

__all__ = ["SimSpec", "SimResult", "simulate"]

D2R = np.pi / 180.0


@dataclass
class SimSpec:
    """What to simulate: model, size, noise, seed, and true parameters.

    Unset fields fall back to the bundled defaults for the model. sigma may
    be a scalar (all channels) or a per-channel sequence.
    """

    model_id: str
    N: int = None
    sigma: object = None
    seed: int = 0
    truth1: object = None
    truth2: object = None
    fs: float = None
    duration: float = None
    extra: dict = field(default_factory=dict)


@dataclass
class SimResult:
    dataset: Dataset
    model: object
    truth1: np.ndarray
    truth2: np.ndarray
    sigma: np.ndarray
    spec: SimSpec


_DEFAULTS = {
    "scalar1": dict(
        N=100, sigma=0.3,
        truth1=[1.0, 1.0], truth2=[0.1],
    ),
    "scalar2": dict(
        N=100, sigma=0.3,
        truth1=[1.0, 1.0], truth2=[0.05, 0.1],
    ),
    "pitot": dict(
        fs=50.0, duration=62.0, sigma=1.0,
        truth1=[-0.1748, 4.3553, -3.8038, -2.4137, -0.7168],
        truth2=[0.2982, -2.4854 * D2R, -0.2673, -1.2980 * D2R, -0.1380],
    ),
    "mag": dict(
        N=400, sigma=0.005,
        truth1=[0.05, -0.03, 0.02, 0.10, -0.08, 0.06],
        truth2=[0.02, -0.015, 0.01, 0.01, -0.008, 0.012],
    ),
    "datacompat": dict(
        fs=50.0, duration=10.0,
        sigma=[0.1, 0.003, 0.003, 0.003, 0.003, 0.003],
        truth1=[0.03, 0.5, -0.02, 0.01, 0.04, -0.01,
                0.01, 0.02, -0.03, -0.01, 0.02, 0.015],
        truth2=[0.1, -0.15, 0.2, 0.005, -0.004, 0.006],
    ),
}


def default_truth(model_id):
    d = _DEFAULTS[model_id]
    return np.asarray(d["truth1"], float), np.asarray(d["truth2"], float)


def _fill(spec: SimSpec):
    if spec.model_id not in _DEFAULTS:
        raise InvalidModelError(f"unknown model id {spec.model_id!r}")
    d = _DEFAULTS[spec.model_id]
    out = SimSpec(
        model_id=spec.model_id,
        N=spec.N if spec.N is not None else d.get("N"),
        sigma=spec.sigma if spec.sigma is not None else d["sigma"],
        seed=spec.seed,
        truth1=np.asarray(spec.truth1 if spec.truth1 is not None else d["truth1"], float),
        truth2=np.asarray(spec.truth2 if spec.truth2 is not None else d["truth2"], float),
        fs=spec.fs if spec.fs is not None else d.get("fs"),
        duration=spec.duration if spec.duration is not None else d.get("duration"),
        extra=dict(spec.extra),
    )
    return out


def _noisy(model, contexts, truth1, truth2, sigma, seed):
    """Evaluate the canonical form at the truth and add channel noise."""
    zt = Dataset(contexts=contexts, z=np.zeros((len(contexts), model.m)))
    sys = stack(model, zt, truth2)
    z_true = (sys.A_big @ truth1 + sys.b_big).reshape(len(contexts), model.m)
    sigma = np.broadcast_to(np.atleast_1d(np.asarray(sigma, float)), (model.m,))
    rng = np.random.default_rng(seed)
    z = z_true + rng.standard_normal(z_true.shape) * sigma[None, :]
    return Dataset(contexts=contexts, z=z, model_id=model.model_id), sigma.copy()


def _sim_scalar(spec, cls):
    model = cls(canonical_eta(spec.N))
    contexts = model.contexts()
    ds, sigma = _noisy(model, contexts, spec.truth1, spec.truth2, spec.sigma, spec.seed)
    return SimResult(ds, model, spec.truth1, spec.truth2, sigma, spec)


def _smooth(x, w):
    """Moving-average smoothing with edge padding (keeps array length)."""
    if w <= 1:
        return x
    kern = np.ones(w) / w
    pad = np.concatenate([np.full(w, x[0]), x, np.full(w, x[-1])])
    return np.convolve(pad, kern, mode="same")[w:-w]


def _pitot_profiles(t):
    """True airspeed, flow angles, and attitude over the excitation schedule."""
    Va = 17.0 + 0.8 * np.sin(2 * np.pi * t / 31.0)
    alpha = np.full_like(t, 0.06)
    beta = np.zeros_like(t)
    phi = np.zeros_like(t)
    theta = np.full_like(t, 0.05)
    psi = np.zeros_like(t)

    m = t < 12.0  # steady circle, banked right
    psi[m] = 2 * np.pi * t[m] / 12.0
    phi[m] = 0.35
    m = (t >= 12.0) & (t < 24.0)  # circle back, banked left
    psi[m] = 2 * np.pi * (1.0 - (t[m] - 12.0) / 12.0)
    phi[m] = -0.35
    m = (t >= 24.0) & (t < 32.0)  # pushover-pullup
    s = (t[m] - 24.0) / 8.0
    theta[m] += 0.22 * np.sin(2 * np.pi * s)
    alpha[m] += 0.06 * np.sin(2 * np.pi * s)
    Va[m] -= 1.2 * np.sin(2 * np.pi * s)
    for i, (f1, f2) in enumerate([(0.4, 0.7), (0.6, 1.0), (0.9, 0.5), (1.2, 0.8)]):
        m = (t >= 32.0 + 5.0 * i) & (t < 37.0 + 5.0 * i)  # multisine block
        s = t[m] - 32.0 - 5.0 * i
        alpha[m] += 0.05 * np.sin(2 * np.pi * f1 * s)
        beta[m] += 0.05 * np.sin(2 * np.pi * f2 * s + 0.5)
        phi[m] += 0.20 * np.sin(np.pi * f1 * s)
        theta[m] += 0.04 * np.sin(2 * np.pi * f2 * s)
    m = (t >= 52.0) & (t < 56.0)  # pitch chirp
    s = t[m] - 52.0
    f = 0.3 + 0.15 * s
    theta[m] += 0.08 * np.sin(2 * np.pi * f * s)
    alpha[m] += 0.06 * np.sin(2 * np.pi * f * s)
    m = (t >= 56.0) & (t < 60.0)  # yaw chirp
    s = t[m] - 56.0
    beta[m] += 0.08 * np.sin(2 * np.pi * (0.3 + 0.15 * s) * s)
    psi[m] += 0.15 * np.sin(2 * np.pi * 0.5 * s)
    m = t >= 60.0  # sideslip doublet
    beta[m] += 0.08 * np.sign(np.sin(2 * np.pi * (t[m] - 60.0) / 2.0 + 1e-9))

    w = 25  # half a second at 50 Hz; removes segment-joint discontinuities
    return tuple(_smooth(x, w) for x in (Va, alpha, beta, phi, theta, psi))


def _sim_pitot(spec):
    extra = spec.extra
    model = PitotModel(
        rho=extra.get("rho", 1.225),
        K_alpha=extra.get("K_alpha", 0.0833),
        K_beta=extra.get("K_beta", 0.0833),
        probe_offset=extra.get("probe_offset", (0.2, 0.0, 0.0)),
    )
    N = int(round(spec.fs * spec.duration)) + 1
    t = np.arange(N) / spec.fs
    Va, alpha, beta, phi, theta, psi = _pitot_profiles(t)

    lam_al, b_al, lam_be, b_be, _eps = spec.truth2
    lam_Va, b_Va = spec.truth1[0], spec.truth1[1]
    V_raw = (Va - b_Va) / (1.0 + lam_Va)
    if np.any(V_raw <= 0):
        raise InvalidModelError("airspeed schedule gives non-positive raw speed")
    qbar = 0.5 * model.rho * V_raw**2
    a_raw = (alpha - b_al) / (1.0 + lam_al)
    b_raw = (beta - b_be) / (1.0 + lam_be)
    P_s = np.full(N, extra.get("P_s", 97000.0))
    P_t = P_s + qbar
    P_da = a_raw * model.K_alpha * qbar
    P_db = b_raw * model.K_beta * qbar

    p, q, r = euler_rates_to_body(
        phi, theta, np.gradient(phi, t), np.gradient(theta, t), np.gradient(psi, t)
    )
    gyro_bias = np.asarray(extra.get("gyro_bias", (0.002, -0.003, 0.001)), float)
    contexts = tuple(
        SampleContext(
            x=np.array([phi[k], theta[k], psi[k],
                        p[k] + gyro_bias[0], q[k] + gyro_bias[1], r[k] + gyro_bias[2],
                        gyro_bias[0], gyro_bias[1], gyro_bias[2]]),
            u=np.array([P_da[k], P_db[k], P_t[k], P_s[k]]),
            k=k,
        )
        for k in range(N)
    )
    ds, sigma = _noisy(model, contexts, spec.truth1, spec.truth2, spec.sigma, spec.seed)
    return SimResult(ds, model, spec.truth1, spec.truth2, sigma, spec)


def _sim_mag(spec):
    model = MagModel()
    N = spec.N
    s = np.linspace(0.0, 1.0, N)
    eul = np.stack([
        2 * np.pi * 5.0 * s,                  # roll sweep
        1.0 * np.sin(2 * np.pi * 2.5 * s),    # pitch oscillation
        2 * np.pi * 3.0 * s,                  # yaw sweep
    ], axis=1)
    h_ned = np.asarray(spec.extra.get(
        "h_ned", [0.42157, 0.02948, 0.90631]), float)
    C = dcm_body_to_ned_many(eul)
    h_b = np.einsum("nji,j->ni", C, h_ned)  # transpose maps NED to body
    contexts = tuple(SampleContext(x=h_b[k], k=k) for k in range(N))
    ds, sigma = _noisy(model, contexts, spec.truth1, spec.truth2, spec.sigma, spec.seed)
    return SimResult(ds, model, spec.truth1, spec.truth2, sigma, spec)


def _dc_inputs(t, g, theta0=0.05):
    """True specific forces and body rates for the reconstruction model.

    Rate inputs are cosine multisines whose running integrals stay centred,
    so the attitude oscillates about its initial value instead of drifting.
    The x force carries a g*sin(theta0) trim that cancels the mean gravity
    component along the body x axis; without it the forward speed decays
    toward the flow-angle singularity at u = 0.
    """
    two_pi = 2 * np.pi
    trim = g * np.sin(theta0)
    ax = trim + 0.6 * np.cos(two_pi * 0.3 * t) + 0.25 * np.cos(two_pi * 0.9 * t)
    ay = 0.4 * np.cos(two_pi * 0.4 * t) + 0.2 * np.cos(two_pi * 1.1 * t)
    az = -g + 0.5 * np.cos(two_pi * 0.5 * t) + 0.2 * np.cos(two_pi * 0.8 * t)
    p = 0.12 * np.cos(two_pi * 0.5 * t) + 0.05 * np.cos(two_pi * 1.3 * t)
    q = 0.10 * np.cos(two_pi * 0.3 * t) + 0.04 * np.cos(two_pi * 1.0 * t)
    r = 0.08 * np.cos(two_pi * 0.2 * t) + 0.04 * np.cos(two_pi * 0.7 * t)
    return np.stack([ax, ay, az, p, q, r], axis=1)


def _sim_datacompat(spec):
    g = float(spec.extra.get("g", 9.80665))
    N = int(round(spec.fs * spec.duration)) + 1
    t = np.arange(N) / spec.fs
    u_true = _dc_inputs(t, g)
    # stored (measured) inputs are the true ones minus the bias, so that
    # adding the true bias back reproduces the true trajectory exactly
    u_meas = u_true - np.asarray(spec.truth2, float)[None, :]
    x0 = np.asarray(spec.extra.get("x0", [25.0, 0.5, 1.2, 0.02, 0.05, -0.03]), float)
    model = DataCompatModel(x0=x0, inputs_meas=u_meas, dt=1.0 / spec.fs, g=g)
    states = model.states_for(np.asarray(spec.truth2, float))
    contexts = tuple(
        SampleContext(x=states[k], u=u_meas[k], k=k) for k in range(N)
    )
    ds, sigma = _noisy(model, contexts, spec.truth1, spec.truth2, spec.sigma, spec.seed)
    return SimResult(ds, model, spec.truth1, spec.truth2, sigma, spec)


def simulate(spec: SimSpec) -> SimResult:
    """Generate a dataset (and its model instance) from a simulation spec."""
    spec = _fill(spec)
    if spec.model_id == "scalar1":
        return _sim_scalar(spec, Scalar1Model)
    if spec.model_id == "scalar2":
        return _sim_scalar(spec, Scalar2Model)
    if spec.model_id == "pitot":
        return _sim_pitot(spec)
    if spec.model_id == "mag":
        return _sim_mag(spec)
    return _sim_datacompat(spec)
