"""Disturbance profile generation and CSV exchange for scenario runs.

Three builtin kinds: ``step`` (piecewise-constant load events, calm weather),
``moderate`` (band-limited random wander of wind/irradiance/load), and
``rapid`` (the moderate generator at 4x volatility plus cloud-shadow and
wind-lull ramp events; the load stream stays identical to ``moderate`` for
the same seed). All generation is seeded and deterministic.
"""

import csv
from dataclasses import dataclass

import numpy as np

PROFILE_COLUMNS = ("t", "load_pu", "v_w1", "v_w2", "g_eff1", "g_eff2", "t_amb")
PROFILE_KINDS = ("step", "moderate", "rapid")

# Nominal operating point the fluctuating kinds wander around.
NOMINAL_WIND_MS = 10.0
NOMINAL_IRRADIANCE = 800.0
NOMINAL_AMBIENT_C = 25.0

# Calm-weather operating point for the step kind.
STEP_WIND_MS = 12.0
STEP_IRRADIANCE = 1000.0

# Load events of the step kind: (time s, new level p.u.).
STEP_LOAD_EVENTS = ((30.0, 0.05), (60.0, 0.0), (90.0, 0.10))

WIND_CLIP = (0.0, 25.0)
IRRADIANCE_CLIP = (0.0, 1200.0)
LOAD_CLIP = (-0.2, 0.2)

_RAPID_VOLATILITY = 4.0


@dataclass(frozen=True)
class ProfileSet:
    """Sampled exogenous inputs on a shared time grid."""

    t: np.ndarray
    load_pu: np.ndarray
    v_w: np.ndarray      # (2, n) wind speed per wind unit, m/s
    g_eff: np.ndarray    # (2, n) irradiance per PV unit, W/m^2
    t_amb: np.ndarray

    def __post_init__(self):
        n = self.t.shape[0]
        if self.load_pu.shape != (n,) or self.t_amb.shape != (n,):
            raise ValueError("profile series lengths differ")
        if self.v_w.shape != (2, n) or self.g_eff.shape != (2, n):
            raise ValueError("wind/irradiance profiles must be (2, n)")
        if n < 2 or np.any(np.diff(self.t) <= 0):
            raise ValueError("time grid must be increasing")

    @property
    def ts(self):
        return float(self.t[1] - self.t[0])

    @property
    def duration(self):
        return float(self.t[-1])


def _ou_series(rng, n, mu, theta, sigma, ts, clip):
    """Ornstein-Uhlenbeck wander started at its mean, clipped to a band."""
    x = np.empty(n)
    x[0] = mu
    shocks = rng.normal(size=n - 1) * sigma * np.sqrt(ts)
    for k in range(n - 1):
        x[k + 1] = x[k] + theta * (mu - x[k]) * ts + shocks[k]
    return np.clip(x, *clip)


def _apply_ramp_events(rng, series, t, rate_per_s, depth_range, ramp_range, hold_range):
    """Multiply a series by trapezoidal dip events (cloud shadows, lulls)."""
    duration = t[-1]
    mult = np.ones_like(series)
    for _ in range(int(rng.poisson(rate_per_s * duration))):
        t0 = rng.uniform(0.0, duration)
        depth = rng.uniform(*depth_range)
        ramp = rng.uniform(*ramp_range)
        hold = rng.uniform(*hold_range)
        knots = [t0, t0 + ramp, t0 + ramp + hold, t0 + 2 * ramp + hold]
        shape = np.interp(t, knots, [0.0, 1.0, 1.0, 0.0], left=0.0, right=0.0)
        mult = np.minimum(mult, 1.0 - depth * shape)
    return series * mult


def generate_profiles(kind, seed, duration, ts=0.2):
    """Build a deterministic ProfileSet of the requested kind."""
    if kind not in PROFILE_KINDS:
        raise ValueError(f"unknown profile kind {kind!r}; expected one of {PROFILE_KINDS}")
    if duration <= 0:
        raise ValueError("duration must be > 0")
    n = int(round(duration / ts)) + 1
    t = np.arange(n) * ts

    if kind == "step":
        load = np.zeros(n)
        for event_time, level in STEP_LOAD_EVENTS:
            load[t >= event_time - 1e-9] = level
        return ProfileSet(
            t=t,
            load_pu=load,
            v_w=np.full((2, n), STEP_WIND_MS),
            g_eff=np.full((2, n), STEP_IRRADIANCE),
            t_amb=np.full(n, NOMINAL_AMBIENT_C),
        )

    # Independent substreams so the rapid kind keeps the moderate load.
    load_rng = np.random.default_rng([int(seed), 0])
    wind_rngs = [np.random.default_rng([int(seed), 1 + i]) for i in range(2)]
    pv_rngs = [np.random.default_rng([int(seed), 3 + i]) for i in range(2)]
    event_rng = np.random.default_rng([int(seed), 5])

    vol = _RAPID_VOLATILITY if kind == "rapid" else 1.0
    load = _ou_series(load_rng, n, 0.0, 0.02, 0.01, ts, LOAD_CLIP)
    v_w = np.array([
        _ou_series(rng, n, NOMINAL_WIND_MS, 0.05, 0.25 * vol, ts, WIND_CLIP)
        for rng in wind_rngs
    ])
    g_eff = np.array([
        _ou_series(rng, n, NOMINAL_IRRADIANCE, 0.05, 15.0 * vol, ts, IRRADIANCE_CLIP)
        for rng in pv_rngs
    ])

    if kind == "rapid":
        for i in range(2):
            g_eff[i] = _apply_ramp_events(
                event_rng, g_eff[i], t,
                rate_per_s=1.0 / 60.0,
                depth_range=(0.25, 0.45),
                ramp_range=(4.0, 8.0),
                hold_range=(3.0, 8.0),
            )
        for i in range(2):
            v_w[i] = _apply_ramp_events(
                event_rng, v_w[i], t,
                rate_per_s=1.0 / 75.0,
                depth_range=(0.2, 0.35),
                ramp_range=(4.0, 8.0),
                hold_range=(3.0, 8.0),
            )

    return ProfileSet(t=t, load_pu=load, v_w=v_w, g_eff=g_eff, t_amb=np.full(n, NOMINAL_AMBIENT_C))


def write_profiles_csv(path, profiles):
    """Write a ProfileSet in the interchange column order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PROFILE_COLUMNS)
        for k in range(profiles.t.shape[0]):
            writer.writerow([
                f"{profiles.t[k]:.15e}",
                f"{profiles.load_pu[k]:.15e}",
                f"{profiles.v_w[0, k]:.15e}",
                f"{profiles.v_w[1, k]:.15e}",
                f"{profiles.g_eff[0, k]:.15e}",
                f"{profiles.g_eff[1, k]:.15e}",
                f"{profiles.t_amb[k]:.15e}",
            ])


def read_profiles_csv(path):
    """Read a ProfileSet; the header must match the column order exactly."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != PROFILE_COLUMNS:
            raise ValueError(
                f"profile CSV header {header} does not match required {PROFILE_COLUMNS}"
            )
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows)
    if data.ndim != 2 or data.shape[1] != len(PROFILE_COLUMNS):
        raise ValueError("malformed profile CSV")
    return ProfileSet(
        t=data[:, 0],
        load_pu=data[:, 1],
        v_w=data[:, 2:4].T.copy(),
        g_eff=data[:, 4:6].T.copy(),
        t_amb=data[:, 6],
    )
