"""Joint state and disturbance estimation from the frequency measurement.

The five disturbance channels enter the swing equation identically, so only
their aggregate is observable from frequency alone. The filter therefore runs
on the plant state augmented with one random-walk disturbance state, which is
exactly the quantity the predictive controller consumes.
"""

from dataclasses import dataclass

import numpy as np

from .lfc_model import N_CONTROLS, N_STATES

N_AUGMENTED = N_STATES + 1

# Default tuning: near-noiseless measurement, aggressive disturbance tracking.
DEFAULT_STATE_NOISE = 1e-8
DEFAULT_DISTURBANCE_NOISE = 1e-4
DEFAULT_MEASUREMENT_NOISE = 1e-8

_CLIP_LIMIT = 1e-6


@dataclass(frozen=True)
class EstimatorConfig:
    """Process/measurement covariances for the augmented filter."""

    Q: np.ndarray
    R_noise: float
    P0: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        P0 = np.asarray(self.P0, dtype=float)
        if Q.shape != (N_AUGMENTED, N_AUGMENTED) or P0.shape != (N_AUGMENTED, N_AUGMENTED):
            raise ValueError(f"Q and P0 must be {N_AUGMENTED}x{N_AUGMENTED}")
        if self.R_noise <= 0:
            raise ValueError("R_noise must be > 0")
        if np.linalg.eigvalsh((Q + Q.T) / 2).min() < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh((P0 + P0.T) / 2).min() <= 0:
            raise ValueError("P0 must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "P0", P0)


def default_estimator_config():
    Q = np.diag([DEFAULT_STATE_NOISE] * N_STATES + [DEFAULT_DISTURBANCE_NOISE])
    return EstimatorConfig(Q=Q, R_noise=DEFAULT_MEASUREMENT_NOISE, P0=1e-2 * np.eye(N_AUGMENTED))


@dataclass(frozen=True)
class EstimatorState:
    """Filtered estimate: plant state, aggregate disturbance, covariance, and
    the previous estimates needed to form increments for the controller."""

    x_hat: np.ndarray
    d_hat: float
    P: np.ndarray
    prev_x_hat: np.ndarray
    prev_d_hat: float
    innovation: float = 0.0

    @property
    def delta_x(self):
        return self.x_hat - self.prev_x_hat

    @property
    def delta_d(self):
        return self.d_hat - self.prev_d_hat


def initial_estimator_state(config=None):
    config = config or default_estimator_config()
    zeros = np.zeros(N_STATES)
    return EstimatorState(
        x_hat=zeros, d_hat=0.0, P=config.P0.copy(), prev_x_hat=zeros, prev_d_hat=0.0
    )


def augmented_matrices(model):
    """(A_aug, B_aug, C_aug) for the plant extended with a random-walk
    aggregate disturbance entering through the shared disturbance column."""
    if not model.is_discretized:
        raise ValueError("model has not been discretized")
    d_col = model.D[:, 0]  # all five columns are identical by construction
    A_aug = np.zeros((N_AUGMENTED, N_AUGMENTED))
    A_aug[:N_STATES, :N_STATES] = model.A
    A_aug[:N_STATES, N_STATES] = d_col
    A_aug[N_STATES, N_STATES] = 1.0
    B_aug = np.zeros((N_AUGMENTED, N_CONTROLS))
    B_aug[:N_STATES] = model.B
    C_aug = np.zeros((1, N_AUGMENTED))
    C_aug[0, :N_STATES] = model.Cc[0]
    return A_aug, B_aug, C_aug


def observability_report(model):
    """Diagnose the augmented pair (A_aug, C_aug).

    With twin PV and twin wind units the anti-symmetric unit modes cancel in
    the frequency output, so the observability matrix is rank deficient; the
    filter only needs detectability (every marginal/unstable mode visible).
    Returns a dict with the rank, unobservable mode count, and a detectability
    flag from the PBH test on near-unit-circle eigenvalues.
    """
    A_aug, _, C_aug = augmented_matrices(model)
    blocks = [C_aug]
    for _ in range(N_AUGMENTED - 1):
        blocks.append(blocks[-1] @ A_aug)
    obs = np.vstack(blocks)
    rank = int(np.linalg.matrix_rank(obs))

    detectable = True
    for lam in np.linalg.eigvals(A_aug):
        if abs(lam) < 1.0 - 1e-9:
            continue
        pbh = np.vstack([A_aug - lam * np.eye(N_AUGMENTED), C_aug])
        if np.linalg.matrix_rank(pbh) < N_AUGMENTED:
            detectable = False
    return {
        "observability_rank": rank,
        "n_unobservable_modes": N_AUGMENTED - rank,
        "detectable": detectable,
    }


def require_detectable(model):
    """Fail loudly if the filter cannot converge on this model."""
    report = observability_report(model)
    if not report["detectable"]:
        raise RuntimeError(
            "augmented plant is not detectable from the frequency measurement; "
            f"observability rank {report['observability_rank']}/{N_AUGMENTED}"
        )
    return report


def _condition_covariance(P):
    """Re-symmetrize and clip tiny negative eigenvalues; large clips error."""
    P = (P + P.T) / 2.0
    try:
        np.linalg.cholesky(P + 1e-14 * np.eye(P.shape[0]))
        return P
    except np.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(P)
    worst = -w.min()
    if worst > _CLIP_LIMIT:
        raise FloatingPointError(f"covariance lost definiteness by {worst:.3e}")
    return (V * np.clip(w, 0.0, None)) @ V.T


def estimator_step(state, u, y, model, config):
    """One predict/update cycle.

    ``u`` is the control applied over the previous sample interval and ``y``
    the current frequency measurement. Returns the new EstimatorState; the
    previous estimates are kept so delta_x / delta_d are available.
    """
    u = np.asarray(u, dtype=float).reshape(N_CONTROLS)
    if not np.isfinite(y):
        raise ValueError("measurement must be finite")
    A_aug, B_aug, C_aug = augmented_matrices(model)

    z = np.concatenate([state.x_hat, [state.d_hat]])
    z_pred = A_aug @ z + B_aug @ u
    P_pred = A_aug @ state.P @ A_aug.T + config.Q

    c = C_aug[0]
    innovation = float(y - c @ z_pred)
    s = float(c @ P_pred @ c + config.R_noise)
    gain = P_pred @ c / s
    z_new = z_pred + gain * innovation
    ikc = np.eye(N_AUGMENTED) - np.outer(gain, c)
    P_new = ikc @ P_pred @ ikc.T + config.R_noise * np.outer(gain, gain)  # Joseph form
    P_new = _condition_covariance(P_new)

    return EstimatorState(
        x_hat=z_new[:N_STATES],
        d_hat=float(z_new[N_STATES]),
        P=P_new,
        prev_x_hat=state.x_hat,
        prev_d_hat=state.d_hat,
        innovation=innovation,
    )
