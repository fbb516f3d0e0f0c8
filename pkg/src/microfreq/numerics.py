"""Dense matrix numerics: matrix exponential, zero-order-hold discretization,
and a small strictly-convex QP solver with linear inequality constraints.

Everything here operates on plain numpy arrays and is pure (no hidden state),
so all functions are safe to call concurrently.
"""

from dataclasses import dataclass, field

import numpy as np

# Taylor truncation order for the scaled series; with the 0.5 scaling target
# the series remainder is far below double precision.
_SERIES_ORDER = 18
_SCALING_TARGET = 0.5

_SYMMETRY_TOL = 1e-10


class QpInfeasibleError(ValueError):
    """Raised when the QP constraints admit no feasible point.

    ``row`` is the index of the constraint row that could not be satisfied.
    """

    def __init__(self, row, message=None):
        self.row = row
        super().__init__(message or f"QP infeasible: constraint row {row} cannot be satisfied")


def _check_square(A, name):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {A.shape}")
    if not np.isfinite(A).all():
        raise ValueError(f"{name} contains non-finite entries")
    return A


def matrix_exponential(A, t=1.0):
    """Compute e^(A*t) by scaling-and-squaring with a truncated Taylor series.

    Accurate to ~1e-13 relative for well-conditioned A with ||A||*t up to ~50.
    """
    A = _check_square(A, "A")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    n = A.shape[0]
    M = A * t
    norm = np.linalg.norm(M, 1)
    if norm == 0.0:
        return np.eye(n)

    # Scale so the series argument has 1-norm <= _SCALING_TARGET.
    squarings = max(0, int(np.ceil(np.log2(norm / _SCALING_TARGET))))
    M = M / (2.0 ** squarings)

    E = np.eye(n)
    term = np.eye(n)
    for k in range(1, _SERIES_ORDER + 1):
        term = term @ M / k
        E = E + term

    for _ in range(squarings):
        E = E @ E
    return E


def discretize(Ac, Bc, Dc, Ts):
    """Exact zero-order-hold discretization of x' = Ac x + Bc u + Dc d.

    Returns (A, B, D) with A = e^(Ac*Ts) and B, D the held-input integrals,
    computed from the exponential of the augmented block matrix
    [[Ac, Bc, Dc], [0, 0, 0]] so no quadrature (and no inverse of Ac) is
    needed; the construction is exact even when Ac is singular.
    """
    Ac = _check_square(Ac, "Ac")
    n = Ac.shape[0]
    Bc = np.asarray(Bc, dtype=float)
    Dc = np.asarray(Dc, dtype=float)
    if Bc.ndim != 2 or Bc.shape[0] != n:
        raise ValueError(f"Bc must have shape ({n}, nu), got {Bc.shape}")
    if Dc.ndim != 2 or Dc.shape[0] != n:
        raise ValueError(f"Dc must have shape ({n}, nd), got {Dc.shape}")
    if Ts <= 0:
        raise ValueError(f"Ts must be > 0, got {Ts}")

    nu = Bc.shape[1]
    nd = Dc.shape[1]
    m = n + nu + nd
    block = np.zeros((m, m))
    block[:n, :n] = Ac
    block[:n, n:n + nu] = Bc
    block[:n, n + nu:] = Dc

    E = matrix_exponential(block, Ts)
    A = E[:n, :n]
    B = E[:n, n:n + nu]
    D = E[:n, n + nu:]
    return A, B, D


@dataclass
class QpProblem:
    """Strictly convex QP:  min 1/2 x'Hx + f'x  subject to  Cu x >= b.

    H must be symmetric positive definite. Cu may have zero rows for an
    unconstrained problem.
    """

    H: np.ndarray
    f: np.ndarray
    Cu: np.ndarray = field(default=None)
    b: np.ndarray = field(default=None)

    def __post_init__(self):
        self.H = _check_square(self.H, "H")
        n = self.H.shape[0]
        if np.abs(self.H - self.H.T).max() > _SYMMETRY_TOL:
            raise ValueError("H is not symmetric within 1e-10")
        self.f = np.asarray(self.f, dtype=float).reshape(n)
        if self.Cu is None:
            self.Cu = np.zeros((0, n))
        self.Cu = np.asarray(self.Cu, dtype=float).reshape(-1, n)
        q = self.Cu.shape[0]
        if self.b is None:
            self.b = np.zeros(q)
        self.b = np.asarray(self.b, dtype=float).reshape(q)
        if not (np.isfinite(self.f).all() and np.isfinite(self.Cu).all() and np.isfinite(self.b).all()):
            raise ValueError("QP data contains non-finite entries")

    @property
    def n(self):
        return self.H.shape[0]

    @property
    def q(self):
        return self.Cu.shape[0]

    def objective(self, x):
        return 0.5 * x @ self.H @ x + self.f @ x


def _check_positive_definite(H):
    # Symmetric factorization succeeds iff H is positive definite.
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise ValueError("H is not positive definite") from None


def solve_qp_info(problem, tol=1e-8):
    """Solve a QpProblem by the dual active-set method (Goldfarb-Idnani).

    Starts at the unconstrained minimizer and adds violated constraints one
    at a time, taking dual steps; finite termination for strictly convex H.
    Returns (x, lam, info) where lam holds the KKT multipliers (one per
    constraint row, zero for inactive rows) and info records the active rows
    and iteration count.

    Raises QpInfeasibleError (with the offending row) if no feasible point
    exists, and ValueError if H is not positive definite.
    """
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    H, f, Cu, b = problem.H, problem.f, problem.Cu, problem.b
    n, q = problem.n, problem.q
    _check_positive_definite(H)

    x = np.linalg.solve(H, -f)
    if q == 0:
        return x, np.zeros(0), {"iterations": 0, "active": []}

    active = []          # indices of active constraint rows
    lam_active = []      # multipliers for the active rows
    scale = max(1.0, np.abs(Cu).max(), np.abs(b).max())
    zero_dir_tol = 1e-12 * max(1.0, np.abs(H).max())
    max_iter = 10 * max(q, 1) * max(n, 1) + 100
    iterations = 0

    while True:
        slack = Cu @ x - b
        worst = int(np.argmin(slack))
        if slack[worst] >= -tol * scale:
            break
        p = worst
        lam_p = 0.0

        while True:
            iterations += 1
            if iterations > max_iter:
                violation = float(np.max(b - Cu @ x))
                if violation > 1e-6:
                    raise QpInfeasibleError(p, f"QP iteration cap reached with violation {violation:.3e} on row {p}")
                raise RuntimeError("QP solver failed to converge within the iteration cap")

            n_p = Cu[p]
            Hinv_np = np.linalg.solve(H, n_p)
            if active:
                N = Cu[active].T                      # n x na
                HinvN = np.linalg.solve(H, N)
                G = N.T @ HinvN
                r = np.linalg.solve(G, N.T @ Hinv_np)  # dual step direction
                z = Hinv_np - HinvN @ r                # primal step direction
            else:
                r = np.zeros(0)
                z = Hinv_np

            curvature = n_p @ z
            if curvature <= zero_dir_tol:
                # No primal progress possible; take a pure dual step.
                if r.size == 0 or np.all(r <= 0):
                    raise QpInfeasibleError(p)
                positive = r > 0
                ratios = np.full(r.shape, np.inf)
                ratios[positive] = np.asarray(lam_active)[positive] / r[positive]
                k = int(np.argmin(ratios))
                t1 = ratios[k]
                lam_active = list(np.asarray(lam_active) - t1 * r)
                lam_p += t1
                del active[k], lam_active[k]
                continue

            t2 = -(n_p @ x - b[p]) / curvature        # step to make row p feasible
            if r.size:
                positive = r > 0
                ratios = np.full(r.shape, np.inf)
                ratios[positive] = np.asarray(lam_active)[positive] / r[positive]
                k = int(np.argmin(ratios))
                t1 = ratios[k]
            else:
                t1 = np.inf
                k = -1

            t = min(t1, t2)
            x = x + t * z
            if r.size:
                lam_active = list(np.asarray(lam_active) - t * r)
            lam_p += t

            if t2 <= t1:
                active.append(p)
                lam_active.append(lam_p)
                break
            del active[k], lam_active[k]

    lam = np.zeros(q)
    for idx, row in enumerate(active):
        lam[row] = lam_active[idx]
    return x, lam, {"iterations": iterations, "active": list(active)}


def solve_qp(problem, tol=1e-8):
    """Return the unique minimizer of a QpProblem (see solve_qp_info)."""
    x, _, _ = solve_qp_info(problem, tol=tol)
    return x


def kkt_residuals(problem, x, lam):
    """Residuals (stationarity, primal feasibility, complementarity) of a
    candidate KKT pair for  min 1/2 x'Hx + f'x  s.t.  Cu x >= b."""
    stationarity = np.linalg.norm(problem.H @ x + problem.f - problem.Cu.T @ lam, np.inf)
    slack = problem.Cu @ x - problem.b
    primal = float(max(0.0, -slack.min())) if slack.size else 0.0
    complementarity = float(np.abs(lam * slack).max()) if slack.size else 0.0
    return stationarity, primal, complementarity
