"""Square-root information filtering of the baseline/velocity state.

State ordering is ``[e, n, u, ve, vn, vu]``. A state is the pair (R, z) with
R upper triangular and ``R x = z + w``, ``w ~ N(0, I)``. Float ambiguities live
only inside a :class:`JointPosterior` for the duration of one epoch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from ..core import GnssTime, dd_geometry
from .config import EngineConfig
from .dd import DdSet, frame_los

NX = 6


class NumericalDegeneracy(RuntimeError):
    pass


def _qr_r(M: np.ndarray) -> np.ndarray:
    return np.linalg.qr(M, mode="r")


@dataclass(frozen=True)
class NavState:
    t: GnssTime
    R: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)

    @classmethod
    def from_moments(cls, t: GnssTime, mean, cov) -> "NavState":
        info = np.linalg.inv(np.asarray(cov, dtype=float))
        R = np.linalg.cholesky(0.5 * (info + info.T)).T
        return cls(t, R, R @ np.asarray(mean, dtype=float))

    @property
    def mean(self) -> np.ndarray:
        return solve_triangular(self.R, self.z)

    @property
    def cov(self) -> np.ndarray:
        Ri = solve_triangular(self.R, np.eye(self.R.shape[0]))
        return Ri @ Ri.T

    @property
    def baseline(self) -> np.ndarray:
        return self.mean[:3]


def process_noise(dt: float, cfg: EngineConfig) -> np.ndarray:
    """Discrete white-noise-acceleration covariance; velocity variance grows by q^2 dt per axis."""
    q2 = np.array([cfg.q_h, cfg.q_h, cfg.q_v]) ** 2
    Q = np.zeros((NX, NX))
    idx = np.arange(3)
    Q[idx, idx] = q2 * dt ** 3 / 3.0
    Q[idx, idx + 3] = Q[idx + 3, idx] = q2 * dt ** 2 / 2.0
    Q[idx + 3, idx + 3] = q2 * dt
    return Q


def transition(dt: float) -> np.ndarray:
    F = np.eye(NX)
    F[:3, 3:] = dt * np.eye(3)
    return F


def time_update(state: NavState, dt: float, cfg: EngineConfig, t_new: GnssTime | None = None) -> NavState:
    """Constant-velocity propagation done entirely on the square-root information pair."""
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    t_new = t_new if t_new is not None else state.t + dt
    Q = process_noise(dt, cfg)
    Rw = np.linalg.inv(np.linalg.cholesky(Q))
    Finv = transition(-dt)
    RF = state.R @ Finv
    M = np.zeros((2 * NX, 2 * NX + 1))
    M[:NX, :NX] = Rw
    M[NX:, :NX] = -RF
    M[NX:, NX:2 * NX] = RF
    M[NX:, -1] = state.z
    T = _qr_r(M)
    return NavState(t_new, T[NX:2 * NX, NX:2 * NX].copy(), T[NX:2 * NX, -1].copy())


@dataclass(frozen=True)
class JointPosterior:
    """Square-root information over ``[x (6), float ambiguities (n)]`` after one DD update."""

    t: GnssTime
    R: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)
    dd: DdSet = field(repr=False)
    nis: float = 0.0
    innovations: np.ndarray = field(default=None, repr=False)

    @property
    def n_amb(self) -> int:
        return self.R.shape[0] - NX

    def ambiguities(self) -> tuple[np.ndarray, np.ndarray]:
        """Marginal float ambiguity mean and covariance (cycles, cycles^2)."""
        Raa = self.R[NX:, NX:]
        a = solve_triangular(Raa, self.z[NX:])
        Ri = solve_triangular(Raa, np.eye(self.n_amb))
        Q = Ri @ Ri.T
        return a, 0.5 * (Q + Q.T)

    def condition(self, a_int) -> NavState:
        """Real-valued state conditioned on ambiguities fixed to ``a_int``."""
        a = np.asarray(a_int, dtype=float)
        z = self.z[:NX] - self.R[:NX, NX:] @ a
        return NavState(self.t, self.R[:NX, :NX].copy(), z)

    def marginalize(self) -> NavState:
        """Real-valued state with the ambiguity block integrated out."""
        n = self.n_amb
        M = np.zeros((NX + n, NX + n + 1))
        M[:, :n] = self.R[:, NX:]
        M[:, n:n + NX] = self.R[:, :NX]
        M[:, -1] = self.z
        T = _qr_r(M)
        return NavState(self.t, T[n:n + NX, n:n + NX].copy(), T[n:n + NX, -1].copy())

    def joint_mean(self) -> np.ndarray:
        return solve_triangular(self.R, self.z)

    def joint_cov(self) -> np.ndarray:
        Ri = solve_triangular(self.R, np.eye(self.R.shape[0]))
        return Ri @ Ri.T


def measurement_model(dd: DdSet, cfg: EngineConfig):
    """Linearized stacked code/phase model ``y = H [x; a] + v`` and its covariance.

    Rows are all DD pseudoranges then all DD phases (meters).
    """
    n = len(dd)
    G = dd.geometry_matrix()
    b0 = dd.linearization_enu
    h0 = np.array([e.predicted_range for e in dd.entries])
    lam = np.array([e.lam for e in dd.entries])
    H = np.zeros((2 * n, NX + n))
    H[:n, :3] = G
    H[n:, :3] = G
    H[n:, NX:] = np.diag(lam)
    y = np.empty(2 * n)
    y[:n] = np.array([e.dd_pseudorange for e in dd.entries]) - h0 + G @ b0
    y[n:] = lam * np.array([e.dd_phase for e in dd.entries]) - h0 + G @ b0
    Cc = dd.covariance(cfg.sigma_rho)
    Cp = dd.covariance(cfg.sigma_phi)
    return H, y, Cc, Cp


def ambiguity_prior(dd: DdSet, cfg: EngineConfig) -> tuple[np.ndarray, float]:
    """Diffuse prior mean (code-minus-carrier ambiguity) and standard deviation, cycles."""
    a0 = np.array([e.dd_phase - e.dd_pseudorange / e.lam for e in dd.entries])
    return np.round(a0), cfg.sigma_ambiguity0


def float_update(state: NavState, dd: DdSet, cfg: EngineConfig) -> JointPosterior:
    """Append one float ambiguity per DD and apply the DD code/phase measurement update.

    The normalized innovations squared is the squared QR residual (the joint
    innovation quadratic form) divided by the number of DDs.
    """
    n = len(dd)
    if n == 0:
        raise ValueError("empty DD set")
    H, y, Cc, Cp = measurement_model(dd, cfg)
    try:
        Wc = np.linalg.inv(np.linalg.cholesky(Cc))
        Wp = np.linalg.inv(np.linalg.cholesky(Cp))
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracy("DD noise covariance not positive definite") from exc
    a0, sa = ambiguity_prior(dd, cfg)
    m = NX + n
    M = np.zeros((NX + n + 2 * n, m + 1))
    M[:NX, :NX] = state.R
    M[:NX, -1] = state.z
    M[NX:m, NX:m] = np.eye(n) / sa
    M[NX:m, -1] = a0 / sa
    M[m:m + n, :m] = Wc @ H[:n]
    M[m:m + n, -1] = Wc @ y[:n]
    M[m + n:, :m] = Wp @ H[n:]
    M[m + n:, -1] = Wp @ y[n:]
    T = _qr_r(M)
    R = T[:m, :m]
    d = np.abs(np.diag(R))
    if not np.all(np.isfinite(T)) or d.min() <= 1e-12 * d.max():
        raise NumericalDegeneracy("singular posterior information")
    x_prior = state.mean
    innov = y - H @ np.concatenate([x_prior, a0])
    nis = float(T[m, -1] ** 2) / n
    return JointPosterior(state.t, R.copy(), T[:m, -1].copy(), dd, nis, innov)


def least_squares_baseline(dd: DdSet, cfg: EngineConfig, frame, sat_states, iterations: int = 8) -> np.ndarray:
    """DD-pseudorange Gauss-Newton baseline, relinearizing geometry each iteration."""
    if len(dd) < 3:
        raise NumericalDegeneracy("need three DDs for a baseline fix")
    W = np.linalg.inv(np.linalg.cholesky(dd.covariance(cfg.sigma_rho)))
    rho = np.array([e.dd_pseudorange for e in dd.entries])
    b = np.array(dd.linearization_enu, dtype=float)
    ref = frame.origin_ecef
    for _ in range(iterations):
        pos = frame.to_ecef(b)
        h = np.empty(len(dd))
        G = np.empty((len(dd), 3))
        for k, e in enumerate(dd.entries):
            si, sp = sat_states[e.sig], sat_states[e.pivot]
            h[k] = dd_geometry(pos, si, sp) - dd_geometry(ref, si, sp)
            G[k] = -(frame_los(frame, si, pos) - frame_los(frame, sp, pos))
        A = W @ G
        if np.linalg.matrix_rank(A) < 3:
            raise NumericalDegeneracy("rank-deficient DD geometry")
        db, *_ = np.linalg.lstsq(A, W @ (rho - h), rcond=None)
        b = b + db
        if np.linalg.norm(db) < 1e-9:
            break
    return b
