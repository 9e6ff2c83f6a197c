"""Integer least-squares ambiguity resolution and aperture validation.

Decorrelation follows the LAMBDA Z-transformation (integer Gauss transforms
plus symmetric permutations on the L^T D L factor of the ambiguity covariance).
The search is a depth-first Schnorr-Euchner enumeration that keeps the
``n_candidates`` best integer vectors inside a shrinking ellipsoid.
"""

from __future__ import annotations

import math
import csv
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

MAX_DIM = 64
_LOOPMAX = 10_000_000


class NotPositiveDefiniteError(ValueError):
    pass


class WidenTrialsError(ValueError):
    """Raised when a calibration run has too few trials for the requested failure rate."""

    def __init__(self, required: int, given: int):
        super().__init__(f"need at least {required} trials to resolve the failure rate, got {given}")
        self.required = required


@dataclass(frozen=True)
class IlsProblem:
    a_float: np.ndarray
    Q_a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a_float, dtype=float).ravel()
        Q = np.asarray(self.Q_a, dtype=float)
        if Q.shape != (a.size, a.size):
            raise ValueError("covariance shape does not match ambiguity vector")
        object.__setattr__(self, "a_float", a)
        object.__setattr__(self, "Q_a", 0.5 * (Q + Q.T))


@dataclass(frozen=True)
class IlsResult:
    best: np.ndarray
    second: np.ndarray
    cost_best: float
    cost_second: float
    nodes: int = 0

    @property
    def ratio_gap(self) -> float:
        return self.cost_second - self.cost_best


# ---- factorization and Z-transform ----


@njit(cache=True)
def _ldl_kernel(A):
    n = A.shape[0]
    L = np.zeros((n, n))
    D = np.zeros(n)
    for i in range(n - 1, -1, -1):
        D[i] = A[i, i]
        if not (D[i] > 0.0) or not np.isfinite(D[i]):
            return L, D, False
        r = math.sqrt(D[i])
        for k in range(i + 1):
            L[i, k] = A[i, k] / r
        for j in range(i):
            for k in range(j + 1):
                A[j, k] -= L[i, k] * L[i, j]
        piv = L[i, i]
        for k in range(i + 1):
            L[i, k] /= piv
    return L, D, True


def ldl(Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Factor ``Q = L^T diag(D) L`` with L unit lower triangular."""
    L, D, ok = _ldl_kernel(np.array(Q, dtype=float))
    if not ok:
        raise NotPositiveDefiniteError("ambiguity covariance is not positive definite")
    return L, D


@njit(cache=True)
def _gauss(L, Z, i, j):
    mu = math.floor(L[i, j] + 0.5)
    if mu != 0.0:
        n = L.shape[0]
        for r in range(i, n):
            L[r, j] -= mu * L[r, i]
        for r in range(n):
            Z[r, j] -= mu * Z[r, i]


@njit(cache=True)
def _perm(L, D, j, delta, Z):
    n = L.shape[0]
    eta = D[j] / delta
    lam = D[j + 1] * L[j + 1, j] / delta
    D[j] = eta * D[j + 1]
    D[j + 1] = delta
    for k in range(j):
        a0 = L[j, k]
        a1 = L[j + 1, k]
        L[j, k] = -L[j + 1, j] * a0 + a1
        L[j + 1, k] = eta * a0 + lam * a1
    L[j + 1, j] = lam
    for r in range(j + 2, n):
        tmp = L[r, j]
        L[r, j] = L[r, j + 1]
        L[r, j + 1] = tmp
    for r in range(n):
        tmp = Z[r, j]
        Z[r, j] = Z[r, j + 1]
        Z[r, j + 1] = tmp


@njit(cache=True)
def _reduce_kernel(L, D):
    n = D.size
    Z = np.eye(n)
    j = n - 2
    k = n - 2
    while j >= 0:
        if j <= k:
            for i in range(j + 1, n):
                _gauss(L, Z, i, j)
        delta = D[j] + L[j + 1, j] ** 2 * D[j + 1]
        if delta + 1e-6 < D[j + 1]:
            _perm(L, D, j, delta, Z)
            k = j
            j = n - 2
        else:
            j -= 1
    return Z


def reduce_ldl(L: np.ndarray, D: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integer-reduce and reorder an ``L^T D L`` factor; returns (Z, L_z, D_z)."""
    L = np.array(L, dtype=float)
    D = np.array(D, dtype=float)
    Z = _reduce_kernel(L, D)
    return Z, L, D


def decorrelate(Q_a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unimodular ``Z`` and the transformed covariance ``Z^T Q_a Z``."""
    Q = np.asarray(Q_a, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError("covariance must be square")
    if not np.allclose(Q, Q.T, rtol=1e-9, atol=1e-12 * max(1.0, np.abs(Q).max())):
        raise NotPositiveDefiniteError("covariance is not symmetric")
    L, D = ldl(0.5 * (Q + Q.T))
    Z, _, _ = reduce_ldl(L, D)
    return Z, Z.T @ Q @ Z


# ---- search ----


@njit(cache=True)
def _round(x):
    return math.floor(x + 0.5)


@njit(cache=True)
def _sgn(x):
    return -1.0 if x <= 0.0 else 1.0


@njit(cache=True)
def _search(L, D, zs, m):
    """Best ``m`` integer vectors minimizing sum((z - zb)^2 / D) with zb conditioned through L."""
    n = zs.size
    S = np.zeros((n, n))
    dist = np.zeros(n)
    zb = np.zeros(n)
    z = np.zeros(n)
    step = np.zeros(n)
    zn = np.zeros((m, n))
    s = np.full(m, np.inf)
    nn = 0
    imax = 0
    maxdist = np.inf
    nodes = 0

    k = n - 1
    dist[k] = 0.0
    zb[k] = zs[k]
    z[k] = _round(zb[k])
    y = zb[k] - z[k]
    step[k] = _sgn(y)
    for _ in range(_LOOPMAX):
        nodes += 1
        newdist = dist[k] + y * y / D[k]
        if newdist < maxdist:
            if k != 0:
                k -= 1
                dist[k] = newdist
                for i in range(k + 1):
                    S[k, i] = S[k + 1, i] + (z[k + 1] - zb[k + 1]) * L[k + 1, i]
                zb[k] = zs[k] + S[k, k]
                z[k] = _round(zb[k])
                y = zb[k] - z[k]
                step[k] = _sgn(y)
            else:
                if nn < m:
                    if nn == 0 or newdist > s[imax]:
                        imax = nn
                    zn[nn, :] = z
                    s[nn] = newdist
                    nn += 1
                    if nn == m:
                        maxdist = s[imax]
                else:
                    if newdist < s[imax]:
                        zn[imax, :] = z
                        s[imax] = newdist
                        imax = 0
                        for i in range(m):
                            if s[imax] < s[i]:
                                imax = i
                    maxdist = s[imax]
                z[0] += step[0]
                y = zb[0] - z[0]
                step[0] = -step[0] - _sgn(step[0])
        else:
            if k == n - 1:
                break
            k += 1
            z[k] += step[k]
            y = zb[k] - z[k]
            step[k] = -step[k] - _sgn(step[k])
    order = np.argsort(s)
    return zn[order], s[order], nodes


@njit(cache=True)
def _mc_gaps(L, D, draws):
    """Per-trial (is_wrong, cost gap) for Gaussian draws around the zero integer vector."""
    n_trials = draws.shape[0]
    wrong = np.zeros(n_trials, dtype=np.bool_)
    gaps = np.zeros(n_trials)
    for t in range(n_trials):
        zn, s, _ = _search(L, D, draws[t], 2)
        bad = False
        for i in range(zn.shape[1]):
            if zn[0, i] != 0.0:
                bad = True
                break
        wrong[t] = bad
        gaps[t] = s[1] - s[0]
    return wrong, gaps


def ils_search(p: IlsProblem, n_candidates: int = 2, decorrelated: bool = True) -> IlsResult:
    """Exact integer least-squares: the ``n_candidates`` lowest-cost integer vectors.

    ``decorrelated=False`` searches directly on the original factor; it exists
    for instrumentation (node counts) and returns the same candidates.
    """
    n = p.a_float.size
    if n == 0:
        raise ValueError("empty ambiguity vector")
    if n > MAX_DIM:
        raise ValueError(f"ILS dimension {n} exceeds bound {MAX_DIM}")
    if n_candidates < 2:
        raise ValueError("need at least two candidates")
    L, D = ldl(p.Q_a)
    if decorrelated:
        Z, L, D = reduce_ldl(L, D)
    else:
        Z = np.eye(n)
    shift = np.floor(p.a_float + 0.5)
    zs = Z.T @ (p.a_float - shift)
    zn, s, nodes = _search(L, D, zs, n_candidates)
    Zinv_T = np.rint(np.linalg.inv(Z.T))
    cands = np.rint(zn @ Zinv_T.T) + shift
    return IlsResult(
        best=cands[0].astype(np.int64),
        second=cands[1].astype(np.int64),
        cost_best=float(s[0]),
        cost_second=float(s[1]),
        nodes=int(nodes),
    )


def ils_cost(a_float: np.ndarray, Q_a: np.ndarray, a_int: np.ndarray) -> float:
    r = np.asarray(a_float, float) - np.asarray(a_int, float)
    return float(r @ np.linalg.solve(Q_a, r))


def difference_test(r: IlsResult, mu: float) -> bool:
    """Accept the best candidate iff the second-best cost exceeds it by at least ``mu``."""
    return (r.cost_second - r.cost_best) >= mu


# ---- aperture threshold calibration ----


def bootstrap_success_rate(D: np.ndarray) -> float:
    """Integer bootstrapping success rate from conditional variances (a lower bound on ILS success)."""
    sig = np.sqrt(np.asarray(D, dtype=float))
    return float(np.prod([math.erf(1.0 / (2.0 * s * math.sqrt(2.0))) for s in sig]))


def adop(Q_a: np.ndarray) -> float:
    """Ambiguity dilution of precision, det(Q)^(1/2n), in cycles."""
    n = Q_a.shape[0]
    sign, logdet = np.linalg.slogdet(Q_a)
    if sign <= 0:
        raise NotPositiveDefiniteError("ambiguity covariance is not positive definite")
    return float(math.exp(logdet / (2 * n)))


def _threshold_from_gaps(wrong: np.ndarray, gaps: np.ndarray, p_bar_f: float) -> float:
    n_trials = wrong.size
    allowed = int(math.floor(p_bar_f * n_trials + 1e-9))
    wrong_gaps = np.sort(gaps[wrong])[::-1]
    if wrong_gaps.size <= allowed:
        return 0.0
    # accepting iff gap >= mu; keep at most ``allowed`` wrong gaps at or above mu
    return float(np.nextafter(wrong_gaps[allowed], np.inf))


def calibrate_aperture_threshold(Q_a, p_bar_f: float, n_trials: int, seed: int = 0,
                                 shortcut: bool = True) -> float:
    """Smallest difference-test threshold keeping the simulated wrong-fix acceptance rate at or below ``p_bar_f``.

    When the bootstrapped success rate already bounds the ILS failure rate below
    ``p_bar_f``, no aperture is needed and 0 is returned without sampling
    (disable with ``shortcut=False``).
    """
    if not 0.0 < p_bar_f < 1.0:
        raise ValueError("p_bar_f must lie in (0, 1)")
    required = int(math.ceil(10.0 / p_bar_f - 1e-9))
    if n_trials < required:
        raise WidenTrialsError(required, n_trials)
    Q = np.asarray(Q_a, dtype=float)
    L, D = ldl(0.5 * (Q + Q.T))
    _, L, D = reduce_ldl(L, D)
    if shortcut and 1.0 - bootstrap_success_rate(D) <= p_bar_f:
        return 0.0
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_trials, D.size))
    # rows distributed N(0, L^T D L)
    draws = (x * np.sqrt(D)) @ L
    wrong, gaps = _mc_gaps(L, D, draws)
    return _threshold_from_gaps(wrong, gaps, p_bar_f)


class ApertureCache:
    """Calibrated thresholds keyed by (n_dd, shape signature).

    The signature is the vector of decorrelated conditional variances D_i in
    half-octave steps, clamped to [2^-8, 2^3] cycles^2. ADOP alone is not
    enough: two problems of equal volume but different shape can have wrong-fix
    rates an order of magnitude apart at the same threshold. Problems that need
    no aperture (bootstrap failure below ``p_bar_f``) bypass the table.
    A bucket is calibrated on the first problem that lands in it, so a table
    shared across runs makes each run's results depend on run order.
    Reads are lock-free; inserts take the lock.
    """

    STEPS_PER_OCTAVE = 2
    CLAMP = (-8.0, 3.0)

    def __init__(self, p_bar_f: float, n_trials: int, seed: int = 0):
        self.p_bar_f = p_bar_f
        self.n_trials = n_trials
        self.seed = seed
        self._table: dict[tuple[int, str], float] = {}
        self._lock = threading.Lock()
        self.misses = 0

    @classmethod
    def signature_of(cls, D: np.ndarray) -> str:
        lo, hi = cls.CLAMP
        steps = [int(round(min(hi, max(lo, math.log2(d))) * cls.STEPS_PER_OCTAVE)) for d in D]
        return " ".join(str(k) for k in steps)

    def signature(self, Q_a: np.ndarray) -> str:
        L, D = ldl(0.5 * (Q_a + Q_a.T))
        _, _, D = reduce_ldl(L, D)
        return self.signature_of(D)

    def threshold(self, Q_a: np.ndarray) -> float:
        Q = 0.5 * (Q_a + Q_a.T)
        L, D = ldl(Q)
        _, _, D = reduce_ldl(L, D)
        if 1.0 - bootstrap_success_rate(D) <= self.p_bar_f:
            return 0.0
        key = (Q.shape[0], self.signature_of(D))
        mu = self._table.get(key)
        if mu is not None:
            return mu
        seed = self.seed + zlib.crc32(f"{key[0]}|{key[1]}".encode())
        mu = calibrate_aperture_threshold(Q, self.p_bar_f, self.n_trials, seed=seed)
        with self._lock:
            self.misses += 1
            self._table.setdefault(key, mu)
        return self._table[key]

    def __len__(self):
        return len(self._table)

    def save(self, path) -> None:
        with self._lock:
            rows = sorted(self._table.items())
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n_dd", "signature", "mu", "p_bar_f", "seed", "trials"])
            for (n, sig), mu in rows:
                w.writerow([n, sig, repr(mu), repr(self.p_bar_f), self.seed, self.n_trials])

    def load(self, path) -> None:
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            expected = ["n_dd", "signature", "mu", "p_bar_f", "seed", "trials"]
            if reader.fieldnames != expected:
                raise ValueError(f"{path}: expected columns {expected}, got {reader.fieldnames}")
            entries = {}
            for lineno, row in enumerate(reader, start=2):
                if float(row["p_bar_f"]) != self.p_bar_f:
                    raise ValueError(f"{path}:{lineno}: cached p_bar_f {row['p_bar_f']} != {self.p_bar_f}")
                n = int(row["n_dd"])
                if len(row["signature"].split()) != n:
                    raise ValueError(f"{path}:{lineno}: signature does not have {n} entries")
                entries[(n, row["signature"])] = float(row["mu"])
        with self._lock:
            self._table.update(entries)
