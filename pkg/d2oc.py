"""Density-driven optimal control.

Each step runs three stages per agent:

  A. pick T local subsets of sample points (weight-normalized distance) and
     compute the closed-form finite-horizon input that steers the agent
     through the subsets' mass centers;
  B. move ``alpha`` mass from the nearest sample points onto the agent's
     new position;
  C. agents in communication range replace their weights with the
     elementwise minimum.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
import scipy.linalg

from dynamics import IX, IY, N_INPUT, N_STATE, predict_matrices, planar_position
from errors import ConditioningError, InfeasibleError
from transport import single_sink_plan

log = logging.getLogger(__name__)

DEPLETED = 1e-15
MAX_CONDITION = 1e12
MASS_TOL = 1e-9


@dataclass(frozen=True)
class AgentLedger:
    """One agent's view of the sample weights plus its alpha schedule.

    ``step_weights[k-1]`` is alpha^k for k = 1..M.
    """

    agent_id: int
    cloud: object
    step_weights: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def steps_total(self):
        return len(self.step_weights)

    def alpha(self, k):
        if 1 <= k <= self.steps_total:
            return float(self.step_weights[k - 1])
        return 0.0

    def with_cloud(self, cloud):
        return replace(self, cloud=cloud)


@dataclass(frozen=True)
class PredictionPlan:
    """Stage A output: T subsets of (sample index, weight) and their targets."""

    horizon: int
    subsets: tuple
    targets: np.ndarray
    alphas: np.ndarray

    @property
    def masses(self):
        return np.array([sum(w for _, w in s) for s in self.subsets])

    @classmethod
    def tracking(cls, waypoints, mass=1.0):
        """Singleton subsets: a unit-mass virtual sample at each waypoint."""
        pts = np.asarray(waypoints, dtype=float).reshape(-1, 2)
        subsets = tuple(((i, mass),) for i in range(len(pts)))
        return cls(len(pts), subsets, pts, np.full(len(pts), mass))


@dataclass(frozen=True)
class ControlWeights:
    Q: np.ndarray
    R: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        if np.any(np.diag(self.Q) < 0) or not np.allclose(self.Q, np.diag(np.diag(self.Q))):
            raise ValueError("Q must be diagonal positive-semidefinite")
        if np.any(np.diag(self.R) <= 0) or not np.allclose(self.R, np.diag(np.diag(self.R))):
            raise ValueError("R must be diagonal positive-definite")

    @classmethod
    def from_diagonals(cls, q, r):
        return cls(np.diag(np.asarray(q, dtype=float)), np.diag(np.asarray(r, dtype=float)), position_selector())

    @classmethod
    def reference(cls):
        q = 1e-7 * np.array([1, 1, 1, 1, 1, 1, 1e3, 1e3, 1e3, 0, 0, 1e3])
        r = 1e-3 * np.ones(N_INPUT)
        return cls.from_diagonals(q, r)


def position_selector():
    C = np.zeros((2, N_STATE))
    C[0, IX] = 1.0
    C[1, IY] = 1.0
    return C


@dataclass(frozen=True)
class KKTSystem:
    """Block data of the stationarity system, kept in block form.

    E11 and E33 are block diagonal, E12 is block upper-bidiagonal with -I
    on the diagonal and A_{k+i}^T above it, E23 is block diagonal in B.
    F2 is zero except for its first block, -A_k x^k.
    """

    E11_blocks: np.ndarray  # (T, n, n)
    A_blocks: np.ndarray  # (T, n, n): A_k .. A_{k+T-1}
    B_blocks: np.ndarray  # (T, n, m): B_k .. B_{k+T-1}
    R: np.ndarray
    F1_blocks: np.ndarray  # (T, n)
    x0: np.ndarray
    masses: np.ndarray
    targets: np.ndarray
    Q: np.ndarray
    C: np.ndarray

    @property
    def horizon(self):
        return len(self.A_blocks)

    @property
    def n(self):
        return self.A_blocks.shape[1]

    @property
    def m(self):
        return self.B_blocks.shape[2]

    @property
    def F2_first(self):
        return -self.A_blocks[0] @ self.x0

    def E11(self):
        return scipy.linalg.block_diag(*self.E11_blocks)

    def E12(self):
        T, n = self.horizon, self.n
        E = -np.eye(n * T)
        for i in range(T - 1):
            E[i * n:(i + 1) * n, (i + 1) * n:(i + 2) * n] = self.A_blocks[i + 1].T
        return E

    def E23(self):
        return scipy.linalg.block_diag(*self.B_blocks)

    def E33(self):
        return np.kron(np.eye(self.horizon), self.R)

    def F1(self):
        return self.F1_blocks.reshape(-1)

    def F2(self):
        out = np.zeros(self.n * self.horizon)
        out[:self.n] = self.F2_first
        return out

    def dense(self):
        """Full symmetric-indefinite KKT matrix and right-hand side."""
        T, n, m = self.horizon, self.n, self.m
        nx, nu = n * T, m * T
        E = np.zeros((2 * nx + nu, 2 * nx + nu))
        E12, E23 = self.E12(), self.E23()
        E[:nx, :nx] = self.E11()
        E[:nx, nx:2 * nx] = E12
        E[nx:2 * nx, :nx] = E12.T
        E[nx:2 * nx, 2 * nx:] = E23
        E[2 * nx:, nx:2 * nx] = E23.T
        E[2 * nx:, 2 * nx:] = self.E33()
        rhs = np.concatenate([self.F1(), self.F2(), np.zeros(nu)])
        return E, rhs


class KKTSolution(NamedTuple):
    x_bar: np.ndarray  # (T, n): x^{k+1} .. x^{k+T}
    lam_bar: np.ndarray  # (T, n): lambda^{k+1} .. lambda^{k+T}
    u_bar: np.ndarray  # (T, m): u^k .. u^{k+T-1}


def alpha_schedule(n_agents, steps, profile=None):
    """Per-step agent-point weights alpha^1..alpha^M for one agent.

    Uniform 1/(n_d*M) unless ``profile`` gives relative weights, which are
    resampled to M steps and scaled to a per-agent mass of 1/n_d.
    """
    if steps <= 0:
        return np.zeros(0)
    if profile is None or len(profile) == 0:
        return np.full(steps, 1.0 / (n_agents * steps))
    profile = np.asarray(profile, dtype=float)
    if np.any(profile < 0) or profile.sum() <= 0:
        raise ValueError("alpha profile must be nonnegative with positive sum")
    if len(profile) == 1:
        w = np.ones(steps)
    else:
        w = np.interp(np.linspace(0.0, 1.0, steps), np.linspace(0.0, 1.0, len(profile)), profile)
    if w.sum() <= 0:
        raise ValueError("alpha profile resamples to zero weight")
    return w / w.sum() / n_agents


def horizon_alphas(ledger, k, horizon):
    """alpha^{k+1}..alpha^{k+T}, capped cumulatively by the remaining mass."""
    raw = np.array([ledger.alpha(k + i) for i in range(1, horizon + 1)])
    allowed = np.minimum(np.cumsum(raw), ledger.cloud.remaining)
    return np.diff(np.concatenate([[0.0], allowed])).clip(min=0.0)


def weight_normalized_distance(q_j, remaining_weight, y):
    if remaining_weight <= DEPLETED:
        return np.inf
    return float(np.linalg.norm(np.asarray(q_j, dtype=float) - np.asarray(y, dtype=float))) / remaining_weight


def _mass_center(points, subset, fallback):
    if not subset:
        return np.asarray(fallback, dtype=float)
    idx = np.array([j for j, _ in subset])
    w = np.array([b for _, b in subset])
    return (w[:, None] * points[idx]).sum(axis=0) / w.sum()


def select_local_samples(ledger, y_k, horizon, k=0, alphas=None):
    """Local sample-point selection over the prediction horizon.

    For each i the anchor is the current position (i = 1) or the previous
    subset's mass center; points are taken in ascending weight-normalized
    distance until alpha^{k+i} is allocated. Ties go to the lowest index.
    """
    if alphas is None:
        alphas = [ledger.alpha(k + i) for i in range(1, horizon + 1)]
    alphas = np.asarray(alphas, dtype=float)
    if len(alphas) != horizon:
        raise ValueError(f"expected {horizon} alpha values, got {len(alphas)}")
    cloud = ledger.cloud
    if alphas.sum() > cloud.remaining + MASS_TOL:
        raise InfeasibleError(
            f"horizon needs {alphas.sum()!r} mass but agent {ledger.agent_id} has {cloud.remaining!r} left"
        )

    q = cloud.positions
    drawn = np.zeros(len(cloud))
    anchor = np.asarray(y_k, dtype=float)
    subsets, targets = [], []
    for i in range(horizon):
        rem = alphas[i]
        subset = []
        dist = np.linalg.norm(q - anchor, axis=1)
        while rem > 0:
            residual = cloud.weights - drawn
            live = residual > DEPLETED
            if not live.any():
                if rem <= MASS_TOL:
                    break
                raise InfeasibleError(f"sample cloud exhausted with {rem!r} still to allocate")
            d_wn = np.full(len(q), np.inf)
            d_wn[live] = dist[live] / residual[live]
            j = int(np.argmin(d_wn))
            grant = rem if residual[j] > rem else residual[j]
            drawn[j] += grant
            rem -= grant
            subset.append((j, grant))
        target = _mass_center(q, subset, anchor)
        subsets.append(tuple(subset))
        targets.append(target)
        anchor = target
    return PredictionPlan(horizon, tuple(subsets), np.array(targets).reshape(horizon, 2), alphas)


def build_kkt(plan, state, mats_seq, w):
    if len(mats_seq) != plan.horizon:
        raise ValueError(f"need {plan.horizon} LTV matrices, got {len(mats_seq)}")
    masses = plan.masses
    CtC = w.C.T @ w.C
    E11 = w.Q[None, :, :] + masses[:, None, None] * CtC[None, :, :]
    F1 = masses[:, None] * (plan.targets @ w.C)
    return KKTSystem(
        E11_blocks=E11,
        A_blocks=np.array([mt.A for mt in mats_seq]),
        B_blocks=np.array([mt.B for mt in mats_seq]),
        R=w.R,
        F1_blocks=F1,
        x0=np.asarray(state, dtype=float),
        masses=masses,
        targets=plan.targets,
        Q=w.Q,
        C=w.C,
    )


def _drift_and_response(sys):
    """z = E12^{-T} F2 and P = E12^{-T} E23 by block forward substitution.

    E12^T is block lower-bidiagonal (-I diagonal, A_{k+i} below), so each
    block row only needs the previous one: z is the free-drift trajectory
    and -P the input-to-state response.
    """
    T, n, m = sys.horizon, sys.n, sys.m
    A, B = sys.A_blocks, sys.B_blocks
    z = np.empty((T, n))
    P = np.zeros((T, n, m * T))
    z[0] = -sys.F2_first
    P[0, :, :m] = -B[0]
    for i in range(1, T):
        z[i] = A[i] @ z[i - 1]
        P[i] = A[i] @ P[i - 1]
        P[i, :, i * m:(i + 1) * m] -= B[i]
    return z, P


def condensed_qp(sys):
    """Input-only form of the horizon problem.

    States are x_bar = z - P u_bar with z the free drift; the cost is
    0.5 u^T G u - rhs^T u + const. Returns (G, rhs, z, P) with P shaped
    (T, n, m*T).
    """
    T, n, m = sys.horizon, sys.n, sys.m
    z, P = _drift_and_response(sys)
    EP = np.matmul(sys.E11_blocks, P).reshape(n * T, m * T)
    P2 = P.reshape(n * T, m * T)
    G = np.kron(np.eye(T), sys.R) + P2.T @ EP
    G = 0.5 * (G + G.T)
    rhs = P2.T @ (np.einsum("tij,tj->ti", sys.E11_blocks, z).reshape(-1) - sys.F1())
    return G, rhs, z, P


def solve_condensed(G, rhs):
    """Minimizer of 0.5 u^T G u - rhs^T u through an eigendecomposition of G."""
    evals, evecs = np.linalg.eigh(G)
    if evals[0] <= 0 or evals[-1] / evals[0] > MAX_CONDITION:
        cond = np.inf if evals[0] <= 0 else evals[-1] / evals[0]
        raise ConditioningError(f"reduced KKT matrix condition estimate {cond:.3e} exceeds {MAX_CONDITION:.0e}")
    return evecs @ ((evecs.T @ rhs) / evals)


def optimal_control(sys):
    """Closed-form receding-horizon input.

    u_bar = E_bar E23^T E12^{-1} (E11 E12^{-T} F2 - F1) with
    E_bar = (E33 + E23^T E12^{-1} E11 E12^{-T} E23)^{-1}; returns the first
    input block and the whole u_bar (T, m).
    """
    G, rhs, _, _ = condensed_qp(sys)
    u_bar = solve_condensed(G, rhs).reshape(sys.horizon, sys.m)
    return u_bar[0].copy(), u_bar


def kkt_oracle_solve(sys):
    """Solve the full stationarity system with a dense symmetric LDL^T factorization."""
    T, n, m = sys.horizon, sys.n, sys.m
    E, rhs = sys.dense()
    try:
        sol = scipy.linalg.solve(E, rhs, assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise ConditioningError("KKT matrix is singular") from e
    if not np.all(np.isfinite(sol)):
        raise ConditioningError("KKT solve produced non-finite values")
    nx = n * T
    return KKTSolution(sol[:nx].reshape(T, n), sol[nx:2 * nx].reshape(T, n), sol[2 * nx:].reshape(T, m))


def kkt_residuals(sys, sol):
    """Max-norm residuals of the four stationarity conditions.

    Returns (state, terminal, dynamics, input) residuals.
    """
    T = sys.horizon
    x, lam, u = sol.x_bar, sol.lam_bar, sol.u_bar
    A, B = sys.A_blocks, sys.B_blocks
    r_state = 0.0
    for i in range(T - 1):
        g = sys.E11_blocks[i] @ x[i] - sys.F1_blocks[i] + A[i + 1].T @ lam[i + 1] - lam[i]
        r_state = max(r_state, float(np.abs(g).max()))
    r_term = float(np.abs(sys.E11_blocks[-1] @ x[-1] - sys.F1_blocks[-1] - lam[-1]).max())
    prev = sys.x0
    r_dyn = 0.0
    for i in range(T):
        r_dyn = max(r_dyn, float(np.abs(A[i] @ prev + B[i] @ u[i] - x[i]).max()))
        prev = x[i]
    r_in = max(float(np.abs(sys.R @ u[i] + B[i].T @ lam[i]).max()) for i in range(T))
    return r_state, r_term, r_dyn, r_in


def objective(sys, u_bar):
    """Finite-horizon cost of an input sequence, rolled out on the LTV model."""
    u_bar = np.asarray(u_bar, dtype=float).reshape(sys.horizon, sys.m)
    x = sys.x0
    J = 0.5 * x @ sys.Q @ x
    for i in range(sys.horizon):
        J += 0.5 * u_bar[i] @ sys.R @ u_bar[i]
        x = sys.A_blocks[i] @ x + sys.B_blocks[i] @ u_bar[i]
        err = sys.C @ x - sys.targets[i]
        J += 0.5 * (sys.masses[i] * err @ err + x @ sys.Q @ x)
    return float(J)


def update_weights(ledger, y_next, alpha):
    """Move ``alpha`` mass from the nearest sample points onto ``y_next``."""
    if alpha == 0:
        return ledger
    cloud = ledger.cloud
    plan = single_sink_plan(y_next, cloud, alpha)
    weights = np.array(cloud.weights)
    np.subtract.at(weights, plan.sinks, plan.masses)
    # rounding can leave -1e-17 on a drained point
    moved = float(plan.masses.sum())
    return ledger.with_cloud(cloud.with_weights(weights, cloud.consumed + moved))


def share_weights(ledgers, positions, d_comm=None):
    """Elementwise-min weight sharing between agents in range.

    ``d_comm`` of None or inf shares globally. Otherwise pairs within range
    are merged in ascending (r, s) order, repeated until nothing changes,
    so every range-connected component ends with identical weights. Mass
    removed by the min is booked into ``consumed``.
    """
    n = len(ledgers)
    if n == 0:
        return []
    sizes = {len(l.cloud) for l in ledgers}
    if len(sizes) != 1:
        raise ValueError(f"ledgers hold clouds of different sizes: {sorted(sizes)}")
    w = np.array([l.cloud.weights for l in ledgers])
    before = w.sum(axis=1)

    if d_comm is None or np.isinf(d_comm):
        w[:] = w.min(axis=0)
    else:
        pos = np.asarray(positions, dtype=float).reshape(n, 2)
        pairs = [
            (r, s)
            for r in range(n)
            for s in range(r + 1, n)
            if np.linalg.norm(pos[r] - pos[s]) <= d_comm
        ]
        log.debug("[d2oc] %d agent pairs within %.3g m", len(pairs), d_comm)
        changed = True
        while changed:
            changed = False
            for r, s in pairs:
                low = np.minimum(w[r], w[s])
                if np.any(w[r] != low) or np.any(w[s] != low):
                    w[r] = low
                    w[s] = low
                    changed = True

    out = []
    for r, ledger in enumerate(ledgers):
        if np.array_equal(w[r], ledger.cloud.weights):
            out.append(ledger)
            continue
        removed = float(before[r] - w[r].sum())
        out.append(ledger.with_cloud(ledger.cloud.with_weights(w[r], ledger.cloud.consumed + removed)))
    return out


class D2ocController:
    """Stage A/B driver for one agent."""

    def __init__(self, ledger, weights, horizon, drone, tank_params, dt):
        self.ledger = ledger
        self.weights = weights
        self.horizon = horizon
        self.drone = drone
        self.tank_params = tank_params
        self.dt = dt
        self.last_plan = None

    def control(self, state, tank, k):
        """Stage A at step k: returns the first optimal input."""
        alphas = horizon_alphas(self.ledger, k, self.horizon)
        plan = select_local_samples(self.ledger, planar_position(state), self.horizon, k=k, alphas=alphas)
        mats = predict_matrices(tank, self.drone, self.tank_params, self.dt, self.horizon)
        sys = build_kkt(plan, state, mats, self.weights)
        u0, _ = optimal_control(sys)
        self.last_plan = plan
        return u0

    def commit(self, y_next, k):
        """Stage B after the plant moved to ``y_next`` (time k+1)."""
        scheduled = self.ledger.alpha(k + 1)
        alpha = min(scheduled, self.ledger.cloud.remaining)
        if alpha < scheduled:
            log.debug("[d2oc] agent %d step %d: ledger short, committing %.3e of %.3e",
                      self.ledger.agent_id, k, alpha, scheduled)
        self.ledger = update_weights(self.ledger, y_next, alpha)
        return alpha
