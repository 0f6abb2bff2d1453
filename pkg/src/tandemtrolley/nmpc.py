"""Receding-horizon collaborative motion planner.

Single-shooting formulation over the joint input sequence: states are rolled
out through the pair dynamics, the formation slack is eliminated analytically
(at the optimum it equals |r_k - l|), velocity/acceleration box constraints
are kept exact by a forward-clipping projection, and workspace bounds enter as
a quadratic penalty. The solver is a projected L-BFGS descent with Armijo
backtracking, warm-startable from the previous tick's solution.

Objective per solve:

    J = |pL_T - pL_ref|^2_PL + |pF_T - pF_ref|^2_PF
        + sum_k [ lam_r (r_k^2 - l^2)^2 + lam_phi phiF_k^2
                  + u_k' R u_k + w (r_k - l)^2 ]
        + workspace penalty

with r_k the robot separation and phiF_k the follower bearing offset.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import AssemblyState, ControlInput, Pose2, wrap_angle
from .hybrid_astar import ReferencePath

STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max_iter"
STATUS_INFEASIBLE_START = "infeasible_start"

WORKSPACE_PENALTY = 1e3
GRAD_TOL = 1e-6
STEP_TOL = 1e-9
BEARING_GUARD = 1e-9  # added to r^2 in gradient denominators near r = 0


def _default_p() -> np.ndarray:
    return 30.0 * np.eye(2)


def _default_r() -> np.ndarray:
    return np.diag([0.1, 0.05, 0.1, 0.05])


@dataclass
class MpcWeights:
    P_leader: np.ndarray = field(default_factory=_default_p)
    P_follower: np.ndarray = field(default_factory=_default_p)
    R: np.ndarray = field(default_factory=_default_r)
    lambda_r: float = 50.0
    lambda_phi: float = 1.0
    w_slack: float = 100.0

    def __post_init__(self):
        self.P_leader = np.asarray(self.P_leader, dtype=float)
        self.P_follower = np.asarray(self.P_follower, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        for name, m in (("P_leader", self.P_leader), ("P_follower", self.P_follower), ("R", self.R)):
            if not np.allclose(m, m.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(m).min() < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
        if np.linalg.eigvalsh(self.R).min() <= 0.0:
            raise ValueError("R must be positive definite")
        if self.lambda_r < 0 or self.lambda_phi < 0:
            raise ValueError("stage coefficients must be nonnegative")
        if self.w_slack <= 0:
            raise ValueError("slack weight must be strictly positive")


@dataclass(frozen=True)
class MpcLimits:
    v_max_leader: float = 0.6
    v_max_follower: float = 0.7
    w_max: float = 1.0
    a_max: float = 0.15
    alpha_max: float = 0.3
    workspace: tuple[tuple[float, float], tuple[float, float]] = ((-1e6, 1e6), (-1e6, 1e6))

    def __post_init__(self):
        for v in (self.v_max_leader, self.v_max_follower, self.w_max, self.a_max, self.alpha_max):
            if v <= 0:
                raise ValueError("all limits must be strictly positive")
        (xlo, xhi), (ylo, yhi) = self.workspace
        if xlo >= xhi or ylo >= yhi:
            raise ValueError("workspace bounds must be nonempty intervals")

    def input_box(self) -> np.ndarray:
        return np.array([self.v_max_leader, self.w_max, self.v_max_follower, self.w_max])

    def rate_box(self) -> np.ndarray:
        return np.array([self.a_max, self.alpha_max, self.a_max, self.alpha_max])


@dataclass
class MpcProblem:
    horizon: int
    dt: float
    x_init: AssemblyState
    l: float
    reference: tuple[np.ndarray, np.ndarray]
    weights: MpcWeights
    limits: MpcLimits
    u_prev: ControlInput

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.dt <= 0 or self.l <= 0:
            raise ValueError("dt and l must be positive")
        self.reference = (
            np.asarray(self.reference[0], dtype=float),
            np.asarray(self.reference[1], dtype=float),
        )


@dataclass
class MpcSolution:
    states: list[AssemblyState]
    inputs: list[ControlInput]
    slacks: np.ndarray
    objective: float
    status: str
    solve_time: float
    iterations: int

    def input_array(self) -> np.ndarray:
        return np.array([u.as_array() for u in self.inputs])


def build_reference(
    waypoints: ReferencePath | list[Pose2],
    x: AssemblyState,
    l: float,
    lookahead: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Pick the tracking target ahead of the assembly and split it per robot.

    Walks `lookahead` meters of arc length along the waypoint polyline past
    the waypoint nearest the assembly midpoint (clamped to the path end),
    interpolating position and heading, then offsets the target by +-l/2
    along its heading to get the leader/follower reference positions.
    """
    wps = waypoints.waypoints if isinstance(waypoints, ReferencePath) else list(waypoints)
    if not wps:
        raise ValueError("reference path is empty")
    pts = np.array([[w.x, w.y] for w in wps])
    mid = x.midpoint()

    if len(wps) == 1:
        target = wps[0]
    else:
        seg = np.diff(pts, axis=0)
        seg_len = np.linalg.norm(seg, axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg_len)])
        # arc-length coordinate of the closest point on the waypoint polyline
        safe = np.where(seg_len > 0.0, seg_len, 1.0)
        proj = np.einsum("ij,ij->i", mid - pts[:-1], seg) / safe**2
        proj = np.clip(proj, 0.0, 1.0)
        closest = pts[:-1] + proj[:, None] * seg
        d2 = np.einsum("ij,ij->i", closest - mid, closest - mid)
        jmin = int(np.argmin(d2))
        goal_s = s[jmin] + proj[jmin] * seg_len[jmin] + lookahead
        if goal_s >= s[-1]:
            target = wps[-1]
        else:
            j = int(np.searchsorted(s, goal_s, side="right") - 1)
            j = min(max(j, 0), len(wps) - 2)
            span = seg_len[j]
            t = 0.0 if span == 0.0 else (goal_s - s[j]) / span
            px = pts[j, 0] + t * seg[j, 0]
            py = pts[j, 1] + t * seg[j, 1]
            th = wrap_angle(wps[j].theta + t * wrap_angle(wps[j + 1].theta - wps[j].theta))
            target = Pose2(px, py, th)

    half = 0.5 * l
    c, sn = math.cos(target.theta), math.sin(target.theta)
    p_leader = np.array([target.x + half * c, target.y + half * sn])
    p_follower = np.array([target.x - half * c, target.y - half * sn])
    return p_leader, p_follower


def first_command(solution: MpcSolution) -> ControlInput:
    """First input of the optimized sequence, the only one the plant receives."""
    return solution.inputs[0]


# ---------------------------------------------------------------------------
# vectorized rollout, objective, gradient
# ---------------------------------------------------------------------------


def _rollout(x0: np.ndarray, u: np.ndarray, dt: float):
    """Shooting rollout; headings kept unwrapped (trig terms are periodic)."""
    t = u.shape[0]
    th_l = np.empty(t + 1)
    th_f = np.empty(t + 1)
    th_l[0], th_f[0] = x0[2], x0[5]
    th_l[1:] = x0[2] + dt * np.cumsum(u[:, 1])
    th_f[1:] = x0[5] + dt * np.cumsum(u[:, 3])
    cos_l, sin_l = np.cos(th_l[:t]), np.sin(th_l[:t])
    cos_f, sin_f = np.cos(th_f[:t]), np.sin(th_f[:t])
    x_l = np.empty(t + 1)
    y_l = np.empty(t + 1)
    x_f = np.empty(t + 1)
    y_f = np.empty(t + 1)
    x_l[0], y_l[0], x_f[0], y_f[0] = x0[0], x0[1], x0[3], x0[4]
    x_l[1:] = x0[0] + dt * np.cumsum(u[:, 0] * cos_l)
    y_l[1:] = x0[1] + dt * np.cumsum(u[:, 0] * sin_l)
    x_f[1:] = x0[3] + dt * np.cumsum(u[:, 2] * cos_f)
    y_f[1:] = x0[4] + dt * np.cumsum(u[:, 2] * sin_f)
    return x_l, y_l, th_l, x_f, y_f, th_f, cos_l, sin_l, cos_f, sin_f


def _wrap_vec(a: np.ndarray) -> np.ndarray:
    return np.arctan2(np.sin(a), np.cos(a))


def _relu(a: np.ndarray) -> np.ndarray:
    return np.maximum(a, 0.0)


def _eval(problem: MpcProblem, u: np.ndarray, want_grad: bool):
    w = problem.weights
    t = problem.horizon
    dt = problem.dt
    l = problem.l
    x0 = problem.x_init.as_array()
    x_l, y_l, th_l, x_f, y_f, th_f, cos_l, sin_l, cos_f, sin_f = _rollout(x0, u, dt)

    dx = x_l[:t] - x_f[:t]
    dy = y_l[:t] - y_f[:t]
    r2 = dx * dx + dy * dy
    r = np.sqrt(r2)
    r2g = r2 + BEARING_GUARD
    rg = np.sqrt(r2g)
    phi_f = _wrap_vec(th_f[:t] - np.arctan2(dy, dx))

    ur = u @ w.R
    j_stage = (
        w.lambda_r * np.sum((r2 - l * l) ** 2)
        + w.lambda_phi * np.sum(phi_f**2)
        + np.sum(u * ur)
        + w.w_slack * np.sum((r - l) ** 2)
    )
    e_l = np.array([x_l[t], y_l[t]]) - problem.reference[0]
    e_f = np.array([x_f[t], y_f[t]]) - problem.reference[1]
    j_term = float(e_l @ w.P_leader @ e_l + e_f @ w.P_follower @ e_f)

    (xlo, xhi), (ylo, yhi) = problem.limits.workspace
    lo_xl, hi_xl = _relu(xlo - x_l[1:]), _relu(x_l[1:] - xhi)
    lo_yl, hi_yl = _relu(ylo - y_l[1:]), _relu(y_l[1:] - yhi)
    lo_xf, hi_xf = _relu(xlo - x_f[1:]), _relu(x_f[1:] - xhi)
    lo_yf, hi_yf = _relu(ylo - y_f[1:]), _relu(y_f[1:] - yhi)
    j_ws = WORKSPACE_PENALTY * float(
        np.sum(lo_xl**2 + hi_xl**2 + lo_yl**2 + hi_yl**2)
        + np.sum(lo_xf**2 + hi_xf**2 + lo_yf**2 + hi_yf**2)
    )
    j = float(j_stage + j_term + j_ws)
    if not want_grad:
        return j, None

    # stage-cost gradients w.r.t. the stage states, k = 0..T-1
    ar = 4.0 * w.lambda_r * (r2 - l * l)
    b = 2.0 * w.w_slack * (r - l) / rg
    c = 2.0 * w.lambda_phi * phi_f
    radial = ar + b
    gx_l = radial * dx + c * dy / r2g
    gy_l = radial * dy - c * dx / r2g
    gth_f_stage = c

    # position adjoints: PG[k] for k = 1..T, then a reverse cumulative sum
    pg = np.zeros((4, t + 1))  # rows: xL, yL, xF, yF
    pg[0, 1:t] = gx_l[1:]
    pg[1, 1:t] = gy_l[1:]
    pg[2, 1:t] = -gx_l[1:]
    pg[3, 1:t] = -gy_l[1:]
    mu2 = 2.0 * WORKSPACE_PENALTY
    pg[0, 1:] += mu2 * (hi_xl - lo_xl)
    pg[1, 1:] += mu2 * (hi_yl - lo_yl)
    pg[2, 1:] += mu2 * (hi_xf - lo_xf)
    pg[3, 1:] += mu2 * (hi_yf - lo_yf)
    term_l = 2.0 * (w.P_leader @ e_l)
    term_f = 2.0 * (w.P_follower @ e_f)
    pg[0, t] += term_l[0]
    pg[1, t] += term_l[1]
    pg[2, t] += term_f[0]
    pg[3, t] += term_f[1]
    lam_pos = np.cumsum(pg[:, ::-1], axis=1)[:, ::-1]  # lam_pos[:, k] = sum_{j>=k} pg[:, j]

    # heading adjoints: lam_th[k] = sum_{j=k..T-1} (stage theta grad + coupling_j)
    lam_xl, lam_yl, lam_xf, lam_yf = lam_pos
    cpl_l = np.zeros(t + 1)
    cpl_f = np.zeros(t + 1)
    if t > 1:
        ks = np.arange(1, t)
        cpl_l[1:t] = dt * u[ks, 0] * (-sin_l[ks] * lam_xl[ks + 1] + cos_l[ks] * lam_yl[ks + 1])
        cpl_f[1:t] = dt * u[ks, 2] * (-sin_f[ks] * lam_xf[ks + 1] + cos_f[ks] * lam_yf[ks + 1])
        cpl_f[1:t] += gth_f_stage[1:]
    lam_th_l = np.cumsum(cpl_l[::-1])[::-1]
    lam_th_f = np.cumsum(cpl_f[::-1])[::-1]

    grad = 2.0 * ur
    nxt = np.arange(1, t + 1)
    grad[:, 0] += dt * (cos_l * lam_xl[nxt] + sin_l * lam_yl[nxt])
    grad[:, 1] += dt * lam_th_l[nxt]
    grad[:, 2] += dt * (cos_f * lam_xf[nxt] + sin_f * lam_yf[nxt])
    grad[:, 3] += dt * lam_th_f[nxt]
    return j, grad


def objective_value(problem: MpcProblem, u: np.ndarray) -> float:
    """Total solver objective (tracking + stage + workspace penalty) for an input sequence."""
    return _eval(problem, np.asarray(u, dtype=float), want_grad=False)[0]


def objective_gradient(problem: MpcProblem, u: np.ndarray) -> np.ndarray:
    """Analytic gradient of objective_value w.r.t. the (T, 4) input sequence."""
    return _eval(problem, np.asarray(u, dtype=float), want_grad=True)[1]


# ---------------------------------------------------------------------------
# projection and solver
# ---------------------------------------------------------------------------


def project_inputs(problem: MpcProblem, u: np.ndarray) -> np.ndarray:
    """Forward-clip onto the velocity box and per-step rate constraints.

    Idempotent on feasible sequences; always lands in the feasible set given
    u_prev inside the box. Scalar loops: this sits on the solver's hot path.
    """
    lim = problem.limits
    box = (lim.v_max_leader, lim.w_max, lim.v_max_follower, lim.w_max)
    rate = (lim.a_max, lim.alpha_max, lim.a_max, lim.alpha_max)
    t = u.shape[0]
    out = np.empty_like(u)
    uprev = problem.u_prev.as_array()
    cols = u.T.copy()
    ocols = out.T
    for i in range(4):
        hi = box[i]
        du = rate[i]
        prev = min(max(float(uprev[i]), -hi), hi)
        col = cols[i]
        ocol = ocols[i]
        for k in range(t):
            lo_k = prev - du
            hi_k = prev + du
            if lo_k < -hi:
                lo_k = -hi
            if hi_k > hi:
                hi_k = hi
            val = col[k]
            prev = lo_k if val < lo_k else (hi_k if val > hi_k else val)
            ocol[k] = prev
    return out


def _constant_grid_best(problem: MpcProblem, points_per_axis: int = 5) -> np.ndarray:
    """Best constant-control sequence over a uniform grid, batch-evaluated."""
    hi = problem.limits.input_box()
    axes = [np.linspace(-hi[i], hi[i], points_per_axis) for i in range(4)]
    cand = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 4)
    t = problem.horizon
    dt = problem.dt
    l = problem.l
    w = problem.weights
    x0 = problem.x_init.as_array()
    n = cand.shape[0]

    state = np.tile(x0, (n, 1))
    cost = np.einsum("ni,ij,nj->n", cand, w.R, cand) * t
    lam_r, lam_phi, ws = w.lambda_r, w.lambda_phi, w.w_slack
    for _ in range(t):
        dx = state[:, 0] - state[:, 3]
        dy = state[:, 1] - state[:, 4]
        r2 = dx * dx + dy * dy
        r = np.sqrt(r2)
        phi_f = _wrap_vec(state[:, 5] - np.arctan2(dy, dx))
        cost += lam_r * (r2 - l * l) ** 2 + lam_phi * phi_f**2 + ws * (r - l) ** 2
        state = state + dt * np.column_stack([
            cand[:, 0] * np.cos(state[:, 2]),
            cand[:, 0] * np.sin(state[:, 2]),
            cand[:, 1],
            cand[:, 2] * np.cos(state[:, 5]),
            cand[:, 2] * np.sin(state[:, 5]),
            cand[:, 3],
        ])
    e_l = state[:, 0:2] - problem.reference[0]
    e_f = state[:, 3:5] - problem.reference[1]
    cost += np.einsum("ni,ij,nj->n", e_l, w.P_leader, e_l)
    cost += np.einsum("ni,ij,nj->n", e_f, w.P_follower, e_f)
    best = cand[int(np.argmin(cost))]
    return np.tile(best, (t, 1))


def _lbfgs_direction(grad_flat: np.ndarray, mem: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    q = grad_flat.copy()
    alphas = []
    for s, y in reversed(mem):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        alphas.append((a, rho, s, y))
        q -= a * y
    if mem:
        s, y = mem[-1]
        q *= float(s @ y) / float(y @ y)
    for a, rho, s, y in reversed(alphas):
        bcoef = rho * float(y @ q)
        q += (a - bcoef) * s
    return -q


def _states_from_rollout(problem: MpcProblem, u: np.ndarray) -> list[AssemblyState]:
    x_l, y_l, th_l, x_f, y_f, th_f, *_ = _rollout(problem.x_init.as_array(), u, problem.dt)
    return [
        AssemblyState(
            Pose2(x_l[k], y_l[k], wrap_angle(th_l[k])),
            Pose2(x_f[k], y_f[k], wrap_angle(th_f[k])),
        )
        for k in range(problem.horizon + 1)
    ]


def _start_inside_workspace(problem: MpcProblem) -> bool:
    (xlo, xhi), (ylo, yhi) = problem.limits.workspace
    x0 = problem.x_init.as_array()
    for px, py in ((x0[0], x0[1]), (x0[3], x0[4])):
        if not (xlo <= px <= xhi and ylo <= py <= yhi):
            return False
    return True


def solve(
    problem: MpcProblem,
    warm_start: MpcSolution | None = None,
    max_iter: int = 40,
) -> MpcSolution:
    """Minimize the receding-horizon objective over feasible input sequences.

    Never raises on a hard problem: the iteration cap returns the best
    feasible iterate with status max_iter, and an initial state outside the
    workspace is solved anyway and flagged infeasible_start.
    """
    t0 = time.perf_counter()
    t = problem.horizon

    candidates = [np.zeros((t, 4)), np.tile(problem.u_prev.as_array(), (t, 1))]
    if warm_start is not None and len(warm_start.inputs) == t:
        prev = warm_start.input_array()
        shifted = np.vstack([prev[1:], prev[-1:]])
        candidates = [shifted, prev] + candidates
    else:
        candidates.append(_constant_grid_best(problem))

    best_u, best_j = None, math.inf
    for cand in candidates:
        proj = project_inputs(problem, cand)
        j = objective_value(problem, proj)
        if j < best_j:
            best_u, best_j = proj, j

    u = best_u
    j, grad = _eval(problem, u, want_grad=True)
    mem: list[tuple[np.ndarray, np.ndarray]] = []
    status = STATUS_MAX_ITER
    iterations = 0
    bb_step = 1.0
    stalls = 0

    for it in range(max_iter):
        iterations = it + 1
        pg = u - project_inputs(problem, u - grad)
        if np.abs(pg).max() <= GRAD_TOL * max(1.0, abs(j)):
            status = STATUS_CONVERGED
            break

        tried_fallback = not mem
        d = _lbfgs_direction(grad.ravel(), mem).reshape(t, 4)
        if not mem:
            gmax = np.abs(grad).max()
            if gmax > 0:
                d = d / gmax  # scale-free first step

        accepted = False
        backtracks = 12
        while True:
            step = 1.0
            for _ in range(backtracks):
                u_new = project_inputs(problem, u + step * d)
                delta = u_new - u
                dd = float(np.sum(grad * delta))
                if dd < 0.0:
                    j_new = objective_value(problem, u_new)
                    if j_new <= j + 1e-4 * dd:
                        accepted = True
                        break
                step *= 0.5
            if accepted or tried_fallback:
                break
            # quasi-Newton direction stalled against the constraint staircase:
            # drop memory and retry with a spectral (Barzilai-Borwein) gradient step
            mem.clear()
            d = -bb_step * grad
            tried_fallback = True
            backtracks = 30

        if not accepted:
            status = STATUS_CONVERGED  # no descent direction makes progress
            break

        j_new, grad_new = _eval(problem, u_new, want_grad=True)
        s = (u_new - u).ravel()
        yv = (grad_new - grad).ravel()
        sy = float(s @ yv)
        if sy > 1e-10 * float(np.linalg.norm(s) * np.linalg.norm(yv) + 1e-300):
            mem.append((s, yv))
            if len(mem) > 10:
                mem.pop(0)
            bb_step = min(max(float(s @ s) / sy, 1e-4), 1e4)
        step_norm = np.abs(u_new - u).max()
        decrease = j - j_new
        u, j, grad = u_new, j_new, grad_new
        if step_norm <= STEP_TOL:
            status = STATUS_CONVERGED
            break
        # give up once successive accepted steps stop making real progress
        stalls = stalls + 1 if decrease <= 1e-9 * max(1.0, abs(j)) else 0
        if stalls >= 2:
            status = STATUS_CONVERGED
            break

    if not _start_inside_workspace(problem):
        status = STATUS_INFEASIBLE_START

    states = _states_from_rollout(problem, u)
    dxy = np.array([[st.leader.x - st.follower.x, st.leader.y - st.follower.y] for st in states[:t]])
    slacks = np.abs(np.linalg.norm(dxy, axis=1) - problem.l)
    return MpcSolution(
        states=states,
        inputs=[ControlInput.from_array(u[k]) for k in range(t)],
        slacks=slacks,
        objective=j,
        status=status,
        solve_time=time.perf_counter() - t0,
        iterations=iterations,
    )
