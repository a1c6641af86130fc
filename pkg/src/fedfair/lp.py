"""Dense LP solver for the server's mixture-coefficient subproblem.

maximize    psi_L . alpha
subject to  psi_theta . alpha  = 1
            |psi_C . alpha|   <= tau        (optional row)
            0 <= alpha_m      <= B

Solved with a two-phase bounded-variable primal simplex using Bland's
rule (the system has at most 3 rows, so a dense textbook implementation
is both adequate and dependency-free). When the constraint set is
infeasible the fairness row is relaxed by the smallest slack s with
|psi_C . alpha| <= tau + s, and the objective is then maximized under
the relaxed row.

A vertex-enumeration oracle (for small M) is provided for testing and
must never share code with the simplex path.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from fedfair.errors import ConfigError

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-8
MAX_ITER = 10_000

STATUS_OPTIMAL = "optimal"
STATUS_RELAXED = "infeasible_relaxed"
STATUS_ERROR = "error"


@dataclass(frozen=True)
class AlphaLP:
    objective: np.ndarray  # psi_L, length M
    equality: np.ndarray  # psi_theta, length M, rhs fixed at 1.0
    fairness_row: np.ndarray | None  # psi_C, length M; None disables the row
    tau: float
    box_upper: float

    def __post_init__(self):
        if self.tau < 0:
            raise ConfigError("tau must be nonnegative")
        if self.box_upper <= 0:
            raise ConfigError("box upper bound must be positive")
        m = len(self.objective)
        if len(self.equality) != m:
            raise ConfigError("objective/equality length mismatch")
        if self.fairness_row is not None and len(self.fairness_row) != m:
            raise ConfigError("fairness row length mismatch")


@dataclass
class LPSolution:
    alpha: np.ndarray
    objective_value: float
    status: str
    slack_used: float = 0.0


class _Unbounded(Exception):
    pass


class _Infeasible(Exception):
    pass


def _simplex_phase(A, b, c, upper, basis, at_upper):
    """Bounded-variable primal simplex, maximizing c.x over Ax=b, 0<=x<=u.

    Mutates basis/at_upper in place; returns the full solution vector.
    Entering and leaving variables follow Bland's rule.
    """
    m, n = A.shape
    for _ in range(MAX_ITER):
        in_basis = np.zeros(n, dtype=bool)
        in_basis[basis] = True
        nonbasic = np.flatnonzero(~in_basis)

        x = np.where(at_upper & ~in_basis, upper, 0.0)
        x[~np.isfinite(x)] = 0.0  # nonbasic at +inf cannot happen
        B = A[:, basis]
        x[basis] = np.linalg.solve(B, b - A[:, nonbasic] @ x[nonbasic])

        y = np.linalg.solve(B.T, c[basis])
        reduced = c[nonbasic] - A[:, nonbasic].T @ y

        entering = -1
        for j, d in sorted(zip(nonbasic, reduced)):
            if upper[j] <= PIVOT_TOL:  # fixed variable (e.g. retired artificial)
                continue
            if (not at_upper[j] and d > PIVOT_TOL) or (at_upper[j] and d < -PIVOT_TOL):
                entering = j
                break
        if entering < 0:
            return x

        delta = -1.0 if at_upper[entering] else 1.0
        direction = -np.linalg.solve(B, A[:, entering]) * delta

        # step limits: basic variables hitting a bound, or a bound flip
        t_flip = upper[entering] if np.isfinite(upper[entering]) else np.inf
        t_best = t_flip
        leave_row = -1
        leave_at_upper = False
        for i in range(m):
            vi = basis[i]
            if direction[i] < -PIVOT_TOL:
                lim = x[vi] / -direction[i]
                hits_upper = False
            elif direction[i] > PIVOT_TOL and np.isfinite(upper[vi]):
                lim = (upper[vi] - x[vi]) / direction[i]
                hits_upper = True
            else:
                continue
            lim = max(lim, 0.0)
            better = lim < t_best - PIVOT_TOL or (
                lim < t_best + PIVOT_TOL
                and leave_row >= 0
                and vi < basis[leave_row]
            )
            if better:
                t_best = lim
                leave_row = i
                leave_at_upper = hits_upper
        if not np.isfinite(t_best):
            raise _Unbounded
        if leave_row < 0:
            # entering variable travels to its opposite bound
            at_upper[entering] = not at_upper[entering]
            continue
        leaving = basis[leave_row]
        basis[leave_row] = entering
        at_upper[entering] = False
        at_upper[leaving] = leave_at_upper
    raise ConfigError("simplex iteration limit exceeded")


def _solve_standard(a_eq, b_eq, a_ub, b_ub, c, upper):
    """Two-phase simplex for max c.x, a_eq x = b_eq, a_ub x <= b_ub, 0<=x<=upper.

    Returns the structural solution vector; raises _Infeasible.
    """
    a_eq = np.atleast_2d(np.asarray(a_eq, dtype=float))
    a_ub = (
        np.atleast_2d(np.asarray(a_ub, dtype=float))
        if len(b_ub)
        else np.zeros((0, a_eq.shape[1]))
    )
    n_struct = a_eq.shape[1]
    n_slack = a_ub.shape[0]
    m = a_eq.shape[0] + n_slack

    A = np.zeros((m, n_struct + n_slack + m))
    b = np.concatenate([np.asarray(b_eq, dtype=float), np.asarray(b_ub, dtype=float)])
    A[: a_eq.shape[0], :n_struct] = a_eq
    A[a_eq.shape[0] :, :n_struct] = a_ub
    for i in range(n_slack):
        A[a_eq.shape[0] + i, n_struct + i] = 1.0
    # normalize rhs signs, then append artificial identity columns
    neg = b < 0
    A[neg] *= -1.0
    b = np.abs(b)
    for i in range(m):
        A[i, n_struct + n_slack + i] = 1.0

    u = np.concatenate(
        [np.asarray(upper, dtype=float), np.full(n_slack + m, np.inf)]
    )
    basis = list(range(n_struct + n_slack, n_struct + n_slack + m))
    at_upper = np.zeros(A.shape[1], dtype=bool)

    c1 = np.zeros(A.shape[1])
    c1[n_struct + n_slack :] = -1.0
    x = _simplex_phase(A, b, c1, u, basis, at_upper)
    if x[n_struct + n_slack :].sum() > FEAS_TOL:
        raise _Infeasible

    # artificials pinned at zero for phase 2
    u[n_struct + n_slack :] = 0.0
    c2 = np.zeros(A.shape[1])
    c2[:n_struct] = c
    x = _simplex_phase(A, b, c2, u, basis, at_upper)
    return x[:n_struct]


def _try_solve(lp: AlphaLP, tau: float, with_slack: bool):
    """Assemble the row system and run the simplex.

    with_slack adds a variable s >= 0 relaxing both fairness rows and
    maximizes -s (used to find the minimal relaxation).
    """
    m = len(lp.objective)
    n_extra = 1 if with_slack else 0
    eq = np.concatenate([np.asarray(lp.equality, dtype=float), np.zeros(n_extra)])
    a_ub, b_ub = [], []
    if lp.fairness_row is not None:
        f = np.asarray(lp.fairness_row, dtype=float)
        slack_col = [-1.0] if with_slack else []
        a_ub.append(np.concatenate([f, slack_col]))
        a_ub.append(np.concatenate([-f, slack_col]))
        b_ub = [tau, tau]
    if with_slack:
        c = np.concatenate([np.zeros(m), [-1.0]])
        upper = np.concatenate([np.full(m, lp.box_upper), [np.inf]])
    else:
        c = np.asarray(lp.objective, dtype=float)
        upper = np.full(m, lp.box_upper)
    x = _solve_standard([eq], [1.0], a_ub, b_ub, c, upper)
    return x[:m], (float(x[m]) if with_slack else 0.0)


def solve(lp: AlphaLP) -> LPSolution:
    """Solve the mixture-coefficient LP, relaxing the fairness row if needed."""
    m = len(lp.objective)
    if np.all(np.abs(lp.equality) < PIVOT_TOL):
        return LPSolution(
            alpha=np.zeros(m),
            objective_value=float("nan"),
            status=STATUS_ERROR,
        )
    try:
        alpha, _ = _try_solve(lp, lp.tau, with_slack=False)
        return LPSolution(
            alpha=alpha,
            objective_value=float(lp.objective @ alpha),
            status=STATUS_OPTIMAL,
        )
    except _Infeasible:
        pass
    if lp.fairness_row is None:
        return LPSolution(
            alpha=np.zeros(m), objective_value=float("nan"), status=STATUS_ERROR
        )
    try:
        _, slack = _try_solve(lp, lp.tau, with_slack=True)
        alpha, _ = _try_solve(lp, lp.tau + slack + 1e-12, with_slack=False)
    except _Infeasible:
        # the sum-to-one row itself is unreachable inside the box
        return LPSolution(
            alpha=np.zeros(m), objective_value=float("nan"), status=STATUS_ERROR
        )
    return LPSolution(
        alpha=alpha,
        objective_value=float(lp.objective @ alpha),
        status=STATUS_RELAXED,
        slack_used=slack,
    )


def _enumerate_vertices(planes, check_feasible, dim):
    """Yield feasible intersection points of every dim-subset of planes."""
    for combo in itertools.combinations(range(len(planes)), dim):
        A = np.array([planes[i][0] for i in combo])
        rhs = np.array([planes[i][1] for i in combo])
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        x = np.linalg.solve(A, rhs)
        if check_feasible(x):
            yield x


def brute_force_oracle(lp: AlphaLP) -> LPSolution:
    """Enumerate basic feasible points; test oracle only, refuses M > 6."""
    m = len(lp.objective)
    if m > 6:
        raise ConfigError("vertex-enumeration oracle limited to M <= 6")
    if np.all(np.abs(lp.equality) < PIVOT_TOL):
        return LPSolution(
            alpha=np.zeros(m), objective_value=float("nan"), status=STATUS_ERROR
        )
    tol = 1e-9
    eq = np.asarray(lp.equality, dtype=float)
    f = None if lp.fairness_row is None else np.asarray(lp.fairness_row, dtype=float)

    planes = [(eq, 1.0)]
    if f is not None:
        planes += [(f, lp.tau), (-f, lp.tau)]
    for j in range(m):
        e = np.zeros(m)
        e[j] = 1.0
        planes += [(e, 0.0), (e, lp.box_upper)]

    def feasible(x):
        if abs(eq @ x - 1.0) > tol:
            return False
        if np.any(x < -tol) or np.any(x > lp.box_upper + tol):
            return False
        if f is not None and abs(f @ x) > lp.tau + tol:
            return False
        return True

    best, best_val = None, -np.inf
    for x in _enumerate_vertices(planes, feasible, m):
        val = float(lp.objective @ x)
        if val > best_val + 1e-12:
            best, best_val = x, val
    if best is not None:
        return LPSolution(alpha=best, objective_value=best_val, status=STATUS_OPTIMAL)

    if f is None:
        return LPSolution(
            alpha=np.zeros(m), objective_value=float("nan"), status=STATUS_ERROR
        )

    # relaxed enumeration over (alpha, s) with |f.alpha| <= tau + s
    ext_planes = [(np.concatenate([eq, [0.0]]), 1.0)]
    ext_planes += [
        (np.concatenate([f, [-1.0]]), lp.tau),
        (np.concatenate([-f, [-1.0]]), lp.tau),
    ]
    for j in range(m):
        e = np.zeros(m + 1)
        e[j] = 1.0
        ext_planes += [(e, 0.0), (e, lp.box_upper)]
    e_s = np.zeros(m + 1)
    e_s[m] = 1.0
    ext_planes.append((e_s, 0.0))

    def ext_feasible(z):
        x, s = z[:m], z[m]
        if s < -tol or abs(eq @ x - 1.0) > tol:
            return False
        if np.any(x < -tol) or np.any(x > lp.box_upper + tol):
            return False
        return abs(f @ x) <= lp.tau + s + tol

    candidates = list(_enumerate_vertices(ext_planes, ext_feasible, m + 1))
    if not candidates:
        return LPSolution(
            alpha=np.zeros(m), objective_value=float("nan"), status=STATUS_ERROR
        )
    s_min = min(z[m] for z in candidates)
    best = max(
        (z for z in candidates if z[m] <= s_min + tol),
        key=lambda z: float(lp.objective @ z[:m]),
    )
    return LPSolution(
        alpha=best[:m],
        objective_value=float(lp.objective @ best[:m]),
        status=STATUS_RELAXED,
        slack_used=float(s_min),
    )


def dump_lp(lp: AlphaLP, path) -> None:
    """Plain-text dump of the LP rows for offline verification."""
    with open(path, "a", encoding="utf-8") as fh:
        fh.write("objective " + " ".join(f"{v:.12g}" for v in lp.objective) + "\n")
        fh.write("equality " + " ".join(f"{v:.12g}" for v in lp.equality) + " = 1\n")
        if lp.fairness_row is not None:
            fh.write(
                "fairness "
                + " ".join(f"{v:.12g}" for v in lp.fairness_row)
                + f" | <= {lp.tau:.12g}\n"
            )
        fh.write(f"bounds 0 <= alpha <= {lp.box_upper:.12g}\n---\n")
