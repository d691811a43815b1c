"""Regenerates svm_qp.json: five seeded 40-point datasets and the optimal
soft-margin objective from two independent QP solvers (primal via cvxpy,
dual via cvxopt plus an exact bias line search)."""
import json

import cvxopt
import cvxpy as cp
import numpy as np

C_VALUES = [0.05, 0.3, 1.0, 3.0, 10.0]


def dataset(seed):
    rng = np.random.default_rng(seed)
    n, d = 40, 3
    y = np.array([1] * 20 + [0] * 20)
    shift = np.array([1.2, -0.8, 0.5])
    x = rng.normal(size=(n, d)) + np.where(y[:, None] == 1, shift, -shift) * 0.6
    return x.round(12), y


def primal(x, y, c):
    s = np.where(y == 1, 1.0, -1.0)
    w = cp.Variable(x.shape[1])
    b = cp.Variable()
    obj = 0.5 * cp.sum_squares(w) + c * cp.sum(cp.pos(1 - cp.multiply(s, x @ w + b)))
    prob = cp.Problem(cp.Minimize(obj))
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return prob.value


def dual(x, y, c):
    s = np.where(y == 1, 1.0, -1.0)
    n = len(y)
    k = (s[:, None] * x) @ (s[:, None] * x).T
    cvxopt.solvers.options.update(show_progress=False, abstol=1e-12, reltol=1e-12, feastol=1e-12)
    sol = cvxopt.solvers.qp(
        cvxopt.matrix(k), cvxopt.matrix(-np.ones(n)),
        cvxopt.matrix(np.vstack([-np.eye(n), np.eye(n)])), cvxopt.matrix(np.r_[np.zeros(n), c * np.ones(n)]),
        cvxopt.matrix(s[None, :]), cvxopt.matrix(0.0),
    )
    a = np.array(sol["x"]).ravel()
    w = (a * s) @ x
    f = x @ w
    hinge = lambda b: np.maximum(0.0, 1 - s * (f + b)).sum()
    breakpoints = s - f
    b = min(breakpoints, key=hinge)
    return 0.5 * w @ w + c * hinge(b)


cases = []
for seed, c in zip(range(1, 6), C_VALUES):
    x, y = dataset(seed)
    p, q = primal(x, y, c), dual(x, y, c)
    assert abs(p - q) <= 1e-7 * max(1.0, abs(p)), (seed, p, q)
    cases.append({"seed": seed, "c": c, "x": x.tolist(), "y": y.tolist(), "objective": p})
    print(seed, c, p, q)

with open("svm_qp.json", "w") as fh:
    json.dump({"cases": cases}, fh, indent=1)
