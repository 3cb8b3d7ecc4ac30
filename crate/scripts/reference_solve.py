"""Solve a problem dump with an external conic solver (cvxpy + Clarabel).

Usage: python3 scripts/reference_solve.py DUMP [SOLVER]
Prints the optimal objective with 17 significant digits.
"""
import sys

import cvxpy as cp
import numpy as np


def parse(path):
    with open(path) as f:
        lines = [l.split() for l in f if l.strip()]
    header = " ".join(lines[0]).split(";")
    n = int(header[0].split()[1])
    objective, blocks, eqs = [], [], []
    for toks in lines[1:]:
        kind = toks[0]
        if kind == "max":
            objective = [(int(toks[i]), float(toks[i + 1])) for i in range(1, len(toks), 2)]
        elif kind == "psd":
            blocks.append((int(toks[1]), [], []))
        elif kind == "var":
            blocks[-1][1].append((int(toks[1]), int(toks[2]), int(toks[3]), float(toks[4])))
        elif kind == "const":
            blocks[-1][2].append((int(toks[1]), int(toks[2]), float(toks[3])))
        elif kind == "eq":
            body = toks[1:-1]
            eqs.append(([(int(body[i]), float(body[i + 1])) for i in range(0, len(body), 2)], float(toks[-1])))
    return n, objective, blocks, eqs


def main():
    path = sys.argv[1]
    solver = sys.argv[2] if len(sys.argv) > 2 else "CLARABEL"
    n, objective, blocks, eqs = parse(path)
    x = cp.Variable(n)
    constraints = []
    for size, terms, consts in blocks:
        expr = np.zeros((size, size))
        mats = {}
        for r, c, v in consts:
            expr[r, c] += v
            if r != c:
                expr[c, r] += v
        for var, r, c, coeff in terms:
            m = mats.setdefault(var, np.zeros((size, size)))
            m[r, c] += coeff
            if r != c:
                m[c, r] += coeff
        f = expr + sum(x[v] * m for v, m in sorted(mats.items()))
        constraints.append(cp.bmat([[f[i, j] for j in range(size)] for i in range(size)]) >> 0
                           if size > 1 else f[0, 0] >= 0)
    for terms, rhs in eqs:
        constraints.append(sum(c * x[v] for v, c in terms) == rhs)
    prob = cp.Problem(cp.Maximize(sum(c * x[v] for v, c in objective)), constraints)
    kwargs = {"tol_gap_abs": 1e-10, "tol_gap_rel": 1e-10, "tol_feas": 1e-10} if solver == "CLARABEL" else {}
    prob.solve(solver=solver, **kwargs)
    print(f"{prob.value:.17g}")


if __name__ == "__main__":
    main()
