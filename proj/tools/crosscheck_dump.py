#!/usr/bin/env python3
"""Solve a cone-program dump with an independent modeling stack (cvxpy).

usage: crosscheck_dump.py PROGRAM.dump [--solver CLARABEL]
Prints the optimal objective with 12 significant digits.
"""
import argparse

import cvxpy as cp
import numpy as np
import scipy.sparse as sp


def read_dump(path):
    n = p = m = None
    c = None
    eq, nonneg, socs = [], [], []
    current = None
    with open(path) as fh:
        for line in fh:
            tok = line.split()
            if not tok:
                continue
            kind = tok[0]
            if kind == "dims":
                n, p, m = map(int, tok[1:4])
                c = np.zeros(n)
            elif kind == "obj":
                for j in range(1, len(tok), 2):
                    c[int(tok[j])] = float(tok[j + 1])
            elif kind in ("eq", "nonneg", "socrow"):
                rhs = float(tok[1])
                assert tok[2] == "|"
                idx = [int(v) for v in tok[3::2]]
                val = [float(v) for v in tok[4::2]]
                row = (rhs, idx, val)
                if kind == "eq":
                    eq.append(row)
                elif kind == "nonneg":
                    nonneg.append(row)
                else:
                    current.append(row)
            elif kind == "soc":
                current = []
                socs.append(current)
            else:
                raise ValueError("unknown record " + kind)
    return n, c, eq, nonneg, socs


def to_matrix(rows, n):
    data, ri, ci = [], [], []
    for r, (_, idx, val) in enumerate(rows):
        ri += [r] * len(idx)
        ci += idx
        data += val
    mat = sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n))
    rhs = np.array([row[0] for row in rows])
    return mat, rhs


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("dump")
    ap.add_argument("--solver", default="CLARABEL")
    args = ap.parse_args()
    n, c, eq, nonneg, socs = read_dump(args.dump)
    x = cp.Variable(n)
    cons = []
    if eq:
        A, b = to_matrix(eq, n)
        cons.append(A @ x == b)
    if nonneg:
        M, h = to_matrix(nonneg, n)
        cons.append(h + M @ x >= 0)
    for cone in socs:
        M, h = to_matrix(cone, n)
        expr = h + M @ x
        cons.append(cp.SOC(expr[0], expr[1:]))
    prob = cp.Problem(cp.Minimize(c @ x), cons)
    prob.solve(solver=getattr(cp, args.solver))
    print(prob.status)
    print("%.12e" % prob.value)


if __name__ == "__main__":
    main()
