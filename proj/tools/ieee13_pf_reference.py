#!/usr/bin/env python3
"""Independent reference power flow for a feeder file.

Solves the constant-power nodal equations V * conj(Y V) = s with a damped
Newton method on the bus admittance matrix (no sweep), then writes one row per
node/phase: node, phase, |V| (pu), angle (deg).

usage: ieee13_pf_reference.py FEEDER [--load-scale K] [--out FILE]
"""
import argparse
import sys

import numpy as np
from scipy.optimize import root

PH = "abc"


def parse(path):
    sec = None
    nodes, order, branches, loads = {}, [], [], {}
    v_base, s_base, slack = 2400.0, 1e6, None
    for raw in open(path):
        line = raw.split("#")[0].strip()
        if not line:
            continue
        if line.startswith("["):
            sec = line[1:-1]
            continue
        if sec == "bases":
            key, val = [t.strip() for t in line.split("=")]
            if key == "v_base":
                v_base = float(val)
            elif key == "s_base":
                s_base = float(val)
        elif sec == "nodes":
            tk = line.split()
            nodes[tk[0]] = [PH.index(c) for c in tk[1]]
            order.append(tk[0])
            if len(tk) == 5:
                slack = tk[0]
        elif sec == "branches":
            head, body = line.split("|")
            h = head.split()
            length, unit = float(h[4]), h[5]
            scale = length if unit == "pu" else length / (v_base * v_base / s_base)
            z = np.array([[complex(e.replace("j", "j")) for e in row.split()] for row in body.split(";")]) * scale
            branches.append((h[0], h[1], [PH.index(c) for c in h[2]], z))
        elif sec == "loads":
            tk = line.split()
            s = complex(float(tk[2]), float(tk[3]))
            s = s * 1e3 / s_base if tk[4] == "kw" else s
            key = (tk[0], PH.index(tk[1]))
            loads[key] = loads.get(key, 0) + s
    return order, nodes, branches, loads, slack


def solve(path, k=1.0):
    order, nodes, branches, loads, slack = parse(path)
    idx = {}
    for n in order:
        for p in nodes[n]:
            idx[(n, p)] = len(idx)
    m = len(idx)
    Y = np.zeros((m, m), dtype=complex)
    for f, t, ph, z in branches:
        y = np.linalg.inv(z[np.ix_(ph, ph)])
        fi = [idx[(f, p)] for p in ph]
        ti = [idx[(t, p)] for p in ph]
        Y[np.ix_(fi, fi)] += y
        Y[np.ix_(ti, ti)] += y
        Y[np.ix_(fi, ti)] -= y
        Y[np.ix_(ti, fi)] -= y
    a = np.exp(-2j * np.pi / 3)
    v0 = np.array([1, a, a * a])
    sl = [idx[(slack, p)] for p in nodes[slack]]
    pq = [i for i in range(m) if i not in sl]
    s = np.zeros(m, dtype=complex)
    for (n, p), val in loads.items():
        s[idx[(n, p)]] -= k * val
    vs = np.array([v0[p] for p in nodes[slack]])
    phase_of = {i: p for (n, p), i in idx.items()}

    def full(x):
        v = np.zeros(m, dtype=complex)
        v[sl] = vs
        v[pq] = x[: len(pq)] + 1j * x[len(pq):]
        return v

    def resid(x):
        v = full(x)
        mis = v * np.conj(Y @ v) - s
        return np.concatenate([mis[pq].real, mis[pq].imag])

    start = np.array([v0[phase_of[i]] for i in pq])
    sol = root(resid, np.concatenate([start.real, start.imag]), method="hybr", tol=1e-14)
    v = full(sol.x)
    worst = np.abs(resid(sol.x)).max()
    if worst > 1e-10:
        sys.exit("reference power flow did not converge: mismatch %g" % worst)
    return order, nodes, idx, v, worst


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("feeder")
    ap.add_argument("--load-scale", type=float, default=1.0)
    ap.add_argument("--out")
    args = ap.parse_args()
    order, nodes, idx, v, worst = solve(args.feeder, args.load_scale)
    lines = ["# node\tphase\tmagnitude_pu\tangle_deg\t(mismatch %.1e)" % worst]
    for n in order:
        for p in nodes[n]:
            x = v[idx[(n, p)]]
            lines.append("%s\t%s\t%.12f\t%.10f" % (n, PH[p], abs(x), np.degrees(np.angle(x))))
    text = "\n".join(lines) + "\n"
    if args.out:
        open(args.out, "w").write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    main()
