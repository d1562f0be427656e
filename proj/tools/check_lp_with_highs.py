#!/usr/bin/env python3
"""Solve a seqrec-exported .lp file with HiGHS (scipy.optimize.milp).

Usage: check_lp_with_highs.py model.lp

Prints the optimal objective and the decoded path in original POI ids.
The parser only handles the dialect written by `seqrec export-ilp`
(one constraint per line, explicit +/- coefficients).
"""

import re
import sys

import numpy as np
from scipy.optimize import LinearConstraint, milp
from scipy.sparse import lil_matrix

TERM = re.compile(r"([+-])\s*([0-9.eE+-]+)\s+([A-Za-z_0-9]+)")


def parse_expr(expr, var_index):
    coeffs = {}
    expr = expr.strip()
    if not expr.startswith(("+", "-")):
        expr = "+ " + expr
    for sign, value, name in TERM.findall(expr):
        c = float(value) * (1.0 if sign == "+" else -1.0)
        coeffs[var_index[name]] = coeffs.get(var_index[name], 0.0) + c
    return coeffs


def main(path):
    lines = [l.rstrip("\n") for l in open(path)]
    poi_of_index = {}
    for line in lines:
        m = re.match(r"\\ index (\d+) -> poi (\d+)", line)
        if m:
            poi_of_index[int(m.group(1))] = int(m.group(2))

    # Collect variable names in file order: Binaries then Generals.
    names = []
    section = None
    for line in lines:
        stripped = line.strip()
        if stripped in ("Maximize", "Subject To", "Bounds", "Binaries", "Generals", "End"):
            section = stripped
            continue
        if section in ("Binaries", "Generals"):
            names.extend(stripped.split())
    var_index = {n: i for i, n in enumerate(names)}
    n = len(names)

    objective = np.zeros(n)
    constraints = []
    integrality = np.ones(n)
    lower = np.zeros(n)
    upper = np.ones(n)

    section = None
    for line in lines:
        stripped = line.strip()
        if stripped in ("Maximize", "Subject To", "Bounds", "Binaries", "Generals", "End"):
            section = stripped
            continue
        if not stripped or stripped.startswith("\\"):
            continue
        if section == "Maximize":
            expr = stripped.split(":", 1)[1] if ":" in stripped else stripped
            for idx, c in parse_expr(expr, var_index).items():
                objective[idx] += c
        elif section == "Subject To":
            body = stripped.split(":", 1)[1]
            if "<=" in body:
                expr, rhs = body.split("<=")
                lo, hi = -np.inf, float(rhs)
            elif ">=" in body:
                expr, rhs = body.split(">=")
                lo, hi = float(rhs), np.inf
            else:
                expr, rhs = body.split("=")
                lo = hi = float(rhs)
            row = lil_matrix((1, n))
            for idx, c in parse_expr(expr, var_index).items():
                row[0, idx] = c
            constraints.append(LinearConstraint(row.tocsr(), lo, hi))
        elif section == "Bounds":
            m = re.match(r"([0-9.eE+-]+)\s*<=\s*([A-Za-z_0-9]+)\s*<=\s*([0-9.eE+-]+)", stripped)
            if m:
                idx = var_index[m.group(2)]
                lower[idx] = float(m.group(1))
                upper[idx] = float(m.group(3))

    from scipy.optimize import Bounds

    res = milp(c=-objective, constraints=constraints, integrality=integrality,
               bounds=Bounds(lower, upper))
    if res.status != 0:
        print(f"status={res.status} message={res.message}")
        return 1

    # Decode the path from the transition variables.
    edges = {}
    for name, idx in var_index.items():
        if name.startswith("u_") and res.x[idx] > 0.5:
            _, j, k = name.split("_")
            edges[int(j)] = int(k)
    path = [1]
    while path[-1] in edges:
        path.append(edges[path[-1]])
    pois = [poi_of_index.get(i, i) for i in path]

    print(f"objective={-res.fun:.12g}")
    print("path_indices=" + ",".join(map(str, path)))
    print("path_pois=" + ",".join(map(str, pois)))
    return 0


if __name__ == "__main__":
    if len(sys.argv) != 2:
        print(__doc__)
        sys.exit(2)
    sys.exit(main(sys.argv[1]))
