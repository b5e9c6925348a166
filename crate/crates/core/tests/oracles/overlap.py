"""Power coupling between aligned elliptical Gaussian modes by direct 2D quadrature.

Fields are exp(-x^2/wx^2 - y^2/wy^2) with w the 1/e^2 intensity radius.
eta = |int E1 E2|^2 / (int E1^2 int E2^2), trapezoidal rule on a fine grid.

Writes ../fixtures/overlap.json
"""
import json
import os

import numpy as np


def overlap(a, b, half_width=25.0, n=4001):
    x = np.linspace(-half_width, half_width, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    e1 = np.exp(-(X / a[0]) ** 2 - (Y / a[1]) ** 2)
    e2 = np.exp(-(X / b[0]) ** 2 - (Y / b[1]) ** 2)

    def integ(f):
        trapezoid = getattr(np, "trapezoid", None) or np.trapz
        return trapezoid(trapezoid(f, x, axis=1), x)

    return float(integ(e1 * e2) ** 2 / (integ(e1 * e1) * integ(e2 * e2)))


def main():
    fiber = (3.04, 3.04)
    cases = {
        "te_vs_fiber": {"a": [3.5, 2.35], "b": list(fiber)},
        "tm_vs_fiber": {"a": [2.65, 1.7], "b": list(fiber)},
        "skewed": {"a": [1.0, 6.0], "b": [4.0, 2.0]},
    }
    for case in cases.values():
        case["efficiency"] = overlap(case["a"], case["b"])
    path = os.path.join(os.path.dirname(__file__), "..", "fixtures", "overlap.json")
    with open(path, "w") as fh:
        json.dump(cases, fh, indent=2)
        fh.write("\n")


if __name__ == "__main__":
    main()
