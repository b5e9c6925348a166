"""Reference refractive and group indices for congruent lithium niobate.

Coefficients are transcribed directly from the published tables and
evaluated in 40-digit arithmetic. Group indices come from a central
finite difference of the index (step 1e-4 um), never from the analytic
derivative used by the library.

Writes ../fixtures/dispersion.json
"""
import json
import os
import random

from mpmath import mp, mpf, sqrt

mp.dps = 40

# n^2 = A + (B + C T^2)/(lambda^2 - (D + E T^2)^2) - F lambda^2 (+ G T^2 on e-axis), T in kelvin
HOBDEN_WARNER = {
    "ordinary": lambda l, t: 4.9130 + (0.1173 + 1.65e-8 * t**2) / (l**2 - (0.212 + 2.7e-8 * t**2) ** 2) - 0.0278 * l**2,
    "extraordinary": lambda l, t: 4.5567 + 2.605e-7 * t**2
    + (0.0970 + 2.70e-8 * t**2) / (l**2 - (0.201 + 5.4e-8 * t**2) ** 2) - 0.0224 * l**2,
}


def n_hw(axis, lam_um, temp_c):
    t = mpf(temp_c) + mpf("273.15")
    return sqrt(HOBDEN_WARNER[axis](mpf(lam_um), t))


# Edwards & Lawrence: F = (T - 24.5)(T + 570.5)
EL = {
    "ordinary": (4.9048, 0.11775, 0.21802, 0.027153, 2.2314e-8, -2.9671e-8, 2.1429e-8),
    "extraordinary": (4.5820, 0.099169, 0.21090, 0.021940, 5.2716e-8, -4.9143e-8, 2.2971e-7),
}


def n_el(axis, lam_um, temp_c):
    a1, a2, a3, a4, b1, b2, b3 = [mpf(x) for x in EL[axis]]
    t = mpf(temp_c)
    f = (t - mpf("24.5")) * (t + mpf("570.5"))
    l = mpf(lam_um)
    return sqrt(a1 + b3 * f + (a2 + b1 * f) / (l**2 - (a3 + b2 * f) ** 2) - a4 * l**2)


def group_fd(fn, axis, lam, temp, h=mpf("1e-4")):
    lam = mpf(lam)
    d = (fn(axis, lam + h, temp) - fn(axis, lam - h, temp)) / (2 * h)
    return fn(axis, lam, temp) - lam * d


def point(fn, axis, lam, temp):
    return {
        "axis": axis,
        "wavelength_um": lam,
        "temperature_c": temp,
        "index": float(fn(axis, lam, temp)),
        "group_index": float(group_fd(fn, axis, lam, temp)),
    }


def main():
    rng = random.Random(1558)
    named = [
        point(n_hw, "extraordinary", 1.550, 25.0),
        point(n_hw, "ordinary", 1.550, 25.0),
        point(n_hw, "extraordinary", 1.558, 25.0),
        point(n_hw, "ordinary", 0.779, 25.0),
    ]
    grid = []
    for _ in range(100):
        axis = rng.choice(["ordinary", "extraordinary"])
        lam = round(rng.uniform(0.5, 2.5), 6)
        temp = round(rng.uniform(0.0, 150.0), 3)
        grid.append(point(n_hw, axis, lam, temp))
    el = [point(n_el, "extraordinary", 1.550, 25.0), point(n_el, "ordinary", 1.550, 25.0)]
    out = {"hobden_warner_1966": {"named": named, "grid": grid}, "edwards_lawrence_1984": {"named": el}}
    path = os.path.join(os.path.dirname(__file__), "..", "fixtures", "dispersion.json")
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2)
        fh.write("\n")


if __name__ == "__main__":
    main()
