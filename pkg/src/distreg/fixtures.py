"""Synthetic monthly demand and temperature data with a planted slope.

Usage: ``python -m distreg.fixtures OUTDIR [--seed N]``.

Two regions share a seasonal temperature cycle plus AR(1) anomalies in level
and spread. The slope is planted on the CLR of each month's *population*
predictor, which is the region mixture of normals widened by the KDE kernel
(variance ``sd**2 + h**2`` with ``h`` the Silverman bandwidth at the true
``sd``). Sample KDEs then scatter around that predictor as measurement error.
The slope lies in the span of the two leading principal directions of the
population predictors, so a truncated fit can identify it.
"""

from __future__ import annotations

import argparse
import calendar
import csv
import json
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import stats

from .basis import Grid, make_basis, project_many
from .density import DensityEstimate
from .transforms import clr

SUPPORT = Grid(-20.0, 40.0, 0.1)
START_YEAR = 2001
N_MONTHS = 251
OBS_DAYS = 24  # two readings a day on days 1..24
WINDOW = 12
REGIONS = {"north": (-2.0, 1.1), "south": (2.0, 0.9)}  # mean offset, spread factor
WEIGHTS = {"2001": {"north": 0.5, "south": 0.5}, "2011": {"north": 0.6, "south": 0.4}}
BASIS = ("fourier", 15, False)
PCA_COEFS = (-0.05, 0.04)
NOISE_SD = 0.02
LOG_SCALE = 8.0


def bundled_dir() -> Path:
    return Path(str(resources.files("distreg") / "data" / "synthetic"))


def bundled_config() -> Path:
    return bundled_dir() / "config.json"


def _labels():
    out = []
    for t in range(N_MONTHS):
        y, m = divmod(t, 12)
        out.append((START_YEAR + y, m + 1))
    return out


def _weights_for(year):
    keys = sorted(int(k) for k in WEIGHTS if int(k) <= year)
    return WEIGHTS[str(keys[-1])]


def generate(seed: int = 20240):
    rng = np.random.Generator(np.random.PCG64(seed))
    months = _labels()
    phase = np.cos(2 * np.pi * (np.arange(N_MONTHS) % 12 + 0.5) / 12)
    a = np.zeros(N_MONTHS)
    b = np.zeros(N_MONTHS)
    for t in range(1, N_MONTHS):
        a[t] = 0.7 * a[t - 1] + rng.normal(0, 1.2)
        b[t] = 0.7 * b[t - 1] + rng.normal(0, 0.3)
    mu = 12 - 13 * phase + a
    sd = 5 + 1.5 * phase + b
    n_obs = 2 * OBS_DAYS
    basis = make_basis(*BASIS[:2], SUPPORT, BASIS[2])

    temps = []
    population = []
    for t, (year, month) in enumerate(months):
        w = _weights_for(year)
        mix = np.zeros(SUPPORT.size)
        for region, (offset, factor) in REGIONS.items():
            s_r = sd[t] * factor
            draws = np.round(rng.normal(mu[t] + offset, s_r, n_obs), 2)
            temps.append((year, month, region, draws))
            h = 0.9 * s_r * n_obs**-0.2
            mix += w[region] * stats.norm.pdf(SUPPORT.points, mu[t] + offset, np.hypot(s_r, h))
        population.append(clr(DensityEstimate.normalized(SUPPORT, mix)).f.values)
    x0 = project_many(np.array(population), basis)

    # principal directions of the predictors that enter the regression
    used = x0[WINDOW - 1 :]
    centered = used - used.mean(axis=0)
    ev, vecs = np.linalg.eigh(centered.T @ centered)
    vecs = vecs[:, ::-1][:, : len(PCA_COEFS)]
    vecs = vecs * np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])])
    slope = vecs @ np.array(PCA_COEFS)

    signal = x0 @ slope
    y = signal - signal[WINDOW - 1 :].mean() + rng.normal(0, NOISE_SD, N_MONTHS)

    # invert the trailing moving average: y_t = L_t - mean(L_{t-11..t})
    logv = np.empty(N_MONTHS)
    logv[: WINDOW - 1] = rng.normal(0, 0.05, WINDOW - 1)
    for t in range(WINDOW - 1, N_MONTHS):
        logv[t] = (WINDOW * y[t] + logv[t - WINDOW + 1 : t].sum()) / (WINDOW - 1)
    days = np.array([calendar.monthrange(yr, mo)[1] for yr, mo in months])
    gwh = days * np.exp(LOG_SCALE + logv)

    truth = {
        "transform": "clr",
        "basis": basis.to_dict(),
        "slope": slope.tolist(),
        "y_first_month": f"{months[WINDOW - 1][0]:04d}-{months[WINDOW - 1][1]:02d}",
        "definition": "slope coefficients on the CLR of the kernel-widened population density mixture",
        "noise_sd": NOISE_SD,
        "seed": seed,
    }
    return months, gwh, temps, truth, mu


def _shock_months(months, mu, month_of_year):
    picks = [(t, f"{y:04d}-{m:02d}") for t, (y, m) in enumerate(months) if m == month_of_year and t >= WINDOW - 1]
    labels = [lab for _, lab in picks]
    extreme = min(picks, key=lambda p: mu[p[0]]) if month_of_year == 1 else max(picks, key=lambda p: mu[p[0]])
    return labels, extreme[1]


def write(out_dir, seed: int = 20240) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    months, gwh, temps, truth, mu = generate(seed)

    with open(out / "demand.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year_month", "gwh"])
        for (y, m), v in zip(months, gwh):
            w.writerow([f"{y:04d}-{m:02d}", repr(float(v))])

    with open(out / "temperature.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "region", "temp_c"])
        for y, m, region, draws in temps:
            for i, v in enumerate(draws):
                day, hour = 1 + i // 2, 12 * (i % 2)
                w.writerow([f"{y:04d}-{m:02d}-{day:02d}T{hour:02d}:00:00", region, f"{v:.2f}"])

    (out / "truth.json").write_text(json.dumps(truth, indent=2) + "\n")

    jan, cold = _shock_months(months, mu, 1)
    jul, hot = _shock_months(months, mu, 7)
    config = {
        "support": SUPPORT.to_dict(),
        "transform": "clr",
        "basis": {"kind": BASIS[0], "size": BASIS[1], "includes_constant": BASIS[2]},
        "eps": 1e-3,
        "kappa": 1,
        "k_rule": "scaled",
        "level": 0.95,
        "demand": {"path": "demand.csv", "window": WINDOW, "alignment": "trailing"},
        "temperature": {"path": "temperature.csv", "min_observations": 24},
        "regions": {"by_year": WEIGHTS},
        "shocks": [
            {"name": "cold_january", "norm": jan, "extr": cold, "M": 4},
            {"name": "hot_july", "norm": jul, "extr": hot, "M": 4},
        ],
        "response": {"h": 15.0, "start": -15.0, "stop": 35.0, "step": 1.0},
        "simulation": {"T_list": [500, 1000], "reps": 200, "coverage_reps": 500, "level": 0.95, "kappa": 1},
        "truth": "truth.json",
        "output": "out",
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    return out / "config.json"


def main(argv=None):
    p = argparse.ArgumentParser(prog="python -m distreg.fixtures", description=__doc__.splitlines()[0])
    p.add_argument("out_dir", nargs="?", default=str(bundled_dir()))
    p.add_argument("--seed", type=int, default=20240)
    args = p.parse_args(argv)
    print(write(args.out_dir, args.seed))


if __name__ == "__main__":
    main()
