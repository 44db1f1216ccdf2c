"""Regenerate the shipped preset design matrices (crates/cli/data/design_k5.csv, design_k13.csv).

Four event-related conditions (U1, U2, F1, F2), 26 events each, TR = 2 s, T = 351 scans.
Sticks at 1/16-TR microtime resolution are convolved with the canonical double-gamma
HRF (and its temporal and dispersion derivatives for the K = 13 design), then sampled
at scan times. The last column is a constant.
"""
import numpy as np
from scipy.stats import gamma

TR = 2.0
T = 351
MICRO = 16
DT = TR / MICRO
SEED = 20170101


def hrf(dt, peak=6.0, under=16.0, disp=1.0, ratio=6.0, length=32.0, shift=0.0):
    t = np.arange(0.0, length + dt, dt) - shift
    h = gamma.pdf(t, peak / disp, scale=disp) - gamma.pdf(t, under, scale=1.0) / ratio
    return h / h.sum()


def onsets():
    rng = np.random.default_rng(SEED)
    cond = np.repeat(np.arange(4), 26)
    rng.shuffle(cond)
    soa = rng.uniform(4.5, 8.0, size=cond.size)
    t = 8.0 + np.concatenate([[0.0], np.cumsum(soa[:-1])])
    assert t[-1] < (T - 16) * TR
    return cond, t


def regressors(basis):
    cond, t = onsets()
    n_micro = T * MICRO + len(basis) + 1
    cols = []
    for c in range(4):
        u = np.zeros(n_micro)
        for o in t[cond == c]:
            u[int(round(o / DT))] += 1.0 / DT
        full = np.convolve(u, basis)[: T * MICRO]
        cols.append(full[::MICRO])
    return cols


def main():
    can = hrf(DT)
    tder = (can - hrf(DT, shift=1.0)) / 1.0
    dder = (can - hrf(DT, disp=1.01)) / 0.01
    k5 = regressors(can) + [np.ones(T)]
    with open("crates/cli/data/design_k5.csv", "w") as f:
        f.write("U1,U2,F1,F2,constant\n")
        for row in np.column_stack(k5):
            f.write(",".join(f"{v:.12e}" for v in row) + "\n")
    per = [regressors(b) for b in (can, tder, dder)]
    cols, names = [], []
    for c, name in enumerate(["U1", "U2", "F1", "F2"]):
        for b, suffix in enumerate(["hrf", "tderiv", "dderiv"]):
            cols.append(per[b][c])
            names.append(f"{name}_{suffix}")
    cols.append(np.ones(T))
    names.append("constant")
    with open("crates/cli/data/design_k13.csv", "w") as f:
        f.write(",".join(names) + "\n")
        for row in np.column_stack(cols):
            f.write(",".join(f"{v:.12e}" for v in row) + "\n")


if __name__ == "__main__":
    main()
