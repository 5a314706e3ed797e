#!/usr/bin/env python3
"""Writes data/fixture_design.txt, the design of the bundled synthetic fixture.

Per skill, occupation effects take the form b * r_o + c * u_o where
r_o = log(online share / population share) and u_o is a fixed random
direction orthogonal to r. The intercept a and the scalars b, c are solved so
that the synthetic online mean, population mean and Cramer's V with occupation
hit the published pooled values. Small NACE and province effects are drawn
once from a seeded generator and held fixed during the solve.

Usage: fit_fixture_design.py [output_path]
"""

import sys
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

SEED = 20240607

WAVES = [2011, 2013, 2014]
POPULATION = {2011: 717750, 2013: 428890, 2014: 527250}  # 10x published totals
TOTALS_SCALE = 0.1
SAMPLE = {2011: 12700, 2013: 13400, 2014: 12000}

# code: (population %, online %)
OCCUPATION = {
    "11": (0.49, 1.68), "12": (1.70, 2.22), "13": (1.27, 2.02), "14": (0.29, 2.78),
    "21": (4.45, 4.09), "22": (3.33, 1.47), "23": (0.91, 2.00), "24": (6.73, 14.65),
    "25": (3.94, 8.17), "26": (0.71, 0.91), "31": (1.51, 1.50), "32": (0.79, 0.58),
    "33": (4.37, 19.33), "34": (0.97, 0.53), "35": (1.73, 0.78), "41": (1.41, 1.82),
    "42": (5.20, 2.53), "43": (1.28, 1.46), "44": (2.52, 0.51), "51": (2.41, 3.10),
    "52": (8.79, 16.49), "54": (1.28, 1.16), "71": (9.53, 1.71), "72": (7.09, 2.36),
    "73": (0.72, 0.25), "74": (2.09, 1.23), "75": (5.64, 1.18), "81": (2.71, 0.35),
    "82": (2.72, 0.21), "83": (7.99, 1.67), "91": (1.35, 0.19), "93": (2.20, 0.49),
    "94": (1.26, 0.26), "96": (0.60, 0.31),
}

NACE_SHARE = {
    "C": 25, "F": 9, "G": 14, "H": 7, "I": 3, "J": 5, "K": 4,
    "M": 6, "N": 5, "O": 5, "P": 3, "Q": 7, "R": 2, "S": 2,
}

# Relative standard errors (percent) of vacancy totals by NACE section.
NACE_REL_SE = {
    "C": (5.50, 5.27, 5.64), "F": (13.86, 19.21, 15.12), "G": (13.69, 15.75, 16.33),
    "H": (8.07, 9.93, 9.17), "I": (15.99, 20.78, 18.26), "J": (6.30, 7.04, 11.50),
    "K": (7.00, 8.36, 7.43), "M": (8.12, 8.71, 12.01), "N": (23.09, 12.89, 17.76),
    "O": (3.19, 3.50, 2.56), "P": (8.85, 10.65, 12.06), "Q": (5.53, 6.88, 6.00),
    "R": (7.08, 8.68, 9.28), "S": (18.09, 21.29, 20.77),
}
TOTAL_REL_SE = (3.40, 4.01, 3.98)

# Missing-data percentages: occupation, nace, province.
MISSING = {2011: (0.33, 6.04, 1.06), 2013: (0.40, 56.86, 0.01), 2014: (0.49, 41.98, 0.21)}

PROVINCE_POP = {
    "02": 2.90, "04": 2.09, "06": 2.16, "08": 1.02, "10": 2.53, "12": 3.35, "14": 5.32, "16": 1.01,
    "18": 2.13, "20": 1.20, "22": 2.29, "24": 4.62, "26": 1.27, "28": 1.45, "30": 3.47, "32": 1.72,
}

# skill: (online %, population %, Cramer's V with occupation)
SKILLS = {
    "Artistic": (15.8, 12.5, 0.22),
    "Availability": (20.9, 19.6, 0.15),
    "Cognitive": (20.9, 14.6, 0.21),
    "Computer": (33.0, 22.3, 0.45),
    "Interpersonal": (53.8, 35.1, 0.42),
    "Managerial": (26.2, 16.8, 0.34),
    "Mathematical": (0.4, 0.4, 0.05),
    "Office": (3.9, 3.2, 0.11),
    "Physical": (5.4, 7.5, 0.17),
    "Self-organization": (58.6, 43.9, 0.34),
    "Technical": (4.3, 7.7, 0.31),
}

# NACE affinity multipliers by major occupation group, then by 2-digit code.
GROUP_AFFINITY = {
    "1": {"K": 2, "M": 2, "G": 1.5, "O": 1.5},
    "2": {"J": 3, "M": 3, "P": 4, "Q": 4, "K": 2, "C": 0.6},
    "3": {"K": 3, "M": 2, "G": 1.5, "Q": 2, "J": 1.5},
    "4": {"K": 2, "N": 2, "O": 2, "G": 1.5},
    "5": {"G": 4, "I": 4, "N": 2, "S": 2},
    "7": {"C": 3, "F": 5},
    "8": {"C": 4, "H": 4, "F": 1.5},
    "9": {"N": 3, "I": 2, "F": 2, "C": 1.5},
}
CODE_AFFINITY = {
    "14": {"I": 4, "G": 3}, "22": {"Q": 10}, "23": {"P": 10}, "25": {"J": 8}, "32": {"Q": 10},
    "35": {"J": 8}, "54": {"N": 5}, "71": {"F": 10}, "83": {"H": 8}, "94": {"I": 6},
}


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def main():
    out_path = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "data" / "fixture_design.txt"
    rng = np.random.default_rng(SEED)

    occ = list(OCCUPATION)
    nace = list(NACE_SHARE)
    prov = list(PROVINCE_POP)
    pop = np.array([OCCUPATION[o][0] for o in occ])
    onl = np.array([OCCUPATION[o][1] for o in occ])
    pop /= pop.sum()
    onl /= onl.sum()
    nace_m = np.array([NACE_SHARE[n] for n in nace], dtype=float)
    nace_m /= nace_m.sum()
    prov_s = np.array([PROVINCE_POP[p] for p in prov])
    prov_s /= prov_s.sum()

    cond = np.empty((len(occ), len(nace)))
    for i, o in enumerate(occ):
        mult = np.ones(len(nace))
        for table in (GROUP_AFFINITY.get(o[0], {}), CODE_AFFINITY.get(o, {})):
            for n, m in table.items():
                mult[nace.index(n)] *= m
        row = nace_m * mult
        cond[i] = row / row.sum()

    r = np.log(onl / pop)
    r_c = r - r.mean()

    n_total = sum(SAMPLE.values())
    dof = (len(occ) - 1)
    lines = []
    emit = lines.append
    emit("# Synthetic fixture design, generated by tools/fit_fixture_design.py.")
    emit("# Occupation shares and online over-representation follow the published")
    emit("# population/online occupation distribution; skill models are fit so the")
    emit("# pooled online mean, population mean and occupation association match")
    emit("# published pooled values. This is not the survey microdata.")
    emit("waves = " + ",".join(str(w) for w in WAVES))
    for w in WAVES:
        emit(f"population.{w} = {POPULATION[w]}")
        emit(f"sample.{w} = {SAMPLE[w]}")
    emit(f"totals_scale = {TOTALS_SCALE}")
    emit("levels.occupation = " + ",".join(occ))
    emit("levels.nace = " + ",".join(nace))
    emit("levels.province = " + ",".join(prov))
    for o, s in zip(occ, pop):
        emit(f"share.occupation.{o} = {s:.10g}")
    for p, s in zip(prov, prov_s):
        emit(f"share.province.{p} = {s:.10g}")
    for i, o in enumerate(occ):
        for j, n in enumerate(nace):
            emit(f"nace.given.{o}.{n} = {cond[i, j]:.10g}")
    for o, x in zip(occ, r):
        emit(f"selection.occupation.{o} = {x:.10g}")
    for t, w in enumerate(WAVES):
        for c, rate in zip(("occupation", "nace", "province"), MISSING[w]):
            emit(f"missing.{w}.{c} = {rate / 100:.6g}")
        emit(f"rel_se.{w}.total = {TOTAL_REL_SE[t]}")
        for n in nace:
            emit(f"rel_se.{w}.{n} = {NACE_REL_SE[n][t]}")

    for name, (online_pct, pop_pct, v) in SKILLS.items():
        u = rng.normal(size=len(occ))
        u -= u.mean()
        u -= (u @ r_c) / (r_c @ r_c) * r_c
        u /= np.sqrt((u ** 2).mean())
        nace_eff = rng.normal(scale=0.2, size=len(nace))
        prov_eff = rng.normal(scale=0.08, size=len(prov))

        # Pr(skill | occupation) averaged over nace | occupation and province.
        def occ_prev(a, b, c):
            lin = a + b * r + c * u
            eta = lin[:, None, None] + nace_eff[None, :, None] + prov_eff[None, None, :]
            p = sigmoid(eta)
            return (p * cond[:, :, None] * prov_s[None, None, :]).sum(axis=(1, 2))

        target_v2 = max(v * v - dof / n_total, 1e-6)

        def residual(theta):
            p = occ_prev(*theta)
            m_onl = onl @ p
            m_pop = pop @ p
            v2 = (onl @ (p - m_onl) ** 2) / (m_onl * (1 - m_onl))
            return [
                (m_onl - online_pct / 100) / (online_pct / 100),
                (m_pop - pop_pct / 100) / (pop_pct / 100),
                (v2 - target_v2) / target_v2,
            ]

        p0 = online_pct / 100
        fit = least_squares(residual, x0=[np.log(p0 / (1 - p0)), 0.0, 0.1], xtol=1e-14, ftol=1e-14, gtol=1e-14)
        a, b, c = fit.x
        res = np.abs(residual(fit.x)).max()
        print(f"{name:18s} a={a:+.4f} b={b:+.4f} c={c:+.4f} max_rel_residual={res:.2e}", file=sys.stderr)
        emit(f"skill.{name}.intercept = {a:.12g}")
        for o, x in zip(occ, b * r + c * u):
            emit(f"skill.{name}.occupation.{o} = {x:.12g}")
        for n, x in zip(nace, nace_eff):
            emit(f"skill.{name}.nace.{n} = {x:.12g}")
        for p, x in zip(prov, prov_eff):
            emit(f"skill.{name}.province.{p} = {x:.12g}")

    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(lines) + "\n")
    print(f"wrote {out_path}", file=sys.stderr)


if __name__ == "__main__":
    main()
