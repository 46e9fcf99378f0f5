"""Independent high-precision evaluations of the closed forms used by the test suite.

Run with `python3 formula_oracle.py`; the printed values are frozen into the Rust
tests. Nothing here imports or mirrors the Rust code paths: the circuit S21 is built
from an explicit ABCD product and the three-mode S21 from an mpmath linear solve.
"""

from mpmath import mp, mpf, mpc, pi, sqrt, log10, findroot, atan, degrees, matrix, lu_solve

mp.dps = 40
j = mpc(0, 1)

TABLE0 = dict(
    f1=mpf("3.935e9"), f2=mpf("5.6778e9"),
    C1=mpf("0.2193e-12"), C2=mpf("0.2988e-12"),
    R1=mpf("0.9831"), R2=mpf("0.8007"),
    M1=mpf("0.215e-9"), M2=mpf(0), M12=mpf(0),
)
LINE = dict(L=mpf("0.9196e-9"), C=mpf("1.2884e-12"), Z0=mpf(50))


def delta_z(f, f1, f2, C1, C2, R1, R2, M1, M2, M12):
    """Reflected impedance of two coupled series-RLC loops, angular convention."""
    w, w1, w2 = 2 * pi * f, 2 * pi * f1, 2 * pi * f2
    num = j * w**3 * (
        C1 * M1**2 * (1 - w**2 / w2**2)
        + C2 * M2**2 * (1 - w**2 / w1**2)
        + 2 * w * M12 * M1 * M2 * C1 * C2
        + j * w * C1 * C2 * (R1 * M2**2 + R2 * M1**2)
    )
    den = (1 - w**2 / w1**2 + j * w * R1 * C1) * (1 - w**2 / w2**2 + j * w * R2 * C2) - w**4 * M12**2 * C1 * C2
    return num / den


def abcd_mul(x, y):
    (a, b, c, d), (e, f, g, h) = x, y
    return (a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)


def s21_circuit(f, line, params):
    w = 2 * pi * f
    zs = j * w * line["L"] + delta_z(f, **params)
    y = j * w * line["C"] / 2
    m = abcd_mul(abcd_mul((1, 0, y, 1), (1, zs, 0, 1)), (1, 0, y, 1))
    a, b, c, d = m
    z0 = line["Z0"]
    return 2 / (a + b / z0 + c * z0 + d)


def s21_hybrid(f, modes, g):
    """modes: [(f0, beta, gamma)] in Hz; g: symmetric 3x3 couplings in Hz."""
    n = len(modes)
    w = 2 * pi * f
    m = matrix(n, n)
    k = matrix(n, 1)
    for i, (fi, bi, gi) in enumerate(modes):
        k[i] = sqrt(2) * sqrt(2 * pi * gi)
        for q, (fq, bq, gq) in enumerate(modes):
            if i == q:
                h = 2 * pi * fi - j * 2 * pi * (bi + gi)
                m[i, q] = j * (w - h)
            else:
                h = 2 * pi * (g[i][q] - j * sqrt(gi * gq))
                m[i, q] = -j * h
    x = lu_solve(m, k)
    return 1 + sum(k[i] * x[i] for i in range(n))


def show(name, value):
    if isinstance(value, mpc):
        print(name, mp.nstr(value.real, 20), mp.nstr(value.imag, 20))
    else:
        print(name, mp.nstr(value, 20))


if __name__ == "__main__":
    show("delta_z table0 at f1", delta_z(mpf("3.935e9"), **TABLE0))
    p30 = dict(TABLE0, f1=mpf("3.7557e9"), M1=mpf("0.184e-9"), M2=mpf("0.093e-9"), M12=mpf("0.01e-9"))
    show("delta_z table30 M12=0.01nH at 4 GHz", delta_z(mpf("4.0e9"), **p30))
    show("s21 table0 at 3.935 GHz", s21_circuit(mpf("3.935e9"), LINE, TABLE0))
    show("s21 table30 M12=0.01nH at 5.6 GHz", s21_circuit(mpf("5.6e9"), LINE, p30))
    bare = dict(TABLE0, M1=mpf(0))
    show("s21 bare line at 4.5 GHz", s21_circuit(mpf("4.5e9"), LINE, bare))
    show("omega(3.935 GHz)", 2 * pi * mpf("3.935e9"))
    show("dB(0.5)", 20 * log10(mpf("0.5")))
    show("kittel 1000 Oe", mpf("2.8e6") * sqrt(1000 * mpf(2750)))
    show("kittel 818 Oe", mpf("2.8e6") * sqrt(818 * mpf(2568)))
    show("H(3.935 GHz)", findroot(lambda h: h * (h + 1750) - (mpf("3935") / mpf("2.8")) ** 2, 800))
    show("H(4.643 GHz)", findroot(lambda h: h * (h + 1750) - (mpf("4643") / mpf("2.8")) ** 2, 1000))

    def beta(f, r, c):
        w = 2 * pi * f
        return w**2 * r * c / 2 / (2 * pi)

    def gamma(f, m, c):
        w = 2 * pi * f
        return w**4 * m**2 * c / (2 * 50) / (2 * pi)

    show("beta1", beta(TABLE0["f1"], TABLE0["R1"], TABLE0["C1"]))
    show("beta2", beta(TABLE0["f2"], TABLE0["R2"], TABLE0["C2"]))
    show("gamma1 at 0 deg", gamma(TABLE0["f1"], TABLE0["M1"], TABLE0["C1"]))
    show("gamma2 at 90 deg", gamma(mpf("5.7138e9"), mpf("0.182e-9"), TABLE0["C2"]))
    show("theta_c(13/3)", degrees(atan(1 / sqrt(mpf(13) / 3))))
    show("theta_c(4.333)", degrees(atan(1 / sqrt(mpf("4.333")))))

    # Three-mode S21, 60 degree column, magnon placed at 3.9 GHz.
    modes = [
        (mpf("3.8816e9"), mpf("11e6"), mpf("0.75e6")),
        (mpf("5.7342e9"), mpf("25e6"), mpf("10e6")),
        (mpf("3.9e9"), mpf("1e6"), mpf("0.01e6")),
    ]
    g = [[0, 0, mpf("98e6")], [0, 0, mpf("50e6")], [mpf("98e6"), mpf("50e6"), 0]]
    for f in ("3.85e9", "3.9e9", "5.7e9"):
        show(f"s21 hybrid 60deg magnon 3.9 GHz at {f}", s21_hybrid(mpf(f), modes, g))
