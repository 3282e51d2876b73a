"""Regenerates the frozen reference values in ../oracles.rs.

Mittag-Leffler values come from the defining power series summed in
arbitrary precision (the working precision is raised until the result is
stable), so they are independent of every evaluation path in the crate.

    python3 gen_oracles.py > values.txt
"""
import mpmath as mp

ML_POINTS = [
    (0.5, 1.0, -10.0, 0.0),
    (0.6, 1.0, -30.0, 0.0),
    (0.3, 1.3, -8.0, 0.0),
    (0.8, 4.6, -7.5, 0.0),
    (0.6, 0.6, -50.0, 0.0),
    (0.6, 1.6, -5.0, 3.0),
    (0.9, 1.0, -20.0, -20.0),
    (0.3, 1.0, 1.2, 0.4),
    (0.7, 2.1, 4.0, 0.0),
    (1.0, 1.0, -40.0, 0.0),
    (1.0, 3.0, -25.0, 0.0),
    (0.4, 1.4, -2.0, 9.0),
]


def ml_series(g, b, z, dps):
    mp.mp.dps = dps
    g, b, z = mp.mpf(g), mp.mpf(b), mp.mpc(z)
    s, k, term = mp.mpc(0), 0, mp.mpc(1)
    zk = mp.mpc(1)
    while True:
        term = zk * mp.rgamma(g * k + b)
        s += term
        if k > 10 and abs(term) < mp.mpf(10) ** (-dps + 5) * max(abs(s), mp.mpf(10) ** -300):
            break
        zk *= z
        k += 1
    return s


def ml(g, b, z):
    r = float(abs(z)) ** (1.0 / g)
    dps = int(r / 2.3) + 60
    a = ml_series(g, b, z, dps)
    c = ml_series(g, b, z, dps + 40)
    assert abs(a - c) <= mp.mpf(10) ** -40 * max(abs(c), mp.mpf(10) ** -300)
    return c


def main():
    print("// (gamma, beta, re z, im z, re E, im E)")
    for g, b, x, y in ML_POINTS:
        v = ml(g, b, mp.mpc(x, y))
        print(f"({g!r}, {b!r}, {x!r}, {y!r}, {mp.nstr(v.real, 20)}, {mp.nstr(v.imag, 20)}),")
    mp.mp.dps = 40
    print("// lower incomplete gamma (a, x, value)")
    for a, x in [(0.5, 2.0), (2.5, 0.7), (1.3, 12.0), (7.0, 3.0)]:
        print(f"({a!r}, {x!r}, {mp.nstr(mp.gammainc(a, 0, x), 20)}),")
    print("// gamma (x, value)")
    for x in [0.1, 0.5, 1.5, 2.3, 4.6, 10.5, -0.4, -2.7]:
        print(f"({x!r}, {mp.nstr(mp.gamma(x), 20)}),")
    # right integral of e^{-x}, lambda = 1, mu = 0.7 on (0,1) at x = 0.3:
    # (1/Gamma(mu)) int_x^1 (s-x)^{mu-1} e^{-(s-x)} e^{-s} ds
    mu, x = mp.mpf("0.7"), mp.mpf("0.3")
    v = mp.quad(lambda s: (s - x) ** (mu - 1) * mp.exp(-(s - x)) * mp.exp(-s), [x, 1]) / mp.gamma(mu)
    print(f"// right tempered integral example\n{mp.nstr(v, 20)}")


if __name__ == "__main__":
    main()
