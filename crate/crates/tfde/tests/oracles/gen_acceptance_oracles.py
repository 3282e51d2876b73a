"""Reference values for the acceptance target, computed with mpmath at 40 digits.

Run: python3 tests/oracles/gen_acceptance_oracles.py
and paste the printed constants into tests/acceptance.rs.
"""
import mpmath as mp

mp.mp.dps = 40


def ml(g, b, z):
    # plain series; the working precision covers the cancellation, whose
    # size is about e^{|z|^{1/g}}
    z = mp.mpc(z)
    extra = int(float(abs(z)) ** (1.0 / g) / 2.3) + 30
    with mp.workdps(mp.mp.dps + extra):
        g, b = mp.mpf(g), mp.mpf(b)
        s = mp.mpc(0)
        k = 0
        while True:
            t = z**k / mp.gamma(g * k + b)
            s += t
            if k > 10 and abs(t) < mp.mpf(10) ** (-(mp.mp.dps + 5)) * max(abs(s), 1):
                return +s
            k += 1


print("// (gamma, beta, re z, im z, re E, im E)")
for g, b, z in [
    ("0.5", "1", mp.mpc(-10, 0)),
    ("0.6", "0.6", mp.mpc(-50, 0)),
    ("0.6", "1.6", mp.mpc(-5, 3)),
    ("0.9", "1", mp.mpc(-20, -20)),
]:
    v = ml(mp.mpf(g), mp.mpf(b), z)
    print(f"({float(g)}, {float(b)}, {mp.nstr(z.real, 6)}, {mp.nstr(z.imag, 6)}, {mp.nstr(v.real, 20)}, {mp.nstr(v.imag, 20)}),")

# left side of the convolution identity by adaptive quadrature:
# int_0^t (t-s)^(g-1) E_{g,g}(-q (t-s)^g) s^(nu-1) ds
g, nu, q, t = mp.mpf("0.6"), mp.mpf(2), mp.mpf(3), mp.mpf(1)
lhs = mp.quad(lambda s: (t - s) ** (g - 1) * ml(g, g, -q * (t - s) ** g) * s ** (nu - 1), [0, 0.5, t])
print("DUHAMEL_LHS =", mp.nstr(mp.re(lhs), 20))
