"""Term-by-term arithmetic oracle for the relaxation rate law and the
Bleaney direct-phonon estimate. Independent of the Rust implementation;
run with `python3 oracle/relax_oracle.py` to regenerate frozen values."""
import math

H = 6.62607015e-34
KB = 1.380649e-23

R0 = 9.5e-5
ALPHA_D = 1.2e-24
ALPHA = 3.0e4
BETA = 1.3e4
DCF0 = 8.3e11
GCF = 8.0e9
GAMMA = 4.0e8

POINTS = [
    (0.0, 1.6), (6.0, 1.6), (3.0, 4.0), (1.0, 2.0), (2.0, 2.5),
    (4.0, 3.0), (5.0, 3.5), (6.0, 4.5), (3.0, 1.6), (0.5, 4.2),
]


def terms(b, t):
    direct = ALPHA_D * GAMMA ** 2 * b ** 4 * t
    dcf = DCF0 + GCF * b * b
    orbach = (ALPHA + BETA * b * b) / (math.expm1(H * dcf / (KB * t)))
    return R0, direct, orbach


def bleaney(gamma, rho, vl, vt):
    v = (vl + 2.0 * vt) / 3.0
    return 24.0 * math.pi ** 2 * KB * gamma ** 2 / (rho * v ** 5)


if __name__ == "__main__":
    print("B_T,T_K,residual_Hz,direct_Hz,orbach_Hz,rate_Hz")
    for b, t in POINTS:
        r, d, o = terms(b, t)
        print(f"{b},{t},{r!r},{d!r},{o!r},{(r + d + o)!r}")
    print("bleaney", repr(bleaney(4e8, 4564.0, 8600.0, 5000.0)))
