"""Recomputes oracles.csv with mpmath at 40 digits."""
import mpmath as mp

mp.mp.dps = 40

LAMBDA, T, D = 35, 1, mp.mpf("9e9")
SHAPE, SCALE = 1, mp.mpf("1.635e8")
LOG_MEAN, LOG_SD = mp.mpf("18.4"), mp.mpf(1)

hazard = LAMBDA * T


def gamma_trigger_probability():
    total, n = mp.mpf(0), 1
    while True:
        term = mp.exp(-hazard) * mp.power(hazard, n) / mp.factorial(n) * mp.gammainc(n * SHAPE, D / SCALE, mp.inf, regularized=True)
        total += term
        if n > hazard and term < mp.mpf("1e-30"):
            return total
        n += 1


def gamma_tilt():
    a = mp.log(D / (hazard * SHAPE * SCALE)) / 2
    b = 1 / SCALE - hazard * mp.exp(a) * SHAPE / D
    return a, b


def lognormal_tilt():
    s2 = LOG_SD**2

    def condition(b):
        growth = 2 * hazard * b / s2 * mp.exp(b * b / (2 * s2))
        z = (mp.log(D) - LOG_MEAN + b) / LOG_SD
        mills = mp.npdf(z) / (1 - mp.ncdf(z)) / LOG_SD
        return growth - mills

    b = mp.findroot(condition, (mp.mpf("0.01"), mp.mpf("0.2")), solver="anderson")
    return b * b / (2 * s2), b


if __name__ == "__main__":
    ga, gb = gamma_tilt()
    la, lb = lognormal_tilt()
    rows = [
        ("gamma_trigger_probability", gamma_trigger_probability()),
        ("gamma_poisson_tilt", ga),
        ("gamma_severity_tilt", gb),
        ("lognormal_poisson_tilt", la),
        ("lognormal_severity_tilt", lb),
    ]
    print("name,value")
    for name, v in rows:
        print(f"{name},{mp.nstr(v, 17, min_fixed=-1, max_fixed=-1)}")
