"""Generate the coefficient table for the uniform asymptotic expansion of
the incomplete gamma ratios used in ``csgemos.special``.

Q(a, x) = erfc(eta sqrt(a/2)) / 2 + exp(-a eta^2 / 2) / sqrt(2 pi a) * sum_k c_k(eta) a^-k
with lambda = x / a, eta^2 / 2 = lambda - 1 - ln(lambda), sign(eta) = sign(lambda - 1),
c_0 = 1/(lambda - 1) - 1/eta and c_k = (1/eta) c_{k-1}' + (-1)^k g_k / (lambda - 1).

Coefficients are exact rationals; the script prints ``d[k][n]`` with
c_k(eta) = sum_n d[k][n] eta^n.
"""

from fractions import Fraction as F
import sys

K = int(sys.argv[1]) if len(sys.argv) > 1 else 10
N = int(sys.argv[2]) if len(sys.argv) > 2 else 26
ORDER = N + 2 * K + 4

# Stirling series coefficients of Gamma*(a) = sum g_k a^-k
G = [F(1), F(1, 12), F(1, 288), F(-139, 51840), F(-571, 2488320), F(163879, 209018880),
     F(5246819, 75246796800), F(-534703531, 902961561600), F(-4483131259, 86684309913600),
     F(432261921612371, 514904800886784000), F(6232523202521089, 86504006548979712000),
     F(-25834629665134204969, 13494625021640835072000)]


def mul(a, b, n):
    out = [F(0)] * n
    for i, x in enumerate(a[:n]):
        if x:
            for j, y in enumerate(b[: n - i]):
                out[i + j] += x * y
    return out


def inv(a, n):
    # 1 / a for a power series with a[0] != 0
    out = [F(0)] * n
    out[0] = 1 / a[0]
    for k in range(1, n):
        s = sum(a[j] * out[k - j] for j in range(1, min(k, len(a) - 1) + 1))
        out[k] = -s / a[0]
    return out


# mu = lambda - 1 as a series in eta: solve eta^2/2 = mu - log(1 + mu) by fixed-point on coefficients.
# write mu = eta * m(eta); then eta^2/2 = sum_{j>=2} (-1)^j mu^j / j.
def mu_series(n):
    m = [F(1)] + [F(0)] * (n - 1)
    for _ in range(n + 2):
        mu = [F(0)] + m[: n - 1]  # eta * m
        # f(mu) = sum_{j>=2} (-1)^j mu^j / j, series in eta
        total = [F(0)] * n
        power = mul(mu, mu, n)
        j = 2
        while any(power):
            sign = 1 if j % 2 == 0 else -1
            for i in range(n):
                total[i] += sign * power[i] / j
            power = mul(power, mu, n)
            j += 1
            if j > n + 2:
                break
        # residual r = f(mu) - eta^2/2; correct m via Newton-like update on the leading error
        target = [F(0)] * n
        target[2] = F(1, 2)
        resid = [total[i] - target[i] for i in range(n)]
        lead = next((i for i, r in enumerate(resid) if r), None)
        if lead is None:
            break
        # d f / d mu ~ mu ~ eta near 0, so a term r eta^lead is removed by changing m at index lead - 2
        m[lead - 2] -= resid[lead]
    return m


m = mu_series(ORDER + 2)
# 1/mu = eta^-1 * S(eta), S = 1/m
S = inv(m, ORDER + 2)

# Laurent series represented as (offset, coeffs): value = sum coeffs[i] eta^(i + offset)
def deriv_over_eta(series):
    off, cs = series
    out = [F(0)] * len(cs)
    for i, c in enumerate(cs):
        p = i + off
        out[i] = c * p  # eta^(p-1) / eta = eta^(p-2)
    return off - 2, out


def add(a, b):
    off = min(a[0], b[0])
    n = max(a[0] + len(a[1]), b[0] + len(b[1])) - off
    out = [F(0)] * n
    for (o, cs) in (a, b):
        for i, c in enumerate(cs):
            out[i + o - off] += c
    return off, out


def normalize(series, n):
    off, cs = series
    while off < 0:
        if cs[0] != 0:
            raise ValueError(f"pole survives: {cs[0]} eta^{off}")
        cs = cs[1:]
        off += 1
    return [F(0)] * off + cs[: n - off]


inv_mu = (-1, S)
minus_inv_eta = (-1, [F(-1)])
c = [normalize(add(inv_mu, minus_inv_eta), ORDER)]
for k in range(1, K):
    d = deriv_over_eta((0, c[-1]))
    g = (-1, [(-1) ** k * G[k] * s for s in S])
    c.append(normalize(add(d, g), ORDER - 2 * k))

print("_TEMME_D = np.array([")
for k in range(K):
    row = ", ".join(repr(float(x)) for x in c[k][:N])
    print(f"    [{row}],")
print("])")
