"""Log-gamma and regularized incomplete gamma functions.

Scalar kernels are compiled with numba so the CRPS objective, which calls
them several times per forecast case, stays cheap inside the optimizer.
``gammainc_p``/``gammainc_q`` are broadcasting ufuncs over the same kernels.

P(a, x) uses the power series below ``x = a + 1`` and the Legendre continued
fraction above it. Both need on the order of sqrt(a) terms when x is close
to a, so for ``a >= 20`` and ``|x/a - 1| <= 0.3`` the uniform asymptotic
expansion in ``eta`` takes over (coefficients from ``tools/gen_temme.py``).
The common factor ``x^a e^-x / Gamma(a)`` is formed from ``log1p`` and the
Stirling remainder for ``a >= 10``, which keeps it accurate at large shapes.
"""

import math

import numba
import numpy as np

_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array(
    [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ]
)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG_SQRT_PI = 0.5 * math.log(math.pi)
# Stirling remainder: ln Gamma(a) - [(a - 1/2) ln a - a + ln sqrt(2 pi)] = sum_k S_k / a^(2k - 1)
_STIRLING = np.array([1.0 / 12, -1.0 / 360, 1.0 / 1260, -1.0 / 1680, 1.0 / 1188, -691.0 / 360360, 1.0 / 156])
STIRLING_MIN = 10.0

# ln Gamma(1 + a) = sum_k _LGAMMA1P[k - 1] a^k for |a| < 1 (coefficients -gamma, (-1)^k zeta(k) / k)
_LGAMMA1P = np.array([-0.5772156649015329, 0.8224670334241132, -0.40068563438653143, 0.27058080842778454, -0.20738555102867398, 0.1695571769974082, -0.1440498967688461, 0.12550966952474304, -0.11133426586956469, 0.1000994575127818, -0.09095401714582904, 0.083353840546109, -0.0769325164113522, 0.07143294629536133, -0.06666870588242046, 0.06250095514121304, -0.058823978658684585, 0.055555767627403614, -0.05263167937961666, 0.05000004769810169, -0.047619070330142226, 0.04545455629320467, -0.04347826605304026, 0.04166666915034121, -0.04000000119214014])
LGAMMA1P_SERIES_MAX = 0.2

EPS = 1e-15
FPMIN = 1e-300
MAX_ITER = 100_000

TEMME_MIN_SHAPE = 20.0
TEMME_MAX_REL = 0.3
# c_k(eta) = sum_n _TEMME_D[k, n] eta^n
_TEMME_D = np.array([
    [-0.3333333333333333, 0.08333333333333333, -0.014814814814814815, 0.0011574074074074073, 0.0003527336860670194, -0.0001787551440329218, 3.919263178522438e-05, -2.185448510679992e-06, -1.85406221071516e-06, 8.296711340953087e-07, -1.7665952736826078e-07, 6.707853543401498e-09, 1.0261809784240309e-08, -4.382036018453353e-09, 9.14769958223679e-10, -2.5514193994946248e-11, -5.830772132550426e-11, 2.4361948020667415e-11, -5.0276692801141755e-12, 1.1004392031956135e-13, 3.371763262400985e-13, -1.392388722418162e-13, 2.8534893807047445e-14, -5.139111834242572e-16, -1.9752288294349442e-15, 8.099521156704561e-16],
    [-0.001851851851851852, -0.003472222222222222, 0.0026455026455026454, -0.0009902263374485596, 0.00020576131687242798, -4.018775720164609e-07, -1.8098550334489977e-05, 7.64916091608111e-06, -1.6120900894563446e-06, 4.647127802807434e-09, 1.378633446915721e-07, -5.752545603517705e-08, 1.1951628599778148e-08, -1.7543241719747647e-11, -1.0091543710600413e-09, 4.162792991842583e-10, -8.56390702649298e-11, 6.067215101604758e-14, 7.1624989648114856e-12, -2.933186643771437e-12, 5.996696365683689e-13, -2.1671786527323313e-16, -4.978339972369262e-14, 2.0291628823713425e-14, -4.13125571381061e-15, 8.286516239883097e-19],
    [0.004133597883597883, -0.0026813271604938273, 0.0007716049382716049, 2.0093878600823047e-06, -0.0001073665322636516, 5.2923448829120125e-05, -1.2760635188618728e-05, 3.423578734096138e-08, 1.3721957309062934e-06, -6.298992138380055e-07, 1.4280614206064242e-07, -2.0477098421990866e-10, -1.409252991086752e-08, 6.228974084922022e-09, -1.3670488396617114e-09, 9.428356159014678e-13, 1.2872252400089318e-10, -5.5645956134363323e-11, 1.197593554636698e-11, -4.1689782251838634e-15, -1.0940640427884595e-12, 4.662239946390136e-13, -9.905105763906907e-14, 1.8931876768373515e-17, 8.859221872591127e-15, -3.737820398046405e-15],
    [0.0006494341563786008, 0.00022947209362139917, -0.0004691894943952557, 0.00026772063206283885, -7.561801671883977e-05, -2.396505113867297e-07, 1.1082654115347302e-05, -5.6749528269915965e-06, 1.4230900732435883e-06, -2.7861080291528143e-11, -1.6958404091930278e-07, 8.099464905388083e-08, -1.9111168485973655e-08, 2.3928620439808118e-12, 2.0620131815488797e-09, -9.460496661855133e-10, 2.1541049775774907e-10, -1.388823336813903e-14, -2.1894761681963938e-11, 9.790998951171684e-12, -2.178219188018096e-12, 6.208819573407901e-17, 2.126978363279737e-13, -9.344688791517433e-14, 2.045367122678285e-14, -2.58260790403495e-19],
    [-0.0008618882909167117, 0.0007840392217200666, -0.0002990724803031902, -1.4638452578843418e-06, 6.641498215465122e-05, -3.968365047179435e-05, 1.1375726970678419e-05, 2.507497226237533e-10, -1.6954149536558305e-06, 8.907507532205309e-07, -2.292934834000805e-07, 2.956794137544049e-11, 2.8865829742708783e-08, -1.4189739437803219e-08, 3.4463580499464896e-09, -2.3024517174528067e-13, -3.9409233028046403e-10, 1.86023389685045e-10, -4.356323005056618e-11, 1.278600101629623e-15, 4.67927502665792e-12, -2.149246470613483e-12, 4.908815614809652e-13, -6.33859148489156e-18, -5.045332069080094e-14, 2.2722958222901286e-14],
    [-0.00033679855336635813, -6.972813758365857e-05, 0.0002772753244959392, -0.00019932570516188847, 6.797780477937208e-05, 1.419062920643967e-07, -1.3594048189768693e-05, 8.018470256334202e-06, -2.291481176508095e-06, -3.252473551298454e-10, 3.4652846491085265e-07, -1.8447187191171344e-07, 4.8240967037894184e-08, -1.7989466721743514e-14, -6.306194500013523e-09, 3.162417628774568e-09, -7.840924253697429e-10, 5.192679165254041e-15, 9.358944242306784e-11, -4.513426216163278e-11, 1.0799129993116828e-11, -3.661886712685252e-17, -1.210902069055155e-12, 5.680743584990564e-13, -1.3249659916340829e-13, 1.8987240764284076e-19],
    [0.0005313079364639922, -0.0005921664373536939, 0.0002708782096718045, 7.902353232660328e-07, -8.153969367561969e-05, 5.61168275310625e-05, -1.8329116582843375e-05, -3.0796134506033047e-09, 3.465155368803609e-06, -2.0291327396058603e-06, 5.788792863149004e-07, 2.338630673826657e-13, -8.828600746330484e-08, 4.7435958880408125e-08, -1.2545415020710383e-08, 8.649648858010293e-14, 1.6846058979264062e-09, -8.575492823577594e-10, 2.1598224929232125e-10, -7.613230520476153e-16, -2.6639822008536144e-11, 1.3065700536611057e-11, -3.1799163902367977e-12, 4.710976121367431e-18, 3.6902800842763465e-13, -1.7612674046201426e-13],
    [0.00034436760689237765, 5.171790908260592e-05, -0.00033493161081142234, 0.0002812695154763237, -0.00010976582244684731, -1.2741009095484485e-07, 2.7744451511563645e-05, -1.8263488805711332e-05, 5.7876949497350525e-06, 4.93875893393627e-10, -1.0595367014026043e-06, 6.166714376110408e-07, -1.7562973359060463e-07, -1.297447328701544e-12, 2.695423606288966e-08, -1.4578352908731272e-08, 3.887645959386175e-09, -3.881002251019412e-17, -5.327994173877286e-10, 2.7437977643314844e-10, -6.995796092070568e-11, 2.589986387486848e-17, 8.856689099669639e-12, -4.403168815871311e-12, 1.0865561947091654e-12, -2.0467988447416678e-19],
    [-0.0006526239185953094, 0.0008394987206720873, -0.000438297098541721, -6.969091458420552e-07, 0.00016644846642067547, -0.00012783517679769218, 4.629953263691304e-05, 4.557909867922708e-09, -1.0595271125805195e-05, 6.783342904865167e-06, -2.1075476666258803e-06, -1.7213731432817144e-11, 3.773587741611098e-07, -2.1867506700122867e-07, 6.220228804018927e-08, 6.597703826733e-16, -9.590386497425686e-09, 5.213214492280807e-09, -1.3991589583935709e-09, 5.382058999060575e-16, 1.9484714275467745e-10, -1.0127287556389682e-10, 2.6077347197254926e-11, -5.090418699993299e-18, -3.3721464474854593e-12, 1.6953089140808568e-12],
    [-0.0005967612901927463, -7.204895416020011e-05, 0.0006782308837667328, -0.0006401475260262758, 0.00027750107634328704, 1.819700838046515e-07, -8.479507117068503e-05, 6.105192082501531e-05, -2.1073920183404862e-05, -8.858589014125599e-10, 4.5284535953805374e-06, -2.8427815022504407e-06, 8.708234177864641e-07, 3.6886101871706966e-12, -1.534469519070206e-07, 8.862466778790695e-08, -2.5184812301826817e-08, -1.0225912098215092e-14, 3.896947075815478e-09, -2.1267304792235634e-09, 5.737013552805138e-10, -1.8877498501697116e-19, -8.093153869465787e-11, 4.23827232834492e-11, -1.1002224534207725e-11, 2.3327607706802836e-19],
])


@numba.njit(cache=True)
def _lanczos_lgamma(x):
    shift = 0.0
    if x < 0.5:
        # Gamma(x) = Gamma(x + 1) / x; both terms share a sign so nothing cancels
        shift = -math.log(x)
    else:
        x -= 1.0
    acc = _LANCZOS_COEF[0]
    for i in range(1, 9):
        acc += _LANCZOS_COEF[i] / (x + i)
    t = x + _LANCZOS_G + 0.5
    return _LOG_SQRT_2PI + (x + 0.5) * math.log(t) - t + math.log(acc) + shift


@numba.njit(cache=True)
def stirling_remainder(a):
    """``ln Gamma(a) - (a - 1/2) ln a + a - ln sqrt(2 pi)``."""
    if a < STIRLING_MIN:
        return _lanczos_lgamma(a) - (a - 0.5) * math.log(a) + a - _LOG_SQRT_2PI
    inv = 1.0 / a
    inv2 = inv * inv
    acc = 0.0
    for i in range(_STIRLING.size - 1, -1, -1):
        acc = acc * inv2 + _STIRLING[i]
    return acc * inv


@numba.njit(cache=True)
def lgamma(x):
    """Log of the gamma function for x > 0 (Lanczos below 10, Stirling above)."""
    if x < STIRLING_MIN:
        return _lanczos_lgamma(x)
    return (x - 0.5) * math.log(x) - x + _LOG_SQRT_2PI + stirling_remainder(x)


@numba.njit(cache=True)
def lgamma_half_ratio(k):
    """``ln Gamma(k + 1/2) - ln Gamma(k + 1)`` without cancellation at large k."""
    if k < STIRLING_MIN:
        return lgamma(k + 0.5) - lgamma(k + 1.0)
    return (k * math.log1p(-0.5 / (k + 1.0)) - 0.5 * math.log(k + 1.0) + 0.5
            + stirling_remainder(k + 0.5) - stirling_remainder(k + 1.0))


@numba.njit(cache=True)
def log1pmx(m):
    """``ln(1 + m) - m`` accurate for small m."""
    if abs(m) < 0.3:
        # alternating series; 0.3^40 / 40 is below double precision
        term = m
        acc = 0.0
        for n in range(2, 42):
            term *= -m
            acc += term / n
            if abs(term) < 1e-17 * abs(acc):
                break
        return acc
    return math.log1p(m) - m


@numba.njit(cache=True)
def log_gamma_prefix_lg(a, x, lga):
    """``a ln x - x - ln Gamma(a)`` given ``lga = ln Gamma(a)`` (only read below the Stirling range)."""
    if a < STIRLING_MIN:
        return a * math.log(x) - x - lga
    m = (x - a) / a
    if abs(m) < 0.3:
        core = a * log1pmx(m)
    else:
        # log1p(m) near m = -1 would amplify the rounding of m; ln(x / a) does not
        r = x / a
        core = a * (math.log(r) if r > 0.0 else math.log(x) - math.log(a)) - (x - a)
    return core + 0.5 * math.log(a / (2.0 * math.pi)) - stirling_remainder(a)


@numba.njit(cache=True)
def log_gamma_prefix(a, x):
    """``a ln x - x - ln Gamma(a)`` for a, x > 0."""
    return log_gamma_prefix_lg(a, x, _small_lgamma(a))


@numba.njit(cache=True)
def _p_series(a, x, lga):
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * EPS:
            break
    return total * math.exp(log_gamma_prefix_lg(a, x, lga))


@numba.njit(cache=True)
def _lgamma1p_small(a, lga):
    # the Taylor series avoids the cancellation in ln Gamma(a) + ln a near a = 0
    if a >= LGAMMA1P_SERIES_MAX:
        return lga + math.log(a)
    acc = 0.0
    for k in range(_LGAMMA1P.size - 1, -1, -1):
        acc = acc * a + _LGAMMA1P[k]
    return acc * a


@numba.njit(cache=True)
def _q_small_shape(a, x, lga):
    # Q = 1 - x^a / Gamma(1 + a) * (1 + a sum_{n>=1} (-x)^n / (n! (a + n))); the
    # leading difference goes through expm1 so small Q keeps its relative accuracy
    lead = a * math.log(x) - _lgamma1p_small(a, lga)
    term = 1.0
    acc = 0.0
    for n in range(1, MAX_ITER):
        term *= -x / n
        inc = term / (a + n)
        acc += inc
        if abs(inc) < EPS * abs(acc):
            break
    return -math.expm1(lead) - math.exp(lead) * a * acc


@numba.njit(cache=True)
def _q_contfrac(a, x, lga):
    # modified Lentz evaluation of the Legendre continued fraction
    b = x + 1.0 - a
    c = 1.0 / FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < FPMIN:
            d = FPMIN
        c = b + an / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < EPS:
            break
    return math.exp(log_gamma_prefix_lg(a, x, lga)) * h


@numba.njit(cache=True)
def _temme(a, x, upper):
    """P or Q(a, x) from the uniform asymptotic expansion (large a, x near a)."""
    m = (x - a) / a
    eta = math.sqrt(-2.0 * log1pmx(m))
    if m < 0.0:
        eta = -eta
    n_k, n_eta = _TEMME_D.shape
    # terms beyond a^-k < 1e-17 cannot change the result
    n_k = min(n_k, int(17.0 / math.log10(a)) + 1)
    inv_a = 1.0 / a
    series = 0.0
    for k in range(n_k - 1, -1, -1):
        ck = 0.0
        for n in range(n_eta - 1, -1, -1):
            ck = ck * eta + _TEMME_D[k, n]
        series = series * inv_a + ck
    tail = math.exp(-0.5 * a * eta * eta) / math.sqrt(2.0 * math.pi * a) * series
    if upper:
        return 0.5 * math.erfc(eta * math.sqrt(0.5 * a)) + tail
    return 0.5 * math.erfc(-eta * math.sqrt(0.5 * a)) - tail


@numba.njit(cache=True)
def _use_temme(a, x):
    return a >= TEMME_MIN_SHAPE and abs(x - a) <= TEMME_MAX_REL * a


@numba.njit(cache=True)
def regularized_p_lg(a, x, lga):
    """P(a, x) given ``lga = ln Gamma(a)``."""
    if x <= 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if _use_temme(a, x):
        return _temme(a, x, False)
    if x < a + 1.0:
        return _p_series(a, x, lga)
    return 1.0 - _q_contfrac(a, x, lga)


@numba.njit(cache=True)
def regularized_q_lg(a, x, lga):
    """Q(a, x) given ``lga = ln Gamma(a)``."""
    if x <= 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if _use_temme(a, x):
        return _temme(a, x, True)
    if a < 1.0 and x < a + 1.0:
        return _q_small_shape(a, x, lga)
    if x < a + 1.0:
        return 1.0 - _p_series(a, x, lga)
    return _q_contfrac(a, x, lga)


@numba.njit(cache=True)
def _small_lgamma(a):
    # ln Gamma(a) is only consulted below the Stirling range
    return lgamma(a) if a < STIRLING_MIN else 0.0


@numba.njit(cache=True)
def regularized_p(a, x):
    """Lower regularized incomplete gamma P(a, x); 0 for x <= 0."""
    return regularized_p_lg(a, x, _small_lgamma(a))


@numba.njit(cache=True)
def regularized_q(a, x):
    """Upper regularized incomplete gamma Q(a, x) = 1 - P(a, x)."""
    return regularized_q_lg(a, x, _small_lgamma(a))


@numba.vectorize(["float64(float64, float64)"], cache=True)
def gammainc_p(a, x):
    return regularized_p(a, x)


@numba.vectorize(["float64(float64, float64)"], cache=True)
def gammainc_q(a, x):
    return regularized_q(a, x)


@numba.vectorize(["float64(float64)"], cache=True)
def gammaln(x):
    return lgamma(x)
