"""Reference values for the loss tests, computed by direct enumeration in
arbitrary precision. The C++ tests hold the printed constants."""

from mpmath import mp, mpf, exp, log, sqrt

mp.dps = 40

NL = [[0.3, -1.2, 0.5, 2.0], [1.1, 0.4, -0.7, 0.2], [-0.6, 0.9, 1.5, -0.3]]
PL = [[0.8, -0.9, 0.1, 1.7], [0.2, 1.3, -0.4, 0.6], [-1.0, 0.5, 0.9, 0.4]]
TEMPERATURE = mpf("0.07")

POS_LOGITS = [0.7, -1.3, 2.2]
NEG_LOGITS = [-0.4, 0.9, -2.5]


def normalize(rows):
    out = []
    for r in rows:
        r = [mpf(str(v)) for v in r]
        n = sqrt(sum(v * v for v in r))
        out.append([v / n for v in r])
    return out


def info_nce(x, y, t):
    total = mpf(0)
    for i in range(len(x)):
        sims = [sum(a * b for a, b in zip(x[i], y[j])) / t for j in range(len(y))]
        denom = sum(exp(s) for s in sims)
        total += -log(exp(sims[i]) / denom)
    return total / len(x)


def sigmoid(z):
    return 1 / (1 + exp(-z))


def bce(pos, neg):
    total = mpf(0)
    for p, n in zip(pos, neg):
        total += -(log(sigmoid(mpf(str(p)))) + log(1 - sigmoid(mpf(str(n)))))
    return total / len(pos)


if __name__ == "__main__":
    x, y = normalize(NL), normalize(PL)
    print("info_nce_3x4 =", mp.nstr(info_nce(x, y, TEMPERATURE), 17))
    print("info_nce_3x4_symmetric =", mp.nstr((info_nce(x, y, TEMPERATURE) + info_nce(y, x, TEMPERATURE)) / 2, 17))
    print("bce_3 =", mp.nstr(bce(POS_LOGITS, NEG_LOGITS), 17))
    print("dominant_b2 =", mp.nstr(log(1 + exp(-2 / TEMPERATURE)), 17))
