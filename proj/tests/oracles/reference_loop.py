#!/usr/bin/env python3
"""Independent reference for the 1D optimization loop.

Re-derives the Gaussian-mixture noise predictors from the closed forms
(conditional / pooled diffused densities) and replays the same random stream
as the C++ runner (mt19937_64, 53-bit uniforms, Box-Muller normals, draw
order t -> eps -> camera). Used to freeze expected values in test_runner.cpp.

Usage: python3 reference_loop.py
"""
import math

MASK64 = (1 << 64) - 1


class MT19937_64:
    def __init__(self, seed):
        self.mt = [0] * 312
        self.mt[0] = seed & MASK64
        for i in range(1, 312):
            prev = self.mt[i - 1]
            self.mt[i] = (6364136223846793005 * (prev ^ (prev >> 62)) + i) & MASK64
        self.idx = 312

    def _twist(self):
        upper, lower = 0xFFFFFFFF80000000, 0x7FFFFFFF
        for i in range(312):
            x = (self.mt[i] & upper) | (self.mt[(i + 1) % 312] & lower)
            xa = x >> 1
            if x & 1:
                xa ^= 0xB5026F5AA96619E9
            self.mt[i] = self.mt[(i + 156) % 312] ^ xa
        self.idx = 0

    def next(self):
        if self.idx >= 312:
            self._twist()
        y = self.mt[self.idx]
        self.idx += 1
        y ^= (y >> 29) & 0x5555555555555555
        y ^= (y << 17) & 0x71D67FFFEDA60000
        y ^= (y << 37) & 0xFFF7EEE000000000
        y ^= y >> 43
        return y & MASK64


class Stream:
    def __init__(self, seed):
        self.g = MT19937_64(seed)

    def uniform(self):
        return (self.g.next() >> 11) * 2.0 ** -53

    def normal(self):
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def noise_level(t):
    return math.sqrt((1.0 - t) * (1.0 + t)), t


class World1D:
    """classes: {label: [(weight, mean, var), ...]}, uniform prior."""

    def __init__(self, classes):
        self.labels = list(classes)
        self.classes = classes
        p = 1.0 / len(self.labels)
        self.pooled = [(p * w, m, v) for lab in self.labels for (w, m, v) in classes[lab]]

    def comps(self, y):
        return self.pooled if y is None else self.classes[y]

    def log_terms(self, y, x, t):
        a, s = noise_level(t)
        out = []
        for w, m, v in self.comps(y):
            var = a * a * v + s * s
            out.append((math.log(w) - 0.5 * math.log(2 * math.pi * var) - 0.5 * (x - a * m) ** 2 / var, a * m, var))
        return out

    def logq(self, y, x, t):
        terms = [l for l, _, _ in self.log_terms(y, x, t)]
        mx = max(terms)
        return mx + math.log(sum(math.exp(l - mx) for l in terms))

    def eps(self, y, x, t):
        terms = self.log_terms(y, x, t)
        norm = self.logq(y, x, t)
        score = sum(math.exp(l - norm) * (-(x - mu) / var) for l, mu, var in terms)
        return -noise_level(t)[1] * score

    def probs(self, x, t):
        logits = [math.log(1.0 / len(self.labels)) + self.logq(y, x, t) for y in self.labels]
        mx = max(logits)
        z = sum(math.exp(l - mx) for l in logits)
        return {y: math.exp(l - mx) / z for y, l in zip(self.labels, logits)}


def run(world, rule, y, theta, steps, seed, omega=40.0, neg=None, w1=1.0, w2=(0.5, 0.5),
        lr=0.01, b1=0.9, b2=0.99, adam_eps=1e-8, t_min=0.02, t_max=0.98):
    rng = Stream(seed)
    m = v = 0.0
    x_hat = theta
    for k in range(steps):
        u = k / (steps - 1) if steps > 1 else 0.0
        t = t_min + (t_max - t_min) * rng.uniform()
        e = rng.normal()
        rng.uniform()  # camera draw (single camera)
        a, s = noise_level(t)
        xt = a * theta + s * e
        ey, eu = world.eps(y, xt, t), world.eps(None, xt, t)
        if rule == "sds":
            d = (ey - e) + omega * (ey - eu)
        elif rule == "csd":
            d = ey - eu
        elif rule in ("csd_neg", "csd_edit"):
            om2 = w2[0] + (w2[1] - w2[0]) * u if u < 1.0 else w2[1]
            d = w1 * (ey - eu) - om2 * (world.eps(neg, xt, t) - eu)
        elif rule in ("dds", "dds_no_cls"):
            xh = a * x_hat + s * e
            eh = world.eps(neg, xh, t)
            ehu = world.eps(None, xh, t)
            d = (ey - e) - ((eh - e) + omega * (eh - ehu))
            if rule == "dds":
                d += omega * (ey - eu)
        elif rule == "csd_only_from_dds":
            d = omega * (ey - eu)
        else:
            raise ValueError(rule)
        m = b1 * m + (1 - b1) * d
        v = b2 * v + (1 - b2) * d * d
        mh = m / (1 - b1 ** (k + 1))
        vh = v / (1 - b2 ** (k + 1))
        theta -= lr * mh / (math.sqrt(vh) + adam_eps)
    return theta, world.probs(theta, t_min)


TWO_MODE = World1D({"A": [(1.0, -2.0, 0.25)], "B": [(1.0, 2.0, 0.25)]})
THREE_CLASS = World1D({"y": [(1.0, 2.0, 0.1)], "y_neg": [(1.0, 2.8, 0.1)], "other": [(1.0, -2.0, 0.1)]})


def main():
    cases = [
        ("csd two-mode B from 0", lambda: run(TWO_MODE, "csd", "B", 0.0, 2000, 7)),
        ("sds omega=0 two-mode B from 0", lambda: run(TWO_MODE, "sds", "B", 0.0, 2000, 7, omega=0.0)),
        ("anneal fixed", lambda: run(THREE_CLASS, "csd_neg", "y", 0.0, 2000, 7, neg="y_neg", w2=(1.0, 1.0))),
        ("anneal decayed", lambda: run(THREE_CLASS, "csd_neg", "y", 0.0, 2000, 7, neg="y_neg", w2=(1.0, 0.0))),
        ("edit A->B", lambda: run(TWO_MODE, "csd_edit", "B", -2.0, 2000, 7, neg="A", w2=(0.5, 0.5))),
        ("dds omega=0", lambda: run(TWO_MODE, "dds", "B", -2.0, 2000, 7, omega=0.0, neg="A")),
        ("dds_no_cls", lambda: run(TWO_MODE, "dds_no_cls", "B", -2.0, 2000, 7, neg="A")),
        ("csd_only_from_dds", lambda: run(TWO_MODE, "csd_only_from_dds", "B", -2.0, 2000, 7, neg="A")),
    ]
    for name, fn in cases:
        theta, probs = fn()
        print(f"{name}: theta={theta!r} probs={ {k: repr(p) for k, p in probs.items()} }")


if __name__ == "__main__":
    main()
