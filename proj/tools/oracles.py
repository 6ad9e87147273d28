#!/usr/bin/env python3
# Copyright 2026 The dfq Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Independent reference values for the unit tests.

Pure NumPy/mpmath re-derivations of the closed forms the C++ tests pin.
Run it and compare with the constants frozen in tests/oracle_values.hpp.
"""
import json
from decimal import ROUND_HALF_UP, Decimal

import mpmath
import numpy as np

mpmath.mp.dps = 40

# Fixed inputs shared with the C++ tests.
LOGITS_4x5 = [
    [0.3, -1.2, 2.1, 0.0, 0.7],
    [-0.5, 0.25, 1.5, -2.0, 0.9],
    [1.1, 1.1, -0.3, 0.4, -1.7],
    [2.5, -0.8, 0.6, 0.05, -0.2],
]
LABELS_4 = [2, 4, 0, 3]
STUDENT_4x5 = [
    [0.1, -0.4, 1.6, 0.3, 0.2],
    [-0.9, 0.5, 1.0, -1.1, 1.4],
    [0.6, 1.8, -0.7, 0.2, -1.0],
    [1.9, -0.1, 0.3, 0.45, -0.6],
]


def gaussian_kl(mu_hat, var_hat, mu, var):
    mu_hat, var_hat, mu, var = map(mpmath.mpf, (mu_hat, var_hat, mu, var))
    return ((mu_hat - mu) ** 2 + var_hat) / (2 * var) - mpmath.log(
        mpmath.sqrt(var_hat) / mpmath.sqrt(var)) - mpmath.mpf(1) / 2


def monte_carlo_kl(n=10**6, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(1.0, 1.0, size=n)
    log_p = -0.5 * (x - 1.0) ** 2
    log_q = -0.5 * x ** 2
    return float(np.mean(log_p - log_q))


def round_half_away(v):
    return int(Decimal(v).quantize(Decimal(1), rounding=ROUND_HALF_UP)) if v >= 0 \
        else -int(Decimal(-v).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def qparams(lo, hi, bits):
    lo, hi = min(Decimal(lo), Decimal(0)), max(Decimal(hi), Decimal(0))
    qmax = 2 ** bits - 1
    scale = (hi - lo) / qmax
    zp = min(max(round_half_away(-lo / scale), 0), qmax)
    return scale, zp


def quantize(x, scale, zp, bits):
    q = round_half_away(Decimal(x) / scale) + zp
    return min(max(q, 0), 2 ** bits - 1)


def log_softmax(row, t=1):
    row = [mpmath.mpf(v) / t for v in row]
    m = max(row)
    lse = m + mpmath.log(sum(mpmath.e ** (v - m) for v in row))
    return [v - lse for v in row]


def cross_entropy(logits, labels):
    return sum(-log_softmax(r)[y] for r, y in zip(logits, labels)) / len(labels)


def soft_cross_entropy(teacher, student, t):
    total = mpmath.mpf(0)
    for tr, sr in zip(teacher, student):
        p = [mpmath.e ** v for v in log_softmax(tr, t)]
        total += -sum(pi * qi for pi, qi in zip(p, log_softmax(sr, t)))
    return total / len(teacher)


def main():
    out = {}
    out["kl_0101"] = float(gaussian_kl(0, 1, 0, 1))
    out["kl_1101"] = float(gaussian_kl(1, 1, 0, 1))
    out["kl_0401"] = float(gaussian_kl(0, 4, 0, 1))
    out["kl_monte_carlo"] = monte_carlo_kl()
    s, zp = qparams(-1, 1, 8)
    out["q8_scale"], out["q8_zero_point"] = float(s), zp
    out["q8_q_of_0.5"] = quantize("0.5", s, zp, 8)
    out["q8_dq_of_0.5"] = float((quantize("0.5", s, zp, 8) - zp) * s)
    out["q8_q_of_10"] = quantize(10, s, zp, 8)
    out["q8_dq_of_10"] = float((quantize(10, s, zp, 8) - zp) * s)
    s, zp = qparams(0, 6, 8)
    out["q8_0_6_scale"], out["q8_0_6_zero_point"] = float(s), zp
    s, zp = qparams(-1, 1, 6)
    out["q6_scale"], out["q6_zero_point"] = float(s), zp
    out["ce_uniform_10"] = float(mpmath.log(10))
    out["ce_4x5"] = float(cross_entropy(LOGITS_4x5, LABELS_4))
    out["kd_4x5_t1"] = float(soft_cross_entropy(LOGITS_4x5, STUDENT_4x5, 1))
    out["kd_4x5_t2"] = float(soft_cross_entropy(LOGITS_4x5, STUDENT_4x5, 2))
    out["ce_student_4x5"] = float(cross_entropy(STUDENT_4x5, LABELS_4))
    out["kd_mixed_half"] = 0.5 * out["kd_4x5_t1"] + 0.5 * out["ce_student_4x5"]
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
