#!/usr/bin/env python3
"""Reference implementation of the NAB changepoint scoring procedure.

Independent oracle used to freeze the fixture values asserted in
tests/test_metrics.cpp. Implements the scoring rules of the Numenta
Anomaly Benchmark (Lavin & Ahmad, ICMLA 2015; github.com/numenta/NAB):

  * scaled sigmoid positional weight, clamped to -1 beyond y > 3
  * per truth window, only the best (earliest) detection scores
  * undetected windows cost the FN weight
  * detections outside every window cost the FP weight, scaled by the
    sigmoid of the distance past the preceding window's right edge
  * raw scores normalised so null detector -> 0, perfect detector -> 100

Run directly to print the fixture table.
"""

import math

PROFILES = {
    "standard": (1.0, 0.11, 1.0),
    "lowFP": (1.0, 0.22, 1.0),
    "lowFN": (1.0, 0.11, 2.0),
}


def scaled_sigmoid(y):
    if y > 3.0:
        return -1.0
    return 2.0 / (1.0 + math.exp(5.0 * y)) - 1.0


MAX_TP = scaled_sigmoid(-1.0)


def nab_raw(flags, windows, tp_w, fp_w, fn_w):
    score = 0.0
    for (ws, we) in windows:
        width = float(we - ws + 1)
        best = None
        for i in range(ws, we + 1):
            if flags[i]:
                pos = -(we - i + 1) / width
                w = scaled_sigmoid(pos) * tp_w / MAX_TP
                if best is None or w > best:
                    best = w
        score += best if best is not None else -fn_w
    for i, f in enumerate(flags):
        if not f:
            continue
        if any(ws <= i <= we for (ws, we) in windows):
            continue
        prev = None
        for (ws, we) in windows:
            if we < i:
                prev = (ws, we)
        if prev is None:
            unweighted = -1.0
        else:
            ws, we = prev
            denom = float(we - ws)  # width - 1
            if denom <= 0.0:
                unweighted = -1.0
            else:
                unweighted = scaled_sigmoid((i - we) / denom)
        score += unweighted * fp_w
    return score


def nab_score(flags, windows, profile):
    tp_w, fp_w, fn_w = PROFILES[profile]
    raw = nab_raw(flags, windows, tp_w, fp_w, fn_w)
    null = -fn_w * len(windows)
    perfect = tp_w * len(windows)
    if perfect == null:
        return 0.0
    return 100.0 * (raw - null) / (perfect - null)


def flags_from(indices, n):
    f = [False] * n
    for i in indices:
        f[i] = True
    return f


FIXTURES = [
    ("two windows, one early + one mid detection",
     flags_from([10, 55], 100), [(10, 19), (50, 59)]),
    ("lone FP far past both windows, nothing detected",
     flags_from([85], 100), [(10, 19), (50, 59)]),
    ("FP before any window plus late detection in second window",
     flags_from([3, 59], 100), [(10, 19), (50, 59)]),
    ("cluster of detections, only earliest in window counts",
     flags_from([22, 23, 24, 25, 40, 41], 80), [(20, 29), (60, 69)]),
    ("perfect detector", flags_from([10, 50], 100), [(10, 19), (50, 59)]),
    ("null detector", flags_from([], 100), [(10, 19), (50, 59)]),
]

if __name__ == "__main__":
    for name, flags, windows in FIXTURES:
        scores = [nab_score(flags, windows, p) for p in ("standard", "lowFP", "lowFN")]
        print(f"{name}: standard={scores[0]:.10f} lowFP={scores[1]:.10f} lowFN={scores[2]:.10f}")
