"""Two-tailed Nemenyi critical values q_alpha (studentized range / sqrt(2), infinite df).

k = 2..10 are the published values of the standard post-hoc table for comparing
classifiers over multiple data sets; k = 11..20 extend it from the
studentized-range distribution, rounded to three decimals the same way.
"""

Q_ALPHA: dict[float, dict[int, float]] = {
    0.05: {
        2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850, 7: 2.949, 8: 3.031, 9: 3.102, 10: 3.164,
        11: 3.219, 12: 3.268, 13: 3.313, 14: 3.354, 15: 3.391, 16: 3.426, 17: 3.458, 18: 3.489,
        19: 3.517, 20: 3.544,
    },
    0.10: {
        2: 1.645, 3: 2.052, 4: 2.291, 5: 2.459, 6: 2.589, 7: 2.693, 8: 2.780, 9: 2.855, 10: 2.920,
        11: 2.978, 12: 3.030, 13: 3.077, 14: 3.120, 15: 3.159, 16: 3.196, 17: 3.230, 18: 3.261,
        19: 3.291, 20: 3.319,
    },
}
