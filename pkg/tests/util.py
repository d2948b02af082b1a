"""Shared independent oracles for the test suite.

Everything here is deliberately naive (O(n^2) transforms, straight-line
loops) so it cannot share a bug with the library code it checks.
"""
import numpy as np


def naive_dft(x):
    """Direct O(n^2) discrete Fourier transform."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[0]
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    w = np.exp(-2j * np.pi * j * k / n)
    return w @ x


def two_pass_mean_std(column):
    """Textbook two-pass mean and population standard deviation."""
    total = 0.0
    for v in column:
        total += float(v)
    mean = total / len(column)
    acc = 0.0
    for v in column:
        acc += (float(v) - mean) ** 2
    return mean, (acc / len(column)) ** 0.5


def least_squares_slope(xs, ys):
    """Slope and intercept of the least-squares line, by the closed form."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    xm, ym = xs.mean(), ys.mean()
    slope = float(np.sum((xs - xm) * (ys - ym)) / np.sum((xs - xm) ** 2))
    return slope, float(ym - slope * xm)


def two_tone(n=1024, f1=0.05, f2=0.25):
    t = np.arange(n)
    return (
        np.cos(2 * np.pi * f1 * t) + np.cos(2 * np.pi * f2 * t),
        np.cos(2 * np.pi * f1 * t),
        np.cos(2 * np.pi * f2 * t),
    )


def rel_rmse(approx, truth):
    approx = np.asarray(approx, dtype=float)
    truth = np.asarray(truth, dtype=float)
    return float(np.sqrt(np.mean((approx - truth) ** 2)) / np.sqrt(np.mean(truth**2)))
