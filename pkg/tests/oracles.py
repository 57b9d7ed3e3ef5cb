"""Independent reference computations shared by the test modules."""
import numpy as np

from trgppo.clip_solver import gaussian_kl, gaussian_log_ratio


def _grid_extreme(z, delta, mu, sigma, sign):
    mu, log_sigma = np.meshgrid(mu, np.log(sigma), indexing="ij")
    inside = gaussian_kl(mu, log_sigma) <= delta
    vals = np.where(inside, sign * gaussian_log_ratio(z, mu, log_sigma), -np.inf)
    k = np.unravel_index(np.argmax(vals), vals.shape)
    return np.exp(sign * vals[k]), mu[k], np.exp(log_sigma[k])


def brute_force_gaussian(z, delta, n=801, zooms=4):
    """Grid search over mu in [-4, 4], sigma in [0.25, 4], zooming in on the best cell."""
    out = []
    for sign in (-1.0, 1.0):
        mu_lo, mu_hi, s_lo, s_hi = -4.0, 4.0, 0.25, 4.0
        for _ in range(zooms):
            best, m, s = _grid_extreme(z, delta, np.linspace(mu_lo, mu_hi, n),
                                       np.linspace(s_lo, s_hi, n), sign)
            dm, ds = 4 * (mu_hi - mu_lo) / n, 4 * (s_hi - s_lo) / n
            mu_lo, mu_hi, s_lo, s_hi = m - dm, m + dm, max(s - ds, 1e-3), s + ds
        out.append(best)
    return tuple(out)
