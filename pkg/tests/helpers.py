import numpy as np
from scipy.optimize import linear_sum_assignment


def matched_sin_error(est_az, true_az, period=2.0):
    """Per-path sin-space error under the best one-to-one matching.

    Distances wrap with ``period`` (2 at half-wavelength spacing, where
    sin = -1 and sin = +1 give the same array response).
    """
    d = np.abs(np.sin(np.asarray(est_az))[:, None] - np.sin(np.asarray(true_az))[None, :])
    d = np.minimum(d, period - d)
    r, c = linear_sum_assignment(d)
    return d[r, c]
