"""Hot numeric kernels with numba-jitted and pure-numpy twins.

The jitted path is used when numba imports cleanly; set the environment
variable ``PARASCOPE_NUMBA=0`` before import to force the numpy path
(``benchmarks/bench_kernels.py`` times one against the other).  Both twins
of a kernel compute the same quantity; tests pin them together to 1e-12.

Kernels live here only if they are genuinely hot and not already
BLAS-bound: the surrogate's matrix products stay plain numpy, where a jit
rewrite buys nothing.
"""

import os

import numpy as np

_FLAG = os.environ.get("PARASCOPE_NUMBA", "1").strip().lower()
_WANT_NUMBA = _FLAG not in ("0", "false", "no", "off")

if _WANT_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
        numba = None
else:
    numba = None

USING_NUMBA = numba is not None


def backend_name() -> str:
    return "numba" if USING_NUMBA else "numpy"


# --- combined-distance KDE log density (the HMC-critical kernel) -----------

def kde_log_density_grad_numpy(z, centers, fims, inv_ss2, inv_sf2):
    """Log of the combined-kernel density and its gradient, batched.

    For each row ``z_b`` computes ``logsumexp_i(-|z_b - c_i|^2 * inv_ss2
    - (z_b - c_i)^T F_i (z_b - c_i) * inv_sf2)`` with max-subtraction, and
    the softmax-weighted gradient of the same expression.

    Parameters
    ----------
    z : (B, d) float64
    centers : (N, d) float64
    fims : (N, d, d) float64
    inv_ss2, inv_sf2 : float
        Precomputed ``1 / sigma^2`` factors for the Euclidean and
        information-metric terms.

    Returns
    -------
    (B,) log densities (unnormalized), (B, d) gradients.
    """
    diff = z[:, None, :] - centers[None, :, :]          # (B, N, d)
    fdiff = np.einsum("nde,bne->bnd", fims, diff)       # F_i (z - c_i)
    quad = np.einsum("bnd,bnd->bn", diff, fdiff)
    expo = -np.einsum("bnd,bnd->bn", diff, diff) * inv_ss2 - quad * inv_sf2
    m = expo.max(axis=1)
    w = np.exp(expo - m[:, None])
    s = w.sum(axis=1)
    logp = m + np.log(s)
    w /= s[:, None]
    gterms = -2.0 * (diff * inv_ss2 + fdiff * inv_sf2)  # (B, N, d)
    grad = np.einsum("bn,bnd->bd", w, gterms)
    return logp, grad


def quadform_matrix_numpy(z, centers, fims):
    """(B, N) matrix of quadratic forms (z_b - c_i)^T F_i (z_b - c_i)."""
    diff = z[:, None, :] - centers[None, :, :]
    return np.einsum("bnd,nde,bne->bn", diff, fims, diff)


def gaussian_kernel_mean_numpy(x, y, inv_2h2):
    """Mean over all pairs of exp(-|x_a - y_b|^2 * inv_2h2)."""
    d2 = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2)
    return float(np.exp(-d2 * inv_2h2).mean())


if USING_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _kde_log_density_grad_jit(z, centers, fims, inv_ss2, inv_sf2):
        B, d = z.shape
        N = centers.shape[0]
        logp = np.empty(B)
        grad = np.empty((B, d))
        expo = np.empty(N)
        fd = np.empty((N, d))
        for b in range(B):
            m = -np.inf
            for i in range(N):
                quad = 0.0
                eucl = 0.0
                for r in range(d):
                    acc = 0.0
                    dr = z[b, r] - centers[i, r]
                    eucl += dr * dr
                    for c in range(d):
                        acc += fims[i, r, c] * (z[b, c] - centers[i, c])
                    fd[i, r] = acc
                    quad += dr * acc
                e = -eucl * inv_ss2 - quad * inv_sf2
                expo[i] = e
                if e > m:
                    m = e
            s = 0.0
            for i in range(N):
                expo[i] = np.exp(expo[i] - m)
                s += expo[i]
            logp[b] = m + np.log(s)
            for r in range(d):
                g = 0.0
                for i in range(N):
                    dr = z[b, r] - centers[i, r]
                    g += expo[i] * (-2.0) * (dr * inv_ss2 + fd[i, r] * inv_sf2)
                grad[b, r] = g / s
        return logp, grad

    @njit(cache=True)
    def _quadform_matrix_jit(z, centers, fims):
        B, d = z.shape
        N = centers.shape[0]
        out = np.empty((B, N))
        for b in range(B):
            for i in range(N):
                quad = 0.0
                for r in range(d):
                    acc = 0.0
                    for c in range(d):
                        acc += fims[i, r, c] * (z[b, c] - centers[i, c])
                    quad += (z[b, r] - centers[i, r]) * acc
                out[b, i] = quad
        return out

    @njit(cache=True)
    def _gaussian_kernel_mean_jit(x, y, inv_2h2):
        n, d = x.shape
        m = y.shape[0]
        total = 0.0
        for a in range(n):
            for b in range(m):
                d2 = 0.0
                for r in range(d):
                    dr = x[a, r] - y[b, r]
                    d2 += dr * dr
                total += np.exp(-d2 * inv_2h2)
        return total / (n * m)

    def kde_log_density_grad(z, centers, fims, inv_ss2, inv_sf2):
        return _kde_log_density_grad_jit(
            np.ascontiguousarray(z), centers, fims, inv_ss2, inv_sf2
        )

    def quadform_matrix(z, centers, fims):
        return _quadform_matrix_jit(np.ascontiguousarray(z), centers, fims)

    def gaussian_kernel_mean(x, y, inv_2h2):
        return float(_gaussian_kernel_mean_jit(
            np.ascontiguousarray(x), np.ascontiguousarray(y), inv_2h2
        ))

else:
    kde_log_density_grad = kde_log_density_grad_numpy
    quadform_matrix = quadform_matrix_numpy
    gaussian_kernel_mean = gaussian_kernel_mean_numpy
