"""Compiled inner loops: upwind transport sweeps and cell-centre ray marching."""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def sweep_all(mu, eta, dx, dy, sigt, src, iso, bc):
    """Step-upwind sweeps for every direction.

    Solves ``theta.grad(psi) + sigt*psi = src[k] + iso`` cell by cell with the
    inflow values in ``bc[k]`` (flat boundary layout).  ``src`` has a leading
    axis of length ``n_dirs`` or 1 (direction-independent).
    """
    nk = mu.shape[0]
    nx, ny = sigt.shape
    psi = np.empty((nk, nx, ny))
    ns = src.shape[0]
    off_r = ny
    off_b = 2 * ny
    off_t = 2 * ny + nx
    for k in range(nk):
        ax = abs(mu[k]) / dx
        ay = abs(eta[k]) / dy
        sk = k if ns > 1 else 0
        xpos = mu[k] >= 0.0
        ypos = eta[k] >= 0.0
        for ii in range(nx):
            i = ii if xpos else nx - 1 - ii
            for jj in range(ny):
                j = jj if ypos else ny - 1 - jj
                if ii == 0:
                    ux = bc[k, j] if xpos else bc[k, off_r + j]
                else:
                    ux = psi[k, i - 1, j] if xpos else psi[k, i + 1, j]
                if jj == 0:
                    uy = bc[k, off_b + i] if ypos else bc[k, off_t + i]
                else:
                    uy = psi[k, i, j - 1] if ypos else psi[k, i, j + 1]
                psi[k, i, j] = (src[sk, i, j] + iso[i, j] + ax * ux + ay * uy) / (ax + ay + sigt[i, j])
    return psi


@njit(cache=True, nogil=True)
def march_cells(sig, dx, dy, d0, d1):
    """Optical depth from each cell centre to the boundary along ``(d0, d1)``.

    Returns ``(depth, tau, exit_x, exit_y)`` arrays of shape ``(nx, ny)`` with
    coordinates relative to the grid origin.  ``sig`` is piecewise constant.
    """
    nx, ny = sig.shape
    lx = nx * dx
    ly = ny * dy
    depth = np.zeros((nx, ny))
    taus = np.zeros((nx, ny))
    ex = np.zeros((nx, ny))
    ey = np.zeros((nx, ny))
    inf = np.inf
    for i0 in range(nx):
        for j0 in range(ny):
            x = (i0 + 0.5) * dx
            y = (j0 + 0.5) * dy
            tau = inf
            if d0 > 0.0:
                tau = min(tau, (lx - x) / d0)
            elif d0 < 0.0:
                tau = min(tau, -x / d0)
            if d1 > 0.0:
                tau = min(tau, (ly - y) / d1)
            elif d1 < 0.0:
                tau = min(tau, -y / d1)
            if d0 > 0.0:
                tmx = ((i0 + 1) * dx - x) / d0
                tdx = dx / d0
                sx = 1
            elif d0 < 0.0:
                tmx = (i0 * dx - x) / d0
                tdx = -dx / d0
                sx = -1
            else:
                tmx = inf
                tdx = inf
                sx = 0
            if d1 > 0.0:
                tmy = ((j0 + 1) * dy - y) / d1
                tdy = dy / d1
                sy = 1
            elif d1 < 0.0:
                tmy = (j0 * dy - y) / d1
                tdy = -dy / d1
                sy = -1
            else:
                tmy = inf
                tdy = inf
                sy = 0
            i = i0
            j = j0
            t = 0.0
            acc = 0.0
            while True:
                tn = min(tmx, tmy, tau)
                acc += sig[i, j] * (tn - t)
                t = tn
                if t >= tau:
                    break
                if tmx <= tmy:
                    i += sx
                    tmx += tdx
                else:
                    j += sy
                    tmy += tdy
                if i < 0 or i >= nx or j < 0 or j >= ny:
                    break
            depth[i0, j0] = acc
            taus[i0, j0] = tau
            ex[i0, j0] = x + tau * d0
            ey[i0, j0] = y + tau * d1
    return depth, taus, ex, ey
