"""Numba kernels for projection, tile binning, compositing, and peripheral
degradation.

All kernels parallelize over independent work items (splats, tiles, rows)
and write disjoint outputs, so framebuffers are bit-identical regardless of
thread count or schedule. fastmath stays off: results must be reproducible
against the numpy reference renderer.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange


@njit(cache=True, nogil=True, parallel=True)
def project_splats(positions, rotations, scales, opacities,
                   w_mat, cam_pos, near, focal, cx, cy,
                   width, height, sigma_cutoff, dilation, alpha_min,
                   keep, means2d, conics, depths, aabbs):
    """Per-splat projection: screen mean, conic, depth, pixel aabb, cull flag.

    Culls: depth <= near; opacity below alpha_min (can never contribute);
    singular screen covariance (det < 1e-12); mean farther from the viewport
    than sigma_cutoff times the footprint max extent; footprint covering no
    pixel center.
    """
    n = positions.shape[0]
    for i in prange(n):
        keep[i] = 0
        if opacities[i] < alpha_min:
            continue
        rx = positions[i, 0] - cam_pos[0]
        ry = positions[i, 1] - cam_pos[1]
        rz = positions[i, 2] - cam_pos[2]
        camx = w_mat[0, 0] * rx + w_mat[0, 1] * ry + w_mat[0, 2] * rz
        camy = w_mat[1, 0] * rx + w_mat[1, 1] * ry + w_mat[1, 2] * rz
        camz = w_mat[2, 0] * rx + w_mat[2, 1] * ry + w_mat[2, 2] * rz
        d = -camz
        if d <= near:
            continue

        u = cx + focal * camx / d
        v = cy - focal * camy / d

        qw = rotations[i, 0]
        qx = rotations[i, 1]
        qy = rotations[i, 2]
        qz = rotations[i, 3]
        r00 = 1.0 - 2.0 * (qy * qy + qz * qz)
        r01 = 2.0 * (qx * qy - qw * qz)
        r02 = 2.0 * (qx * qz + qw * qy)
        r10 = 2.0 * (qx * qy + qw * qz)
        r11 = 1.0 - 2.0 * (qx * qx + qz * qz)
        r12 = 2.0 * (qy * qz - qw * qx)
        r20 = 2.0 * (qx * qz - qw * qy)
        r21 = 2.0 * (qy * qz + qw * qx)
        r22 = 1.0 - 2.0 * (qx * qx + qy * qy)

        sx = scales[i, 0]
        sy = scales[i, 1]
        sz = scales[i, 2]
        # M = R diag(s); Sigma3d = M M^T
        m00 = r00 * sx
        m01 = r01 * sy
        m02 = r02 * sz
        m10 = r10 * sx
        m11 = r11 * sy
        m12 = r12 * sz
        m20 = r20 * sx
        m21 = r21 * sy
        m22 = r22 * sz
        s3_00 = m00 * m00 + m01 * m01 + m02 * m02
        s3_01 = m00 * m10 + m01 * m11 + m02 * m12
        s3_02 = m00 * m20 + m01 * m21 + m02 * m22
        s3_11 = m10 * m10 + m11 * m11 + m12 * m12
        s3_12 = m10 * m20 + m11 * m21 + m12 * m22
        s3_22 = m20 * m20 + m21 * m21 + m22 * m22

        # Sigma_cam = W Sigma3d W^T
        t00 = w_mat[0, 0] * s3_00 + w_mat[0, 1] * s3_01 + w_mat[0, 2] * s3_02
        t01 = w_mat[0, 0] * s3_01 + w_mat[0, 1] * s3_11 + w_mat[0, 2] * s3_12
        t02 = w_mat[0, 0] * s3_02 + w_mat[0, 1] * s3_12 + w_mat[0, 2] * s3_22
        t10 = w_mat[1, 0] * s3_00 + w_mat[1, 1] * s3_01 + w_mat[1, 2] * s3_02
        t11 = w_mat[1, 0] * s3_01 + w_mat[1, 1] * s3_11 + w_mat[1, 2] * s3_12
        t12 = w_mat[1, 0] * s3_02 + w_mat[1, 1] * s3_12 + w_mat[1, 2] * s3_22
        t20 = w_mat[2, 0] * s3_00 + w_mat[2, 1] * s3_01 + w_mat[2, 2] * s3_02
        t21 = w_mat[2, 0] * s3_01 + w_mat[2, 1] * s3_11 + w_mat[2, 2] * s3_12
        t22 = w_mat[2, 0] * s3_02 + w_mat[2, 1] * s3_12 + w_mat[2, 2] * s3_22
        c00 = t00 * w_mat[0, 0] + t01 * w_mat[0, 1] + t02 * w_mat[0, 2]
        c01 = t00 * w_mat[1, 0] + t01 * w_mat[1, 1] + t02 * w_mat[1, 2]
        c02 = t00 * w_mat[2, 0] + t01 * w_mat[2, 1] + t02 * w_mat[2, 2]
        c11 = t10 * w_mat[1, 0] + t11 * w_mat[1, 1] + t12 * w_mat[1, 2]
        c12 = t10 * w_mat[2, 0] + t11 * w_mat[2, 1] + t12 * w_mat[2, 2]
        c22 = t20 * w_mat[2, 0] + t21 * w_mat[2, 1] + t22 * w_mat[2, 2]

        # J = [[f/d, 0, f*x/d^2], [0, -f/d, -f*y/d^2]]
        j00 = focal / d
        j02 = focal * camx / (d * d)
        j11 = -focal / d
        j12 = -focal * camy / (d * d)
        # Sigma2d = J Sigma_cam J^T
        a = (j00 * (j00 * c00 + j02 * c02)
             + j02 * (j00 * c02 + j02 * c22)) + dilation
        b = (j11 * (j00 * c01 + j02 * c12)
             + j12 * (j00 * c02 + j02 * c22))
        c = (j11 * (j11 * c11 + j12 * c12)
             + j12 * (j11 * c12 + j12 * c22)) + dilation

        det = a * c - b * b
        if det < 1e-12:
            continue

        half = 0.5 * (a - c)
        lam_max = 0.5 * (a + c) + math.sqrt(max(half * half + b * b, 0.0))
        extent = sigma_cutoff * math.sqrt(max(lam_max, 0.0))
        margin = sigma_cutoff * extent
        dx_out = max(max(0.0 - u, u - width), 0.0)
        dy_out = max(max(0.0 - v, v - height), 0.0)
        if dx_out * dx_out + dy_out * dy_out > margin * margin:
            continue

        rad_x = sigma_cutoff * math.sqrt(a)
        rad_y = sigma_cutoff * math.sqrt(c)
        ix0 = int(math.ceil(u - rad_x - 0.5))
        ix1 = int(math.floor(u + rad_x - 0.5))
        iy0 = int(math.ceil(v - rad_y - 0.5))
        iy1 = int(math.floor(v + rad_y - 0.5))
        # footprint must cover a pixel center inside the viewport (checked
        # before clipping so off-screen splats are not pinned to the border)
        if (ix1 < 0 or iy1 < 0 or ix0 > width - 1 or iy0 > height - 1
                or ix0 > ix1 or iy0 > iy1):
            continue
        ix0 = max(ix0, 0)
        iy0 = max(iy0, 0)
        ix1 = min(ix1, width - 1)
        iy1 = min(iy1, height - 1)

        means2d[i, 0] = u
        means2d[i, 1] = v
        conics[i, 0] = c / det
        conics[i, 1] = -b / det
        conics[i, 2] = a / det
        depths[i] = d
        aabbs[i, 0] = ix0
        aabbs[i, 1] = iy0
        aabbs[i, 2] = ix1
        aabbs[i, 3] = iy1
        keep[i] = 1


@njit(cache=True, nogil=True)
def bin_csr(aabbs, tile_size, ntx, nty):
    """CSR tile lists from clipped integer pixel aabbs (x0,y0,x1,y1).

    Splats are visited in array order, so per-tile lists preserve the global
    front-to-back order when aabbs arrive depth-sorted.
    """
    m = aabbs.shape[0]
    ntiles = ntx * nty
    counts = np.zeros(ntiles + 1, dtype=np.int64)
    for j in range(m):
        tx0 = aabbs[j, 0] // tile_size
        ty0 = aabbs[j, 1] // tile_size
        tx1 = aabbs[j, 2] // tile_size
        ty1 = aabbs[j, 3] // tile_size
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                counts[ty * ntx + tx + 1] += 1
    offsets = np.cumsum(counts)
    indices = np.empty(offsets[-1], dtype=np.int64)
    cursor = offsets[:-1].copy()
    for j in range(m):
        tx0 = aabbs[j, 0] // tile_size
        ty0 = aabbs[j, 1] // tile_size
        tx1 = aabbs[j, 2] // tile_size
        ty1 = aabbs[j, 3] // tile_size
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                t = ty * ntx + tx
                indices[cursor[t]] = j
                cursor[t] += 1
    return offsets, indices


@njit(cache=True, nogil=True, parallel=True)
def composite_tiles(width, height, tile_size, ntx,
                    offsets, indices,
                    means2d, conics, colors, alphas, aabbs,
                    tile_mask,
                    alpha_min, alpha_max, t_floor,
                    out_rgb, out_t, tile_samples):
    """Full-resolution front-to-back compositing of the masked tiles.

    Per pixel: alpha = min(alpha_max, base * exp(-0.5 * d' conic d)), values
    below alpha_min skipped, compositing stops once transmittance drops under
    t_floor. Splats are pre-filtered per pixel row to cut aabb rejections.
    Background is NOT composited here (done by the caller). Output buffers
    must arrive zero-initialized (rgb) and one-initialized (transmittance).
    """
    ntiles = tile_mask.size
    for tid in prange(ntiles):
        if tile_mask[tid] == 0:
            continue
        ty = tid // ntx
        tx = tid % ntx
        x0 = tx * tile_size
        y0 = ty * tile_size
        x1 = min(x0 + tile_size, width)
        y1 = min(y0 + tile_size, height)
        s0 = offsets[tid]
        s1 = offsets[tid + 1]
        tile_samples[tid] = (x1 - x0) * (y1 - y0)
        if s0 == s1:
            continue
        row_ids = np.empty(s1 - s0, dtype=np.int64)
        for py in range(y0, y1):
            nrow = 0
            for k in range(s0, s1):
                j = indices[k]
                if aabbs[j, 1] <= py and py <= aabbs[j, 3]:
                    row_ids[nrow] = j
                    nrow += 1
            if nrow == 0:
                continue
            pcy = py + 0.5
            for px in range(x0, x1):
                pcx = px + 0.5
                t = 1.0
                r = 0.0
                g = 0.0
                b = 0.0
                for k in range(nrow):
                    if t < t_floor:
                        break
                    j = row_ids[k]
                    if px < aabbs[j, 0] or px > aabbs[j, 2]:
                        continue
                    dx = pcx - means2d[j, 0]
                    dy = pcy - means2d[j, 1]
                    q = (conics[j, 0] * dx * dx
                         + 2.0 * conics[j, 1] * dx * dy
                         + conics[j, 2] * dy * dy)
                    a = alphas[j] * math.exp(-0.5 * q)
                    if a > alpha_max:
                        a = alpha_max
                    if a < alpha_min:
                        continue
                    w = t * a
                    r += w * colors[j, 0]
                    g += w * colors[j, 1]
                    b += w * colors[j, 2]
                    t *= 1.0 - a
                out_rgb[py, px, 0] = r
                out_rgb[py, px, 1] = g
                out_rgb[py, px, 2] = b
                out_t[py, px] = t


@njit(cache=True, nogil=True, parallel=True)
def composite_peripheral_samples(width, height, tile_size, ntx, stride,
                                 offsets, indices,
                                 means2d, conics, colors, alphas, aabbs,
                                 peri_tiles,
                                 alpha_min, alpha_max, t_floor,
                                 samp_rgb, samp_t, samp_counts):
    """Composite peripheral tiles at every stride-th pixel center.

    Sample (sy, sx) of peripheral tile p sits at pixel (y0 + sy*stride,
    x0 + sx*stride); results land in per-tile slabs for later upsampling.
    Compositing semantics match composite_tiles exactly.
    """
    for p in prange(peri_tiles.size):
        tid = peri_tiles[p]
        ty = tid // ntx
        tx = tid % ntx
        x0 = tx * tile_size
        y0 = ty * tile_size
        x1 = min(x0 + tile_size, width)
        y1 = min(y0 + tile_size, height)
        n_sx = (x1 - x0 + stride - 1) // stride
        n_sy = (y1 - y0 + stride - 1) // stride
        samp_counts[p] = n_sx * n_sy
        s0 = offsets[tid]
        s1 = offsets[tid + 1]
        if s0 == s1:
            continue
        row_ids = np.empty(s1 - s0, dtype=np.int64)
        for sy in range(n_sy):
            py = y0 + sy * stride
            nrow = 0
            for k in range(s0, s1):
                j = indices[k]
                if aabbs[j, 1] <= py and py <= aabbs[j, 3]:
                    row_ids[nrow] = j
                    nrow += 1
            if nrow == 0:
                continue
            pcy = py + 0.5
            for sx in range(n_sx):
                px = x0 + sx * stride
                pcx = px + 0.5
                t = 1.0
                r = 0.0
                g = 0.0
                b = 0.0
                for k in range(nrow):
                    if t < t_floor:
                        break
                    j = row_ids[k]
                    if px < aabbs[j, 0] or px > aabbs[j, 2]:
                        continue
                    dx = pcx - means2d[j, 0]
                    dy = pcy - means2d[j, 1]
                    q = (conics[j, 0] * dx * dx
                         + 2.0 * conics[j, 1] * dx * dy
                         + conics[j, 2] * dy * dy)
                    a = alphas[j] * math.exp(-0.5 * q)
                    if a > alpha_max:
                        a = alpha_max
                    if a < alpha_min:
                        continue
                    w = t * a
                    r += w * colors[j, 0]
                    g += w * colors[j, 1]
                    b += w * colors[j, 2]
                    t *= 1.0 - a
                samp_rgb[p, sy, sx, 0] = r
                samp_rgb[p, sy, sx, 1] = g
                samp_rgb[p, sy, sx, 2] = b
                samp_t[p, sy, sx] = t


@njit(cache=True, nogil=True, parallel=True)
def upsample_peripheral(width, height, tile_size, ntx, stride,
                        peri_tiles, samp_rgb, samp_t,
                        out_rgb, out_t):
    """Clamped bilinear upsampling of per-tile sample slabs to full resolution."""
    for p in prange(peri_tiles.size):
        tid = peri_tiles[p]
        ty = tid // ntx
        tx = tid % ntx
        x0 = tx * tile_size
        y0 = ty * tile_size
        x1 = min(x0 + tile_size, width)
        y1 = min(y0 + tile_size, height)
        n_sx = (x1 - x0 + stride - 1) // stride
        n_sy = (y1 - y0 + stride - 1) // stride
        for py in range(y0, y1):
            gy = (py - y0) / stride
            iy0 = int(gy)
            if iy0 > n_sy - 1:
                iy0 = n_sy - 1
            iy1 = min(iy0 + 1, n_sy - 1)
            fy = gy - iy0
            for px in range(x0, x1):
                gx = (px - x0) / stride
                ix0 = int(gx)
                if ix0 > n_sx - 1:
                    ix0 = n_sx - 1
                ix1 = min(ix0 + 1, n_sx - 1)
                fx = gx - ix0
                w00 = (1.0 - fy) * (1.0 - fx)
                w01 = (1.0 - fy) * fx
                w10 = fy * (1.0 - fx)
                w11 = fy * fx
                for ch in range(3):
                    out_rgb[py, px, ch] = (w00 * samp_rgb[p, iy0, ix0, ch]
                                           + w01 * samp_rgb[p, iy0, ix1, ch]
                                           + w10 * samp_rgb[p, iy1, ix0, ch]
                                           + w11 * samp_rgb[p, iy1, ix1, ch])
                out_t[py, px] = (w00 * samp_t[p, iy0, ix0]
                                 + w01 * samp_t[p, iy0, ix1]
                                 + w10 * samp_t[p, iy1, ix0]
                                 + w11 * samp_t[p, iy1, ix1])


@njit(cache=True, nogil=True, parallel=True)
def srgb_encode_flat(linear, out):
    """Linear [0,1] floats -> 8-bit sRGB, standard piecewise transfer."""
    for i in prange(linear.size):
        c = linear[i]
        if c < 0.0:
            c = 0.0
        elif c > 1.0:
            c = 1.0
        if c <= 0.0031308:
            s = 12.92 * c
        else:
            s = 1.055 * c ** (1.0 / 2.4) - 0.055
        v = int(s * 255.0 + 0.5)
        if v > 255:
            v = 255
        out[i] = v


@njit(cache=True, nogil=True, parallel=True)
def masked_box_h(rgb, mask, radius, num_h, den_h):
    """Horizontal (2r+1) box sums of rgb*mask and mask; zero outside the image."""
    h, w = mask.shape
    for y in prange(h):
        for x in range(w):
            lo = max(x - radius, 0)
            hi = min(x + radius, w - 1)
            sr = 0.0
            sg = 0.0
            sb = 0.0
            sm = 0.0
            for xx in range(lo, hi + 1):
                m = mask[y, xx]
                if m != 0.0:
                    sr += rgb[y, xx, 0]
                    sg += rgb[y, xx, 1]
                    sb += rgb[y, xx, 2]
                    sm += m
            num_h[y, x, 0] = sr
            num_h[y, x, 1] = sg
            num_h[y, x, 2] = sb
            den_h[y, x] = sm


@njit(cache=True, nogil=True, parallel=True)
def masked_box_v_apply(num_h, den_h, mask, radius, rgb):
    """Vertical box pass over the horizontal sums; writes the normalized
    average back into rgb at masked pixels only."""
    h, w = mask.shape
    for y in prange(h):
        lo = max(y - radius, 0)
        hi = min(y + radius, h - 1)
        for x in range(w):
            if mask[y, x] == 0.0:
                continue
            sr = 0.0
            sg = 0.0
            sb = 0.0
            sm = 0.0
            for yy in range(lo, hi + 1):
                sr += num_h[yy, x, 0]
                sg += num_h[yy, x, 1]
                sb += num_h[yy, x, 2]
                sm += den_h[yy, x]
            rgb[y, x, 0] = sr / sm
            rgb[y, x, 1] = sg / sm
            rgb[y, x, 2] = sb / sm
