"""Pure-Python geometry kernels.

Drop-in fallback for the compiled ``_geomkernels`` extension; both expose
the same three functions with identical semantics.
"""
import math

import numpy as np

N_CIRCLE_VERTICES = 64
SQRT3 = math.sqrt(3.0)

# equal-area regular 64-gon: radius scaled so polygon area == pi * r**2
_EQUAL_AREA_SCALE = math.sqrt(
    2.0 * math.pi / (N_CIRCLE_VERTICES * math.sin(2.0 * math.pi / N_CIRCLE_VERTICES))
)
_CIRCLE_COS = [math.cos(2.0 * math.pi * k / N_CIRCLE_VERTICES) for k in range(N_CIRCLE_VERTICES)]
_CIRCLE_SIN = [math.sin(2.0 * math.pi * k / N_CIRCLE_VERTICES) for k in range(N_CIRCLE_VERTICES)]
_HEX_COS = [math.cos(math.radians(30.0 + 60.0 * k)) for k in range(6)]
_HEX_SIN = [math.sin(math.radians(30.0 + 60.0 * k)) for k in range(6)]
_NORMAL_COS = [math.cos(math.radians(60.0 * k)) for k in range(6)]
_NORMAL_SIN = [math.sin(math.radians(60.0 * k)) for k in range(6)]


def _clip(subject, clip):
    out = list(subject)
    n_clip = len(clip)
    for i in range(n_clip):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n_clip]
        ex, ey = bx - ax, by - ay
        inp = out
        out = []
        sx, sy = inp[-1]
        s_in = ex * (sy - ay) - ey * (sx - ax) >= 0.0
        for px, py in inp:
            p_in = ex * (py - ay) - ey * (px - ax) >= 0.0
            if p_in != s_in:
                # intersection of segment s->p with the clip line
                dx, dy = px - sx, py - sy
                denom = ex * dy - ey * dx
                t = (ey * (sx - ax) - ex * (sy - ay)) / denom
                out.append((sx + t * dx, sy + t * dy))
            if p_in:
                out.append((px, py))
            sx, sy, s_in = px, py, p_in
    return out


def _area(poly):
    n = len(poly)
    if n < 3:
        return 0.0
    acc = 0.0
    x0, y0 = poly[-1]
    for x1, y1 in poly:
        acc += x0 * y1 - x1 * y0
        x0, y0 = x1, y1
    return 0.5 * abs(acc)


def clip_area(subject, clip):
    """Area of ``subject`` clipped against the convex CCW polygon ``clip``."""
    subject = [(float(x), float(y)) for x, y in subject]
    clip = [(float(x), float(y)) for x, y in clip]
    return _area(_clip(subject, clip))


def polygon_area(poly):
    return _area([(float(x), float(y)) for x, y in poly])


def circle_hex_fractions(cx, cy, radius, centers, edge):
    """Fraction of a disc's area falling in each pointy-top hexagon.

    The disc is replaced by the equal-area regular 64-gon. ``centers`` is a
    (k, 2) array of hexagon centers in the same metric frame.
    """
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    out = np.zeros(len(centers))
    rp = radius * _EQUAL_AREA_SCALE
    circle = [(cx + rp * c, cy + rp * s) for c, s in zip(_CIRCLE_COS, _CIRCLE_SIN)]
    circle_area = _area(circle)
    inradius = 0.5 * SQRT3 * edge
    for k in range(len(centers)):
        hx, hy = float(centers[k, 0]), float(centers[k, 1])
        dx, dy = cx - hx, cy - hy
        if dx * dx + dy * dy > (rp + edge) ** 2:
            continue
        reach = max(dx * nc + dy * ns for nc, ns in zip(_NORMAL_COS, _NORMAL_SIN))
        if inradius - reach >= rp:
            out[k] = 1.0
            continue
        hexagon = [(hx + edge * c, hy + edge * s) for c, s in zip(_HEX_COS, _HEX_SIN)]
        frac = _area(_clip(circle, hexagon)) / circle_area
        out[k] = min(frac, 1.0)
    return out
