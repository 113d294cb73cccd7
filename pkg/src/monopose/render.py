"""SVG rendering of a placed scene.

Draws the observed 2D keypoints, the skeletons reprojected through the
refined camera, and a top-down X-Z mini-map of the root positions.  Output
is byte-for-byte deterministic for a given input.
"""

import numpy as np

from .core import DEFAULT_SKELETON, perspective_project
from .exceptions import DepthTooSmall

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2")
MINIMAP_SIZE = 180.0


def _fmt(x):
    return f"{x:.2f}"


def svg_document(result, keypoints=None, skeleton=DEFAULT_SKELETON):
    cam = result.camera
    w, h = cam.image_w, cam.image_h
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(w)}" height="{_fmt(h)}" '
        f'viewBox="0 0 {_fmt(w)} {_fmt(h)}">',
        f'<rect class="frame" x="0" y="0" width="{_fmt(w)}" height="{_fmt(h)}" '
        'fill="white" stroke="black"/>',
    ]
    for i, gp in enumerate(result.global_poses):
        color = _COLORS[i % len(_COLORS)]
        out.append(f'<g class="skeleton" id="person-{i}" stroke="{color}" fill="none">')
        try:
            uv = perspective_project(gp.pose, gp.translation, cam).joints
        except DepthTooSmall:
            uv = None
        if uv is not None:
            for c, p in skeleton.bones:
                out.append(f'<line x1="{_fmt(uv[c, 0])}" y1="{_fmt(uv[c, 1])}" '
                           f'x2="{_fmt(uv[p, 0])}" y2="{_fmt(uv[p, 1])}" stroke-width="2"/>')
        kp = keypoints[i] if keypoints is not None and i < len(keypoints) else None
        if kp is not None:
            for j in np.flatnonzero(kp.visibility):
                out.append(f'<circle class="keypoint" cx="{_fmt(kp.joints[j, 0])}" '
                           f'cy="{_fmt(kp.joints[j, 1])}" r="3" fill="{color}"/>')
        out.append("</g>")
    out.extend(_minimap(result, w))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _minimap(result, image_w):
    size = MINIMAP_SIZE
    x0, y0 = image_w - size - 10.0, 10.0
    parts = [f'<g class="minimap" transform="translate({_fmt(x0)},{_fmt(y0)})">',
             f'<rect x="0" y="0" width="{_fmt(size)}" height="{_fmt(size)}" '
             'fill="#f4f4f4" stroke="gray"/>',
             f'<circle class="camera" cx="{_fmt(size / 2)}" cy="{_fmt(size - 6)}" r="4" '
             'fill="black"/>']
    t = np.asarray(result.translations).reshape(-1, 3)
    if len(t):
        reach = max(float(np.abs(t[:, 0]).max()), float(t[:, 2].max()), 1.0) * 1.1
        k = (size - 12.0) / reach
        for i, (x, _, z) in enumerate(t):
            cx = size / 2 + x * k / 2
            cy = size - 6 - z * k
            parts.append(f'<circle class="root" cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="5" '
                         f'fill="{_COLORS[i % len(_COLORS)]}"/>')
    parts.append("</g>")
    return parts


def render_svg(result, out_path, keypoints=None, skeleton=DEFAULT_SKELETON):
    """Write the SVG for ``result`` to ``out_path``; returns the document text."""
    doc = svg_document(result, keypoints, skeleton)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(doc)
    return doc
