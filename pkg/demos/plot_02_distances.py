"""
Point-to-point and point-to-surface distances
=============================================

Compare a coarse noisy copy of a surface with a dense reference, first by
nearest vertex and then by nearest point on the surface.  The surface
distance is never larger, because every vertex is also a surface point.
"""

import numpy as np

from facemorph.geomeval import (
    build_spatial_index,
    colorize_deviation,
    nearest_neighbor,
    point_to_point_stats,
    point_to_triangle_distance,
    surface_deviation,
)
from facemorph.synthkit import generate_test_mesh, make_rng

rng = make_rng(0)
reference = generate_test_mesh("dome", 61, 120.0)
coarse = generate_test_mesh("dome", 15, 120.0)
v = coarse.vertices.copy()
v[:, 2] += rng.standard_normal(len(v)) * 0.3
coarse = coarse.replace(vertices=v)

###############################################################################
# Nearest neighbours come from a kD-tree; equidistant points resolve to the
# lowest index.

index = build_spatial_index(reference.vertices)
print(nearest_neighbor(index, coarse.vertices[0]))

p2p = point_to_point_stats(coarse, reference)
print(f"point-to-point  mean {p2p.mean:.3f}  sd {p2p.sd:.3f}  max {p2p.max:.3f} mm")

###############################################################################
# Exact point-to-triangle distance, here for a point 2.5 mm above a triangle.

tri = np.array([[0.0, 0, 0], [3, 0, 0], [0, 3, 0]])
print(point_to_triangle_distance([1, 1, 2.5], tri))

dev = surface_deviation(coarse, reference)
print("surface deviation", {k: round(v, 3) for k, v in dev.summary().items()})
print("never above point-to-point:", bool(np.all(dev.per_vertex <= p2p.per_point + 1e-12)))

###############################################################################
# Colour the coarse mesh blue (0) to red (95th percentile and above).

heat = colorize_deviation(coarse, dev)
print(heat.vertex_colors[:3])
