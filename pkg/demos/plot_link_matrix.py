"""
Projecting points and rejecting occluded ones
=============================================

Every 3D point is sent through the pinhole model of a view, rounded to its
nearest pixel, and kept only if the depth map at that pixel agrees with its
own depth. Points hidden behind a nearer surface fail the depth test.
"""

import numpy as np

from masklift.geometry import CameraIntrinsics, CameraPose, build_link_matrix, compose_projection
from masklift.synth import render_view

###########################################################################
# Two squares face the camera, one 2 m away and one 3 m away and shifted
# to the right, so the near square hides part of the far one.

g = np.linspace(-0.3, 0.3, 25)
near = np.array([[x, y, 2.0] for x in g for y in g])
far = np.array([[x + 0.6, y, 3.0] for x in g for y in g])
points = np.vstack([near, far])
object_ids = np.repeat([0, 1], len(near))

intr = CameraIntrinsics(fx=60.0, fy=60.0, cx=31.5, cy=23.5, width=64, height=48)
pose = CameraPose.identity()
print(compose_projection(intr, pose))

###########################################################################
# The synthetic renderer splats the points into a z-buffer and quantizes it
# to millimeters, as a depth sensor would.

render = render_view(points, object_ids, intr, pose, depth_scale=1000.0)
print("pixels with depth:", np.count_nonzero(render.depth))

###########################################################################
# The link matrix holds a pixel and a validity bit per point. With a 5 cm
# tolerance, the far square loses exactly the points the near one covers.

link = build_link_matrix(points, intr, pose, render.depth, delta=0.05)
print("near square visible:", link.valid[:len(near)].mean())
print("far square visible: ", link.valid[len(near):].mean())
print("agrees with the renderer:", np.array_equal(link.valid, render.visible))

###########################################################################
# Points behind the camera or outside the image never link, whatever the
# depth map says.

extra = np.array([[0.0, 0.0, -1.0], [5.0, 0.0, 2.0]])
print(build_link_matrix(extra, intr, pose, render.depth, 0.05).valid)
