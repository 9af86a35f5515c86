"""How a single reflected path constrains a position.

A signal that bounces once off a flat reflector tells the receiver two
things: the total path length (from timing) and the arrival bearing at each
end of the link.  Those three numbers pin the receiver to a line.  This
script builds such a path by mirror reflection, shows that the steering
vector turns it into an exact linear constraint, and then intersects two
paths from differently-oriented reflectors to recover the full position.

Run:  python3 demos/01_single_bounce_geometry.py
"""

import math

import numpy as np

from gbploc import (
    Reflector,
    build_edge_constraint,
    mirror_path_measurement,
    steering_vector,
)

receiver = np.array([0.0, 0.0])
sender = np.array([4.0, 0.0])

print("Two nodes 4 m apart, a horizontal reflector wall at y = 2.")
wall = Reflector(orientation=0.0, offset=2.0)
path = mirror_path_measurement(receiver, sender, wall)
print(f"  path length      : {path.range_m:.6f} m  (direct distance is 4)")
print(f"  bearing at node A: {math.degrees(path.aoa_at_receiver):7.2f} deg")
print(f"  bearing at node B: {math.degrees(path.aoa_at_sender):7.2f} deg")

g = steering_vector(path.aoa_at_sender, path.aoa_at_receiver)
lhs = g @ (receiver - sender)
print("\nThe steering vector g maps the position difference to the path length:")
print(f"  g = [{g[0]:+.4f}, {g[1]:+.4f}]")
print(f"  g . (s_A - s_B) = {lhs:.9f}  vs measured {path.range_m:.9f}")
print(f"  residual = {abs(lhs - path.range_m):.2e} m")

print("\nOne path only fixes a line.  Add a second bounce off a 45-degree wall")
print("(a vertical wall would be degenerate here: both nodes sit on y = 0,")
print("so its bounce path runs straight through them):")
wall2 = Reflector(orientation=math.pi / 4, offset=3.0)
path2 = mirror_path_measurement(receiver, sender, wall2)
constraint = build_edge_constraint([path, path2])
print(f"  fused offset estimate  : ({constraint.offset[0]:+.6f}, {constraint.offset[1]:+.6f})")
print(f"  true position difference: ({receiver[0]-sender[0]:+.6f}, {receiver[1]-sender[1]:+.6f})")
print("  noise gain basis (scales range variance into position space):")
print(f"    [[{constraint.basis[0,0]:.4f}, {constraint.basis[0,1]:.4f}],")
print(f"     [{constraint.basis[1,0]:.4f}, {constraint.basis[1,1]:.4f}]]")
