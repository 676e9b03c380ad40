"""Penalty contact between a cylindrical peg and a chamfered hole.

Geometry, all relative to the hole axis:

* the top face at ``z = surface_height``;
* a 45 degree chamfer of radial width ``w`` opening the hole mouth;
* the bore, ``clearance / 2`` wider than the peg on each side.

The peg tip (centre of its bottom face) is the tool point.  With ``d`` the
lateral offset of the tip from the hole axis and ``c = clearance / 2``:

``d >= c + w``
    the peg rests on the flat top face; the normal force acts at the
    centroid of the part of the peg face not over the mouth, which yields
    the tilting torques that reveal where the hole is.
``c < d < c + w``
    the far rim rides on the chamfer, which pushes it toward the axis.
below the chamfer
    the bore wall pushes back laterally once ``d > c``.

Forces are the environment acting on the peg, expressed at the tip, so a
peg pressed onto the top face sees ``f_z > 0``.
"""

from __future__ import annotations

import math

import numpy as np

FRICTION_SLIP_SPEED = 1e-3  # m/s, regularisation of Coulomb friction
FILLET = 1e-4  # m, blend length at chamfer edges


def smoothstep(u: float) -> float:
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    return u * u * (3.0 - 2.0 * u)


def _segment(r: float, a: float):
    """Area and centroid distance of the circle segment beyond a chord at distance ``a``."""
    a = max(-r, min(r, a))
    alpha = math.acos(a / r)
    s, c = math.sin(alpha), math.cos(alpha)
    area = r * r * (alpha - s * c)
    if area <= 0.0:
        return 0.0, r
    return area, (2.0 / 3.0) * r * s ** 3 / (alpha - s * c)


def lens(r1: float, r2: float, d: float):
    """Overlap of circle 1 (at origin) and circle 2 (at distance ``d`` along +u).

    Returns ``(area, centroid)`` with the centroid measured from circle 1's
    centre along the line of centres.
    """
    if d >= r1 + r2:
        return 0.0, 0.0
    if d <= abs(r1 - r2):
        if r1 <= r2:
            return math.pi * r1 * r1, 0.0
        return math.pi * r2 * r2, d
    a1 = (d * d + r1 * r1 - r2 * r2) / (2.0 * d)
    s1, g1 = _segment(r1, a1)
    s2, g2 = _segment(r2, d - a1)
    area = s1 + s2
    return area, (s1 * g1 + s2 * (d - g2)) / area


def support_centroid(peg_radius: float, mouth_radius: float, d: float) -> float:
    """Signed distance from the peg axis to the centroid of the peg face resting on the top face.

    Measured along the direction from the peg toward the hole; it is
    negative (the support lies on the side away from the hole).
    """
    area_l, x_l = lens(peg_radius, mouth_radius, d)
    full = math.pi * peg_radius * peg_radius
    rest = full - area_l
    if rest <= 1e-18 * full:
        return 0.0
    return -area_l * x_l / rest


def contact_wrench(world, pose, velocity, meshed: bool = False) -> np.ndarray:
    """Environment-on-peg wrench at the tip for the given tool pose and twist."""
    px, py, pz = pose[0] - world.hole_center[0], pose[1] - world.hole_center[1], pose[2]
    vx, vy, vz = velocity[0], velocity[1], velocity[2]
    zb = pz - world.surface_height
    out = np.zeros(6)
    if zb >= 0.0:
        return out

    kc, cc, mu = world.contact_stiffness, world.contact_damping, world.friction_coefficient
    rp = 0.5 * world.peg_diameter
    c = 0.5 * (world.hole_diameter - world.peg_diameter)
    w = world.chamfer_width
    d = math.hypot(px, py)
    if d > 0.0:
        ux, uy = -px / d, -py / d  # from peg toward the hole axis
    else:
        ux = uy = 0.0

    fz = 0.0
    lateral = 0.0  # toward the axis
    if d >= c + w:
        fz = max(0.0, kc * (-zb) - cc * vz)
        cs = support_centroid(rp, rp + c + w, d)
        out[3] = cs * uy * fz
        out[4] = -cs * ux * fz
    elif zb >= -w:
        pen = d - (c + w + zb)
        if pen > 0.0:
            rate = -(vx * ux + vy * uy) - vz  # d(pen)/dt along the cone
            fn = max(0.0, kc * pen + cc * rate)
            fz = fn
            lateral = fn * smoothstep((c + w - d) / FILLET)
    else:
        pen = d - c
        if pen > 0.0:
            rate = -(vx * ux + vy * uy)
            fn = max(0.0, kc * pen + cc * rate)
            lateral = fn
            fz = fn * smoothstep((zb + w + FILLET) / FILLET)
        depth = -zb - w
        fz += _jam_force(world, pose, depth, vz)
        out[3:5] += _alignment_torque(world, pose, depth)
        if world.gear is not None:
            fz += _tooth_force(world, pose, -zb, vz, meshed)

    out[0] = lateral * ux
    out[1] = lateral * uy
    out[2] = fz

    normal = abs(fz) if d >= c + w or zb >= -w else abs(lateral)
    if normal > 0.0 and mu > 0.0:
        if d >= c + w or zb >= -w:
            s = math.sqrt(vx * vx + vy * vy + FRICTION_SLIP_SPEED ** 2)
            out[0] -= mu * normal * vx / s
            out[1] -= mu * normal * vy / s
        else:
            s = math.sqrt(vz * vz + FRICTION_SLIP_SPEED ** 2)
            out[2] -= mu * normal * vz / s

    if world.gear is not None and meshed:
        out[5] += _mesh_torque(world, pose)
    return out


def _tilt(world, pose) -> float:
    rx = pose[3] - world.nominal_orientation[0]
    ry = pose[4] - world.nominal_orientation[1]
    return math.hypot(rx, ry)


def _jam_force(world, pose, depth: float, vz: float) -> float:
    """Resistance from two-point contact of a tilted peg in the bore."""
    if depth <= 0.0:
        return 0.0
    interference = _tilt(world, pose) * depth - (world.hole_diameter - world.peg_diameter)
    if interference <= 0.0:
        return 0.0
    f = world.contact_stiffness * interference
    s = math.sqrt(vz * vz + FRICTION_SLIP_SPEED ** 2)
    return -2.0 * world.friction_coefficient * f * vz / s


def _alignment_torque(world, pose, depth: float) -> np.ndarray:
    if depth <= 0.0:
        return np.zeros(2)
    rx = pose[3] - world.nominal_orientation[0]
    ry = pose[4] - world.nominal_orientation[1]
    tilt = math.hypot(rx, ry)
    interference = tilt * depth - (world.hole_diameter - world.peg_diameter)
    if interference <= 0.0 or tilt == 0.0:
        return np.zeros(2)
    moment = world.contact_stiffness * interference * depth
    return np.array([-moment * rx / tilt, -moment * ry / tilt])


def tooth_phase_error(world, pose) -> float:
    g = world.gear
    pitch = 2.0 * math.pi / g.tooth_count
    e = (g.tooth_phase + pose[5] - world.nominal_orientation[2]) % pitch
    return e - pitch if e >= 0.5 * pitch else e


def _tooth_force(world, pose, depth: float, vz: float, meshed: bool) -> float:
    g = world.gear
    pen = depth - g.seat_depth
    if pen <= 0.0 or meshed:
        return 0.0
    kt = world.contact_stiffness if g.tooth_stiffness is None else g.tooth_stiffness
    return max(0.0, kt * pen - world.contact_damping * vz)


def _mesh_torque(world, pose) -> float:
    g = world.gear
    e = tooth_phase_error(world, pose)
    excess = abs(e) - g.mesh_tolerance
    if excess <= 0.0:
        return 0.0
    return -math.copysign(g.tooth_rot_stiffness * excess, e)
